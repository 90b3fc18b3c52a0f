#pragma once

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "grid.hpp"
#include "inverse.hpp"
#include "medium.hpp"
#include "model.hpp"
#include "modes.hpp"

namespace spdcinv {

using json = nlohmann::ordered_json;

inline constexpr const char* config_schema = "spdcinv.config/1";

namespace detail {

/// Object reader that records the keys it consumed so leftovers can be
/// rejected with their full path.
class JsonObject {
public:
    JsonObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& raw(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError(path(key) + ": required key missing");
        used_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key) { return as_number(raw(key), path(key)); }
    double number(const std::string& key, double def) { return has(key) ? number(key) : def; }

    long integer(const std::string& key) { return as_integer(raw(key), path(key)); }
    long integer(const std::string& key, long def) { return has(key) ? integer(key) : def; }

    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return def;
        const auto& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(path(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key) {
        const auto& v = raw(key);
        if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& def) { return has(key) ? string(key) : def; }

    JsonObject object(const std::string& key) { return JsonObject(raw(key), path(key)); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(path(it.key()) + ": unknown key");
    }

    static double as_number(const json& v, const std::string& p) {
        if (!v.is_number()) throw ConfigError(p + ": expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(p + ": must be finite");
        return d;
    }
    static long as_integer(const json& v, const std::string& p) {
        if (!v.is_number_integer()) throw ConfigError(p + ": expected an integer");
        return v.get<long>();
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline const json& expect_array(const json& v, const std::string& p) {
    if (!v.is_array()) throw ConfigError(p + ": expected an array");
    return v;
}

inline Basis parse_basis(const json& v, const std::string& p) {
    if (v == "LG") return Basis::LG;
    if (v == "HG") return Basis::HG;
    throw ConfigError(p + ": basis must be \"LG\" or \"HG\"");
}

inline PostSelect parse_postselect(const std::string& s, const std::string& p) {
    if (s == "none") return PostSelect::none;
    if (s == "LG_p0") return PostSelect::LG_p0;
    if (s == "HG_m0") return PostSelect::HG_m0;
    throw ConfigError(p + ": postselect must be none, LG_p0 or HG_m0");
}

/// ["LG", l, p, waist]
inline ModeSpec parse_mode(const json& v, const std::string& p) {
    expect_array(v, p);
    if (v.size() != 4) throw ConfigError(p + ": mode must be [basis, index1, index2, waist]");
    ModeSpec m;
    m.basis = parse_basis(v[0], p + "[0]");
    m.index1 = static_cast<int>(JsonObject::as_integer(v[1], p + "[1]"));
    m.index2 = static_cast<int>(JsonObject::as_integer(v[2], p + "[2]"));
    m.waist = JsonObject::as_number(v[3], p + "[3]");
    try {
        m.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(p + ": " + e.what());
    }
    return m;
}

inline json mode_json(const ModeSpec& m) { return json::array({to_string(m.basis), m.index1, m.index2, m.waist}); }

inline std::vector<ModeSpec> parse_modes(const json& v, const std::string& p) {
    expect_array(v, p);
    std::vector<ModeSpec> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(parse_mode(v[i], p + "[" + std::to_string(i) + "]"));
    return out;
}

inline cd parse_complex(const json& v, const std::string& p) {
    if (v.is_number()) return {JsonObject::as_number(v, p), 0.0};
    expect_array(v, p);
    if (v.size() != 2) throw ConfigError(p + ": complex value must be [re, im]");
    return {JsonObject::as_number(v[0], p + "[0]"), JsonObject::as_number(v[1], p + "[1]")};
}

inline json complex_json(cd c) { return json::array({c.real(), c.imag()}); }

inline RMatrix parse_real_matrix(const json& v, const std::string& p) {
    expect_array(v, p);
    if (v.empty()) throw ConfigError(p + ": empty matrix");
    const std::size_t cols = expect_array(v[0], p + "[0]").size();
    RMatrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < v.size(); ++r) {
        const auto rp = p + "[" + std::to_string(r) + "]";
        if (expect_array(v[r], rp).size() != cols) throw ConfigError(rp + ": ragged matrix row");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                JsonObject::as_number(v[r][c], rp + "[" + std::to_string(c) + "]");
    }
    return m;
}

inline json matrix_json(const RMatrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<std::size_t> parse_index_list(const json& v, const std::string& p) {
    expect_array(v, p);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const long x = JsonObject::as_integer(v[i], p + "[" + std::to_string(i) + "]");
        if (x < 0) throw ConfigError(p + ": indices must be >= 0");
        out.push_back(static_cast<std::size_t>(x));
    }
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

inline double parse_double_strict(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ConfigError(what + ": not a number: '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) throw ConfigError(what + ": not a number: '" + s + "'");
    return v;
}

inline int parse_int_strict(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(s, &used);
    } catch (const std::exception&) {
        throw ConfigError(what + ": not an integer: '" + s + "'");
    }
    if (used != s.size()) throw ConfigError(what + ": not an integer: '" + s + "'");
    return v;
}

} // namespace detail

/// Parses a pump superposition such as "LG(1,0)+1:120*LG(-1,0)@25e-6".
/// Terms are `[coef*]BASIS(i1,i2)[@waist]` joined by '+'; a coefficient is a
/// real number or `magnitude:phase_degrees`. Terms without a waist use
/// `default_waist`.
inline std::vector<ModeTerm> parse_modespec(const std::string& text, double default_waist) {
    const std::string what = "pump override '" + text + "'";
    std::vector<std::string> parts;
    std::string cur;
    int depth = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (ch == '(') ++depth;
        if (ch == ')') --depth;
        const bool exponent = i > 0 && (text[i - 1] == 'e' || text[i - 1] == 'E') && i > 1 &&
                              std::isdigit(static_cast<unsigned char>(text[i - 2]));
        if (ch == '+' && depth == 0 && !exponent && !detail::trim(cur).empty()) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (depth != 0) throw ConfigError(what + ": unbalanced parentheses");
    parts.push_back(cur);

    std::vector<ModeTerm> terms;
    for (auto part : parts) {
        part = detail::trim(part);
        if (part.empty()) throw ConfigError(what + ": empty term");
        ModeTerm t{cd{1.0, 0.0}, ModeSpec{}};
        const auto star = part.find('*');
        if (star != std::string::npos) {
            const std::string c = detail::trim(part.substr(0, star));
            const auto colon = c.find(':');
            if (colon == std::string::npos) {
                t.coefficient = {detail::parse_double_strict(c, what), 0.0};
            } else {
                const double mag = detail::parse_double_strict(detail::trim(c.substr(0, colon)), what);
                const double deg = detail::parse_double_strict(detail::trim(c.substr(colon + 1)), what);
                t.coefficient = std::polar(mag, deg * pi / 180.0);
            }
            part = detail::trim(part.substr(star + 1));
        }
        double waist = default_waist;
        const auto at = part.find('@');
        if (at != std::string::npos) {
            waist = detail::parse_double_strict(detail::trim(part.substr(at + 1)), what);
            part = detail::trim(part.substr(0, at));
        }
        if (part.size() < 6 || part.back() != ')' || part[2] != '(')
            throw ConfigError(what + ": term '" + part + "' is not BASIS(i1,i2)");
        const std::string basis = part.substr(0, 2);
        if (basis == "LG")
            t.mode.basis = Basis::LG;
        else if (basis == "HG")
            t.mode.basis = Basis::HG;
        else
            throw ConfigError(what + ": unknown basis '" + basis + "'");
        const std::string inner = part.substr(3, part.size() - 4);
        const auto comma = inner.find(',');
        if (comma == std::string::npos) throw ConfigError(what + ": term '" + part + "' needs two indices");
        t.mode.index1 = detail::parse_int_strict(detail::trim(inner.substr(0, comma)), what);
        t.mode.index2 = detail::parse_int_strict(detail::trim(inner.substr(comma + 1)), what);
        t.mode.waist = waist;
        try {
            t.mode.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(what + ": " + e.what());
        }
        terms.push_back(t);
    }
    return terms;
}

struct ExpansionConfig {
    std::vector<ModeSpec> modes;      // waists are the initial waists
    std::vector<cd> coeffs;           // empty: seeded initialization
    double init_std = 0.1;
};

struct DetectionConfig {
    ModeSet idler, signal;
    std::optional<double> waist_plane_z;  // default: crystal center
};

struct NoiseConfig {
    long train_realizations = 500;
    long eval_realizations = 2000;
    double sigma = 1.0;
};

enum class TargetState { coincidence, density };

struct TomographyConfig {
    int dimension = 0;  // 0: disabled
    std::vector<std::size_t> qudit_idler, qudit_signal;
};

struct PerturbationConfig {
    PerturbMode mode = PerturbMode::multiplicative;
    double sigma = 0.3;
    std::uint64_t seed = 1;
    double min_loss_factor = 2.0;  // escalate sigma until loss grows by this factor
    double growth = 1.5;
    int max_attempts = 8;
};

enum class WorkflowKind { standard, joint_vs_single, imperfection };

struct WorkflowConfig {
    WorkflowKind kind = WorkflowKind::standard;
    PerturbationConfig perturbation;
    int recovery_epochs = 30;
    double recovery_lr_waist = 1e-6;
};

struct RunConfig {
    std::string scenario = "custom";
    std::string description;
    std::string output_dir = "runs/custom";
    std::uint64_t seed = 1;
    GridConfig grid;
    WaveInputs waves;
    double poling_period = 0;  // 0: exact QPM for the bulk mismatch
    double d24 = 3.64e-12;
    MediumSettings medium;
    std::optional<double> pump_waist_plane_z;  // default: crystal center
    ExpansionConfig pump, crystal;
    DetectionConfig detection;
    NoiseConfig noise;
    std::optional<TargetSpec> target;
    OptimizerSettings optimizer;
    int checkpoint_every = 10;
    std::string mask_preset = "all";
    std::vector<bool> mask;  // explicit mask overrides the preset when non-empty
    TomographyConfig tomography;
    std::vector<std::string> pump_overrides;
    WorkflowConfig workflow;
    unsigned workers = 0;
    long block_size = 8;
    std::string log_level = "warn";

    /// Tomography settings, taken from a density target when none are given.
    TomographyConfig effective_tomography() const {
        if (tomography.dimension) return tomography;
        if (target && target->kind == TargetKind::density_matrix)
            return {target->dimension, target->qudit_idler, target->qudit_signal};
        return {};
    }
};

inline MaskPreset parse_mask_preset(const std::string& s, const std::string& p) {
    if (s == "all") return MaskPreset::all;
    if (s == "pump_only") return MaskPreset::pump_only;
    if (s == "crystal_only") return MaskPreset::crystal_only;
    if (s == "pump_waists_only") return MaskPreset::pump_waists_only;
    if (s == "crystal_coeffs_only") return MaskPreset::crystal_coeffs_only;
    if (s == "none") return MaskPreset::none;
    throw ConfigError(p + ": unknown mask preset '" + s + "'");
}

namespace detail {

inline ExpansionConfig parse_expansion(JsonObject o) {
    ExpansionConfig e;
    e.modes = parse_modes(o.raw("modes"), o.path("modes"));
    if (o.has("coeffs")) {
        const auto& c = expect_array(o.raw("coeffs"), o.path("coeffs"));
        for (std::size_t i = 0; i < c.size(); ++i)
            e.coeffs.push_back(parse_complex(c[i], o.path("coeffs") + "[" + std::to_string(i) + "]"));
        if (e.coeffs.size() != e.modes.size())
            throw ConfigError(o.path("coeffs") + ": " + std::to_string(e.coeffs.size()) + " coefficients for " +
                              std::to_string(e.modes.size()) + " modes");
    }
    e.init_std = o.number("init_std", 0.1);
    if (!(e.init_std >= 0)) throw ConfigError(o.path("init_std") + ": must be >= 0");
    o.finish();
    return e;
}

inline json expansion_json(const ExpansionConfig& e) {
    json j;
    j["modes"] = json::array();
    for (const auto& m : e.modes) j["modes"].push_back(mode_json(m));
    if (!e.coeffs.empty()) {
        j["coeffs"] = json::array();
        for (auto c : e.coeffs) j["coeffs"].push_back(complex_json(c));
    }
    j["init_std"] = e.init_std;
    return j;
}

inline ModeSet parse_mode_set(JsonObject o) {
    ModeSet s;
    s.modes = parse_modes(o.raw("modes"), o.path("modes"));
    if (s.modes.empty()) throw ConfigError(o.path("modes") + ": at least one mode required");
    s.postselect = parse_postselect(o.string("postselect", "none"), o.path("postselect"));
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(o.path("modes") + ": " + e.what());
    }
    o.finish();
    return s;
}

inline json mode_set_json(const ModeSet& s) {
    json j;
    j["modes"] = json::array();
    for (const auto& m : s.modes) j["modes"].push_back(mode_json(m));
    j["postselect"] = to_string(s.postselect);
    return j;
}

inline CMatrix density_from_state(const json& v, int d, const std::string& p) {
    expect_array(v, p);
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(d * d);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto ep = p + "[" + std::to_string(i) + "]";
        if (!expect_array(v[i], ep).size() || v[i].size() != 4)
            throw ConfigError(ep + ": state entry must be [idler, signal, re, im]");
        const long a = JsonObject::as_integer(v[i][0], ep + "[0]"), b = JsonObject::as_integer(v[i][1], ep + "[1]");
        if (a < 0 || b < 0 || a >= d || b >= d) throw ConfigError(ep + ": qudit index out of range");
        psi(a * d + b) += cd(JsonObject::as_number(v[i][2], ep + "[2]"), JsonObject::as_number(v[i][3], ep + "[3]"));
    }
    const double n = psi.norm();
    if (!(n > 0)) throw ConfigError(p + ": state has zero norm");
    psi /= n;
    return psi * psi.adjoint();
}

inline TargetSpec parse_target(JsonObject o, const std::filesystem::path& base) {
    TargetSpec t;
    const std::string kind = o.string("kind");
    t.w_kl = o.number("w_kl", 1.0);
    t.w_l1 = o.number("w_l1", 1.0);
    t.w_trace = o.number("w_trace", 1.0);
    t.kl_floor = o.number("kl_floor", 1e-7);
    if (!(t.kl_floor > 0)) throw ConfigError(o.path("kl_floor") + ": must be positive");
    if (kind == "coincidence") {
        t.kind = TargetKind::coincidence;
        const int sources = o.has("matrix") + o.has("file") + o.has("entries");
        if (sources != 1) throw ConfigError(o.path("") + "target: give exactly one of matrix, entries or file");
        if (o.has("matrix")) {
            t.coincidence = parse_real_matrix(o.raw("matrix"), o.path("matrix"));
        } else if (o.has("file")) {
            const auto path = base / o.string("file");
            std::ifstream in(path);
            if (!in) throw ConfigError(o.path("file") + ": cannot open " + path.string());
            json j;
            try {
                j = json::parse(in);
            } catch (const json::parse_error& e) {
                throw ParseError(path.string() + ": " + e.what(), e.byte);
            }
            t.coincidence = parse_real_matrix(j.is_object() && j.contains("values") ? j["values"] : j, path.string());
        } else {
            // entries: [[row, col, value], ...] over rows x cols given by "shape"
            const auto& shape = expect_array(o.raw("shape"), o.path("shape"));
            if (shape.size() != 2) throw ConfigError(o.path("shape") + ": expected [rows, cols]");
            const long r = JsonObject::as_integer(shape[0], o.path("shape") + "[0]");
            const long c = JsonObject::as_integer(shape[1], o.path("shape") + "[1]");
            if (r < 1 || c < 1) throw ConfigError(o.path("shape") + ": must be positive");
            t.coincidence = RMatrix::Zero(r, c);
            const auto& en = expect_array(o.raw("entries"), o.path("entries"));
            for (std::size_t i = 0; i < en.size(); ++i) {
                const auto ep = o.path("entries") + "[" + std::to_string(i) + "]";
                if (!en[i].is_array() || en[i].size() != 3) throw ConfigError(ep + ": expected [row, col, value]");
                const long a = JsonObject::as_integer(en[i][0], ep), b = JsonObject::as_integer(en[i][1], ep);
                if (a < 0 || b < 0 || a >= r || b >= c) throw ConfigError(ep + ": index outside shape");
                t.coincidence(a, b) = JsonObject::as_number(en[i][2], ep);
            }
        }
        if ((t.coincidence.array() < 0).any()) throw ConfigError(o.path("matrix") + ": entries must be >= 0");
        const double s = t.coincidence.sum();
        if (!(s > 0)) throw ConfigError("target: coincidence matrix has zero mass");
        t.coincidence /= s;
    } else if (kind == "density") {
        t.kind = TargetKind::density_matrix;
        t.dimension = static_cast<int>(o.integer("dimension"));
        if (t.dimension != 2 && t.dimension != 3)
            throw FeatureError(o.path("dimension") + ": tomography supports d = 2 or 3 (got " +
                               std::to_string(t.dimension) + ")");
        t.qudit_idler = parse_index_list(o.raw("qudit_idler"), o.path("qudit_idler"));
        t.qudit_signal = parse_index_list(o.raw("qudit_signal"), o.path("qudit_signal"));
        if (o.has("state") == o.has("rho_re")) throw ConfigError("target: give exactly one of state or rho_re/rho_im");
        if (o.has("state")) {
            t.density = density_from_state(o.raw("state"), t.dimension, o.path("state"));
        } else {
            const RMatrix re = parse_real_matrix(o.raw("rho_re"), o.path("rho_re"));
            const RMatrix im = o.has("rho_im") ? parse_real_matrix(o.raw("rho_im"), o.path("rho_im"))
                                               : RMatrix::Zero(re.rows(), re.cols());
            if (re.rows() != im.rows() || re.cols() != im.cols())
                throw ConfigError(o.path("rho_im") + ": shape differs from rho_re");
            t.density = re.cast<cd>() + cd(0, 1) * im.cast<cd>();
        }
    } else {
        throw ConfigError(o.path("kind") + ": must be coincidence or density");
    }
    o.finish();
    try {
        t.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("target: ") + e.what());
    }
    return t;
}

inline json target_json(const TargetSpec& t) {
    json j;
    if (t.kind == TargetKind::coincidence) {
        j["kind"] = "coincidence";
        j["matrix"] = matrix_json(t.coincidence);
        j["w_kl"] = t.w_kl;
        j["w_l1"] = t.w_l1;
        j["kl_floor"] = t.kl_floor;
    } else {
        j["kind"] = "density";
        j["dimension"] = t.dimension;
        j["qudit_idler"] = t.qudit_idler;
        j["qudit_signal"] = t.qudit_signal;
        j["rho_re"] = matrix_json(t.density.real());
        j["rho_im"] = matrix_json(t.density.imag());
        j["w_trace"] = t.w_trace;
    }
    return j;
}

} // namespace detail

inline RunConfig parse_config(const json& root, const std::filesystem::path& base_dir = ".") {
    using detail::JsonObject;
    JsonObject o(root, "");
    const auto schema = o.string("schema");
    if (schema != config_schema)
        throw ConfigError("schema: expected \"" + std::string(config_schema) + "\", got \"" + schema + "\"");
    RunConfig c;
    c.scenario = o.string("scenario", c.scenario);
    c.description = o.string("description", "");
    c.output_dir = o.string("output_dir", "runs/" + c.scenario);
    {
        const long s = o.integer("seed", 1);
        if (s < 0) throw ConfigError("seed: must be >= 0");
        c.seed = static_cast<std::uint64_t>(s);
    }
    {
        auto g = o.object("grid");
        c.grid.nx = g.integer("nx", c.grid.nx);
        c.grid.ny = g.integer("ny", c.grid.ny);
        c.grid.dx = g.number("dx", c.grid.dx);
        c.grid.dy = g.number("dy", c.grid.dy);
        c.grid.length = g.number("length", c.grid.length);
        c.grid.dz = g.number("dz", c.grid.dz);
        g.finish();
    }
    {
        auto w = o.object("waves");
        c.waves.lambda_p = w.number("lambda_pump", c.waves.lambda_p);
        c.waves.lambda_s = w.number("lambda_signal", c.waves.lambda_s);
        c.waves.lambda_i = w.number("lambda_idler", c.waves.lambda_i);
        c.waves.n_p = w.number("n_pump", c.waves.n_p);
        c.waves.n_s = w.number("n_signal", c.waves.n_s);
        c.waves.n_i = w.number("n_idler", c.waves.n_i);
        c.poling_period = w.number("poling_period", 0.0);
        if (c.poling_period < 0) throw ConfigError("waves.poling_period: must be >= 0 (0 selects exact QPM)");
        c.d24 = w.number("d24", c.d24);
        w.finish();
    }
    if (o.has("medium")) {
        auto m = o.object("medium");
        c.medium.pump_amplitude = m.number("pump_amplitude", c.medium.pump_amplitude);
        if (m.has("pump_waist_plane_z")) c.pump_waist_plane_z = m.number("pump_waist_plane_z");
        c.medium.pump_diffraction = m.boolean("pump_diffraction", c.medium.pump_diffraction);
        c.medium.nlpc_2d = m.boolean("nlpc_2d", c.medium.nlpc_2d);
        c.medium.min_points_per_waist = m.number("min_points_per_waist", c.medium.min_points_per_waist);
        if (!(c.medium.min_points_per_waist > 0)) throw ConfigError("medium.min_points_per_waist: must be positive");
        m.finish();
    }
    c.pump = detail::parse_expansion(o.object("pump"));
    if (c.pump.modes.empty()) throw ConfigError("pump.modes: at least one mode required");
    if (o.has("crystal")) c.crystal = detail::parse_expansion(o.object("crystal"));
    {
        auto d = o.object("detection");
        c.detection.idler = detail::parse_mode_set(d.object("idler"));
        c.detection.signal = detail::parse_mode_set(d.object("signal"));
        if (d.has("waist_plane_z")) c.detection.waist_plane_z = d.number("waist_plane_z");
        d.finish();
    }
    if (o.has("noise")) {
        auto n = o.object("noise");
        c.noise.train_realizations = n.integer("train_realizations", c.noise.train_realizations);
        c.noise.eval_realizations = n.integer("eval_realizations", c.noise.eval_realizations);
        c.noise.sigma = n.number("sigma", c.noise.sigma);
        if (c.noise.train_realizations < 2 || c.noise.eval_realizations < 2)
            throw ConfigError("noise: realization counts must be >= 2");
        if (!(c.noise.sigma > 0)) throw ConfigError("noise.sigma: must be positive");
        n.finish();
    }
    if (o.has("target")) c.target = detail::parse_target(o.object("target"), base_dir);
    if (o.has("optimizer")) {
        auto p = o.object("optimizer");
        auto& s = c.optimizer;
        s.epochs = static_cast<int>(p.integer("epochs", s.epochs));
        s.lr_coeff = p.number("lr_coeff", s.lr_coeff);
        s.lr_waist = p.number("lr_waist", s.lr_waist);
        s.beta1 = p.number("beta1", s.beta1);
        s.beta2 = p.number("beta2", s.beta2);
        s.eps = p.number("eps", s.eps);
        s.cosine_decay = p.boolean("cosine_decay", s.cosine_decay);
        s.divergence_factor = p.number("divergence_factor", s.divergence_factor);
        c.checkpoint_every = static_cast<int>(p.integer("checkpoint_every", c.checkpoint_every));
        if (s.epochs < 0) throw ConfigError("optimizer.epochs: must be >= 0");
        if (!(s.beta1 >= 0 && s.beta1 < 1) || !(s.beta2 >= 0 && s.beta2 < 1))
            throw ConfigError("optimizer: beta1 and beta2 must lie in [0, 1)");
        if (!(s.lr_coeff >= 0) || !(s.lr_waist >= 0)) throw ConfigError("optimizer: learning rates must be >= 0");
        if (c.checkpoint_every < 1) throw ConfigError("optimizer.checkpoint_every: must be >= 1");
        p.finish();
    }
    if (o.has("mask")) {
        const auto& m = o.raw("mask");
        if (m.is_string()) {
            c.mask_preset = m.get<std::string>();
            parse_mask_preset(c.mask_preset, "mask");
        } else {
            detail::expect_array(m, "mask");
            for (std::size_t i = 0; i < m.size(); ++i) {
                if (!m[i].is_boolean()) throw ConfigError("mask[" + std::to_string(i) + "]: expected true or false");
                c.mask.push_back(m[i].get<bool>());
            }
        }
    }
    if (o.has("tomography")) {
        auto t = o.object("tomography");
        c.tomography.dimension = static_cast<int>(t.integer("dimension"));
        if (c.tomography.dimension != 2 && c.tomography.dimension != 3)
            throw FeatureError("tomography.dimension: supported values are 2 and 3 (got " +
                               std::to_string(c.tomography.dimension) + ")");
        c.tomography.qudit_idler = detail::parse_index_list(t.raw("qudit_idler"), t.path("qudit_idler"));
        c.tomography.qudit_signal = detail::parse_index_list(t.raw("qudit_signal"), t.path("qudit_signal"));
        t.finish();
    }
    if (o.has("pump_overrides")) {
        const auto& v = detail::expect_array(o.raw("pump_overrides"), "pump_overrides");
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string()) throw ConfigError("pump_overrides[" + std::to_string(i) + "]: expected a string");
            c.pump_overrides.push_back(v[i].get<std::string>());
            parse_modespec(c.pump_overrides.back(), c.pump.modes.front().waist);
        }
    }
    if (o.has("workflow")) {
        auto w = o.object("workflow");
        const auto kind = w.string("kind", "standard");
        if (kind == "standard")
            c.workflow.kind = WorkflowKind::standard;
        else if (kind == "joint_vs_single")
            c.workflow.kind = WorkflowKind::joint_vs_single;
        else if (kind == "imperfection")
            c.workflow.kind = WorkflowKind::imperfection;
        else
            throw ConfigError("workflow.kind: must be standard, joint_vs_single or imperfection");
        if (w.has("perturbation")) {
            auto p = w.object("perturbation");
            auto& pc = c.workflow.perturbation;
            const auto mode = p.string("mode", "multiplicative");
            if (mode == "multiplicative")
                pc.mode = PerturbMode::multiplicative;
            else if (mode == "additive")
                pc.mode = PerturbMode::additive;
            else
                throw ConfigError("workflow.perturbation.mode: must be multiplicative or additive");
            pc.sigma = p.number("sigma", pc.sigma);
            pc.seed = static_cast<std::uint64_t>(p.integer("seed", static_cast<long>(pc.seed)));
            pc.min_loss_factor = p.number("min_loss_factor", pc.min_loss_factor);
            pc.growth = p.number("growth", pc.growth);
            pc.max_attempts = static_cast<int>(p.integer("max_attempts", pc.max_attempts));
            if (!(pc.sigma > 0) || !(pc.growth > 1) || pc.max_attempts < 1)
                throw ConfigError("workflow.perturbation: need sigma > 0, growth > 1, max_attempts >= 1");
            p.finish();
        }
        c.workflow.recovery_epochs = static_cast<int>(w.integer("recovery_epochs", c.workflow.recovery_epochs));
        c.workflow.recovery_lr_waist = w.number("recovery_lr_waist", c.workflow.recovery_lr_waist);
        w.finish();
    }
    {
        const long w = o.integer("workers", 0);
        if (w < 0) throw ConfigError("workers: must be >= 0");
        c.workers = static_cast<unsigned>(w);
    }
    c.block_size = o.integer("block_size", c.block_size);
    if (c.block_size < 1) throw ConfigError("block_size: must be >= 1");
    c.log_level = o.string("log_level", c.log_level);
    o.finish();
    return c;
}

inline json to_json(const RunConfig& c) {
    json j;
    j["schema"] = config_schema;
    j["scenario"] = c.scenario;
    if (!c.description.empty()) j["description"] = c.description;
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    j["grid"] = {{"nx", c.grid.nx}, {"ny", c.grid.ny},         {"dx", c.grid.dx},
                 {"dy", c.grid.dy}, {"length", c.grid.length}, {"dz", c.grid.dz}};
    j["waves"] = {{"lambda_pump", c.waves.lambda_p}, {"lambda_signal", c.waves.lambda_s},
                  {"lambda_idler", c.waves.lambda_i}, {"n_pump", c.waves.n_p},
                  {"n_signal", c.waves.n_s},         {"n_idler", c.waves.n_i},
                  {"poling_period", c.poling_period}, {"d24", c.d24}};
    j["medium"] = {{"pump_amplitude", c.medium.pump_amplitude},
                   {"pump_diffraction", c.medium.pump_diffraction},
                   {"nlpc_2d", c.medium.nlpc_2d},
                   {"min_points_per_waist", c.medium.min_points_per_waist}};
    if (c.pump_waist_plane_z) j["medium"]["pump_waist_plane_z"] = *c.pump_waist_plane_z;
    j["pump"] = detail::expansion_json(c.pump);
    j["crystal"] = detail::expansion_json(c.crystal);
    j["detection"] = {{"idler", detail::mode_set_json(c.detection.idler)},
                      {"signal", detail::mode_set_json(c.detection.signal)}};
    if (c.detection.waist_plane_z) j["detection"]["waist_plane_z"] = *c.detection.waist_plane_z;
    j["noise"] = {{"train_realizations", c.noise.train_realizations},
                  {"eval_realizations", c.noise.eval_realizations},
                  {"sigma", c.noise.sigma}};
    if (c.target) j["target"] = detail::target_json(*c.target);
    const auto& s = c.optimizer;
    j["optimizer"] = {{"epochs", s.epochs},         {"lr_coeff", s.lr_coeff},
                      {"lr_waist", s.lr_waist},     {"beta1", s.beta1},
                      {"beta2", s.beta2},           {"eps", s.eps},
                      {"cosine_decay", s.cosine_decay}, {"divergence_factor", s.divergence_factor},
                      {"checkpoint_every", c.checkpoint_every}};
    if (c.mask.empty())
        j["mask"] = c.mask_preset;
    else
        j["mask"] = c.mask;
    if (c.tomography.dimension)
        j["tomography"] = {{"dimension", c.tomography.dimension},
                           {"qudit_idler", c.tomography.qudit_idler},
                           {"qudit_signal", c.tomography.qudit_signal}};
    if (!c.pump_overrides.empty()) j["pump_overrides"] = c.pump_overrides;
    const auto& w = c.workflow;
    const char* kinds[] = {"standard", "joint_vs_single", "imperfection"};
    j["workflow"] = {{"kind", kinds[static_cast<int>(w.kind)]},
                     {"perturbation",
                      {{"mode", w.perturbation.mode == PerturbMode::multiplicative ? "multiplicative" : "additive"},
                       {"sigma", w.perturbation.sigma},
                       {"seed", w.perturbation.seed},
                       {"min_loss_factor", w.perturbation.min_loss_factor},
                       {"growth", w.perturbation.growth},
                       {"max_attempts", w.perturbation.max_attempts}}},
                     {"recovery_epochs", w.recovery_epochs},
                     {"recovery_lr_waist", w.recovery_lr_waist}};
    j["workers"] = c.workers;
    j["block_size"] = c.block_size;
    j["log_level"] = c.log_level;
    return j;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": malformed JSON", e.byte);
    }
}

inline RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_json_file(path), path.parent_path());
}

// Derived objects ----------------------------------------------------------

inline WaveParams wave_params(const RunConfig& c) {
    const double period = c.poling_period > 0 ? c.poling_period : qpm_period(c.waves);
    return wave_params(c.waves, period, c.d24);
}

inline MediumSettings medium_settings(const RunConfig& c) {
    MediumSettings m = c.medium;
    m.pump_waist_plane_z = c.pump_waist_plane_z.value_or(0.5 * c.grid.length);
    return m;
}

/// Forward configuration for training (`eval` false) or for evaluation,
/// where the ensemble is larger and draws realizations disjoint from training.
inline ForwardConfig forward_config(const RunConfig& c, bool eval) {
    ForwardConfig f;
    f.grid = build_grid(c.grid);
    f.waves = wave_params(c);
    f.medium = medium_settings(c);
    f.noise.master_seed = c.seed;
    f.noise.sigma = c.noise.sigma;
    f.noise.n_realizations = eval ? c.noise.eval_realizations : c.noise.train_realizations;
    f.noise.first_realization = eval ? (std::uint64_t{1} << 32) : 0;
    const double zp = c.detection.waist_plane_z.value_or(0.5 * c.grid.length);
    f.idler = c.detection.idler;
    f.signal = c.detection.signal;
    for (auto* s : {&f.idler, &f.signal})
        for (auto& m : s->modes) m.waist_plane_z = zp;
    f.workers = c.workers;
    f.block_size = c.block_size;
    return f;
}

inline ParamVector initial_params(const RunConfig& c) {
    ModeSet pb, cb;
    std::vector<double> pw, cw;
    for (const auto& m : c.pump.modes) {
        pb.modes.push_back(m);
        pw.push_back(m.waist);
    }
    for (const auto& m : c.crystal.modes) {
        cb.modes.push_back(m);
        cw.push_back(m.waist);
    }
    // one stream for both expansions; the spread is chosen per expansion
    ParamVector p = init_params(pb, pw, cb, cw, c.seed, c.crystal.init_std);
    p.pump_coeffs = c.pump.coeffs.empty() ? init_params(pb, pw, cb, cw, c.seed, c.pump.init_std).pump_coeffs
                                          : c.pump.coeffs;
    if (!c.crystal.coeffs.empty()) p.crystal_coeffs = c.crystal.coeffs;
    if (!c.mask.empty()) {
        if (c.mask.size() != p.n_scalars())
            throw ConfigError("mask: " + std::to_string(c.mask.size()) + " entries for " +
                              std::to_string(p.n_scalars()) + " scalars");
        p.trainable_mask = c.mask;
    } else {
        p.trainable_mask = make_mask(p, parse_mask_preset(c.mask_preset, "mask"));
    }
    p.validate();
    return p;
}

/// Resolves every cross-reference once so errors surface before any compute.
inline void validate_config(const RunConfig& c) {
    const auto f = forward_config(c, false);
    const auto theta = initial_params(c);
    const ForwardModel model(f);
    synth_pump(theta, f.grid, f.waves, f.medium);
    synth_crystal(theta, f.grid, f.waves, f.medium);
    if (c.target) Objective(*c.target, f.idler, f.signal);
    const auto tomo = c.effective_tomography();
    if (tomo.dimension) {
        if (tomo.qudit_idler.size() != static_cast<std::size_t>(tomo.dimension) ||
            tomo.qudit_signal.size() != static_cast<std::size_t>(tomo.dimension))
            throw ConfigError("tomography: qudit lists must have d entries");
        for (auto i : tomo.qudit_idler)
            if (i >= f.idler.size()) throw ConfigError("tomography.qudit_idler: index out of range");
        for (auto i : tomo.qudit_signal)
            if (i >= f.signal.size()) throw ConfigError("tomography.qudit_signal: index out of range");
    }
    for (const auto& s : c.pump_overrides)
        pump_from_terms(parse_modespec(s, theta.pump_waists.front()), f.grid, f.waves, f.medium);
}

} // namespace spdcinv

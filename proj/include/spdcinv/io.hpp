#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <fftw3.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "config.hpp"
#include "errors.hpp"
#include "inverse.hpp"
#include "medium.hpp"
#include "observables.hpp"
#include "tomography.hpp"

namespace spdcinv {

inline constexpr const char* library_version = "0.1.0";

namespace fs = std::filesystem;

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes via a sibling temporary file and a rename, so readers never see a
/// partially written file.
inline void write_file_atomic(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256: digest failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// Labeled matrices ---------------------------------------------------------

/// First row: corner label then column labels; each following row: row label
/// then values in %.17g. Comma separated, LF line ends.
inline std::string matrix_csv(const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels,
                              const RMatrix& m, const std::string& corner = "idler\\signal") {
    if (row_labels.size() != static_cast<std::size_t>(m.rows()) || col_labels.size() != static_cast<std::size_t>(m.cols()))
        throw ShapeError("matrix_csv: label count does not match matrix shape");
    std::string s = corner;
    for (const auto& c : col_labels) s += "," + c;
    s += "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        s += row_labels[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < m.cols(); ++c) s += "," + format_double(m(r, c));
        s += "\n";
    }
    return s;
}

struct LabeledMatrix {
    std::vector<std::string> row_labels, col_labels;
    RMatrix values;
};

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline LabeledMatrix parse_matrix_csv(const std::string& text) {
    std::vector<std::string> lines;
    for (auto& l : split(text, '\n'))
        if (!l.empty()) lines.push_back(l);
    if (lines.empty()) throw ParseError("matrix csv: empty", 0);
    LabeledMatrix m;
    auto head = split(lines[0], ',');
    m.col_labels.assign(head.begin() + 1, head.end());
    m.values.resize(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(m.col_labels.size()));
    std::size_t offset = lines[0].size() + 1;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split(lines[r], ',');
        if (cells.size() != head.size()) throw ParseError("matrix csv: ragged row " + std::to_string(r), offset);
        m.row_labels.push_back(cells[0]);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            char* end = nullptr;
            const double v = std::strtod(cells[c].c_str(), &end);
            if (end == cells[c].c_str() || *end) throw ParseError("matrix csv: bad number '" + cells[c] + "'", offset);
            m.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) = v;
        }
        offset += lines[r].size() + 1;
    }
    return m;
}

inline std::vector<std::string> mode_labels(const std::vector<ModeSpec>& modes) {
    std::vector<std::string> out;
    for (const auto& m : modes) out.push_back(m.label());
    return out;
}

inline json modes_json(const std::vector<ModeSpec>& modes) {
    json a = json::array();
    for (const auto& m : modes) a.push_back(detail::mode_json(m));
    return a;
}

inline json coincidence_json(const CoincidenceMatrix& c) {
    json j;
    j["schema"] = "spdcinv.coincidence/1";
    j["idler_modes"] = modes_json(c.idler_modes);
    j["signal_modes"] = modes_json(c.signal_modes);
    j["idler_labels"] = mode_labels(c.idler_modes);
    j["signal_labels"] = mode_labels(c.signal_modes);
    j["values"] = detail::matrix_json(c.values);
    j["raw_sum"] = c.raw_sum;
    j["clamped_mass"] = c.clamped_mass;
    return j;
}

inline CoincidenceMatrix coincidence_from_json(const json& j) {
    if (j.value("schema", "") != "spdcinv.coincidence/1") throw ConfigError("coincidence json: wrong schema");
    CoincidenceMatrix c;
    c.idler_modes = detail::parse_modes(j.at("idler_modes"), "idler_modes");
    c.signal_modes = detail::parse_modes(j.at("signal_modes"), "signal_modes");
    c.values = detail::parse_real_matrix(j.at("values"), "values");
    c.raw_sum = j.at("raw_sum").get<double>();
    c.clamped_mass = j.at("clamped_mass").get<double>();
    return c;
}

inline std::string coincidence_csv(const CoincidenceMatrix& c) {
    return matrix_csv(mode_labels(c.idler_modes), mode_labels(c.signal_modes), c.values);
}

inline json density_json(const DensityMatrix& d, const std::optional<double>& trace_distance_to_target = {}) {
    json j;
    j["schema"] = "spdcinv.density/1";
    j["dimension"] = d.d;
    j["labels"] = d.labels;
    j["re"] = detail::matrix_json(d.rho.real());
    j["im"] = detail::matrix_json(d.rho.imag());
    j["raw_re"] = detail::matrix_json(d.raw.real());
    j["raw_im"] = detail::matrix_json(d.raw.imag());
    j["min_eigenvalue_raw"] = d.min_eigenvalue_raw;
    j["clipped_mass"] = d.clipped_mass;
    if (trace_distance_to_target) j["trace_distance_to_target"] = *trace_distance_to_target;
    return j;
}

inline DensityMatrix density_from_json(const json& j) {
    if (j.value("schema", "") != "spdcinv.density/1") throw ConfigError("density json: wrong schema");
    DensityMatrix d;
    d.d = j.at("dimension").get<int>();
    d.labels = j.at("labels").get<std::vector<std::string>>();
    auto cm = [&](const char* re, const char* im) -> CMatrix {
        const RMatrix a = detail::parse_real_matrix(j.at(re), re), b = detail::parse_real_matrix(j.at(im), im);
        return a.cast<cd>() + cd(0, 1) * b.cast<cd>();
    };
    d.rho = cm("re", "im");
    d.raw = cm("raw_re", "raw_im");
    d.min_eigenvalue_raw = j.at("min_eigenvalue_raw").get<double>();
    d.clipped_mass = j.at("clipped_mass").get<double>();
    return d;
}

// PGM ----------------------------------------------------------------------

/// Binary 8-bit PGM (P5). Each matrix entry becomes a `scale` x `scale` block;
/// row 0 is at the top. Pixel = round(255 * (v - lo) / (hi - lo)), clamped.
inline std::string pgm_p5(const RMatrix& m, double lo, double hi, int scale = 16) {
    const long w = m.cols() * scale, h = m.rows() * scale;
    std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const double span = hi - lo;
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            const double v = m(y / scale, x / scale);
            double t = span > 0 ? (v - lo) / span : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            s += static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t)));
        }
    return s;
}

/// Nonnegative heatmap: 0 is black, the maximum entry is 255.
inline std::string heatmap_pgm(const RMatrix& m, int scale = 16) { return pgm_p5(m, 0.0, m.maxCoeff(), scale); }

/// Signed heatmap scaled to the largest magnitude: -max is black, 0 is mid grey
/// (128 after rounding), +max is 255.
inline std::string signed_heatmap_pgm(const RMatrix& m, double max_abs, int scale = 16) {
    return pgm_p5(m, -max_abs, max_abs, scale);
}

/// Plain-text PGM (P2), one row per line; used for voxel slices.
inline std::string pgm_p2(const std::vector<std::uint8_t>& pix, long w, long h) {
    std::string s = "P2\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            if (x) s += ' ';
            s += std::to_string(pix[static_cast<std::size_t>(y * w + x)]);
        }
        s += '\n';
    }
    return s;
}

// Loss curves --------------------------------------------------------------

inline std::string loss_curve_csv(const std::vector<double>& loss) {
    std::string s = "epoch,loss\n";
    for (std::size_t i = 0; i < loss.size(); ++i) s += std::to_string(i) + "," + format_double(loss[i]) + "\n";
    return s;
}

// Parameters and checkpoints -----------------------------------------------

inline json params_json(const ParamVector& p) {
    auto side = [](const ModeSet& basis, const std::vector<cd>& coeffs, const std::vector<double>& waists) {
        json j;
        j["modes"] = json::array();
        j["coeffs"] = json::array();
        for (std::size_t i = 0; i < basis.size(); ++i) {
            ModeSpec m = basis[i];
            m.waist = waists[i];
            j["modes"].push_back(detail::mode_json(m));
            j["coeffs"].push_back(detail::complex_json(coeffs[i]));
        }
        return j;
    };
    json j;
    j["pump"] = side(p.pump_basis, p.pump_coeffs, p.pump_waists);
    j["crystal"] = side(p.crystal_basis, p.crystal_coeffs, p.crystal_waists);
    j["mask"] = p.trainable_mask;
    return j;
}

inline ParamVector params_from_json(const json& j, const std::string& path) {
    detail::JsonObject o(j, path);
    ParamVector p;
    auto side = [&](const char* key, ModeSet& basis, std::vector<cd>& coeffs, std::vector<double>& waists) {
        auto s = o.object(key);
        basis.modes = detail::parse_modes(s.raw("modes"), s.path("modes"));
        const auto& c = detail::expect_array(s.raw("coeffs"), s.path("coeffs"));
        if (c.size() != basis.size()) throw ConfigError(s.path("coeffs") + ": count differs from modes");
        for (std::size_t i = 0; i < c.size(); ++i) {
            coeffs.push_back(detail::parse_complex(c[i], s.path("coeffs")));
            waists.push_back(basis.modes[i].waist);
        }
        s.finish();
    };
    side("pump", p.pump_basis, p.pump_coeffs, p.pump_waists);
    side("crystal", p.crystal_basis, p.crystal_coeffs, p.crystal_waists);
    const auto& m = detail::expect_array(o.raw("mask"), o.path("mask"));
    for (const auto& b : m) {
        if (!b.is_boolean()) throw ConfigError(o.path("mask") + ": expected booleans");
        p.trainable_mask.push_back(b.get<bool>());
    }
    o.finish();
    p.validate();
    return p;
}

struct Checkpoint {
    RunConfig config;
    TrainState state;
};

inline json checkpoint_json(const RunConfig& cfg, const TrainState& s) {
    json j;
    j["schema"] = "spdcinv.checkpoint/1";
    j["iteration"] = s.iteration;
    j["schedule_epochs"] = s.schedule_epochs;
    j["master_seed"] = s.master_seed;
    j["theta"] = params_json(s.theta);
    j["adam_m"] = s.m;
    j["adam_v"] = s.v;
    j["loss_history"] = s.loss_history;
    if (std::isfinite(s.best_loss)) {
        j["best_loss"] = s.best_loss;
        j["best_theta"] = params_json(s.best_theta);
    }
    j["config"] = to_json(cfg);
    return j;
}

inline Checkpoint load_checkpoint(const fs::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": corrupted checkpoint", e.byte);
    }
    try {
        detail::JsonObject o(j, "checkpoint");
        if (o.string("schema") != "spdcinv.checkpoint/1") throw ConfigError("checkpoint.schema: unsupported");
        Checkpoint c;
        c.config = parse_config(o.raw("config"), path.parent_path());
        auto& s = c.state;
        s.iteration = static_cast<int>(o.integer("iteration"));
        s.schedule_epochs = static_cast<int>(o.integer("schedule_epochs"));
        s.master_seed = o.raw("master_seed").get<std::uint64_t>();
        s.theta = params_from_json(o.raw("theta"), "checkpoint.theta");
        s.m = o.raw("adam_m").get<std::vector<double>>();
        s.v = o.raw("adam_v").get<std::vector<double>>();
        s.loss_history = o.raw("loss_history").get<std::vector<double>>();
        if (o.has("best_loss")) {
            s.best_loss = o.number("best_loss");
            s.best_theta = params_from_json(o.raw("best_theta"), "checkpoint.best_theta");
        } else {
            s.best_theta = s.theta;
        }
        o.finish();
        if (s.m.size() != s.theta.n_scalars() || s.v.size() != s.theta.n_scalars())
            throw ConfigError("checkpoint: optimizer moments do not match the parameter count");
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": malformed checkpoint: " + e.what());
    }
}

// Voxel export ---------------------------------------------------------------

inline json voxel_header_json(const PolingVolume& v, long samples_per_period) {
    json j;
    j["schema"] = "spdcinv.voxels/1";
    j["nx"] = v.nx;
    j["ny"] = v.ny;
    j["nz"] = v.nz;
    j["nz_unit_cells"] = v.unit_cells;
    j["samples_per_period"] = samples_per_period;
    j["dx"] = v.dx;
    j["dy"] = v.dy;
    j["dz"] = v.dz;
    j["poling_period"] = v.poling_period;
    j["threshold"] = v.threshold;
    j["z_display_scale"] = v.z_scale;
    j["unpoled_count"] = v.unpoled_count;
    j["dtype"] = "int8";
    j["order"] = "x-fastest, then y, then z";
    j["data"] = "crystal.bin";
    return j;
}

inline std::string voxel_bytes(const PolingVolume& v) {
    return std::string(reinterpret_cast<const char*>(v.voxels.data()), v.voxels.size());
}

/// Transverse slice at layer iz: -1 -> 0, +1 -> 255.
inline std::vector<std::uint8_t> voxel_xy_slice(const PolingVolume& v, long iz) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(v.nx * v.ny));
    for (long y = 0; y < v.ny; ++y)
        for (long x = 0; x < v.nx; ++x) out[static_cast<std::size_t>(y * v.nx + x)] = v.at(x, y, iz) > 0 ? 255 : 0;
    return out;
}

/// Longitudinal slice through the center row: width nz, height nx.
inline std::vector<std::uint8_t> voxel_xz_slice(const PolingVolume& v) {
    const long iy = v.ny / 2;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(v.nx * v.nz));
    for (long x = 0; x < v.nx; ++x)
        for (long z = 0; z < v.nz; ++z) out[static_cast<std::size_t>(x * v.nz + z)] = v.at(x, iy, z) > 0 ? 255 : 0;
    return out;
}

// Run directory and manifest -------------------------------------------------

class RunDirectory {
public:
    RunDirectory(fs::path root, std::string command, const RunConfig& cfg)
        : root_(std::move(root)), command_(std::move(command)), config_(to_json(cfg)), seed_(cfg.seed),
          scenario_(cfg.scenario), start_(std::chrono::steady_clock::now()) {
        fs::create_directories(root_);
        write("config.json", dump_json(config_), "config snapshot");
    }

    const fs::path& root() const { return root_; }

    void write(const std::string& name, const std::string& bytes, const std::string& role) {
        write_file_atomic(root_ / name, bytes);
        json entry;
        entry["file"] = name;
        entry["role"] = role;
        entry["sha256"] = sha256_hex(bytes);
        entry["bytes"] = bytes.size();
        for (auto& a : artifacts_)
            if (a["file"] == name) {
                a = entry;
                return;
            }
        artifacts_.push_back(entry);
    }

    void note(const std::string& key, json value) { notes_[key] = std::move(value); }

    /// Writes manifest.json; `status` is "ok" or a failure label.
    void finish(const std::string& status, const std::string& error = "") {
        json m;
        m["schema"] = "spdcinv.manifest/1";
        m["command"] = command_;
        m["scenario"] = scenario_;
        m["seed"] = seed_;
        m["status"] = status;
        if (!error.empty()) m["error"] = error;
        m["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        m["versions"] = {{"spdcinv", library_version},
                         {"fftw", std::string(fftw_version)},
                         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                       std::to_string(EIGEN_MINOR_VERSION)},
                         {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                               std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                               std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
        if (!notes_.empty()) m["results"] = notes_;
        m["artifacts"] = artifacts_;
        m["config"] = config_;
        write_file_atomic(root_ / "manifest.json", dump_json(m));
    }

private:
    fs::path root_;
    std::string command_;
    json config_;
    std::uint64_t seed_;
    std::string scenario_;
    std::chrono::steady_clock::time_point start_;
    json artifacts_ = json::array();
    json notes_ = json::object();
};

/// Recomputes every artifact checksum listed in a manifest; returns the files
/// that are missing or differ.
inline std::vector<std::string> verify_manifest(const fs::path& dir) {
    const auto m = read_json_file(dir / "manifest.json");
    std::vector<std::string> bad;
    for (const auto& a : m.at("artifacts")) {
        const auto name = a.at("file").get<std::string>();
        const auto p = dir / name;
        if (!fs::exists(p) || sha256_hex(read_file(p)) != a.at("sha256").get<std::string>()) bad.push_back(name);
    }
    return bad;
}

} // namespace spdcinv

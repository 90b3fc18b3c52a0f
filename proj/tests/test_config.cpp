#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include <spdcinv/config.hpp>

using namespace spdcinv;
namespace fs = std::filesystem;

namespace {

const fs::path scenario_dir = SPDCINV_SCENARIO_DIR;

json qubit_json() { return read_json_file(scenario_dir / "fig5a_qubit.json"); }

fs::path temp_file(const std::string& name, const std::string& text) {
    const auto p = fs::temp_directory_path() / ("spdcinv_test_" + name);
    std::ofstream(p, std::ios::binary) << text;
    return p;
}

} // namespace

TEST(Scenarios, EveryPresetLoadsAndValidates) {
    int count = 0;
    for (const auto& e : fs::directory_iterator(scenario_dir)) {
        if (e.path().extension() != ".json") continue;
        ++count;
        SCOPED_TRACE(e.path().filename().string());
        const auto c = load_config(e.path());
        EXPECT_EQ(c.scenario, e.path().stem().string());
        EXPECT_NO_THROW(validate_config(c));
        ASSERT_TRUE(c.target.has_value());
    }
    EXPECT_EQ(count, 9);
}

TEST(Config, RoundTripThroughJson) {
    for (const auto& e : fs::directory_iterator(scenario_dir)) {
        SCOPED_TRACE(e.path().filename().string());
        const auto a = load_config(e.path());
        const json ja = to_json(a);
        const auto b = parse_config(ja, scenario_dir);
        EXPECT_EQ(to_json(b), ja);
    }
}

TEST(Config, UnknownKeyIsRejectedWithPath) {
    auto j = qubit_json();
    j["grid"]["nz"] = 10;
    try {
        parse_config(j);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("grid.nz"), std::string::npos) << e.what();
    }
    auto k = qubit_json();
    k["optimiser"] = json::object();
    EXPECT_THROW(parse_config(k), ConfigError);
}

TEST(Config, MalformedJsonReportsByteOffset) {
    const std::string text = "{\n  \"seed\": ,\n}";
    const auto p = temp_file("bad.json", text);
    try {
        load_config(p);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.byte_offset(), text.find(',') + 1);
        EXPECT_EQ(e.exit_code(), 2);
    }
    fs::remove(p);
}

TEST(Config, TargetEntriesAreNormalized) {
    auto j = qubit_json();
    j["target"]["entries"] = json::array({json::array({3, 1, 2.0}), json::array({1, 3, 6.0})});
    const auto c = parse_config(j);
    EXPECT_DOUBLE_EQ(c.target->coincidence(3, 1), 0.25);
    EXPECT_DOUBLE_EQ(c.target->coincidence(1, 3), 0.75);
    EXPECT_DOUBLE_EQ(c.target->coincidence.sum(), 1.0);
    j["target"]["entries"] = json::array({json::array({5, 0, 1.0})});
    EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, DensityTargetDimensionFourIsFeatureError) {
    auto j = read_json_file(scenario_dir / "fig6a_bell_rho.json");
    j["target"]["dimension"] = 4;
    try {
        parse_config(j);
        FAIL() << "expected FeatureError";
    } catch (const FeatureError& e) {
        EXPECT_EQ(e.exit_code(), 2);
    }
}

TEST(Config, EvaluationEnsembleIsDisjoint) {
    const auto c = load_config(scenario_dir / "fig5a_qubit.json");
    const auto train = forward_config(c, false), eval = forward_config(c, true);
    EXPECT_EQ(train.noise.first_realization, 0u);
    EXPECT_GE(eval.noise.first_realization, static_cast<std::uint64_t>(train.noise.n_realizations));
    EXPECT_EQ(eval.noise.n_realizations, c.noise.eval_realizations);
    for (const auto& m : train.idler.modes) EXPECT_DOUBLE_EQ(m.waist_plane_z, 0.5 * c.grid.length);
}

TEST(ModeSpecText, SuperpositionWithPhaseAndWaist) {
    const auto t = parse_modespec("LG(1,0)+1:120*LG(-1,0)@25e-6", 30e-6);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0].mode.index1, 1);
    EXPECT_EQ(t[0].coefficient, cd(1.0, 0.0));
    EXPECT_DOUBLE_EQ(t[0].mode.waist, 30e-6);
    EXPECT_EQ(t[1].mode.index1, -1);
    EXPECT_NEAR(std::arg(t[1].coefficient), 2.0 * pi / 3.0, 1e-15);
    EXPECT_NEAR(std::abs(t[1].coefficient), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(t[1].mode.waist, 25e-6);
}

TEST(ModeSpecText, HermiteGaussAndRealCoefficient) {
    const auto t = parse_modespec("0.5*HG(1,0) + HG(0,1)", 20e-6);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0].mode.basis, Basis::HG);
    EXPECT_EQ(t[0].coefficient, cd(0.5, 0.0));
    EXPECT_EQ(t[1].mode.index2, 1);
}

TEST(ModeSpecText, MalformedTermsAreConfigErrors) {
    for (const char* s : {"XX(1,0)", "LG(1)", "LG(1,0", "LG(1,-1)", "abc*LG(0,0)", "LG(0,0)+", "LG(1.5,0)"})
        EXPECT_THROW(parse_modespec(s, 20e-6), ConfigError) << s;
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "repchain/repchain.hpp"

using namespace repchain;

namespace {

std::string preset_path(const std::string& name) { return std::string(REPCHAIN_PRESET_DIR) + "/" + name + ".ini"; }

const char* kMinimal = R"(
[scenario]
total_distance_km = 20
n_links = 2

[protocol]
kind = two_link_simultaneous
)";

std::string error_of(const std::string& text) {
    try {
        parse_config(text, "test.ini");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, LoadsLuongPreset) {
    const auto cfg = load_config(preset_path("luong_two_link"));
    EXPECT_EQ(cfg.protocol.kind, ProtocolKind::TwoLinkSequential);
    EXPECT_EQ(cfg.n_links, 2);
    EXPECT_DOUBLE_EQ(cfg.total_distance_km, 100.0);
    EXPECT_DOUBLE_EQ(cfg.link.p_link, 0.002376);
    EXPECT_DOUBLE_EQ(cfg.link.e_m, 0.01);
    EXPECT_DOUBLE_EQ(cfg.station.params.t_dp_s, 1.0);
    EXPECT_DOUBLE_EQ(cfg.station.params.lambda_bsm, 0.97);
    EXPECT_DOUBLE_EQ(cfg.station.params.p_d, 1e-8);
    EXPECT_DOUBLE_EQ(cfg.f, 1.16);
    EXPECT_TRUE(std::isinf(cfg.station.params.t_cut_s));
}

TEST(Config, CutoffInLinkDelaysResolvesToSeconds) {
    const auto cfg = load_config(preset_path("rb_current"));
    const auto layout = build_layout(cfg);
    const double expected = 100.0 * 25e3 / 2e8;
    for (const auto& s : layout.stations) EXPECT_NEAR(s.params.t_cut_s, expected, 1e-15);
}

TEST(Config, EveryPresetIsValid) {
    int n = 0;
    for (const auto& entry : std::filesystem::directory_iterator(REPCHAIN_PRESET_DIR)) {
        if (entry.path().extension() != ".ini") continue;
        EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
        ++n;
    }
    EXPECT_GE(n, 18);
}

TEST(Config, MinimalScenarioUsesDefaults) {
    const auto cfg = parse_config(kMinimal);
    EXPECT_EQ(cfg.link.p_link, 1.0);
    EXPECT_EQ(cfg.station.params.n_mem, 1);
    EXPECT_TRUE(std::isinf(cfg.station.params.t_dp_s));
    EXPECT_EQ(cfg.cu_counting, ChannelUseCounting::All);
}

TEST(Config, NegativeDephasingTimeIsRejected) {
    const std::string msg = error_of(std::string(kMinimal) + "[station]\nt_dp_s = -1\n");
    EXPECT_NE(msg.find("t_dp_s"), std::string::npos) << msg;
}

TEST(Config, ReportsEveryViolation) {
    const std::string msg = error_of(std::string(kMinimal) + "[link]\nf_init = 1.5\n[station]\nlambda_bsm = 2\n");
    EXPECT_NE(msg.find("f_init"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lambda_bsm"), std::string::npos) << msg;
}

TEST(Config, ParseErrorsCarryLineNumbers) {
    EXPECT_NE(error_of("[scenario]\nn_links = 2\nbogus = 1\n").find("test.ini:3:"), std::string::npos);
    EXPECT_NE(error_of("[scenario]\n\nn_links two\n").find("test.ini:3:"), std::string::npos);
    EXPECT_NE(error_of("[scenario\n").find("test.ini:1:"), std::string::npos);
    EXPECT_NE(error_of("n_links = 2\n").find("test.ini:1:"), std::string::npos);
    EXPECT_NE(error_of("[scenario]\nn_links = abc\n").find("test.ini:2:"), std::string::npos);
}

TEST(Config, InfinityIsAcceptedForTimes) {
    const auto cfg = parse_config(std::string(kMinimal) + "[station]\nt_cut_s = inf\nt_dp_s = Inf\n");
    EXPECT_TRUE(std::isinf(cfg.station.params.t_cut_s));
    EXPECT_TRUE(std::isinf(cfg.station.params.t_dp_s));
}

TEST(Config, ZeroTrialTimeIsRejected) {
    EXPECT_NE(error_of("[scenario]\ntotal_distance_km = 0\n").find("trial time"), std::string::npos);
}

TEST(Config, ProtocolShapeIsChecked) {
    EXPECT_NE(error_of("[scenario]\ntotal_distance_km = 10\nn_links = 3\n").find("power of two"), std::string::npos);
    EXPECT_NE(error_of(std::string(kMinimal) + "[protocol]\nepp_steps = 3\n").find("epp_steps"), std::string::npos);
    EXPECT_NE(error_of("[scenario]\ntotal_distance_km = 10\n[protocol]\nkind = multi_memory_batch\n[station]\nt_cut_s = 1\n")
                  .find("cutoff"),
              std::string::npos);
}

TEST(Config, PerStationOverrides) {
    auto cfg = parse_config(std::string(kMinimal) + "[station]\nt_dp_s = 1\n[station.1]\nt_dp_s = 0.5\nn_mem = 2\n");
    const auto layout = build_layout(cfg);
    EXPECT_DOUBLE_EQ(layout.stations[0].params.t_dp_s, 1.0);
    EXPECT_DOUBLE_EQ(layout.stations[1].params.t_dp_s, 0.5);
    EXPECT_EQ(layout.stations[1].params.n_mem, 2);
    EXPECT_NE(error_of(std::string(kMinimal) + "[station.5]\nn_mem = 2\n").find("station.5"), std::string::npos);
}

TEST(Config, LayoutPlacesStationsEvenly) {
    auto cfg = parse_config("[scenario]\ntotal_distance_km = 100\nn_links = 4\n");
    const auto layout = build_layout(cfg);
    ASSERT_EQ(layout.stations.size(), 5u);
    for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(layout.stations[i].position_km, 25.0 * i);
    EXPECT_TRUE(layout.stations.front().terminal);
    EXPECT_TRUE(layout.stations.back().terminal);
    EXPECT_FALSE(layout.stations[2].terminal);
}

TEST(Config, HashIgnoresRunControls) {
    auto a = parse_config(kMinimal);
    auto b = a;
    b.seed = 99;
    b.samples = 5;
    b.chunk_size = 3;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.link.f_init = 0.9;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "repchain/repchain.hpp"
#include "sim_helpers.hpp"

using namespace repchain;
using testing_support::ideal_config;

namespace {

ScenarioConfig small_noisy() {
    auto cfg = ideal_config(2, 60.0, ProtocolKind::TwoLinkSimultaneous);
    cfg.link.p_link = 0.5;
    cfg.link.f_init = 0.97;
    cfg.station.params.t_dp_s = 0.05;
    cfg.samples = 2500;
    cfg.chunk_size = 400;
    cfg.seed = 77;
    return cfg;
}

std::string samples_csv(const RunResult& r, std::uint64_t seed) {
    std::ostringstream os;
    write_samples_csv(os, r.samples, seed);
    return os.str();
}

}  // namespace

TEST(Runner, ResultDoesNotDependOnWorkerCount) {
    const auto cfg = small_noisy();
    const auto one = run_scenario(cfg, 1);
    const auto four = run_scenario(cfg, 4);
    ASSERT_EQ(one.samples.size(), 2500u);
    EXPECT_EQ(samples_csv(one, cfg.seed), samples_csv(four, cfg.seed));
    EXPECT_EQ(one.report.key_rate_per_s, four.report.key_rate_per_s);
    EXPECT_EQ(one.report.se_key_rate_per_s, four.report.se_key_rate_per_s);
}

TEST(Runner, SameSeedGivesIdenticalBytes) {
    const auto cfg = small_noisy();
    EXPECT_EQ(samples_csv(run_scenario(cfg, 2), cfg.seed), samples_csv(run_scenario(cfg, 2), cfg.seed));
    auto other = cfg;
    other.seed = 78;
    EXPECT_NE(samples_csv(run_scenario(cfg, 1), cfg.seed), samples_csv(run_scenario(other, 1), other.seed));
}

TEST(Runner, SampleCountIsExact) {
    auto cfg = small_noisy();
    cfg.samples = 10;
    const auto r = run_scenario(cfg, 1);
    EXPECT_EQ(r.samples.size(), 10u);
    std::istringstream in(samples_csv(r, cfg.seed));
    std::string line;
    int comments = 0, rows = 0;
    while (std::getline(in, line)) {
        if (line.rfind("#", 0) == 0) ++comments;
        else ++rows;
    }
    EXPECT_EQ(comments, 3);
    EXPECT_EQ(rows, 11);
}

TEST(Runner, IdealSingleLinkKeyEqualsRawRate) {
    auto cfg = ideal_config(1, 10.0);
    cfg.link.p_link = 0.3;
    cfg.samples = 2000;
    const auto r = run_scenario(cfg, 1).report;
    EXPECT_NEAR(r.key_rate_per_s, r.raw_rate_per_s, 1e-9 * r.raw_rate_per_s);
    EXPECT_NEAR(r.e_x_mean, 0.0, 1e-12);
    EXPECT_NEAR(r.e_z_mean, 0.0, 1e-12);
}

TEST(Runner, SingleLinkTimeAndChannelUseRatesDifferByTheTrialTime) {
    auto cfg = ideal_config(1, 10.0);
    cfg.link.p_link = 0.3;
    cfg.link.t_p_s = 1e-6;
    cfg.samples = 2000;
    const auto r = run_scenario(cfg, 1).report;
    const double t_trial = 1e-6 + 2.0 * 10e3 / 2e8;
    EXPECT_NEAR(r.key_rate_per_cu / r.key_rate_per_s, t_trial, 1e-9 * t_trial);
}

TEST(Runner, ChannelUsesCoverEveryTrial) {
    auto cfg = small_noisy();
    cfg.samples = 500;
    cfg.chunk_size = 500;
    std::int64_t recorded = 0;
    const auto s = run_chunk(cfg, 5, 500);
    for (const auto& r : s.records) recorded += r.channel_uses;
    EXPECT_EQ(recorded, s.total_channel_uses);
    auto consumed = cfg;
    consumed.cu_counting = ChannelUseCounting::Consumed;
    const auto c = run_chunk(consumed, 5, 500);
    EXPECT_LE(c.total_channel_uses, s.total_channel_uses);
    for (const auto& r : c.records) {
        std::int64_t sum = 0;
        for (auto k : r.trials_per_link) sum += k;
        EXPECT_EQ(r.channel_uses, sum);
    }
}

TEST(Runner, InvalidScenarioThrowsConfigError) {
    auto cfg = small_noisy();
    cfg.station.params.t_dp_s = -1.0;
    EXPECT_THROW(run_scenario(cfg, 1), ConfigError);
    EXPECT_THROW(run_scenario(small_noisy(), 0), std::invalid_argument);
}

TEST(Sweep, OneRowPerPointIncludingInfinity) {
    auto cfg = small_noisy();
    cfg.samples = 200;
    const auto rows = sweep(cfg, "t_cut", {"0.001", "0.01", "inf"}, "", {}, 1);
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) EXPECT_TRUE(r.report.has_value()) << r.error;
    EXPECT_EQ(rows[2].coords.at(0), "inf");

    std::ostringstream os;
    write_rates_header(os, config_hash(cfg), cfg.seed, 1);
    for (const auto& r : rows) write_rates_row(os, r.coords, r.report);
    EXPECT_NE(os.str().find("sweep_value,raw_rate_per_s,e_x_mean,e_z_mean,key_rate_per_s,key_rate_per_cu,se_key_rate"),
              std::string::npos);
    EXPECT_NE(os.str().find("\ninf,"), std::string::npos);
}

TEST(Sweep, TwoAxesFormAGridAndBadPointsBecomeNaN) {
    auto cfg = small_noisy();
    cfg.samples = 100;
    const auto rows = sweep(cfg, "distance", {"20", "40"}, "f_init", {"0.99", "1.5"}, 1);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_TRUE(rows[0].report.has_value());
    EXPECT_FALSE(rows[1].report.has_value());
    EXPECT_NE(rows[1].error.find("f_init"), std::string::npos);
    std::ostringstream os;
    write_rates_row(os, rows[1].coords, rows[1].report);
    EXPECT_EQ(os.str(), "20,1.5,nan,nan,nan,nan,nan,nan\n");
    EXPECT_THROW(with_axis(cfg, "colour", "1"), ConfigError);
}

TEST(Sweep, TwoLinkRateFallsWithDistance) {
    auto cfg = small_noisy();
    cfg.samples = 1000;
    const auto rows = sweep(cfg, "distance", {"20", "80"}, "", {}, 1);
    EXPECT_GT(rows[0].report->raw_rate_per_s, rows[1].report->raw_rate_per_s);
}

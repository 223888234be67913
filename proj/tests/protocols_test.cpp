#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "repchain/repchain.hpp"
#include "sim_helpers.hpp"

using namespace repchain;
using testing_support::ideal_config;
using testing_support::Simulation;
using testing_support::TraceLine;

namespace {

ScenarioConfig preset(const std::string& name) { return load_config(std::string(REPCHAIN_PRESET_DIR) + "/" + name + ".ini"); }

bool is_link(const TraceLine& l, int a, int b) { return l.stations.size() == 2 && l.stations[0] == a && l.stations[1] == b; }

int count_kind(const std::vector<TraceLine>& lines, const std::string& kind) {
    return static_cast<int>(std::count_if(lines.begin(), lines.end(), [&](const TraceLine& l) { return l.kind == kind; }));
}

/// Dephasing probability of a qubit stored for t seconds, written out directly.
double flip_prob(double t, double t_dp) { return 0.5 * (1.0 - std::exp(-t / t_dp)); }

}  // namespace

TEST(ChainProtocol, NoiseFreeFourLinkChainDeliversPerfectPairs) {
    auto cfg = ideal_config(4, 40.0);
    cfg.link.p_link = 0.5;
    Simulation sim(cfg);
    sim.run(200);
    ASSERT_EQ(sim.world.records().size(), 200u);
    for (const auto& r : sim.world.records()) {
        EXPECT_NEAR(r.coeffs.lam00, 1.0, 1e-12);
        EXPECT_NEAR(r.e_x, 0.0, 1e-12);
        EXPECT_NEAR(r.e_z, 0.0, 1e-12);
    }
}

TEST(ChainProtocol, SwapNoiseComposesOverThreeSwaps) {
    auto cfg = ideal_config(4, 40.0);
    cfg.station.params.lambda_bsm = 0.97;
    Simulation sim(cfg, 5);
    sim.run(100);
    const double w = std::pow(0.97, 3);
    for (const auto& r : sim.world.records()) {
        EXPECT_NEAR(r.coeffs.lam00, (1.0 + 3.0 * w) / 4.0, 1e-12);
        EXPECT_NEAR(r.coeffs.lam10, (1.0 - w) / 4.0, 1e-12);
        EXPECT_NEAR(r.coeffs.lam01, (1.0 - w) / 4.0, 1e-12);
        EXPECT_NEAR(r.coeffs.lam11, (1.0 - w) / 4.0, 1e-12);
    }
}

TEST(ChainProtocol, SwapsAsSoonAsBothPairsExist) {
    auto cfg = ideal_config(2, 50.0, ProtocolKind::TwoLinkSimultaneous);
    cfg.link.p_link = 0.3;
    Simulation sim(cfg, 3);
    sim.run(200);
    const auto lines = sim.lines();
    double last_success = -1.0;
    int swaps = 0;
    for (const auto& l : lines) {
        if (l.kind == "SourceSuccess") last_success = l.time;
        if (l.kind == "EntanglementSwap") {
            EXPECT_EQ(l.time, last_success);
            ++swaps;
        }
    }
    EXPECT_EQ(swaps, 200);
}

TEST(ChainProtocol, StoredQubitsDephaseForExactlyTheirStorageTime) {
    auto cfg = ideal_config(2, 50.0, ProtocolKind::TwoLinkSimultaneous);
    cfg.link.p_link = 0.4;
    cfg.station.params.t_dp_s = 0.002;
    Simulation sim(cfg, 11);
    sim.run(300);
    const double t_trial = sim.world.link(0).t_trial;

    std::map<unsigned long long, double> ready;
    std::vector<double> expected_ex;
    for (const auto& l : sim.lines()) {
        if (l.kind == "SourceSuccess") ready[l.pairs.at(0)] = l.time;
        if (l.kind == "EntanglementSwap") {
            const double a = flip_prob(t_trial + l.time - ready.at(l.pairs.at(0)), 0.002);
            const double b = flip_prob(t_trial + l.time - ready.at(l.pairs.at(1)), 0.002);
            expected_ex.push_back(a * (1.0 - b) + b * (1.0 - a));
        }
    }
    const auto& recs = sim.world.records();
    ASSERT_EQ(recs.size(), expected_ex.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_NEAR(recs[i].e_x, expected_ex[i], 1e-12) << "delivery " << i;
        EXPECT_NEAR(recs[i].e_z, 0.0, 1e-12);
    }
}

TEST(ChainProtocol, DeliveryWaitsForTheSwapMessage) {
    auto cfg = ideal_config(2, 100.0, ProtocolKind::TwoLinkSimultaneous);
    cfg.link.p_link = 0.5;
    Simulation sim(cfg, 2);
    sim.run(100);
    const double delay = classical_delay(50.0, 2e8);
    std::vector<double> swaps, deliveries;
    for (const auto& l : sim.lines()) {
        if (l.kind == "EntanglementSwap") swaps.push_back(l.time);
        if (l.kind == "Availability" && is_link(l, 0, 2)) deliveries.push_back(l.time);
    }
    ASSERT_EQ(deliveries.size(), 100u);
    for (std::size_t i = 0; i < deliveries.size(); ++i) {
        EXPECT_NEAR(deliveries[i], swaps[i] + delay, 1e-12 * deliveries[i]);
        EXPECT_DOUBLE_EQ(sim.world.records()[i].completion_time, deliveries[i]);
    }
}

TEST(ChainProtocol, PurifiedPairBecomesUsableAfterTheLinkDelay) {
    auto cfg = ideal_config(2, 60.0, ProtocolKind::TwoLinkSimultaneous);
    cfg.link.p_link = 0.5;
    cfg.link.f_init = 0.95;
    cfg.protocol.epp_steps = 1;
    cfg.station.params.n_mem = 2;
    Simulation sim(cfg, 4);
    sim.run(100);
    const double delay = classical_delay(30.0, 2e8);
    const auto lines = sim.lines();
    int checked = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].kind != "Purification") continue;
        const auto kept = lines[i].pairs.at(0);
        auto it = std::find_if(lines.begin() + static_cast<std::ptrdiff_t>(i), lines.end(), [&](const TraceLine& l) {
            return l.kind == "Availability" && l.pairs.size() == 1 && l.pairs[0] == kept;
        });
        ASSERT_NE(it, lines.end());
        EXPECT_NEAR(it->time, lines[i].time + delay, 1e-12 * it->time);
        ++checked;
    }
    EXPECT_GT(checked, 200);
}

TEST(ChainProtocol, PurificationNeedsEnoughMemories) {
    auto cfg = ideal_config(2, 20.0, ProtocolKind::TwoLinkSimultaneous);
    cfg.protocol.epp_steps = 1;
    cfg.station.params.n_mem = 1;
    const auto problems = validate(cfg);
    ASSERT_FALSE(problems.empty());
    EXPECT_NE(problems.front().find("n_mem"), std::string::npos);
    EXPECT_THROW(throw_if_invalid(cfg), ConfigError);
}

TEST(ChainProtocol, MultiLinkWithTwoLinksMatchesSimultaneous) {
    auto a = ideal_config(2, 80.0, ProtocolKind::TwoLinkSimultaneous);
    a.link.p_link = 0.5;
    a.station.params.t_dp_s = 0.1;
    auto b = a;
    b.protocol.kind = ProtocolKind::MultiLinkSwapAsap;
    std::ostringstream ta, tb;
    const auto sa = run_chunk(a, 42, 300, &ta);
    const auto sb = run_chunk(b, 42, 300, &tb);
    EXPECT_EQ(ta.str(), tb.str());
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa.records[i].e_x, sb.records[i].e_x);
}

TEST(SequentialProtocol, SecondLinkOnlyRunsWhileFirstHoldsAPair) {
    auto cfg = ideal_config(2, 60.0, ProtocolKind::TwoLinkSequential);
    cfg.link.p_link = 0.3;
    Simulation sim(cfg, 8);
    sim.run(200);
    bool first_ready = false;
    int second = 0;
    for (const auto& l : sim.lines()) {
        if (l.kind == "SourceSuccess" && is_link(l, 0, 1)) {
            EXPECT_FALSE(first_ready);
            first_ready = true;
        } else if (l.kind == "SourceSuccess" && is_link(l, 1, 2)) {
            EXPECT_TRUE(first_ready) << "link 1 confirmed at " << l.time << " without a pair on link 0";
            ++second;
        } else if (l.kind == "EntanglementSwap") {
            first_ready = false;
        }
    }
    EXPECT_EQ(second, 200);
}

TEST(SequentialProtocol, WaitsLongerThanSimultaneous) {
    auto seq = ideal_config(2, 60.0, ProtocolKind::TwoLinkSequential);
    seq.link.p_link = 0.3;
    auto sim = seq;
    sim.protocol.kind = ProtocolKind::TwoLinkSimultaneous;
    const auto a = run_chunk(seq, 1, 2000);
    const auto b = run_chunk(sim, 1, 2000);
    EXPECT_GT(a.total_sim_time, b.total_sim_time);
}

TEST(BatchProtocol, SingleMemoryMatchesSequential) {
    auto seq = ideal_config(2, 60.0, ProtocolKind::TwoLinkSequential);
    seq.link.p_link = 0.4;
    seq.station.params.t_dp_s = 0.05;
    auto batch = seq;
    batch.protocol.kind = ProtocolKind::MultiMemoryBatch;
    std::ostringstream ta, tb;
    const auto sa = run_chunk(seq, 9, 300, &ta);
    const auto sb = run_chunk(batch, 9, 300, &tb);
    EXPECT_EQ(ta.str(), tb.str());
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        EXPECT_EQ(sa.records[i].completion_time, sb.records[i].completion_time);
        EXPECT_EQ(sa.records[i].e_x, sb.records[i].e_x);
    }
}

TEST(BatchProtocol, PairsByIndexAndDiscardsLeftovers) {
    auto cfg = ideal_config(2, 60.0, ProtocolKind::MultiMemoryBatch);
    cfg.link.p_link = 0.6;
    cfg.station.params.n_mem = 4;
    Simulation sim(cfg, 13);
    sim.run(2000);

    int left = 0, right = 0, swaps = 0, discards = 0, groups = 0, three_one = 0;
    bool in_ops = false;
    auto close = [&] {
        EXPECT_EQ(swaps, std::min(left, right));
        EXPECT_EQ(discards, std::abs(left - right));
        if ((left == 3 && right == 1) || (left == 1 && right == 3)) {
            ++three_one;
            EXPECT_EQ(swaps, 1);
            EXPECT_EQ(discards, 2);
        }
        ++groups;
        left = right = swaps = discards = 0;
        in_ops = false;
    };
    for (const auto& l : sim.lines()) {
        if (l.kind == "SourceSuccess") {
            if (in_ops) close();
            (is_link(l, 0, 1) ? left : right) += 1;
        } else if (l.kind == "EntanglementSwap") {
            in_ops = true;
            ++swaps;
        } else if (l.kind == "Discard") {
            in_ops = true;
            ++discards;
        }
    }
    EXPECT_GT(groups, 500);
    EXPECT_GT(three_one, 0);
}

TEST(Cutoff, InfiniteCutoffNeverDiscards) {
    auto cfg = ideal_config(2, 100.0, ProtocolKind::TwoLinkSimultaneous);
    cfg.link.p_link = 0.2;
    Simulation sim(cfg, 6);
    sim.run(300);
    EXPECT_EQ(count_kind(sim.lines(), "Discard"), 0);
}

TEST(Cutoff, ConsumedPairsCancelTheirDeadline) {
    auto cfg = ideal_config(2, 20.0, ProtocolKind::TwoLinkSimultaneous);
    cfg.station.params.t_cut_s = 10.0;
    Simulation sim(cfg, 6);
    sim.run(300);
    EXPECT_EQ(count_kind(sim.lines(), "Discard"), 0);
}

TEST(Cutoff, StorageNeverExceedsTheCutoff) {
    const auto cfg = preset("two_link_cutoff");
    Simulation sim(cfg, 21);
    sim.run(2000);
    EXPECT_GT(count_kind(sim.lines(), "Discard"), 0);
    EXPECT_LE(sim.world.max_storage_time(), cfg.station.params.t_cut_s * (1.0 + 1e-12));
    EXPECT_TRUE(sim.world.audit().balanced());
}

TEST(Invariants, MemoryOccupancyAndConservation) {
    for (const char* name : {"two_link_epp_f0935", "chain_epp", "trenyi_multimemory", "two_link_cutoff"}) {
        auto cfg = preset(name);
        cfg.total_distance_km = std::min(cfg.total_distance_km, 60.0);
        Simulation sim(cfg, 17);
        int violations = 0;
        sim.run(300, [&](const World& w) {
            std::map<std::pair<int, int>, int> used;
            for (const auto& [id, p] : w.pairs()) {
                if (p.in_memory(0)) ++used[{p.ends[0].station, 1}];
                if (p.in_memory(1)) ++used[{p.ends[1].station, 0}];
            }
            for (const auto& [key, n] : used)
                if (n > w.station(key.first).params.n_mem) ++violations;
        });
        EXPECT_EQ(violations, 0) << name;
        const auto audit = sim.world.audit();
        EXPECT_TRUE(audit.balanced()) << name;
        EXPECT_EQ(audit.delivered, 300u) << name;
    }
}

TEST(Invariants, KeyRateFallsWithDistance) {
    auto cfg = ideal_config(2, 0.0, ProtocolKind::TwoLinkSimultaneous);
    cfg.station.params.t_dp_s = 0.1;
    cfg.link.f_init = 0.98;
    cfg.samples = 3000;
    double prev = kInfinity, prev_se = 0.0;
    for (double d : {20.0, 60.0, 100.0}) {
        cfg.total_distance_km = d;
        const auto r = run_scenario(cfg, 1).report;
        EXPECT_LE(r.key_rate_per_s, prev + 3.0 * std::hypot(r.se_key_rate_per_s, prev_se)) << d << " km";
        prev = r.key_rate_per_s;
        prev_se = r.se_key_rate_per_s;
    }
}

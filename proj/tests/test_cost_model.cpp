// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "scout/cost_model.hpp"

namespace {

void check_non_overlapping(const std::vector<scout::Interval>& iv) {
    for (std::size_t i = 0; i < iv.size(); ++i) {
        REQUIRE(iv[i].end_us >= iv[i].start_us);
        if (i > 0) REQUIRE(iv[i].start_us >= iv[i - 1].end_us - 1e-9);
    }
}

void check_conservation(const scout::Timeline& t) {
    check_non_overlapping(t.gpu);
    check_non_overlapping(t.cpu);
    check_non_overlapping(t.link);
    double last = 0.0;
    for (const auto* dev : {&t.gpu, &t.cpu, &t.link})
        for (const scout::Interval& i : *dev) last = std::max(last, i.end_us);
    REQUIRE(t.makespan_us == Catch::Approx(last).margin(1e-6));
    REQUIRE(scout::busy_us(t.gpu) <= t.makespan_us + 1e-6);
}

}  // namespace

TEST_CASE("effective bandwidth hits the measured anchors and clamps outside") {
    const std::vector<scout::BandwidthAnchor> table{{4096.0, 0.8}, {131072.0, 15.0}};
    REQUIRE(scout::effective_bandwidth(4096.0, table) == Catch::Approx(0.8));
    REQUIRE(scout::effective_bandwidth(131072.0, table) == Catch::Approx(15.0));
    REQUIRE(scout::effective_bandwidth(512.0, table) == Catch::Approx(0.8));
    REQUIRE(scout::effective_bandwidth(1e9, table) == Catch::Approx(15.0));
    // log-log interpolation: geometric midpoint of sizes -> geometric midpoint
    // of rates
    const double mid_bytes = std::sqrt(4096.0 * 131072.0);
    REQUIRE(scout::effective_bandwidth(mid_bytes, table) ==
            Catch::Approx(std::sqrt(0.8 * 15.0)).epsilon(1e-12));
    double prev = 0.0;
    for (double b = 4096.0; b <= 131072.0; b *= 1.3) {
        const double g = scout::effective_bandwidth(b, table);
        REQUIRE(g >= prev);
        prev = g;
    }
}

TEST_CASE("effective bandwidth rejects malformed tables") {
    REQUIRE_THROWS_AS(scout::effective_bandwidth(100.0, {}), std::invalid_argument);
    REQUIRE_THROWS_AS(scout::effective_bandwidth(100.0, {{4096.0, 0.8}, {4096.0, 1.0}}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(scout::effective_bandwidth(100.0, {{4096.0, -1.0}}), std::invalid_argument);
    REQUIRE_THROWS_AS(scout::effective_bandwidth(0.0, {{4096.0, 0.8}}), std::invalid_argument);
}

TEST_CASE("throughput is batch per step time") {
    scout::Timeline t;
    t.steps = 36;
    t.batch_effective = 36;
    t.makespan_us = 36000.0;
    REQUIRE(scout::step_time_us(t) == Catch::Approx(1000.0));
    REQUIRE(scout::throughput(t) == Catch::Approx(36000.0));
    t.batch_effective = 72;  // linear in batch at fixed step time
    REQUIRE(scout::throughput(t) == Catch::Approx(72000.0));
}

TEST_CASE("co-attention: a 3x slower CPU task leaves the GPU idle two thirds") {
    scout::CostParams p;
    p.layer_attention_us = 1000.0;
    p.layer_total_us = 1000.0;  // no non-attention work, pure handoff
    p.gpu_cpu_compute_ratio = 20.0;
    p.co_attention_cpu_share = 0.15;  // task = 0.15 * 1000 * 20 = 3000us
    p.steps = 4;
    p.layers = 2;
    const scout::Timeline t = scout::simulate_co_attention(p);
    REQUIRE(t.batch_effective == p.batch);
    REQUIRE(scout::gpu_idle_fraction(t) == Catch::Approx(2.0 / 3.0).margin(1e-9));
    check_conservation(t);
}

TEST_CASE("recall-prefetch: transfers twice the layer time halve GPU utilization") {
    scout::CostParams p;
    p.batch = 1;
    p.budget_tokens = 1800.0;
    p.context_tokens = 4000.0;
    p.token_kv_bytes = 1.0;
    p.recall_miss_fraction = 1.0;
    p.bandwidth_table = {{1.0, 0.001}};  // 1 byte per us, any granularity
    p.steps = 16;
    p.layers = 4;
    const scout::Timeline t = scout::simulate_recall_prefetch(p);
    REQUIRE(t.batch_effective == 1);
    // transfer = 1800 * 1 * 1 / 1 = 1800us against a 900us layer
    REQUIRE(scout::gpu_idle_fraction(t) == Catch::Approx(0.5).margin(0.01));
    check_conservation(t);
}

TEST_CASE("full-context baseline saturates the GPU but caps the batch") {
    scout::CostParams p;  // defaults: 32k context, 16 GiB free, 4 KB per token-layer
    const scout::Timeline t = scout::simulate_full_kv(p);
    REQUIRE(t.batch_effective == 4);
    REQUIRE(scout::gpu_idle_fraction(t) == Catch::Approx(0.0).margin(1e-12));
    // context/budget = 16x attention blowup, scaled by the 4/40 batch share
    REQUIRE(t.gpu[0].end_us - t.gpu[0].start_us == Catch::Approx(480.0));
    check_conservation(t);
}

TEST_CASE("layer-ahead pipeline absorbs the defaults without stalling") {
    scout::CostParams p;
    const scout::Timeline t = scout::simulate_scout(p);
    REQUIRE(t.batch_effective == p.batch);
    REQUIRE(scout::gpu_idle_fraction(t) == Catch::Approx(0.0).margin(1e-9));
    // staggered recall: every layer transfers every recall_interval steps
    REQUIRE(t.link.size() == p.layers * (p.steps / p.recall_interval));
    check_conservation(t);
}

TEST_CASE("attention-only task window stalls once the task outgrows it") {
    scout::CostParams p;
    p.precompute_enabled = false;
    // flat series 0.082: task = 0.082 * 300 * 20 = 492us > 300us window
    const scout::Timeline t = scout::simulate_scout(p);
    const double expected_idle = 1.0 - 900.0 / (492.0 + 600.0);
    REQUIRE(scout::gpu_idle_fraction(t) == Catch::Approx(expected_idle).margin(1e-3));
    check_conservation(t);
}

TEST_CASE("without periodic recall the synthesized drift series grows") {
    scout::CostParams p;
    p.periodic_recall_enabled = false;
    const scout::Timeline off = scout::simulate_scout(p);
    const scout::Timeline on = scout::simulate_scout(scout::CostParams{});
    REQUIRE(off.makespan_us > on.makespan_us);
    REQUIRE(off.link.empty());
    check_conservation(off);
}

TEST_CASE("an explicit cpu ratio series overrides synthesis and must fit") {
    scout::CostParams p;
    p.steps = 4;
    p.layers = 2;
    p.cpu_ratio_series = {10.0, 0.0, 0.0, 0.0};  // absurd first step: clear stall
    const scout::Timeline t = scout::simulate_scout(p);
    // step 0 layers wait on a 10 * 300 * 20 = 60000us task
    REQUIRE(t.makespan_us > 2.0 * 60000.0);
    p.cpu_ratio_series = {0.1, 0.1};
    REQUIRE_THROWS_AS(scout::simulate_scout(p), std::invalid_argument);
}

TEST_CASE("strategy names round-trip and parameters are validated") {
    for (scout::Strategy s : {scout::Strategy::full_kv, scout::Strategy::recall_prefetch,
                              scout::Strategy::co_attention, scout::Strategy::scout})
        REQUIRE(scout::strategy_from_name(scout::strategy_name(s)) == s);
    REQUIRE_THROWS_AS(scout::strategy_from_name("offload"), std::invalid_argument);

    scout::CostParams p;
    p.layer_total_us = 100.0;  // below attention time
    REQUIRE_THROWS_AS(scout::simulate_full_kv(p), std::invalid_argument);
    p = scout::CostParams{};
    p.budget_tokens = 1e9;  // above context
    REQUIRE_THROWS_AS(scout::simulate_scout(p), std::invalid_argument);
    p = scout::CostParams{};
    p.recall_miss_fraction = 1.5;
    REQUIRE_THROWS_AS(scout::simulate_recall_prefetch(p), std::invalid_argument);
    p = scout::CostParams{};
    p.recall_interval = 0;
    REQUIRE_THROWS_AS(scout::simulate_scout(p), std::invalid_argument);
}

TEST_CASE("a tiny memory budget still admits one sequence") {
    scout::CostParams p;
    p.free_gpu_bytes = 1.0;
    for (scout::Strategy s : {scout::Strategy::full_kv, scout::Strategy::recall_prefetch,
                              scout::Strategy::co_attention, scout::Strategy::scout})
        REQUIRE(scout::simulate_strategy(s, p).batch_effective == 1);
}

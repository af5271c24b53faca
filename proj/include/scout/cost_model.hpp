// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "scout/numerics.hpp"

namespace scout {

// Serving-scale pipeline model. It is calibrated, not first-principles: layer
// times, the GPU/CPU compute ratio, and the PCIe bandwidth curve are measured
// inputs; the model reproduces pipeline structure (what overlaps what, who
// stalls on whom) and relative magnitudes.
struct BandwidthAnchor {
    double bytes = 0.0;
    double gbps = 0.0;
};

struct CostParams {
    double layer_attention_us = 300.0;  // sparse attention (budget tokens) at `batch`
    double layer_total_us = 900.0;      // whole layer at `batch`
    double gpu_cpu_compute_ratio = 20.0;
    std::vector<BandwidthAnchor> bandwidth_table = {{4096.0, 0.8}, {131072.0, 15.0}};
    double token_kv_bytes = 4096.0;  // per token per layer
    double hbm_gbps = 1900.0;        // reported for context; transfers go over PCIe
    std::size_t batch = 40;
    std::size_t layers = 32;
    std::size_t steps = 32;
    double context_tokens = 32768.0;
    double budget_tokens = 2048.0;
    double block_size = 32.0;  // tokens per transfer page / digest block
    double free_gpu_bytes = 16.0 * 1024.0 * 1024.0 * 1024.0;
    // Fraction of the budget actually re-fetched per transfer event. Block
    // selections change slowly between consecutive tokens, so a transfer
    // refreshes the drifted share rather than the whole budget.
    double recall_miss_fraction = 0.1;
    double co_attention_cpu_share = 0.25;  // share of attention work offloaded per layer
    std::size_t recall_interval = 8;       // steps between periodic recalls per layer
    // Per-step CPU compute share for the scout strategy. If cpu_ratio_series
    // is empty it is synthesized: flat at ratio_flat while periodic recall is
    // on, growing from ratio_growth_start by ratio_growth_slope per step when
    // it is disabled (selection drift accumulates unchecked).
    std::vector<double> cpu_ratio_series;
    double ratio_flat = 0.082;
    double ratio_growth_start = 0.03;
    double ratio_growth_slope = 0.005;
    bool precompute_enabled = true;      // layer-ahead task window (off: attention-only window)
    bool periodic_recall_enabled = true;
};

enum class Strategy { full_kv, recall_prefetch, co_attention, scout };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::full_kv: return "full_kv";
        case Strategy::recall_prefetch: return "recall_prefetch";
        case Strategy::co_attention: return "co_attention";
        case Strategy::scout: return "scout";
    }
    return "?";
}

inline Strategy strategy_from_name(const std::string& name) {
    if (name == "full_kv") return Strategy::full_kv;
    if (name == "recall_prefetch") return Strategy::recall_prefetch;
    if (name == "co_attention") return Strategy::co_attention;
    if (name == "scout") return Strategy::scout;
    throw std::invalid_argument("unknown strategy: " + name);
}

struct Interval {
    double start_us = 0.0;
    double end_us = 0.0;
    std::string label;
};

struct Timeline {
    Strategy strategy = Strategy::full_kv;
    std::size_t steps = 0;
    std::size_t batch_effective = 0;
    std::vector<Interval> gpu;
    std::vector<Interval> cpu;
    std::vector<Interval> link;
    double makespan_us = 0.0;
};

inline double busy_us(const std::vector<Interval>& iv) {
    double b = 0.0;
    for (const Interval& i : iv) b += i.end_us - i.start_us;
    return b;
}

// Idle share within the device's own active span, so a transfer draining
// after the last compute interval does not count against the device.
inline double idle_fraction(const Timeline& t, const std::vector<Interval>& device) {
    if (t.makespan_us <= 0.0) throw std::invalid_argument("idle_fraction: empty timeline");
    if (device.empty()) return 1.0;
    double lo = device.front().start_us, hi = device.front().end_us;
    for (const Interval& i : device) {
        lo = std::min(lo, i.start_us);
        hi = std::max(hi, i.end_us);
    }
    if (hi <= lo) return 1.0;
    return 1.0 - busy_us(device) / (hi - lo);
}

inline double gpu_idle_fraction(const Timeline& t) { return idle_fraction(t, t.gpu); }

inline double step_time_us(const Timeline& t) {
    if (t.steps == 0) throw std::invalid_argument("step_time_us: zero steps");
    return t.makespan_us / static_cast<double>(t.steps);
}

// Decoded tokens per second: batch tokens per step.
inline double throughput(const Timeline& t) {
    return static_cast<double>(t.batch_effective) / step_time_us(t) * 1e6;
}

// Transfer-size-dependent PCIe bandwidth in GB/s: log-log interpolation
// between measured anchors, clamped outside the anchored range.
inline double effective_bandwidth(double granularity_bytes,
                                  const std::vector<BandwidthAnchor>& table) {
    if (table.empty()) throw std::invalid_argument("effective_bandwidth: empty table");
    for (const BandwidthAnchor& a : table)
        if (!(a.bytes > 0.0) || !(a.gbps > 0.0))
            throw std::invalid_argument("effective_bandwidth: anchors must be positive");
    for (std::size_t i = 1; i < table.size(); ++i)
        if (!(table[i].bytes > table[i - 1].bytes))
            throw std::invalid_argument("effective_bandwidth: anchors must be sorted by size");
    if (!(granularity_bytes > 0.0))
        throw std::invalid_argument("effective_bandwidth: granularity must be > 0");
    if (granularity_bytes <= table.front().bytes) return table.front().gbps;
    if (granularity_bytes >= table.back().bytes) return table.back().gbps;
    for (std::size_t i = 1; i < table.size(); ++i) {
        if (granularity_bytes <= table[i].bytes) {
            const double t = (std::log(granularity_bytes) - std::log(table[i - 1].bytes)) /
                             (std::log(table[i].bytes) - std::log(table[i - 1].bytes));
            return std::exp(std::log(table[i - 1].gbps) +
                            t * (std::log(table[i].gbps) - std::log(table[i - 1].gbps)));
        }
    }
    return table.back().gbps;
}

namespace detail {

inline void validate(const CostParams& p) {
    if (!(p.layer_attention_us > 0.0) || !(p.layer_total_us >= p.layer_attention_us))
        throw std::invalid_argument("CostParams: need 0 < attention <= layer time");
    if (!(p.gpu_cpu_compute_ratio >= 1.0))
        throw std::invalid_argument("CostParams: compute ratio must be >= 1");
    if (p.batch == 0 || p.layers == 0 || p.steps == 0)
        throw std::invalid_argument("CostParams: batch, layers, steps must be >= 1");
    if (!(p.budget_tokens > 0.0) || !(p.context_tokens >= p.budget_tokens))
        throw std::invalid_argument("CostParams: need 0 < budget <= context");
    if (!(p.block_size > 0.0) || !(p.token_kv_bytes > 0.0) || !(p.free_gpu_bytes > 0.0))
        throw std::invalid_argument("CostParams: sizes must be positive");
    if (p.recall_miss_fraction < 0.0 || p.recall_miss_fraction > 1.0)
        throw std::invalid_argument("CostParams: recall_miss_fraction in [0, 1]");
    if (p.co_attention_cpu_share < 0.0 || p.co_attention_cpu_share > 1.0)
        throw std::invalid_argument("CostParams: co_attention_cpu_share in [0, 1]");
    if (p.recall_interval == 0)
        throw std::invalid_argument("CostParams: recall_interval must be >= 1");
}

inline std::size_t capped_batch(const CostParams& p, double bytes_per_seq) {
    const double cap = std::floor(p.free_gpu_bytes / bytes_per_seq);
    const double eff = std::min(static_cast<double>(p.batch), std::max(1.0, cap));
    return static_cast<std::size_t>(eff);
}

inline std::vector<double> ratio_series(const CostParams& p) {
    if (!p.cpu_ratio_series.empty()) {
        if (p.cpu_ratio_series.size() != p.steps)
            throw std::invalid_argument("CostParams: cpu_ratio_series length != steps");
        return p.cpu_ratio_series;
    }
    std::vector<double> out(p.steps);
    for (std::size_t s = 0; s < p.steps; ++s)
        out[s] = p.periodic_recall_enabled
                     ? p.ratio_flat
                     : std::min(1.0, p.ratio_growth_start + p.ratio_growth_slope * static_cast<double>(s));
    return out;
}

inline std::string layer_tag(const char* what, std::size_t layer) {
    return std::string(what) + " L" + std::to_string(layer);
}

}  // namespace detail

// GPU-only baseline: the whole context stays in HBM, so attention time scales
// with context/budget (and with the batch the memory cap allows).
inline Timeline simulate_full_kv(const CostParams& p) {
    detail::validate(p);
    Timeline t;
    t.strategy = Strategy::full_kv;
    t.steps = p.steps;
    t.batch_effective = detail::capped_batch(p, p.context_tokens * p.token_kv_bytes *
                                                    static_cast<double>(p.layers));
    const double attn = p.layer_attention_us *
                        (static_cast<double>(t.batch_effective) / static_cast<double>(p.batch)) *
                        (p.context_tokens / p.budget_tokens);
    const double rest = p.layer_total_us - p.layer_attention_us;
    double now = 0.0;
    for (std::size_t s = 0; s < p.steps; ++s) {
        for (std::size_t i = 0; i < p.layers; ++i) {
            t.gpu.push_back({now, now + attn, detail::layer_tag("attn", i)});
            t.gpu.push_back({now + attn, now + attn + rest, detail::layer_tag("rest", i)});
            now += attn + rest;
        }
    }
    t.makespan_us = now;
    return t;
}

// One-layer-ahead prefetch of the (drifted share of the) per-layer budget:
// the transfer for layer i overlaps layer i-1's compute, and the GPU stalls
// whenever the link falls behind.
inline Timeline simulate_recall_prefetch(const CostParams& p) {
    detail::validate(p);
    Timeline t;
    t.strategy = Strategy::recall_prefetch;
    t.steps = p.steps;
    t.batch_effective = detail::capped_batch(p, p.budget_tokens * p.token_kv_bytes *
                                                    static_cast<double>(p.layers));
    const double batch_scale =
        static_cast<double>(t.batch_effective) / static_cast<double>(p.batch);
    const double attn = p.layer_attention_us * batch_scale;
    const double rest = p.layer_total_us - p.layer_attention_us;
    const double bw = effective_bandwidth(p.block_size * p.token_kv_bytes, p.bandwidth_table);
    const double bytes = p.recall_miss_fraction * p.budget_tokens * p.token_kv_bytes *
                         static_cast<double>(t.batch_effective);
    const double transfer = bytes / (bw * 1000.0);  // GB/s -> bytes/us
    double gpu_free = 0.0;
    double link_free = 0.0;
    double prev_layer_start = 0.0;
    bool first = true;
    for (std::size_t s = 0; s < p.steps; ++s) {
        for (std::size_t i = 0; i < p.layers; ++i) {
            const double tx_start = std::max(link_free, first ? 0.0 : prev_layer_start);
            const double tx_end = tx_start + transfer;
            t.link.push_back({tx_start, tx_end, detail::layer_tag("prefetch", i)});
            link_free = tx_end;
            const double start = std::max(gpu_free, tx_end);
            t.gpu.push_back({start, start + attn, detail::layer_tag("attn", i)});
            t.gpu.push_back({start + attn, start + attn + rest, detail::layer_tag("rest", i)});
            gpu_free = start + attn + rest;
            prev_layer_start = start;
            first = false;
        }
    }
    t.makespan_us = std::max(gpu_free, link_free);
    return t;
}

// CPU task runs alongside the same layer's attention and the merge waits for
// it, so the CPU's window is only the attention slice of the layer.
inline Timeline simulate_co_attention(const CostParams& p) {
    detail::validate(p);
    Timeline t;
    t.strategy = Strategy::co_attention;
    t.steps = p.steps;
    t.batch_effective = detail::capped_batch(p, p.budget_tokens * p.token_kv_bytes *
                                                    static_cast<double>(p.layers));
    const double batch_scale =
        static_cast<double>(t.batch_effective) / static_cast<double>(p.batch);
    const double attn = p.layer_attention_us * batch_scale;
    const double rest = p.layer_total_us - p.layer_attention_us;
    const double task = p.co_attention_cpu_share * attn * p.gpu_cpu_compute_ratio;
    double now = 0.0;
    for (std::size_t s = 0; s < p.steps; ++s) {
        for (std::size_t i = 0; i < p.layers; ++i) {
            t.gpu.push_back({now, now + attn, detail::layer_tag("attn", i)});
            if (task > 0.0) t.cpu.push_back({now, now + task, detail::layer_tag("task", i)});
            const double merge = now + std::max(attn, task);
            t.gpu.push_back({merge, merge + rest, detail::layer_tag("rest", i)});
            now = merge + rest;
        }
    }
    t.makespan_us = now;
    return t;
}

// Layer-ahead pipeline: each layer's off-device task gets a full layer window
// (attention-only when precompute is disabled), and periodic recalls ride the
// link with a one-step deadline, staggered across layers.
inline Timeline simulate_scout(const CostParams& p) {
    detail::validate(p);
    Timeline t;
    t.strategy = Strategy::scout;
    t.steps = p.steps;
    const double digest_bytes_per_seq =
        (p.context_tokens / p.block_size) * p.token_kv_bytes * static_cast<double>(p.layers);
    const double resident_bytes_per_seq =
        p.budget_tokens * p.token_kv_bytes * static_cast<double>(p.layers);
    t.batch_effective = detail::capped_batch(p, resident_bytes_per_seq + digest_bytes_per_seq);
    const double batch_scale =
        static_cast<double>(t.batch_effective) / static_cast<double>(p.batch);
    const double attn = p.layer_attention_us * batch_scale;
    const double rest = p.layer_total_us - p.layer_attention_us;
    const double window = p.precompute_enabled ? attn + rest : attn;
    const double bw = effective_bandwidth(p.block_size * p.token_kv_bytes, p.bandwidth_table);
    const double recall_bytes = p.recall_miss_fraction * p.budget_tokens * p.token_kv_bytes *
                                static_cast<double>(t.batch_effective);
    const double transfer = recall_bytes / (bw * 1000.0);
    const std::vector<double> series = detail::ratio_series(p);

    std::vector<double> recall_ready(p.layers, 0.0);  // deadline gates per layer
    double now = 0.0;
    double link_free = 0.0;
    for (std::size_t s = 0; s < p.steps; ++s) {
        const double task = series[s] * attn * p.gpu_cpu_compute_ratio;
        for (std::size_t i = 0; i < p.layers; ++i) {
            const double start = std::max(now, recall_ready[i]);
            recall_ready[i] = 0.0;
            t.gpu.push_back({start, start + attn, detail::layer_tag("attn", i)});
            if (task > 0.0) t.cpu.push_back({start, start + task, detail::layer_tag("task", i)});
            // Merge waits until the task's window has fully elapsed; any
            // excess shows up as a GPU idle gap before the next layer.
            const double layer_end = start + std::max(window, task) +
                                     (p.precompute_enabled ? 0.0 : rest);
            if (p.precompute_enabled) {
                t.gpu.push_back({start + attn, start + attn + rest, detail::layer_tag("rest", i)});
            } else {
                t.gpu.push_back({layer_end - rest, layer_end, detail::layer_tag("rest", i)});
            }
            if (p.periodic_recall_enabled &&
                (s % p.recall_interval) == (i % p.recall_interval)) {
                const double tx_start = std::max(link_free, start + attn);  // after attention completes
                const double tx_end = tx_start + transfer;
                t.link.push_back({tx_start, tx_end, detail::layer_tag("recall", i)});
                link_free = tx_end;
                recall_ready[i] = tx_end;  // next step's layer i may not start earlier
            }
            now = layer_end;
        }
    }
    t.makespan_us = std::max(now, link_free);
    return t;
}

inline Timeline simulate_strategy(Strategy s, const CostParams& p) {
    switch (s) {
        case Strategy::full_kv: return simulate_full_kv(p);
        case Strategy::recall_prefetch: return simulate_recall_prefetch(p);
        case Strategy::co_attention: return simulate_co_attention(p);
        case Strategy::scout: return simulate_scout(p);
    }
    throw std::invalid_argument("simulate_strategy: unknown strategy");
}

}  // namespace scout

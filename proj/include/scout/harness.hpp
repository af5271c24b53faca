// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "scout/cost_model.hpp"
#include "scout/engine.hpp"
#include "scout/model.hpp"
#include "scout/recall.hpp"

namespace scout {

// Raised for malformed configuration (as opposed to assertion failures while
// running); the CLI maps it to a distinct exit code.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    ToyDecoderConfig decoder;
    EngineConfig engine;
    std::size_t prefill_tokens = 1024;
    std::size_t decode_steps = 32;
    CostParams cost;
    std::string out_dir = "out";
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw config_error(path + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) { known = true; break; }
        if (!known) throw config_error("unknown config key: " + path + "." + it.key());
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error("bad value for " + path + "." + std::string(key));
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig cfg;
    detail::check_keys(j, "config", {"decoder", "engine", "workload", "cost", "out_dir"});
    if (j.contains("decoder")) {
        const auto& d = j.at("decoder");
        detail::check_keys(d, "decoder", {"layers", "hidden", "head_dim", "alpha",
                                          "feedback_alpha", "seed", "block_size"});
        detail::read_field(d, "layers", cfg.decoder.layers, "decoder");
        detail::read_field(d, "hidden", cfg.decoder.hidden, "decoder");
        detail::read_field(d, "head_dim", cfg.decoder.head_dim, "decoder");
        detail::read_field(d, "alpha", cfg.decoder.alpha, "decoder");
        detail::read_field(d, "feedback_alpha", cfg.decoder.feedback_alpha, "decoder");
        detail::read_field(d, "seed", cfg.decoder.seed, "decoder");
        detail::read_field(d, "block_size", cfg.decoder.block_size, "decoder");
    }
    if (j.contains("engine")) {
        const auto& e = j.at("engine");
        detail::check_keys(e, "engine", {"k_blocks", "gpu_side_policy", "beta",
                                         "recall_intervals", "deterministic_serial"});
        detail::read_field(e, "k_blocks", cfg.engine.k_blocks, "engine");
        detail::read_field(e, "beta", cfg.engine.beta, "engine");
        detail::read_field(e, "recall_intervals", cfg.engine.recall_intervals, "engine");
        detail::read_field(e, "deterministic_serial", cfg.engine.deterministic_serial, "engine");
        if (e.contains("gpu_side_policy")) {
            std::string p;
            detail::read_field(e, "gpu_side_policy", p, "engine");
            if (p == "predicted_topk_intersect_resident")
                cfg.engine.gpu_side_policy = GpuSidePolicy::predicted_topk_intersect_resident;
            else if (p == "all_resident")
                cfg.engine.gpu_side_policy = GpuSidePolicy::all_resident;
            else
                throw config_error("bad value for engine.gpu_side_policy: " + p);
        }
    }
    if (j.contains("workload")) {
        const auto& w = j.at("workload");
        detail::check_keys(w, "workload", {"prefill_tokens", "decode_steps"});
        detail::read_field(w, "prefill_tokens", cfg.prefill_tokens, "workload");
        detail::read_field(w, "decode_steps", cfg.decode_steps, "workload");
    }
    if (j.contains("cost")) {
        const auto& c = j.at("cost");
        detail::check_keys(
            c, "cost",
            {"layer_attention_us", "layer_total_us", "gpu_cpu_compute_ratio", "bandwidth_table",
             "token_kv_bytes", "hbm_gbps", "batch", "layers", "steps", "context_tokens",
             "budget_tokens", "block_size", "free_gpu_bytes", "recall_miss_fraction",
             "co_attention_cpu_share", "recall_interval", "cpu_ratio_series", "ratio_flat",
             "ratio_growth_start", "ratio_growth_slope", "precompute_enabled",
             "periodic_recall_enabled"});
        detail::read_field(c, "layer_attention_us", cfg.cost.layer_attention_us, "cost");
        detail::read_field(c, "layer_total_us", cfg.cost.layer_total_us, "cost");
        detail::read_field(c, "gpu_cpu_compute_ratio", cfg.cost.gpu_cpu_compute_ratio, "cost");
        detail::read_field(c, "token_kv_bytes", cfg.cost.token_kv_bytes, "cost");
        detail::read_field(c, "hbm_gbps", cfg.cost.hbm_gbps, "cost");
        detail::read_field(c, "batch", cfg.cost.batch, "cost");
        detail::read_field(c, "layers", cfg.cost.layers, "cost");
        detail::read_field(c, "steps", cfg.cost.steps, "cost");
        detail::read_field(c, "context_tokens", cfg.cost.context_tokens, "cost");
        detail::read_field(c, "budget_tokens", cfg.cost.budget_tokens, "cost");
        detail::read_field(c, "block_size", cfg.cost.block_size, "cost");
        detail::read_field(c, "free_gpu_bytes", cfg.cost.free_gpu_bytes, "cost");
        detail::read_field(c, "recall_miss_fraction", cfg.cost.recall_miss_fraction, "cost");
        detail::read_field(c, "co_attention_cpu_share", cfg.cost.co_attention_cpu_share, "cost");
        detail::read_field(c, "recall_interval", cfg.cost.recall_interval, "cost");
        detail::read_field(c, "cpu_ratio_series", cfg.cost.cpu_ratio_series, "cost");
        detail::read_field(c, "ratio_flat", cfg.cost.ratio_flat, "cost");
        detail::read_field(c, "ratio_growth_start", cfg.cost.ratio_growth_start, "cost");
        detail::read_field(c, "ratio_growth_slope", cfg.cost.ratio_growth_slope, "cost");
        detail::read_field(c, "precompute_enabled", cfg.cost.precompute_enabled, "cost");
        detail::read_field(c, "periodic_recall_enabled", cfg.cost.periodic_recall_enabled, "cost");
        if (c.contains("bandwidth_table")) {
            const auto& t = c.at("bandwidth_table");
            if (!t.is_array()) throw config_error("cost.bandwidth_table: expected an array");
            cfg.cost.bandwidth_table.clear();
            for (const auto& row : t) {
                if (!row.is_array() || row.size() != 2)
                    throw config_error("cost.bandwidth_table: expected [bytes, gbps] pairs");
                BandwidthAnchor a;
                try {
                    a.bytes = row.at(0).get<double>();
                    a.gbps = row.at(1).get<double>();
                } catch (const nlohmann::json::exception&) {
                    throw config_error("cost.bandwidth_table: expected [bytes, gbps] pairs");
                }
                cfg.cost.bandwidth_table.push_back(a);
            }
        }
    }
    detail::read_field(j, "out_dir", cfg.out_dir, "config");
    return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["decoder"] = {{"layers", cfg.decoder.layers},       {"hidden", cfg.decoder.hidden},
                    {"head_dim", cfg.decoder.head_dim},   {"alpha", cfg.decoder.alpha},
                    {"feedback_alpha", cfg.decoder.feedback_alpha},
                    {"seed", cfg.decoder.seed},           {"block_size", cfg.decoder.block_size}};
    j["engine"] = {
        {"k_blocks", cfg.engine.k_blocks},
        {"gpu_side_policy", cfg.engine.gpu_side_policy == GpuSidePolicy::all_resident
                                ? "all_resident"
                                : "predicted_topk_intersect_resident"},
        {"beta", cfg.engine.beta},
        {"recall_intervals", cfg.engine.recall_intervals},
        {"deterministic_serial", cfg.engine.deterministic_serial}};
    j["workload"] = {{"prefill_tokens", cfg.prefill_tokens}, {"decode_steps", cfg.decode_steps}};
    nlohmann::json bw = nlohmann::json::array();
    for (const BandwidthAnchor& a : cfg.cost.bandwidth_table)
        bw.push_back(nlohmann::json::array({a.bytes, a.gbps}));
    j["cost"] = {{"layer_attention_us", cfg.cost.layer_attention_us},
                 {"layer_total_us", cfg.cost.layer_total_us},
                 {"gpu_cpu_compute_ratio", cfg.cost.gpu_cpu_compute_ratio},
                 {"bandwidth_table", bw},
                 {"token_kv_bytes", cfg.cost.token_kv_bytes},
                 {"hbm_gbps", cfg.cost.hbm_gbps},
                 {"batch", cfg.cost.batch},
                 {"layers", cfg.cost.layers},
                 {"steps", cfg.cost.steps},
                 {"context_tokens", cfg.cost.context_tokens},
                 {"budget_tokens", cfg.cost.budget_tokens},
                 {"block_size", cfg.cost.block_size},
                 {"free_gpu_bytes", cfg.cost.free_gpu_bytes},
                 {"recall_miss_fraction", cfg.cost.recall_miss_fraction},
                 {"co_attention_cpu_share", cfg.cost.co_attention_cpu_share},
                 {"recall_interval", cfg.cost.recall_interval},
                 {"cpu_ratio_series", cfg.cost.cpu_ratio_series},
                 {"ratio_flat", cfg.cost.ratio_flat},
                 {"ratio_growth_start", cfg.cost.ratio_growth_start},
                 {"ratio_growth_slope", cfg.cost.ratio_growth_slope},
                 {"precompute_enabled", cfg.cost.precompute_enabled},
                 {"periodic_recall_enabled", cfg.cost.periodic_recall_enabled}};
    j["out_dir"] = cfg.out_dir;
    return j;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config file " + path + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

// "layer interval mean_ratio" lines as written by the calibrate command;
// comment lines start with '#', only the first two columns are read back.
inline std::vector<std::size_t> load_intervals(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open intervals file: " + path);
    std::vector<std::size_t> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::size_t layer = 0, interval = 0;
        if (!(ls >> layer >> interval))
            throw config_error("bad intervals line: " + line);
        if (layer != out.size())
            throw config_error("intervals file must list layers 0..L-1 in order");
        out.push_back(interval);
    }
    if (out.empty()) throw config_error("intervals file " + path + " has no entries");
    return out;
}

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string join_ids(const BlockIdSet& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(ids[i]);
    }
    return out;
}

inline void write_text_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << content;
}

struct DriftRow {
    std::size_t layer = 0;
    std::size_t step = 0;       // selection at this step...
    std::size_t next_step = 0;  // ...compared with the one at this step
    double drift = 0.0;
};

struct RunArtifacts {
    std::vector<LayerMetrics> metrics;  // step-major, layer-minor
    std::vector<Vec> final_hiddens;     // one per decode step
    Vec cosine_per_boundary;            // decode positions; empty when layers < 2
    double mean_cosine = 0.0;           // valid iff cosine_per_boundary not empty
    std::vector<double> mean_ratio_per_layer;
    std::vector<std::vector<RatioSample>> ratio_samples;  // per layer
    std::vector<DriftRow> drift;
    double max_hybrid_residual = 0.0;
    std::size_t event_count = 0;
    std::string residency;
};

// Exact attention over the same rows a recorded layer attended to,
// reconstructed from the final cache: blocks are append-only, so truncating
// block b to the rows that existed at tokens_at_attention recovers the state.
namespace detail {

// Partial attention over the named blocks as they stood when the layer ran:
// blocks that grew afterwards are truncated back to tokens_at_attention.
inline PartialAttention side_partial(const TieredKvCache& cache, const LayerMetrics& lm,
                                     const Vec& q, const BlockIdSet& ids, double scale) {
    std::vector<KvBlock> trimmed;
    for (std::size_t id : ids) {
        const KvBlock& b = cache.block(lm.layer, id);
        const std::size_t first_token = id * cache.block_size();
        if (lm.tokens_at_attention <= first_token) continue;
        const std::size_t rows = std::min(b.keys.rows, lm.tokens_at_attention - first_token);
        KvBlock t;
        t.block_id = b.block_id;
        t.layer = b.layer;
        t.keys = Mat(0, b.keys.cols);
        t.values = Mat(0, b.values.cols);
        for (std::size_t r = 0; r < rows; ++r) {
            t.keys.append_row(b.keys.row_vec(r));
            t.values.append_row(b.values.row_vec(r));
        }
        trimmed.push_back(std::move(t));
    }
    if (trimmed.empty()) return PartialAttention::empty(q.size());
    std::vector<const KvBlock*> ptrs;
    for (const KvBlock& b : trimmed) ptrs.push_back(&b);
    return partial_attention(q, ptrs, scale);
}

}  // namespace detail

// Hybrid-query reference: the device-resident side re-attends with the true
// query, the offloaded side with the predicted query the task was spawned
// with, and the two partials merge exactly as the engine merged them.
inline Vec recompute_layer_attention(const TieredKvCache& cache, double scale,
                                     const LayerMetrics& lm) {
    const std::size_t dim = lm.attn_out.size();
    const PartialAttention gpu =
        detail::side_partial(cache, lm, lm.q_true, lm.resident_set, scale);
    const PartialAttention cpu =
        lm.cpu_set.empty() ? PartialAttention::empty(dim)
                           : detail::side_partial(cache, lm, lm.q_pred, lm.cpu_set, scale);
    const PartialAttention merged = merge(gpu, cpu);
    if (merged.is_empty()) return Vec(dim, 0.0);
    return finalize(merged);
}

// Full prefill + decode pipeline; everything a caller might verify or write
// out, no filesystem access.
inline RunArtifacts run_pipeline(const RunConfig& cfg) {
    if (cfg.prefill_tokens == 0) throw config_error("workload.prefill_tokens must be >= 1");
    const ToyDecoder decoder(cfg.decoder);
    ScoutEngine engine(decoder, cfg.engine);
    engine.prefill(decoder.make_embeddings(cfg.prefill_tokens));

    const std::size_t layers = cfg.decoder.layers;
    RunArtifacts a;
    std::vector<std::vector<BlockIdSet>> selections(layers);
    Vec x = decoder.next_input(engine.trace().final_hidden);
    for (std::size_t step = 1; step <= cfg.decode_steps; ++step) {
        StepResult r = engine.decode_step(x, step);
        x = decoder.next_input(r.final_hidden);
        a.final_hiddens.push_back(r.final_hidden);
        for (LayerMetrics& lm : r.layers) {
            selections[lm.layer].push_back(lm.predicted);
            a.metrics.push_back(std::move(lm));
        }
    }

    if (layers >= 2 && cfg.decode_steps >= 1) {
        a.cosine_per_boundary = measure_query_similarity(engine.trace(), decoder, cfg.prefill_tokens);
        double acc = 0.0;
        for (double c : a.cosine_per_boundary) acc += c;
        a.mean_cosine = acc / static_cast<double>(a.cosine_per_boundary.size());
    }

    a.mean_ratio_per_layer.reserve(layers);
    a.ratio_samples.reserve(layers);
    for (std::size_t i = 0; i < layers; ++i) {
        a.mean_ratio_per_layer.push_back(cfg.decode_steps > 0 ? engine.ratio_trace().mean_ratio(i)
                                                              : 0.0);
        a.ratio_samples.push_back(engine.ratio_trace().layer_samples(i));
    }

    for (std::size_t i = 0; i < layers; ++i) {
        const auto& sel = selections[i];
        for (std::size_t t = 0; t + 1 < sel.size(); ++t) {
            if (sel[t].size() != sel[t + 1].size() || sel[t].empty()) continue;
            DriftRow row;
            row.layer = i;
            row.step = t + 1;
            row.next_step = t + 2;
            row.drift = static_cast<double>(set_difference(sel[t], sel[t + 1]).size()) /
                        static_cast<double>(sel[t].size());
            a.drift.push_back(row);
        }
    }

    for (const LayerMetrics& lm : a.metrics) {
        const Vec ref = recompute_layer_attention(engine.cache(), decoder.scale(), lm);
        double err = 0.0;
        for (std::size_t c = 0; c < ref.size(); ++c) {
            const double d = ref[c] - lm.attn_out[c];
            err += d * d;
        }
        a.max_hybrid_residual = std::max(a.max_hybrid_residual, std::sqrt(err));
    }

    a.event_count = engine.events().size();
    std::ostringstream os;
    engine.cache().dump_residency(os);
    a.residency = os.str();
    return a;
}

inline void write_run_outputs(const RunConfig& cfg, const RunArtifacts& a) {
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);

    std::string m = "step,layer,predicted,resident,cpu,recalled,cpu_tokens,resident_tokens,"
                    "budget_tokens,tokens_at_attention,attn_norm\n";
    for (const LayerMetrics& lm : a.metrics) {
        m += std::to_string(lm.step) + ',' + std::to_string(lm.layer) + ',' +
             join_ids(lm.predicted) + ',' + join_ids(lm.resident_set) + ',' +
             join_ids(lm.cpu_set) + ',' + std::to_string(lm.recalled_blocks) + ',' +
             std::to_string(lm.cpu_tokens) + ',' + std::to_string(lm.resident_tokens) + ',' +
             std::to_string(lm.budget_tokens) + ',' + std::to_string(lm.tokens_at_attention) +
             ',' + fmt(l2_norm(lm.attn_out)) + '\n';
    }
    write_text_file(dir / "metrics.csv", m);

    std::string r = "layer,step,cpu_tokens,budget_tokens,ratio\n";
    for (std::size_t i = 0; i < a.ratio_samples.size(); ++i)
        for (const RatioSample& s : a.ratio_samples[i])
            r += std::to_string(i) + ',' + std::to_string(s.step) + ',' +
                 std::to_string(s.cpu_tokens) + ',' + std::to_string(s.budget_tokens) + ',' +
                 fmt(s.ratio) + '\n';
    write_text_file(dir / "ratios.csv", r);

    std::string d = "layer,step,next_step,drift\n";
    for (const DriftRow& row : a.drift)
        d += std::to_string(row.layer) + ',' + std::to_string(row.step) + ',' +
             std::to_string(row.next_step) + ',' + fmt(row.drift) + '\n';
    write_text_file(dir / "drift.csv", d);

    write_text_file(dir / "residency.txt", a.residency);

    std::string s;
    s += "prefill_tokens=" + std::to_string(cfg.prefill_tokens) + '\n';
    s += "decode_steps=" + std::to_string(cfg.decode_steps) + '\n';
    s += "layers=" + std::to_string(cfg.decoder.layers) + '\n';
    s += "k_blocks=" + std::to_string(cfg.engine.k_blocks) + '\n';
    s += "budget_tokens=" + std::to_string(cfg.engine.k_blocks * cfg.decoder.block_size) + '\n';
    if (!a.cosine_per_boundary.empty()) {
        s += "mean_cosine=" + fmt(a.mean_cosine) + '\n';
        for (std::size_t b = 0; b < a.cosine_per_boundary.size(); ++b)
            s += "cosine_boundary_" + std::to_string(b) + '=' + fmt(a.cosine_per_boundary[b]) + '\n';
    }
    double overall = 0.0;
    for (std::size_t i = 0; i < a.mean_ratio_per_layer.size(); ++i) {
        s += "mean_ratio_layer_" + std::to_string(i) + '=' + fmt(a.mean_ratio_per_layer[i]) + '\n';
        overall += a.mean_ratio_per_layer[i];
    }
    if (!a.mean_ratio_per_layer.empty())
        s += "mean_ratio_overall=" +
             fmt(overall / static_cast<double>(a.mean_ratio_per_layer.size())) + '\n';
    s += "max_hybrid_residual=" + fmt(a.max_hybrid_residual) + '\n';
    if (!a.final_hiddens.empty())
        s += "final_hidden_norm=" + fmt(l2_norm(a.final_hiddens.back())) + '\n';
    s += "event_count=" + std::to_string(a.event_count) + '\n';
    write_text_file(dir / "summary.txt", s);
}

inline RunArtifacts cmd_run(const RunConfig& cfg) {
    RunArtifacts a = run_pipeline(cfg);
    write_run_outputs(cfg, a);
    return a;
}

// Profiles ratios with periodic recall off, then derives per-layer intervals
// from the configured beta and writes them for later runs to load.
inline RecallSchedule cmd_calibrate(const RunConfig& cfg) {
    RunConfig profile = cfg;
    profile.engine.recall_intervals.clear();
    if (profile.decode_steps == 0) throw config_error("calibrate: decode_steps must be >= 1");
    const RunArtifacts a = run_pipeline(profile);

    RatioTrace trace(cfg.decoder.layers);
    for (std::size_t i = 0; i < a.ratio_samples.size(); ++i)
        for (const RatioSample& s : a.ratio_samples[i])
            trace.record(i, s.step, s.cpu_tokens, s.budget_tokens);
    const RecallSchedule sched = calibrate_intervals(trace, cfg.engine.beta);

    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    std::string out = "# layer interval mean_ratio\n";
    for (std::size_t i = 0; i < sched.intervals.size(); ++i)
        out += std::to_string(i) + ' ' + std::to_string(sched.intervals[i]) + ' ' +
               fmt(a.mean_ratio_per_layer[i]) + '\n';
    write_text_file(dir / "intervals.txt", out);
    return sched;
}

struct SimArtifacts {
    std::vector<Timeline> strategies;  // full_kv, recall_prefetch, co_attention, scout
    Timeline scout_no_precompute;
    Timeline scout_no_periodic_recall;
    double slowdown_no_precompute = 0.0;
    double slowdown_no_periodic_recall = 0.0;
};

inline SimArtifacts run_simulations(const CostParams& p) {
    SimArtifacts a;
    for (Strategy s : {Strategy::full_kv, Strategy::recall_prefetch, Strategy::co_attention,
                       Strategy::scout})
        a.strategies.push_back(simulate_strategy(s, p));
    CostParams no_pc = p;
    no_pc.precompute_enabled = false;
    a.scout_no_precompute = simulate_scout(no_pc);
    CostParams no_pr = p;
    no_pr.periodic_recall_enabled = false;
    no_pr.cpu_ratio_series.clear();  // ratios must regrow without recall
    a.scout_no_periodic_recall = simulate_scout(no_pr);
    const double base = a.strategies.back().makespan_us;
    a.slowdown_no_precompute = a.scout_no_precompute.makespan_us / base;
    a.slowdown_no_periodic_recall = a.scout_no_periodic_recall.makespan_us / base;
    return a;
}

inline std::string timeline_csv(const Timeline& t) {
    std::string out = "device,label,start_us,end_us\n";
    const auto emit = [&out](const char* dev, const std::vector<Interval>& iv) {
        for (const Interval& i : iv)
            out += std::string(dev) + ',' + i.label + ',' + fmt9(i.start_us) + ',' +
                   fmt9(i.end_us) + '\n';
    };
    emit("gpu", t.gpu);
    emit("cpu", t.cpu);
    emit("link", t.link);
    return out;
}

inline std::string summarize_timeline(const std::string& name, const Timeline& t) {
    return name + " batch_effective=" + std::to_string(t.batch_effective) +
           " makespan_us=" + fmt9(t.makespan_us) + " gpu_idle=" + fmt9(gpu_idle_fraction(t)) +
           " cpu_busy_us=" + fmt9(busy_us(t.cpu)) + " link_busy_us=" + fmt9(busy_us(t.link)) +
           " step_time_us=" + fmt9(step_time_us(t)) + " throughput_tps=" + fmt9(throughput(t)) +
           '\n';
}

inline SimArtifacts cmd_simulate(const RunConfig& cfg) {
    SimArtifacts a = run_simulations(cfg.cost);
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    std::string summary;
    for (const Timeline& t : a.strategies) {
        write_text_file(dir / ("timeline_" + std::string(strategy_name(t.strategy)) + ".csv"),
                        timeline_csv(t));
        summary += summarize_timeline(strategy_name(t.strategy), t);
    }
    write_text_file(dir / "timeline_scout_no_precompute.csv",
                    timeline_csv(a.scout_no_precompute));
    write_text_file(dir / "timeline_scout_no_periodic_recall.csv",
                    timeline_csv(a.scout_no_periodic_recall));
    summary += summarize_timeline("scout_no_precompute", a.scout_no_precompute);
    summary += summarize_timeline("scout_no_periodic_recall", a.scout_no_periodic_recall);
    summary += "slowdown_no_precompute=" + fmt9(a.slowdown_no_precompute) + '\n';
    summary += "slowdown_no_periodic_recall=" + fmt9(a.slowdown_no_periodic_recall) + '\n';
    write_text_file(dir / "sim_summary.txt", summary);
    return a;
}

struct SweepRow {
    double value = 0.0;
    double tput_full_kv = 0.0;
    double tput_recall_prefetch = 0.0;
    double tput_co_attention = 0.0;
    double tput_scout = 0.0;
};

inline CostParams apply_sweep_axis(const CostParams& base, const std::string& axis, double value) {
    CostParams p = base;
    if (axis == "context")
        p.context_tokens = value;
    else if (axis == "budget")
        p.budget_tokens = value;
    else if (axis == "batch") {
        if (!(value >= 1.0) || value != std::floor(value))
            throw config_error("sweep batch values must be positive integers");
        p.batch = static_cast<std::size_t>(value);
    } else {
        throw config_error("unknown sweep axis: " + axis + " (context, budget, batch)");
    }
    try {
        detail::validate(p);
    } catch (const std::invalid_argument& e) {
        throw config_error("sweep value " + fmt9(value) + " on axis " + axis + ": " + e.what());
    }
    return p;
}

inline std::vector<SweepRow> run_sweep(const CostParams& base, const std::string& axis,
                                       const std::vector<double>& values) {
    if (values.empty()) throw config_error("sweep: need at least one value");
    std::vector<SweepRow> rows;
    rows.reserve(values.size());
    for (double v : values) {
        const CostParams p = apply_sweep_axis(base, axis, v);
        SweepRow row;
        row.value = v;
        row.tput_full_kv = throughput(simulate_full_kv(p));
        row.tput_recall_prefetch = throughput(simulate_recall_prefetch(p));
        row.tput_co_attention = throughput(simulate_co_attention(p));
        row.tput_scout = throughput(simulate_scout(p));
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::string& axis,
                                       const std::vector<double>& values) {
    const std::vector<SweepRow> rows = run_sweep(cfg.cost, axis, values);
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    std::string out = axis +
                      ",full_kv_tps,recall_prefetch_tps,co_attention_tps,scout_tps,"
                      "scout_vs_full_kv,scout_vs_recall_prefetch,scout_vs_co_attention\n";
    for (const SweepRow& r : rows)
        out += fmt9(r.value) + ',' + fmt9(r.tput_full_kv) + ',' + fmt9(r.tput_recall_prefetch) +
               ',' + fmt9(r.tput_co_attention) + ',' + fmt9(r.tput_scout) + ',' +
               fmt9(r.tput_scout / r.tput_full_kv) + ',' +
               fmt9(r.tput_scout / r.tput_recall_prefetch) + ',' +
               fmt9(r.tput_scout / r.tput_co_attention) + '\n';
    write_text_file(dir / ("sweep_" + axis + ".csv"), out);
    return rows;
}

}  // namespace scout

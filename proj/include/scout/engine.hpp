// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <future>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "scout/attention.hpp"
#include "scout/digest.hpp"
#include "scout/kv_store.hpp"
#include "scout/model.hpp"
#include "scout/recall.hpp"

namespace scout {

// What the on-device side of a layer attends to.
//  - predicted_topk_intersect_resident: only predicted blocks that are
//    resident; the off-device task covers the rest, so together they cover
//    exactly the predicted set.
//  - all_resident: every resident block (the off-device split is unchanged).
enum class GpuSidePolicy { predicted_topk_intersect_resident, all_resident };

struct EngineConfig {
    std::size_t k_blocks = 16;
    GpuSidePolicy gpu_side_policy = GpuSidePolicy::predicted_topk_intersect_resident;
    double beta = 0.12;
    std::vector<std::size_t> recall_intervals;  // per layer; empty -> disabled
    bool deterministic_serial = false;
};

// Work shipped to the coprocessor: attend to the given (slow-tier) blocks
// with a predicted query for a layer the main loop has not reached yet.
struct PrecomputeTask {
    std::size_t step = 0;
    std::size_t target_layer = 0;
    Vec q_pred;
    std::vector<const KvBlock*> blocks;  // sealed, immutable
    double scale = 1.0;
};

struct LayerMetrics {
    std::size_t step = 0;
    std::size_t layer = 0;
    BlockIdSet predicted;      // top-k over the layer's digests
    BlockIdSet resident_set;   // on-device side of the split
    BlockIdSet cpu_set;        // off-device side of the split
    Vec q_true;
    Vec q_pred;                // empty for layer 0 (no task needed)
    Vec attn_out;
    std::size_t cpu_tokens = 0;
    std::size_t resident_tokens = 0;
    std::size_t budget_tokens = 0;        // k_blocks * block_size
    std::size_t tokens_at_attention = 0;  // cache length when attention ran
    std::size_t recalled_blocks = 0;
};

struct StepResult {
    Vec final_hidden;
    std::vector<LayerMetrics> layers;
};

enum class EventKind { attention_complete, task_submitted, task_merged, recall_issued, recall_applied };

struct EngineEvent {
    std::size_t seq = 0;
    EventKind kind = EventKind::attention_complete;
    std::size_t step = 0;
    std::size_t layer = 0;
    // recall events: the ticket's issue point; task events: the target layer.
    std::size_t aux_step = 0;
    std::size_t aux_layer = 0;
    BlockIdSet ids;
};

namespace detail {

// FIFO handoff to a single coprocessor thread. In deterministic_serial mode
// tasks run inline at submission; results are identical either way because a
// task is a pure function of its captured inputs.
class PrecomputeWorker {
public:
    explicit PrecomputeWorker(bool serial) : serial_(serial) {
        if (!serial_) thread_ = std::thread([this] { loop(); });
    }

    ~PrecomputeWorker() {
        if (!serial_) {
            {
                std::lock_guard<std::mutex> lk(mu_);
                stop_ = true;
            }
            cv_.notify_all();
            thread_.join();
        }
    }

    PrecomputeWorker(const PrecomputeWorker&) = delete;
    PrecomputeWorker& operator=(const PrecomputeWorker&) = delete;

    std::future<PartialAttention> submit(PrecomputeTask task) {
        std::promise<PartialAttention> done;
        std::future<PartialAttention> fut = done.get_future();
        if (serial_) {
            run(task, done);
        } else {
            {
                std::lock_guard<std::mutex> lk(mu_);
                queue_.emplace_back(std::move(task), std::move(done));
            }
            cv_.notify_one();
        }
        return fut;
    }

private:
    static void run(const PrecomputeTask& t, std::promise<PartialAttention>& done) {
        try {
            done.set_value(partial_attention(t.q_pred, t.blocks, t.scale));
        } catch (...) {
            done.set_exception(std::current_exception());
        }
    }

    void loop() {
        for (;;) {
            std::unique_lock<std::mutex> lk(mu_);
            cv_.wait(lk, [this] { return stop_ || !queue_.empty(); });
            if (queue_.empty()) return;  // stop requested and drained
            auto item = std::move(queue_.front());
            queue_.pop_front();
            lk.unlock();
            run(item.first, item.second);
        }
    }

    bool serial_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::pair<PrecomputeTask, std::promise<PartialAttention>>> queue_;
    bool stop_ = false;
    std::thread thread_;
};

}  // namespace detail

// Decode pipeline: while the main loop computes layer i, the coprocessor
// already attends to layer i+1's predicted-but-not-resident blocks using a
// query predicted from layer i's input stream. At layer i+1 the two partials
// merge. Layer 0 is pinned fully resident so no step ever waits on a task
// for it. K/V of the token being decoded are appended after the layer's
// attention, so the digest state a prediction saw is exactly the state the
// predicted layer attends over.
class ScoutEngine {
public:
    ScoutEngine(const ToyDecoder& decoder, EngineConfig cfg)
        : decoder_(decoder), cfg_(std::move(cfg)),
          cache_(decoder.config().layers, decoder.config().block_size,
                 decoder.config().head_dim, DigestMethod::minmax, cfg_.k_blocks),
          ratio_trace_(decoder.config().layers),
          policy_state_(decoder.config().layers),
          worker_(cfg_.deterministic_serial) {
        if (cfg_.k_blocks == 0)
            throw std::invalid_argument("EngineConfig: k_blocks must be >= 1");
        if (!(cfg_.beta > 0.0) || !(cfg_.beta < 1.0))
            throw std::invalid_argument("EngineConfig: beta must be in (0, 1)");
        if (!cfg_.recall_intervals.empty() &&
            cfg_.recall_intervals.size() != decoder.config().layers)
            throw std::invalid_argument("EngineConfig: recall_intervals must have one entry per layer");
        for (std::size_t n : cfg_.recall_intervals)
            if (n == 0) throw std::invalid_argument("EngineConfig: recall interval must be >= 1");
        schedule_.intervals = cfg_.recall_intervals;
        schedule_.beta = cfg_.beta;
        cache_.pin_layer(0);
    }

    const EngineConfig& config() const { return cfg_; }
    const TieredKvCache& cache() const { return cache_; }
    const ResidualTrace& trace() const { return trace_; }
    const RatioTrace& ratio_trace() const { return ratio_trace_; }
    const std::vector<EngineEvent>& events() const { return events_; }
    std::size_t budget_tokens() const { return cfg_.k_blocks * decoder_.config().block_size; }

    // Exact-attention prefill followed by initial placement: each unpinned
    // layer keeps the blocks its last prefill query scores highest.
    const ResidualTrace& prefill(const Mat& embeddings) {
        if (prefilled_) throw std::logic_error("ScoutEngine: prefill already done");
        if (embeddings.rows == 0) throw std::invalid_argument("prefill: need at least one token");
        trace_ = decoder_.prefill(embeddings, cache_);
        const std::size_t last = embeddings.rows - 1;
        for (std::size_t layer = 1; layer < decoder_.config().layers; ++layer)
            cache_.place_after_prefill(layer, trace_.q[layer].row_vec(last));
        prefilled_ = true;
        return trace_;
    }

    // One decoded token. Steps are 1-based (prefill is step 0).
    StepResult decode_step(const Vec& x0, std::size_t step) {
        if (!prefilled_) throw std::invalid_argument("decode_step: prefill required first");
        if (step == 0) throw std::invalid_argument("decode_step: steps are 1-based");
        const std::size_t layers = decoder_.config().layers;
        const std::size_t dim = decoder_.config().head_dim;
        const double scale = decoder_.scale();

        StepResult result;
        result.layers.reserve(layers);
        Vec x = x0;
        std::vector<std::optional<std::future<PartialAttention>>> pending(layers);
        std::vector<BlockIdSet> predicted(layers), resident(layers), cpu(layers);
        std::vector<Vec> q_pred(layers);

        for (std::size_t i = 0; i < layers; ++i) {
            for (const RecallTicket& t : cache_.begin_layer(step, i))
                log_event(EventKind::recall_applied, step, i, t.issue_step, t.issue_layer, t.ids);

            const Vec xin = x;
            const Vec normed = decoder_.normalize(xin);
            const Vec q_true = decoder_.query(i, normed);

            if (i == 0) {
                // No earlier layer predicts for layer 0; with the layer
                // pinned resident, its true-query top-k is fully on-device.
                predicted[0] = select_topk(q_true, cache_.digests(0), cfg_.k_blocks);
                resident[0] = set_intersection(predicted[0], cache_.residency_set(0));
                cache_.mark_selected(0, predicted[0], step);
            }

            // Predict layer i+1's query and ship its off-device share now.
            if (i + 1 < layers) {
                q_pred[i + 1] = predict_next_query(normed, decoder_.weights(i + 1).wq);
                predicted[i + 1] = select_topk(q_pred[i + 1], cache_.digests(i + 1), cfg_.k_blocks);
                const BlockIdSet residency = cache_.residency_set(i + 1);
                resident[i + 1] = set_intersection(predicted[i + 1], residency);
                cpu[i + 1] = set_difference(predicted[i + 1], residency);
                cache_.mark_selected(i + 1, predicted[i + 1], step);
                PrecomputeTask task;
                task.step = step;
                task.target_layer = i + 1;
                task.q_pred = q_pred[i + 1];
                task.blocks = cache_.fetch_blocks(i + 1, cpu[i + 1], Tier::slow);
                task.scale = scale;
                log_event(EventKind::task_submitted, step, i, step, i + 1, cpu[i + 1]);
                pending[i + 1] = worker_.submit(std::move(task));
            }

            const BlockIdSet gpu_ids =
                cfg_.gpu_side_policy == GpuSidePolicy::predicted_topk_intersect_resident
                    ? resident[i]
                    : cache_.residency_set(i);
            const PartialAttention gpu_partial =
                partial_attention(q_true, cache_.fetch_blocks(i, gpu_ids, Tier::fast), scale);

            PartialAttention cpu_partial = PartialAttention::empty(dim);
            if (i > 0) {
                if (!pending[i])
                    throw std::logic_error("decode_step: no pending task for layer " + std::to_string(i));
                cpu_partial = pending[i]->get();
                log_event(EventKind::task_merged, step, i, step, i, cpu[i]);
            }

            if (cfg_.gpu_side_policy == GpuSidePolicy::predicted_topk_intersect_resident)
                check_split(i, predicted[i], resident[i], cpu[i], gpu_partial, cpu_partial);

            const PartialAttention merged = merge(gpu_partial, cpu_partial);
            const std::size_t tokens_now = cache_.total_tokens(i);
            const Vec attn_out = merged.is_empty() ? Vec(dim, 0.0) : finalize(merged);
            log_event(EventKind::attention_complete, step, i, step, i, {});

            x = ToyDecoder::add_scaled(xin, decoder_.apply_output(i, attn_out), decoder_.config().alpha);
            x = ToyDecoder::add_scaled(x, decoder_.ffn(i, decoder_.normalize(x)), decoder_.config().alpha);

            trace_.x[i].append_row(xin);
            trace_.q[i].append_row(q_true);
            cache_.append_token(i, decoder_.key(i, normed), decoder_.value(i, normed));

            ratio_trace_.record(i, step, cpu_partial.token_count, budget_tokens());

            LayerMetrics lm;
            lm.step = step;
            lm.layer = i;
            lm.predicted = predicted[i];
            lm.resident_set = gpu_ids;
            lm.cpu_set = cpu[i];
            lm.q_true = q_true;
            lm.q_pred = q_pred[i];  // empty for layer 0
            lm.attn_out = attn_out;
            lm.cpu_tokens = cpu_partial.token_count;
            lm.resident_tokens = gpu_partial.token_count;
            lm.budget_tokens = budget_tokens();
            lm.tokens_at_attention = tokens_now;

            if (schedule_.enabled()) {
                const auto request = maybe_schedule_recall(schedule_, policy_state_, i, step,
                                                           predicted[i], cache_.residency_set(i));
                if (request && !request->empty()) {
                    const RecallTicket t = cache_.schedule_recall(i, *request, step, i);
                    log_event(EventKind::recall_issued, step, i, t.issue_step, t.issue_layer, t.ids);
                    lm.recalled_blocks = request->size();
                }
            }
            result.layers.push_back(std::move(lm));
        }

        trace_.final_hidden = x;
        result.final_hidden = x;
        return result;
    }

private:
    void check_split(std::size_t layer, const BlockIdSet& pred, const BlockIdSet& res,
                     const BlockIdSet& off, const PartialAttention& gpu_partial,
                     const PartialAttention& cpu_partial) const {
        if (!set_intersection(res, off).empty())
            throw std::logic_error("split overlap at layer " + std::to_string(layer));
        if (res.size() + off.size() != pred.size())
            throw std::logic_error("split does not cover the predicted set at layer " +
                                   std::to_string(layer));
        std::size_t expected = 0;
        for (std::size_t id : pred) expected += cache_.block(layer, id).keys.rows;
        if (gpu_partial.token_count + cpu_partial.token_count != expected)
            throw std::logic_error("token accounting mismatch at layer " + std::to_string(layer));
    }

    void log_event(EventKind kind, std::size_t step, std::size_t layer,
                   std::size_t aux_step, std::size_t aux_layer, BlockIdSet ids) {
        EngineEvent e;
        e.seq = events_.size();
        e.kind = kind;
        e.step = step;
        e.layer = layer;
        e.aux_step = aux_step;
        e.aux_layer = aux_layer;
        e.ids = std::move(ids);
        events_.push_back(std::move(e));
    }

    const ToyDecoder& decoder_;
    EngineConfig cfg_;
    TieredKvCache cache_;
    ResidualTrace trace_;
    RatioTrace ratio_trace_;
    RecallSchedule schedule_;
    RecallPolicyState policy_state_;
    std::vector<EngineEvent> events_;
    bool prefilled_ = false;
    detail::PrecomputeWorker worker_;  // last member: joins before the rest tears down
};

// Single-device reference: exact attention over the union of the top-k
// blocks the true query selects, against the cache's current digest state.
inline Vec reference_block_sparse(const TieredKvCache& cache, std::size_t layer,
                                  const Vec& q, std::size_t k, double scale) {
    const BlockIdSet ids = select_topk(q, cache.digests(layer), k);
    Mat keys, values;
    for (const KvBlock* b : cache.fetch_blocks_any(layer, ids)) {
        for (std::size_t r = 0; r < b->keys.rows; ++r) {
            keys.append_row(b->keys.row_vec(r));
            values.append_row(b->values.row_vec(r));
        }
    }
    return exact_attention(q, keys, values, scale);
}

// Fraction of each selection that disappeared in the next step's selection:
// |S_t \ S_{t+1}| / |S_t|. All selections must have the same cardinality.
inline Vec measure_block_drift(const std::vector<BlockIdSet>& selections) {
    if (selections.size() < 2)
        throw std::invalid_argument("measure_block_drift: need at least two selections");
    const std::size_t k = selections[0].size();
    if (k == 0) throw std::invalid_argument("measure_block_drift: empty selection");
    for (const BlockIdSet& s : selections)
        if (s.size() != k)
            throw std::invalid_argument("measure_block_drift: selections differ in cardinality");
    Vec out;
    out.reserve(selections.size() - 1);
    for (std::size_t t = 0; t + 1 < selections.size(); ++t)
        out.push_back(static_cast<double>(set_difference(selections[t], selections[t + 1]).size()) /
                      static_cast<double>(k));
    return out;
}

}  // namespace scout

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scout/digest.hpp"

namespace scout {

// Per-(layer, step) record of how much attention work fell to the slow side.
struct RatioSample {
    std::size_t step = 0;
    std::size_t cpu_tokens = 0;
    std::size_t budget_tokens = 0;
    double ratio = 0.0;
};

class RatioTrace {
public:
    explicit RatioTrace(std::size_t layers) : samples_(layers) {}

    std::size_t layers() const { return samples_.size(); }

    void record(std::size_t layer, std::size_t step, std::size_t cpu_tokens,
                std::size_t budget_tokens) {
        if (layer >= samples_.size())
            throw std::invalid_argument("RatioTrace::record: layer out of range");
        if (budget_tokens == 0)
            throw std::invalid_argument("RatioTrace::record: zero budget");
        auto& v = samples_[layer];
        for (const RatioSample& s : v)
            if (s.step == step)
                throw std::invalid_argument("RatioTrace::record: duplicate sample for layer " +
                                            std::to_string(layer) + ", step " + std::to_string(step));
        RatioSample s;
        s.step = step;
        s.cpu_tokens = cpu_tokens;
        s.budget_tokens = budget_tokens;
        s.ratio = static_cast<double>(cpu_tokens) / static_cast<double>(budget_tokens);
        v.push_back(s);
        std::sort(v.begin(), v.end(),
                  [](const RatioSample& a, const RatioSample& b) { return a.step < b.step; });
    }

    const std::vector<RatioSample>& layer_samples(std::size_t layer) const {
        if (layer >= samples_.size())
            throw std::invalid_argument("RatioTrace: layer out of range");
        return samples_[layer];
    }

    double mean_ratio(std::size_t layer) const {
        const auto& v = layer_samples(layer);
        if (v.empty()) throw std::invalid_argument("RatioTrace: no samples for layer");
        double acc = 0.0;
        for (const RatioSample& s : v) acc += s.ratio;
        return acc / static_cast<double>(v.size());
    }

private:
    std::vector<std::vector<RatioSample>> samples_;
};

// Per-layer recall cadence plus the threshold it was calibrated against.
struct RecallSchedule {
    std::vector<std::size_t> intervals;  // empty -> periodic recall disabled
    double beta = 0.0;

    bool enabled() const { return !intervals.empty(); }
};

// From a recall-free profiling trace: for each layer, the longest run of
// leading steps whose ratio stays at or below beta (a ratio equal to beta
// still counts). Floor of 1 so a recall is always eventually due.
inline RecallSchedule calibrate_intervals(const RatioTrace& trace, double beta) {
    if (!(beta > 0.0) || !(beta < 1.0))
        throw std::invalid_argument("calibrate_intervals: beta must be in (0, 1)");
    RecallSchedule out;
    out.beta = beta;
    out.intervals.reserve(trace.layers());
    for (std::size_t layer = 0; layer < trace.layers(); ++layer) {
        const auto& v = trace.layer_samples(layer);
        if (v.empty())
            throw std::invalid_argument("calibrate_intervals: no samples for layer " +
                                        std::to_string(layer));
        std::size_t n = 0;
        while (n < v.size() && v[n].ratio <= beta) ++n;
        out.intervals.push_back(std::max<std::size_t>(n, 1));
    }
    return out;
}

// Steps are 1-based during decode; prefill placement counts as the recall at
// step 0, so with interval n the triggers land at steps n, 2n, 3n, ...
class RecallPolicyState {
public:
    explicit RecallPolicyState(std::size_t layers) : last_recall_(layers, 0) {}

    std::size_t last_recall(std::size_t layer) const { return last_recall_.at(layer); }
    void set_last_recall(std::size_t layer, std::size_t step) { last_recall_.at(layer) = step; }

private:
    std::vector<std::size_t> last_recall_;
};

// Decides whether a layer is due for a recall at this step; if so, returns
// the block ids to fetch (predicted set minus planned residency -- possibly
// empty, in which case the trigger still resets the cadence and the caller
// has nothing to transfer).
inline std::optional<BlockIdSet> maybe_schedule_recall(const RecallSchedule& schedule,
                                                       RecallPolicyState& state,
                                                       std::size_t layer, std::size_t step,
                                                       const BlockIdSet& predicted,
                                                       const BlockIdSet& residency) {
    if (!schedule.enabled()) return std::nullopt;
    if (layer >= schedule.intervals.size())
        throw std::invalid_argument("maybe_schedule_recall: layer out of range");
    const std::size_t interval = schedule.intervals[layer];
    if (step - state.last_recall(layer) < interval) return std::nullopt;
    state.set_last_recall(layer, step);
    return set_difference(predicted, residency);
}

}  // namespace scout

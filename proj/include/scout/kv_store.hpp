// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scout/digest.hpp"
#include "scout/numerics.hpp"

namespace scout {

enum class Tier { fast, slow };

inline const char* tier_name(Tier t) { return t == Tier::fast ? "fast" : "slow"; }

// One fixed-size block of the KV cache. Blocks are append-only until they
// hold block_size rows, at which point they seal and become immutable.
struct KvBlock {
    std::size_t block_id = 0;
    std::size_t layer = 0;
    Mat keys;    // rows x head_dim
    Mat values;  // rows x head_dim
    bool sealed = false;
};

// Ticket for an asynchronous slow->fast transfer. The data becomes visible
// in the fast tier when the writer's clock reaches (ready_step, ready_layer).
struct RecallTicket {
    std::size_t layer = 0;
    BlockIdSet ids;
    std::size_t issue_step = 0;
    std::size_t issue_layer = 0;
    std::size_t ready_step = 0;
    std::size_t ready_layer = 0;
};

// Two-tier KV cache with per-layer block lists, min/max (or mean) digests for
// every block, and an in-flight recall queue.
//
// Timing model. A single writer advances a (step, layer) clock by calling
// begin_layer before processing each layer; pending recalls whose ready point
// has been reached are applied there (tier moves plus evictions). A recall
// issued at (m, i) is readable from the fast tier no earlier than (m+1, i).
//
// residency_set() answers the planning question "which blocks will be in the
// fast tier when this layer next executes": it includes in-flight recalls
// whose ready point is no later than the layer's next execution, because the
// caller splitting work one layer ahead can count on those arrivals. Actual
// fast-tier reads (fetch_blocks) always check the true tier.
//
// Eviction picks the fast-tier sealed block with the oldest last_selected
// mark (ties toward the lower block id). Freshly sealed blocks get
// last_selected = seal step so the newest context is not the first victim.
// The open (unsealed) trailing block always lives in the fast tier and is
// not counted against capacity.
class TieredKvCache {
public:
    TieredKvCache(std::size_t layers, std::size_t block_size, std::size_t head_dim,
                  DigestMethod method, std::size_t fast_capacity)
        : block_size_(block_size), head_dim_(head_dim), method_(method),
          layers_(layers) {
        if (layers == 0) throw std::invalid_argument("TieredKvCache: layers must be >= 1");
        if (block_size == 0) throw std::invalid_argument("TieredKvCache: block_size must be >= 1");
        if (fast_capacity == 0) throw std::invalid_argument("TieredKvCache: fast_capacity must be >= 1");
        for (auto& st : layers_) st.capacity = fast_capacity;
    }

    std::size_t num_layers() const { return layers_.size(); }
    std::size_t block_size() const { return block_size_; }

    // Removes the capacity limit for one layer (used to keep layer 0 fully
    // resident so the first layer never needs an off-device task).
    void pin_layer(std::size_t layer) {
        state(layer).capacity = std::numeric_limits<std::size_t>::max();
    }

    std::size_t fast_capacity(std::size_t layer) const { return state(layer).capacity; }

    // Appends one token's key/value row. Returns the block id when this
    // append seals a block. The open block's digest is recomputed on every
    // append so selection always sees current bounds.
    std::optional<std::size_t> append_token(std::size_t layer, const Vec& k, const Vec& v) {
        if (k.size() != head_dim_ || v.size() != head_dim_)
            throw std::invalid_argument("append_token: expected head_dim = " + std::to_string(head_dim_));
        LayerState& st = state(layer);
        if (st.blocks.empty() || st.blocks.back().sealed) {
            KvBlock b;
            b.block_id = st.blocks.size();
            b.layer = layer;
            b.keys = Mat(0, head_dim_);
            b.values = Mat(0, head_dim_);
            st.blocks.push_back(std::move(b));
            st.tier.push_back(Tier::fast);
            st.last_selected.push_back(clock_step_);
            st.digests.emplace_back();  // filled below
        }
        KvBlock& open = st.blocks.back();
        open.keys.append_row(k);
        open.values.append_row(v);
        st.digests.back() = build_digest(open.keys, method_, open.block_id, layer);
        st.tokens += 1;
        if (open.keys.rows == block_size_) {
            open.sealed = true;
            st.last_selected[open.block_id] = clock_step_;
            enforce_capacity(st);
            return open.block_id;
        }
        return std::nullopt;
    }

    std::size_t total_tokens(std::size_t layer) const { return state(layer).tokens; }
    std::size_t block_count(std::size_t layer) const { return state(layer).blocks.size(); }

    std::size_t sealed_count(std::size_t layer) const {
        const LayerState& st = state(layer);
        if (st.blocks.empty()) return 0;
        return st.blocks.back().sealed ? st.blocks.size() : st.blocks.size() - 1;
    }

    const std::vector<BlockDigest>& digests(std::size_t layer) const { return state(layer).digests; }

    const KvBlock& block(std::size_t layer, std::size_t id) const {
        const LayerState& st = state(layer);
        check_id(st, id);
        return st.blocks[id];
    }

    Tier tier_of(std::size_t layer, std::size_t id) const {
        const LayerState& st = state(layer);
        check_id(st, id);
        return st.tier[id];
    }

    bool is_in_flight(std::size_t layer, std::size_t id) const {
        for (const RecallTicket& t : in_flight_)
            if (t.layer == layer && set_contains(t.ids, id)) return true;
        return false;
    }

    std::size_t last_selected(std::size_t layer, std::size_t id) const {
        const LayerState& st = state(layer);
        check_id(st, id);
        return st.last_selected[id];
    }

    // Fast-tier ids for planning purposes: the true fast tier plus in-flight
    // recalls that arrive by this layer's next execution (see class comment).
    BlockIdSet residency_set(std::size_t layer) const {
        const LayerState& st = state(layer);
        BlockIdSet out;
        for (std::size_t id = 0; id < st.blocks.size(); ++id)
            if (st.tier[id] == Tier::fast) out.push_back(id);
        const auto next = next_run_of(layer);
        for (const RecallTicket& t : in_flight_) {
            if (t.layer != layer) continue;
            if (std::make_pair(t.ready_step, t.ready_layer) <= next)
                for (std::size_t id : t.ids)
                    if (!set_contains(out, id)) out.push_back(id);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    // Begins a slow->fast transfer for ids, ready at the same layer of the
    // next step. Rejects ids that are unsealed, already fast, or already
    // scheduled.
    RecallTicket schedule_recall(std::size_t layer, const BlockIdSet& ids,
                                 std::size_t issue_step, std::size_t issue_layer) {
        LayerState& st = state(layer);
        if (ids.empty()) throw std::invalid_argument("schedule_recall: empty id set");
        for (std::size_t id : ids) {
            check_id(st, id);
            if (!st.blocks[id].sealed)
                throw std::invalid_argument("schedule_recall: block " + std::to_string(id) + " not sealed");
            if (st.tier[id] == Tier::fast)
                throw std::invalid_argument("schedule_recall: block " + std::to_string(id) + " already fast");
            if (is_in_flight(layer, id))
                throw std::invalid_argument("schedule_recall: block " + std::to_string(id) + " already in flight");
        }
        RecallTicket t;
        t.layer = layer;
        t.ids = ids;
        t.issue_step = issue_step;
        t.issue_layer = issue_layer;
        t.ready_step = issue_step + 1;
        t.ready_layer = issue_layer;
        in_flight_.push_back(t);
        return t;
    }

    // Advances the writer clock and applies every recall whose ready point
    // has been reached. Returns the applied tickets (for event logging).
    std::vector<RecallTicket> begin_layer(std::size_t step, std::size_t layer) {
        clock_step_ = step;
        clock_layer_ = layer;
        std::vector<RecallTicket> applied;
        for (std::size_t i = 0; i < in_flight_.size();) {
            RecallTicket& t = in_flight_[i];
            if (std::make_pair(t.ready_step, t.ready_layer) <= std::make_pair(step, layer)) {
                LayerState& st = state(t.layer);
                for (std::size_t id : t.ids) st.tier[id] = Tier::fast;
                enforce_capacity(st);
                applied.push_back(t);
                in_flight_.erase(in_flight_.begin() + static_cast<std::ptrdiff_t>(i));
            } else {
                ++i;
            }
        }
        return applied;
    }

    std::pair<std::size_t, std::size_t> clock() const { return {clock_step_, clock_layer_}; }

    void mark_selected(std::size_t layer, const BlockIdSet& ids, std::size_t step) {
        LayerState& st = state(layer);
        for (std::size_t id : ids) {
            check_id(st, id);
            st.last_selected[id] = step;
        }
    }

    // Read-only access to blocks that must currently sit in `tier`.
    std::vector<const KvBlock*> fetch_blocks(std::size_t layer, const BlockIdSet& ids,
                                             Tier tier) const {
        const LayerState& st = state(layer);
        std::vector<const KvBlock*> out;
        out.reserve(ids.size());
        for (std::size_t id : ids) {
            check_id(st, id);
            if (st.tier[id] != tier)
                throw std::invalid_argument("fetch_blocks: block " + std::to_string(id) +
                                            " not in " + tier_name(tier) + " tier");
            out.push_back(&st.blocks[id]);
        }
        return out;
    }

    // Tier-agnostic access (single-device reference paths).
    std::vector<const KvBlock*> fetch_blocks_any(std::size_t layer, const BlockIdSet& ids) const {
        const LayerState& st = state(layer);
        std::vector<const KvBlock*> out;
        out.reserve(ids.size());
        for (std::size_t id : ids) {
            check_id(st, id);
            out.push_back(&st.blocks[id]);
        }
        return out;
    }

    // Moves one sealed fast block to the slow tier.
    void demote_block(std::size_t layer, std::size_t id) {
        LayerState& st = state(layer);
        check_id(st, id);
        if (!st.blocks[id].sealed)
            throw std::invalid_argument("demote_block: open block must stay fast");
        if (st.tier[id] != Tier::fast)
            throw std::invalid_argument("demote_block: block " + std::to_string(id) + " not fast");
        st.tier[id] = Tier::slow;
    }

    // Initial placement: score every sealed block against q (the layer's last
    // prefill query) and keep only the top fast_capacity of them fast.
    void place_after_prefill(std::size_t layer, const Vec& q) {
        LayerState& st = state(layer);
        if (st.capacity == std::numeric_limits<std::size_t>::max()) return;  // pinned
        std::vector<BlockDigest> sealed;
        for (std::size_t id = 0; id < st.blocks.size(); ++id)
            if (st.blocks[id].sealed) sealed.push_back(st.digests[id]);
        if (sealed.empty()) return;
        const BlockIdSet keep = select_topk(q, sealed, st.capacity);
        for (std::size_t id = 0; id < st.blocks.size(); ++id) {
            if (!st.blocks[id].sealed) continue;
            st.tier[id] = set_contains(keep, id) ? Tier::fast : Tier::slow;
        }
    }

    std::size_t sealed_fast_count(std::size_t layer) const {
        const LayerState& st = state(layer);
        std::size_t n = 0;
        for (std::size_t id = 0; id < st.blocks.size(); ++id)
            if (st.blocks[id].sealed && st.tier[id] == Tier::fast) ++n;
        return n;
    }

    // One line per block: layer, block id, tier, last-selected step.
    void dump_residency(std::ostream& os) const {
        os << "# layer block tier last_selected\n";
        for (std::size_t layer = 0; layer < layers_.size(); ++layer) {
            const LayerState& st = layers_[layer];
            for (std::size_t id = 0; id < st.blocks.size(); ++id)
                os << layer << ' ' << id << ' ' << tier_name(st.tier[id]) << ' '
                   << st.last_selected[id] << '\n';
        }
    }

private:
    struct LayerState {
        std::deque<KvBlock> blocks;  // deque: stable element addresses across appends
        std::vector<BlockDigest> digests;
        std::vector<Tier> tier;
        std::vector<std::size_t> last_selected;
        std::size_t tokens = 0;
        std::size_t capacity = 0;
    };

    LayerState& state(std::size_t layer) {
        if (layer >= layers_.size()) throw std::invalid_argument("layer out of range");
        return layers_[layer];
    }
    const LayerState& state(std::size_t layer) const {
        if (layer >= layers_.size()) throw std::invalid_argument("layer out of range");
        return layers_[layer];
    }

    static void check_id(const LayerState& st, std::size_t id) {
        if (id >= st.blocks.size()) throw std::invalid_argument("block id out of range");
    }

    // Where does `layer` execute next, given the writer clock?
    std::pair<std::size_t, std::size_t> next_run_of(std::size_t layer) const {
        if (clock_layer_ <= layer) return {clock_step_, layer};
        return {clock_step_ + 1, layer};
    }

    void enforce_capacity(LayerState& st) {
        while (sealed_fast(st) > st.capacity) {
            // Least recently selected sealed fast block; ties -> lower id.
            std::size_t victim = st.blocks.size();
            for (std::size_t id = 0; id < st.blocks.size(); ++id) {
                if (!st.blocks[id].sealed || st.tier[id] != Tier::fast) continue;
                if (victim == st.blocks.size() ||
                    st.last_selected[id] < st.last_selected[victim])
                    victim = id;
            }
            st.tier[victim] = Tier::slow;
        }
    }

    static std::size_t sealed_fast(const LayerState& st) {
        std::size_t n = 0;
        for (std::size_t id = 0; id < st.blocks.size(); ++id)
            if (st.blocks[id].sealed && st.tier[id] == Tier::fast) ++n;
        return n;
    }

    std::size_t block_size_;
    std::size_t head_dim_;
    DigestMethod method_;
    std::vector<LayerState> layers_;
    std::vector<RecallTicket> in_flight_;
    std::size_t clock_step_ = 0;
    std::size_t clock_layer_ = 0;
};

}  // namespace scout

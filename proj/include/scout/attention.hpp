// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "scout/kv_store.hpp"
#include "scout/numerics.hpp"

namespace scout {

// Unnormalized attention state over some subset of tokens. Two partials over
// disjoint token sets merge into the partial over their union, so attention
// can be computed anywhere and combined later:
//   o_acc      sum of exp(s_j - max_logit) * v_j
//   max_logit  running max of the scaled logits (-inf when empty)
//   denom      sum of exp(s_j - max_logit)
struct PartialAttention {
    Vec o_acc;
    double max_logit = -std::numeric_limits<double>::infinity();
    double denom = 0.0;
    std::size_t token_count = 0;

    static PartialAttention empty(std::size_t dim) {
        PartialAttention p;
        p.o_acc.assign(dim, 0.0);
        return p;
    }

    bool is_empty() const { return token_count == 0; }
};

namespace detail {
inline void accumulate_token(PartialAttention& p, double logit, const double* v,
                             std::size_t dim) {
    if (logit > p.max_logit) {
        const double scale = p.is_empty() ? 0.0 : std::exp(p.max_logit - logit);
        for (std::size_t c = 0; c < dim; ++c) p.o_acc[c] *= scale;
        p.denom *= scale;
        p.max_logit = logit;
    }
    const double w = std::exp(logit - p.max_logit);
    for (std::size_t c = 0; c < dim; ++c) p.o_acc[c] += w * v[c];
    p.denom += w;
    p.token_count += 1;
}
}  // namespace detail

// softmax(scale * q . K^T) . V computed in one online pass. The tests check
// this against the two-pass softmax/matmul composition.
inline Vec exact_attention(const Vec& q, const Mat& keys, const Mat& values, double scale) {
    if (keys.rows == 0) throw std::invalid_argument("exact_attention: no keys");
    if (keys.rows != values.rows || keys.cols != values.cols || keys.cols != q.size())
        throw std::invalid_argument("exact_attention: shape mismatch");
    if (!(scale > 0.0)) throw std::invalid_argument("exact_attention: scale must be > 0");
    PartialAttention p = PartialAttention::empty(q.size());
    for (std::size_t r = 0; r < keys.rows; ++r) {
        double s = 0.0;
        const double* krow = keys.row(r);
        for (std::size_t c = 0; c < q.size(); ++c) s += q[c] * krow[c];
        detail::accumulate_token(p, scale * s, values.row(r), q.size());
    }
    Vec out(q.size());
    for (std::size_t c = 0; c < q.size(); ++c) out[c] = p.o_acc[c] / p.denom;
    return out;
}

// Partial over every token of the given blocks (possibly none).
inline PartialAttention partial_attention(const Vec& q,
                                          std::span<const KvBlock* const> blocks,
                                          double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("partial_attention: scale must be > 0");
    PartialAttention p = PartialAttention::empty(q.size());
    for (const KvBlock* b : blocks) {
        if (b->keys.cols != q.size())
            throw std::invalid_argument("partial_attention: query/key dimension mismatch");
        for (std::size_t r = 0; r < b->keys.rows; ++r) {
            double s = 0.0;
            const double* krow = b->keys.row(r);
            for (std::size_t c = 0; c < q.size(); ++c) s += q[c] * krow[c];
            detail::accumulate_token(p, scale * s, b->values.row(r), q.size());
        }
    }
    return p;
}

inline PartialAttention partial_attention(const Vec& q,
                                          const std::vector<const KvBlock*>& blocks,
                                          double scale) {
    return partial_attention(q, std::span<const KvBlock* const>(blocks), scale);
}

// Combines partials over disjoint token sets. Merging with an empty partial
// returns the other operand exactly (the empty side contributes exp(-inf),
// i.e. zero weight).
inline PartialAttention merge(const PartialAttention& a, const PartialAttention& b) {
    if (a.is_empty()) return b;
    if (b.is_empty()) return a;
    if (a.o_acc.size() != b.o_acc.size())
        throw std::invalid_argument("merge: dimension mismatch");
    PartialAttention out = PartialAttention::empty(a.o_acc.size());
    out.max_logit = std::max(a.max_logit, b.max_logit);
    const double wa = std::exp(a.max_logit - out.max_logit);
    const double wb = std::exp(b.max_logit - out.max_logit);
    for (std::size_t c = 0; c < out.o_acc.size(); ++c)
        out.o_acc[c] = wa * a.o_acc[c] + wb * b.o_acc[c];
    out.denom = wa * a.denom + wb * b.denom;
    out.token_count = a.token_count + b.token_count;
    return out;
}

// o_acc / denom; rejects an empty partial (nothing was attended).
inline Vec finalize(const PartialAttention& p) {
    if (p.is_empty()) throw std::invalid_argument("finalize: empty partial");
    Vec out(p.o_acc.size());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = p.o_acc[c] / p.denom;
    return out;
}

}  // namespace scout

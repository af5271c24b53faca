// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <stdexcept>
#include <utility>
#include <vector>

#include "scout/numerics.hpp"

namespace scout {

// Compact per-block summary of a block's key rows, used to rank blocks
// without touching the full KV data.
//
//  - minmax: channel-wise min/max over the key rows. Scoring against a query
//    takes the per-channel maximum of q[c]*lo[c] and q[c]*hi[c], which upper
//    bounds q . k for every key row in the block.
//  - mean: channel-wise mean; scored by a plain dot product (cheap, but no
//    bound guarantee).
enum class DigestMethod { minmax, mean };

struct BlockDigest {
    DigestMethod method = DigestMethod::minmax;
    Vec lo;    // minmax only
    Vec hi;    // minmax only
    Vec mean;  // mean only
    std::size_t block_id = 0;
    std::size_t layer = 0;
};

inline BlockDigest build_digest(const Mat& keys, DigestMethod method,
                                std::size_t block_id = 0, std::size_t layer = 0) {
    if (keys.rows == 0) throw std::invalid_argument("build_digest: empty block");
    BlockDigest d;
    d.method = method;
    d.block_id = block_id;
    d.layer = layer;
    if (method == DigestMethod::minmax) {
        d.lo = keys.row_vec(0);
        d.hi = keys.row_vec(0);
        for (std::size_t r = 1; r < keys.rows; ++r) {
            const double* row = keys.row(r);
            for (std::size_t c = 0; c < keys.cols; ++c) {
                d.lo[c] = std::min(d.lo[c], row[c]);
                d.hi[c] = std::max(d.hi[c], row[c]);
            }
        }
    } else {
        d.mean.assign(keys.cols, 0.0);
        for (std::size_t r = 0; r < keys.rows; ++r) {
            const double* row = keys.row(r);
            for (std::size_t c = 0; c < keys.cols; ++c) d.mean[c] += row[c];
        }
        for (double& v : d.mean) v /= static_cast<double>(keys.rows);
    }
    return d;
}

inline double digest_score(const Vec& q, const BlockDigest& d) {
    if (d.method == DigestMethod::minmax) {
        if (q.size() != d.lo.size())
            throw std::invalid_argument("digest_score: query/digest dimension mismatch");
        double s = 0.0;
        for (std::size_t c = 0; c < q.size(); ++c)
            s += std::max(q[c] * d.lo[c], q[c] * d.hi[c]);
        return s;
    }
    return dot(q, d.mean);
}

// Sorted, duplicate-free set of block ids.
using BlockIdSet = std::vector<std::size_t>;

inline BlockIdSet set_intersection(const BlockIdSet& a, const BlockIdSet& b) {
    BlockIdSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline BlockIdSet set_difference(const BlockIdSet& a, const BlockIdSet& b) {
    BlockIdSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline bool set_contains(const BlockIdSet& s, std::size_t id) {
    return std::binary_search(s.begin(), s.end(), id);
}

inline BlockIdSet set_union_ids(const BlockIdSet& a, const BlockIdSet& b) {
    BlockIdSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

// The k best-scoring blocks for q (all of them when k >= size). Score ties
// break toward the lower block id, so the result is fully deterministic.
inline BlockIdSet select_topk(const Vec& q, const std::vector<BlockDigest>& digests,
                              std::size_t k) {
    if (k == 0) throw std::invalid_argument("select_topk: k must be >= 1");
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(digests.size());
    for (const BlockDigest& d : digests)
        scored.emplace_back(digest_score(q, d), d.block_id);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const std::size_t n = std::min(k, scored.size());
    BlockIdSet out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(scored[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace scout

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "scout/attention.hpp"
#include "scout/kv_store.hpp"
#include "scout/numerics.hpp"

namespace scout {

// Small random pre-norm decoder. Each layer applies
//   x <- x + alpha * W_O(Attn(normalize(x)))
//   x <- x + alpha * FFN(normalize(x))
// with unit-RMS normalization feeding every branch. The damped residual
// updates keep consecutive layer inputs close, which is exactly what makes
// next-layer queries predictable from the current layer's stream: with
// alpha = 0 the stream never changes and the prediction is exact.
struct ToyDecoderConfig {
    std::size_t layers = 8;
    std::size_t hidden = 128;
    std::size_t head_dim = 64;
    double alpha = 0.1;
    // Step-to-step drift of the decode input stream; small values emulate the
    // slowly-evolving hidden states of real decoding, large values decorrelate
    // consecutive steps quickly.
    double feedback_alpha = 0.15;
    std::uint64_t seed = 1;
    std::size_t block_size = 32;
};

// Residual-stream inputs and true queries per (layer, position), recorded
// during prefill and decode for query-prediction quality measurement.
struct ResidualTrace {
    std::size_t prefill_positions = 0;
    std::vector<Mat> x;  // [layer] positions x hidden, stream entering the layer
    std::vector<Mat> q;  // [layer] positions x head_dim, true queries
    Vec final_hidden;    // stream after the last layer, most recent position

    std::size_t positions() const { return x.empty() ? 0 : x[0].rows; }
};

class ToyDecoder {
public:
    struct LayerWeights {
        Mat wq, wk, wv;  // hidden x head_dim
        Mat wo;          // head_dim x hidden
        Mat ff1, ff2;    // hidden x hidden
    };

    explicit ToyDecoder(ToyDecoderConfig cfg) : cfg_(cfg) {
        if (cfg.layers == 0 || cfg.hidden == 0 || cfg.head_dim == 0 || cfg.block_size == 0)
            throw std::invalid_argument("ToyDecoder: all dimensions must be >= 1");
        if (cfg.alpha < 0.0)
            throw std::invalid_argument("ToyDecoder: alpha must be >= 0");
        if (cfg.feedback_alpha < 0.0)
            throw std::invalid_argument("ToyDecoder: feedback_alpha must be >= 0");
        std::mt19937_64 rng(cfg.seed);
        weights_.reserve(cfg.layers);
        for (std::size_t i = 0; i < cfg.layers; ++i) {
            LayerWeights w;
            w.wq = random_mat(rng, cfg.hidden, cfg.head_dim);
            w.wk = random_mat(rng, cfg.hidden, cfg.head_dim);
            w.wv = random_mat(rng, cfg.hidden, cfg.head_dim);
            w.wo = random_mat(rng, cfg.head_dim, cfg.hidden);
            w.ff1 = random_mat(rng, cfg.hidden, cfg.hidden);
            w.ff2 = random_mat(rng, cfg.hidden, cfg.hidden);
            weights_.push_back(std::move(w));
        }
        feedback_ = random_mat(rng, cfg.hidden, cfg.hidden);
    }

    const ToyDecoderConfig& config() const { return cfg_; }
    const LayerWeights& weights(std::size_t layer) const { return weights_.at(layer); }
    double scale() const { return 1.0 / std::sqrt(static_cast<double>(cfg_.head_dim)); }

    Vec normalize(const Vec& x) const { return rms_normalize(x); }
    Vec query(std::size_t layer, const Vec& normed) const { return vec_mat(normed, weights_.at(layer).wq); }
    Vec key(std::size_t layer, const Vec& normed) const { return vec_mat(normed, weights_.at(layer).wk); }
    Vec value(std::size_t layer, const Vec& normed) const { return vec_mat(normed, weights_.at(layer).wv); }
    Vec apply_output(std::size_t layer, const Vec& attn) const { return vec_mat(attn, weights_.at(layer).wo); }

    Vec ffn(std::size_t layer, const Vec& normed) const {
        const LayerWeights& w = weights_.at(layer);
        Vec h = vec_mat(normed, w.ff1);
        for (double& v : h) v = std::tanh(v);
        return vec_mat(h, w.ff2);
    }

    // Next decode input: the previous final hidden state nudged through a
    // fixed random projection and re-normalized, so consecutive decode
    // inputs stay correlated at a rate set by feedback_alpha.
    Vec next_input(const Vec& last_hidden) const {
        return rms_normalize(
            add_scaled(last_hidden, vec_mat(last_hidden, feedback_), cfg_.feedback_alpha));
    }

    // Deterministic unit-RMS prefill embeddings (stream separate from the
    // weight stream, so changing the prefill length never shifts weights).
    Mat make_embeddings(std::size_t tokens) const {
        std::mt19937_64 rng(cfg_.seed ^ 0x9e3779b97f4a7c15ull);
        std::normal_distribution<double> dist(0.0, 1.0);
        Mat out(tokens, cfg_.hidden);
        for (std::size_t r = 0; r < tokens; ++r) {
            Vec row(cfg_.hidden);
            for (double& v : row) v = dist(rng);
            row = rms_normalize(row);
            for (std::size_t c = 0; c < cfg_.hidden; ++c) out.at(r, c) = row[c];
        }
        return out;
    }

    // Runs every embedding row through all layers with exact causal
    // attention, populating the cache and the trace. During prefill the
    // current position's K/V are appended before its attention, so each
    // prefill token attends to itself and everything earlier.
    ResidualTrace prefill(const Mat& embeddings, TieredKvCache& cache) const {
        if (embeddings.cols != cfg_.hidden)
            throw std::invalid_argument("prefill: embedding width != hidden");
        if (cache.num_layers() != cfg_.layers || cache.block_size() != cfg_.block_size)
            throw std::invalid_argument("prefill: cache shape mismatch");
        ResidualTrace trace;
        trace.x.assign(cfg_.layers, Mat(0, cfg_.hidden));
        trace.q.assign(cfg_.layers, Mat(0, cfg_.head_dim));
        // Running per-layer K/V copies so each position's exact attention
        // avoids re-gathering the cache.
        std::vector<Mat> keys(cfg_.layers, Mat(0, cfg_.head_dim));
        std::vector<Mat> values(cfg_.layers, Mat(0, cfg_.head_dim));
        for (std::size_t p = 0; p < embeddings.rows; ++p) {
            Vec x = embeddings.row_vec(p);
            for (std::size_t i = 0; i < cfg_.layers; ++i) {
                const Vec xin = x;
                const Vec n = normalize(xin);
                const Vec qv = query(i, n);
                const Vec kv = key(i, n);
                const Vec vv = value(i, n);
                cache.append_token(i, kv, vv);
                keys[i].append_row(kv);
                values[i].append_row(vv);
                trace.x[i].append_row(xin);
                trace.q[i].append_row(qv);
                const Vec attn = exact_attention(qv, keys[i], values[i], scale());
                x = add_scaled(xin, apply_output(i, attn), cfg_.alpha);
                x = add_scaled(x, ffn(i, normalize(x)), cfg_.alpha);
            }
            trace.final_hidden = x;
        }
        trace.prefill_positions = embeddings.rows;
        return trace;
    }

    // One decode step with exact attention over everything already cached
    // (the new token's K/V are appended after its attention, matching the
    // sparse engine's ordering). Reference path for oracle comparisons and
    // similarity measurement.
    Vec decode_exact_step(TieredKvCache& cache, ResidualTrace& trace, const Vec& x0) const {
        Vec x = x0;
        for (std::size_t i = 0; i < cfg_.layers; ++i) {
            const Vec xin = x;
            const Vec n = normalize(xin);
            const Vec qv = query(i, n);
            trace.x[i].append_row(xin);
            trace.q[i].append_row(qv);
            auto [keys, values] = gather_layer(cache, i);
            const Vec attn = exact_attention(qv, keys, values, scale());
            x = add_scaled(xin, apply_output(i, attn), cfg_.alpha);
            x = add_scaled(x, ffn(i, normalize(x)), cfg_.alpha);
            cache.append_token(i, key(i, n), value(i, n));
        }
        trace.final_hidden = x;
        return x;
    }

    static Vec add_scaled(const Vec& a, const Vec& b, double s) {
        Vec out(a.size());
        for (std::size_t c = 0; c < a.size(); ++c) out[c] = a[c] + s * b[c];
        return out;
    }

    // All cached tokens of one layer as contiguous key/value matrices.
    static std::pair<Mat, Mat> gather_layer(const TieredKvCache& cache, std::size_t layer) {
        Mat keys, values;
        for (std::size_t id = 0; id < cache.block_count(layer); ++id) {
            const KvBlock& b = cache.block(layer, id);
            for (std::size_t r = 0; r < b.keys.rows; ++r) {
                keys.append_row(b.keys.row_vec(r));
                values.append_row(b.values.row_vec(r));
            }
        }
        return {keys, values};
    }

private:
    static Mat random_mat(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
        // Scaled Gaussian init: approximately orthogonal columns, and unit-RMS
        // inputs map to roughly unit-RMS outputs.
        std::normal_distribution<double> dist(0.0, 1.0);
        const double s = 1.0 / std::sqrt(static_cast<double>(rows));
        Mat m(rows, cols);
        for (double& v : m.data) v = s * dist(rng);
        return m;
    }

    ToyDecoderConfig cfg_;
    std::vector<LayerWeights> weights_;
    Mat feedback_;
};

// Next-layer query guess from the current layer's (normalized) stream.
inline Vec predict_next_query(const Vec& normed_x, const Mat& wq_next) {
    return vec_mat(normed_x, wq_next);
}

// Mean cosine similarity between predicted and true queries for each layer
// boundary i -> i+1, over positions [from_pos, end). Returns layers-1 values.
inline Vec measure_query_similarity(const ResidualTrace& trace, const ToyDecoder& decoder,
                                    std::size_t from_pos = 0) {
    const std::size_t layers = decoder.config().layers;
    if (trace.x.size() != layers)
        throw std::invalid_argument("measure_query_similarity: trace/decoder layer mismatch");
    const std::size_t positions = trace.positions();
    if (from_pos >= positions)
        throw std::invalid_argument("measure_query_similarity: no positions in range");
    Vec out;
    out.reserve(layers > 0 ? layers - 1 : 0);
    for (std::size_t i = 0; i + 1 < layers; ++i) {
        double acc = 0.0;
        for (std::size_t p = from_pos; p < positions; ++p) {
            const Vec pred = predict_next_query(rms_normalize(trace.x[i].row_vec(p)),
                                                decoder.weights(i + 1).wq);
            acc += cosine_similarity(pred, trace.q[i + 1].row_vec(p));
        }
        out.push_back(acc / static_cast<double>(positions - from_pos));
    }
    return out;
}

}  // namespace scout

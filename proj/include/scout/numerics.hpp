// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace scout {

using Vec = std::vector<double>;

// Dense row-major matrix. Everything here is 64-bit doubles; the whole
// artifact is sized so exhaustive reference computations stay cheap.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row(std::size_t r) const { return data.data() + r * cols; }

    Vec row_vec(std::size_t r) const {
        return Vec(row(r), row(r) + cols);
    }

    void append_row(const Vec& v) {
        if (cols == 0 && rows == 0) cols = v.size();
        if (v.size() != cols)
            throw std::invalid_argument("Mat::append_row: expected " + std::to_string(cols) +
                                        " columns, got " + std::to_string(v.size()));
        data.insert(data.end(), v.begin(), v.end());
        ++rows;
    }
};

// a (m x k) times b (k x n). Loop order is i-k-j so the reference tests can
// check against an independently ordered accumulation.
inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: inner dimensions differ (" +
                                    std::to_string(a.cols) + " vs " + std::to_string(b.rows) + ")");
    Mat out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* orow = out.data.data() + i * out.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: length mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const Vec& v) {
    return std::sqrt(dot(v, v));
}

// Numerically stable softmax: subtract the max before exponentiating.
inline Vec softmax(const Vec& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    double m = logits[0];
    for (double x : logits) m = std::max(m, x);
    Vec out(logits.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        denom += out[i];
    }
    for (double& x : out) x /= denom;
    return out;
}

inline double cosine_similarity(const Vec& a, const Vec& b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm input");
    return dot(a, b) / (na * nb);
}

// x scaled to unit RMS; an all-zero vector is returned unchanged.
inline Vec rms_normalize(const Vec& x) {
    if (x.empty()) throw std::invalid_argument("rms_normalize: empty input");
    double ms = 0.0;
    for (double v : x) ms += v * v;
    const double rms = std::sqrt(ms / static_cast<double>(x.size()));
    if (rms == 0.0) return x;
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / rms;
    return out;
}

// row vector (1 x r) times m (r x c) -> length-c vector.
inline Vec vec_mat(const Vec& v, const Mat& m) {
    if (v.size() != m.rows)
        throw std::invalid_argument("vec_mat: length " + std::to_string(v.size()) +
                                    " vs " + std::to_string(m.rows) + " rows");
    Vec out(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double vr = v[r];
        if (vr == 0.0) continue;
        const double* mrow = m.row(r);
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += vr * mrow[c];
    }
    return out;
}

// m (r x c) times column vector (c) -> length-r vector.
inline Vec mat_vec(const Mat& m, const Vec& v) {
    if (v.size() != m.cols)
        throw std::invalid_argument("mat_vec: length " + std::to_string(v.size()) +
                                    " vs " + std::to_string(m.cols) + " cols");
    Vec out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mrow = m.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) s += mrow[c] * v[c];
        out[r] = s;
    }
    return out;
}

}  // namespace scout

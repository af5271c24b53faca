// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "scout/attention.hpp"

namespace {

scout::Mat random_mat(std::mt19937_64& rng, std::size_t r, std::size_t c) {
    std::normal_distribution<double> dist(0.0, 1.0);
    scout::Mat m(r, c);
    for (double& v : m.data) v = dist(rng);
    return m;
}

scout::Vec random_vec(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    scout::Vec v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

// Composition reference: logits -> softmax -> weighted value average, built
// from parts the attention code does not share.
scout::Vec naive_attention(const scout::Vec& q, const scout::Mat& keys, const scout::Mat& values,
                           double scale) {
    scout::Vec logits(keys.rows);
    for (std::size_t r = 0; r < keys.rows; ++r)
        logits[r] = scale * scout::dot(q, keys.row_vec(r));
    const scout::Vec w = scout::softmax(logits);
    scout::Vec out(values.cols, 0.0);
    for (std::size_t r = 0; r < keys.rows; ++r)
        for (std::size_t c = 0; c < values.cols; ++c) out[c] += w[r] * values.at(r, c);
    return out;
}

scout::KvBlock make_block(std::mt19937_64& rng, std::size_t rows, std::size_t dim,
                          std::size_t id) {
    scout::KvBlock b;
    b.block_id = id;
    b.keys = random_mat(rng, rows, dim);
    b.values = random_mat(rng, rows, dim);
    b.sealed = true;
    return b;
}

double max_abs_diff(const scout::Vec& a, const scout::Vec& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("exact attention matches the softmax composition reference") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 1 + static_cast<std::size_t>(rng() % 24);
        const std::size_t dim = 1 + static_cast<std::size_t>(rng() % 8);
        const scout::Mat keys = random_mat(rng, rows, dim);
        const scout::Mat values = random_mat(rng, rows, dim);
        const scout::Vec q = random_vec(rng, dim);
        const scout::Vec got = scout::exact_attention(q, keys, values, 0.35);
        const scout::Vec want = naive_attention(q, keys, values, 0.35);
        REQUIRE(max_abs_diff(got, want) < 1e-12);
    }
}

TEST_CASE("exact attention rejects bad inputs") {
    const scout::Mat keys(2, 3);
    const scout::Mat values(2, 3);
    REQUIRE_THROWS_AS(scout::exact_attention({1.0, 0.0, 0.0}, scout::Mat(0, 3), scout::Mat(0, 3), 1.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(scout::exact_attention({1.0, 0.0}, keys, values, 1.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(scout::exact_attention({1.0, 0.0, 0.0}, keys, values, 0.0),
                      std::invalid_argument);
}

TEST_CASE("any partition of the blocks merges to the same attention") {
    std::mt19937_64 rng(37);
    const std::size_t dim = 5;
    std::vector<scout::KvBlock> blocks;
    scout::Mat all_keys(0, dim), all_values(0, dim);
    for (std::size_t i = 0; i < 6; ++i) {
        blocks.push_back(make_block(rng, 1 + rng() % 7, dim, i));
        for (std::size_t r = 0; r < blocks.back().keys.rows; ++r) {
            all_keys.append_row(blocks.back().keys.row_vec(r));
            all_values.append_row(blocks.back().values.row_vec(r));
        }
    }
    const scout::Vec q = random_vec(rng, dim);
    const double scale = 0.5;
    const scout::Vec whole = scout::exact_attention(q, all_keys, all_values, scale);

    for (int trial = 0; trial < 40; ++trial) {
        std::vector<const scout::KvBlock*> left, right;
        for (const scout::KvBlock& b : blocks)
            (rng() % 2 ? left : right).push_back(&b);
        const scout::PartialAttention pl = scout::partial_attention(q, left, scale);
        const scout::PartialAttention pr = scout::partial_attention(q, right, scale);
        const scout::PartialAttention m = scout::merge(pl, pr);
        REQUIRE(m.token_count == all_keys.rows);
        REQUIRE(max_abs_diff(scout::finalize(m), whole) < 1e-10);
    }
}

TEST_CASE("merge is commutative and associative within tolerance") {
    std::mt19937_64 rng(41);
    const std::size_t dim = 4;
    const scout::KvBlock b0 = make_block(rng, 3, dim, 0);
    const scout::KvBlock b1 = make_block(rng, 5, dim, 1);
    const scout::KvBlock b2 = make_block(rng, 2, dim, 2);
    const scout::Vec q = random_vec(rng, dim);
    const auto part = [&](const scout::KvBlock& b) {
        return scout::partial_attention(q, std::vector<const scout::KvBlock*>{&b}, 0.5);
    };
    const scout::PartialAttention p0 = part(b0), p1 = part(b1), p2 = part(b2);

    const scout::Vec ab = scout::finalize(scout::merge(p0, p1));
    const scout::Vec ba = scout::finalize(scout::merge(p1, p0));
    REQUIRE(max_abs_diff(ab, ba) < 1e-12);

    const scout::Vec left = scout::finalize(scout::merge(scout::merge(p0, p1), p2));
    const scout::Vec right = scout::finalize(scout::merge(p0, scout::merge(p1, p2)));
    REQUIRE(max_abs_diff(left, right) < 1e-12);
}

TEST_CASE("merging with an empty partial returns the other operand exactly") {
    std::mt19937_64 rng(43);
    const scout::KvBlock b = make_block(rng, 4, 3, 0);
    const scout::PartialAttention p =
        scout::partial_attention(random_vec(rng, 3), std::vector<const scout::KvBlock*>{&b}, 1.0);
    const scout::PartialAttention e = scout::PartialAttention::empty(3);

    const scout::PartialAttention m1 = scout::merge(p, e);
    const scout::PartialAttention m2 = scout::merge(e, p);
    REQUIRE(m1.o_acc == p.o_acc);
    REQUIRE(m1.denom == p.denom);
    REQUIRE(m1.max_logit == p.max_logit);
    REQUIRE(m2.o_acc == p.o_acc);

    const scout::PartialAttention both = scout::merge(e, scout::PartialAttention::empty(3));
    REQUIRE(both.is_empty());
    REQUIRE_THROWS_AS(scout::finalize(both), std::invalid_argument);
}

TEST_CASE("partial attention over no blocks is empty") {
    const scout::PartialAttention p =
        scout::partial_attention({1.0, 2.0}, std::vector<const scout::KvBlock*>{}, 1.0);
    REQUIRE(p.is_empty());
    REQUIRE(p.token_count == 0);
}

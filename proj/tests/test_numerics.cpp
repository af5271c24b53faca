// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "scout/numerics.hpp"

namespace {

// Independent reference: classic i-j-k accumulation, the opposite order from
// the library's i-k-j loop.
scout::Mat naive_matmul(const scout::Mat& a, const scout::Mat& b) {
    scout::Mat out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

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

}  // namespace

TEST_CASE("matmul matches an independently ordered reference") {
    std::mt19937_64 rng(7);
    for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1},
                           {3, 4, 5},
                           {8, 2, 7},
                           {16, 16, 16}}) {
        const scout::Mat a = random_mat(rng, m, k);
        const scout::Mat b = random_mat(rng, k, n);
        const scout::Mat got = scout::matmul(a, b);
        const scout::Mat want = naive_matmul(a, b);
        REQUIRE(got.rows == want.rows);
        REQUIRE(got.cols == want.cols);
        for (std::size_t i = 0; i < got.data.size(); ++i)
            REQUIRE(got.data[i] == Catch::Approx(want.data[i]).margin(1e-12));
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    REQUIRE_THROWS_AS(scout::matmul(scout::Mat(2, 3), scout::Mat(4, 2)), std::invalid_argument);
}

TEST_CASE("append_row adopts the width of the first row and enforces it after") {
    scout::Mat m;
    m.append_row({1.0, 2.0});
    REQUIRE(m.rows == 1);
    REQUIRE(m.cols == 2);
    m.append_row({3.0, 4.0});
    REQUIRE(m.at(1, 1) == 4.0);
    REQUIRE_THROWS_AS(m.append_row({5.0}), std::invalid_argument);
}

TEST_CASE("vec_mat and mat_vec agree with matmul") {
    std::mt19937_64 rng(11);
    const scout::Mat m = random_mat(rng, 5, 3);
    const scout::Vec v = random_vec(rng, 5);
    const scout::Vec u = random_vec(rng, 3);

    scout::Mat vrow(0, 5);
    vrow.append_row(v);
    const scout::Mat want_row = naive_matmul(vrow, m);
    const scout::Vec got_row = scout::vec_mat(v, m);
    for (std::size_t c = 0; c < 3; ++c)
        REQUIRE(got_row[c] == Catch::Approx(want_row.at(0, c)).margin(1e-12));

    const scout::Vec got_col = scout::mat_vec(m, u);
    for (std::size_t r = 0; r < 5; ++r)
        REQUIRE(got_col[r] == Catch::Approx(scout::dot(m.row_vec(r), u)).margin(1e-12));

    REQUIRE_THROWS_AS(scout::vec_mat(u, m), std::invalid_argument);
    REQUIRE_THROWS_AS(scout::mat_vec(m, v), std::invalid_argument);
}

TEST_CASE("softmax sums to one and is shift invariant") {
    std::mt19937_64 rng(3);
    const scout::Vec logits = random_vec(rng, 9);
    const scout::Vec p = scout::softmax(logits);
    double sum = 0.0;
    for (double x : p) sum += x;
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));

    scout::Vec shifted = logits;
    for (double& x : shifted) x += 123.5;
    const scout::Vec q = scout::softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i)
        REQUIRE(p[i] == Catch::Approx(q[i]).margin(1e-12));
}

TEST_CASE("softmax survives large logits") {
    const scout::Vec p = scout::softmax({1000.0, 1000.0, 999.0});
    REQUIRE(std::isfinite(p[0]));
    REQUIRE(p[0] == Catch::Approx(p[1]).margin(1e-15));
    REQUIRE(p[0] > p[2]);
    REQUIRE_THROWS_AS(scout::softmax({}), std::invalid_argument);
}

TEST_CASE("cosine similarity endpoints") {
    const scout::Vec a{1.0, 2.0, -1.0};
    scout::Vec b = a;
    for (double& x : b) x *= 3.5;
    REQUIRE(scout::cosine_similarity(a, b) == Catch::Approx(1.0).margin(1e-12));
    for (double& x : b) x = -x;
    REQUIRE(scout::cosine_similarity(a, b) == Catch::Approx(-1.0).margin(1e-12));
    REQUIRE(scout::cosine_similarity({1.0, 0.0}, {0.0, 2.0}) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE_THROWS_AS(scout::cosine_similarity({0.0, 0.0}, {1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("rms_normalize yields unit RMS and keeps direction") {
    std::mt19937_64 rng(5);
    const scout::Vec v = random_vec(rng, 16);
    const scout::Vec n = scout::rms_normalize(v);
    double ms = 0.0;
    for (double x : n) ms += x * x;
    REQUIRE(std::sqrt(ms / 16.0) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(scout::cosine_similarity(v, n) == Catch::Approx(1.0).margin(1e-12));

    const scout::Vec z(4, 0.0);
    REQUIRE(scout::rms_normalize(z) == z);
    REQUIRE_THROWS_AS(scout::rms_normalize({}), std::invalid_argument);
}

#include <cmath>
#include <vector>

#include "doctest.h"
#include "ncct/error.hpp"
#include "ncct/losses.hpp"
#include "ncct/rng.hpp"

using namespace ncct;

namespace {

Matrix row_matrix(const std::vector<double>& row) {
    Matrix m(1, static_cast<int>(row.size()));
    for (int c = 0; c < m.cols; ++c) m.at(0, c) = row[c];
    return m;
}

Matrix random_probs(Rng& rng, int n, int C) {
    Matrix m(n, C);
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int c = 0; c < C; ++c) sum += (m.at(i, c) = 0.05 + rng.uniform01());
        for (int c = 0; c < C; ++c) m.at(i, c) /= sum;
    }
    return m;
}

} // namespace

TEST_CASE("supervised_ce hand values") {
    SUBCASE("perfect predictions cost nothing") {
        Matrix probs(2, 3);
        probs.at(0, 1) = 1.0;
        probs.at(1, 2) = 1.0;
        CHECK(supervised_ce(probs, {1, 2}, {0, 1}) == 0.0);
    }
    SUBCASE("uniform prediction over 7 classes") {
        Matrix probs(1, 7);
        for (int c = 0; c < 7; ++c) probs.at(0, c) = 1.0 / 7.0;
        CHECK(supervised_ce(probs, {3}, {0}) == doctest::Approx(1.945910).epsilon(1e-6));
    }
    SUBCASE("two-sample mean") {
        Matrix probs(2, 4);
        probs.at(0, 0) = 0.5;
        probs.at(1, 1) = 0.25;
        CHECK(supervised_ce(probs, {0, 1}, {0, 1}) ==
              doctest::Approx(1.039721).epsilon(1e-6));
    }
    SUBCASE("empty subset is free") {
        Matrix probs(2, 4);
        CHECK(supervised_ce(probs, {0, 1}, {}) == 0.0);
    }
}

TEST_CASE("supervised_ce reads only the requested rows") {
    Rng rng(mix_seed({0x10555ull, 1}));
    Matrix probs = random_probs(rng, 6, 5);
    std::vector<int> labels = {0, 1, 2, 3, 4, 0};
    const double base = supervised_ce(probs, labels, {1, 4});
    // trash every row outside the subset
    for (int i : {0, 2, 3, 5})
        for (int c = 0; c < 5; ++c) probs.at(i, c) = 0.123;
    CHECK(supervised_ce(probs, labels, {1, 4}) == base);
}

TEST_CASE("supervised_ce clamps zero probabilities") {
    Matrix probs(1, 3); // row of zeros
    int clamps = 0;
    const double v = supervised_ce(probs, {1}, {0}, &clamps);
    CHECK(clamps == 1);
    CHECK(v == doctest::Approx(-std::log(1e-12)));
    CHECK(std::isfinite(v));
}

TEST_CASE("topk_mask ranks and breaks ties toward lower indices") {
    SUBCASE("worked k=2 row") {
        NegativeMask nm = topk_mask(row_matrix({0.30, 0.25, 0.20, 0.10, 0.08, 0.05, 0.02}), 2);
        const std::vector<double> want = {1, 1, 0, 0, 0, 0, 0};
        for (int c = 0; c < 7; ++c) CHECK(nm.mask.at(0, c) == want[c]);
    }
    SUBCASE("k equal to C keeps everything") {
        NegativeMask nm = topk_mask(row_matrix({0.2, 0.3, 0.5}), 3);
        for (int c = 0; c < 3; ++c) CHECK(nm.mask.at(0, c) == 1.0);
    }
    SUBCASE("uniform row resolves to the lowest indices") {
        NegativeMask nm = topk_mask(row_matrix(std::vector<double>(7, 1.0 / 7)), 3);
        const std::vector<double> want = {1, 1, 1, 0, 0, 0, 0};
        for (int c = 0; c < 7; ++c) CHECK(nm.mask.at(0, c) == want[c]);
    }
    SUBCASE("partial tie at the cut") {
        // 0.4 wins, then the 0.3 tie resolves to index 1 over index 3
        NegativeMask nm = topk_mask(row_matrix({0.3, 0.4, 0.0, 0.3}), 2);
        CHECK(nm.mask.at(0, 0) == 1.0);
        CHECK(nm.mask.at(0, 1) == 1.0);
        CHECK(nm.mask.at(0, 3) == 0.0);
    }
}

TEST_CASE("bottomk_mask mirrors topk with the same tie rule") {
    NegativeMask nm = bottomk_mask(row_matrix({0.30, 0.25, 0.20, 0.10, 0.08, 0.05, 0.02}), 2);
    const std::vector<double> want = {0, 0, 0, 0, 0, 1, 1};
    for (int c = 0; c < 7; ++c) CHECK(nm.mask.at(0, c) == want[c]);

    NegativeMask tie = bottomk_mask(row_matrix(std::vector<double>(4, 0.25)), 2);
    CHECK(tie.mask.at(0, 0) == 1.0);
    CHECK(tie.mask.at(0, 1) == 1.0);
}

TEST_CASE("mask rows always hold exactly k ones") {
    Rng rng(mix_seed({0x10555ull, 2}));
    Matrix scores = random_probs(rng, 20, 6);
    for (int k = 1; k <= 6; ++k) {
        NegativeMask nm = topk_mask(scores, k);
        CHECK(nm.k == k);
        for (int i = 0; i < 20; ++i) {
            double ones = 0.0;
            for (int c = 0; c < 6; ++c) {
                const double v = nm.mask.at(i, c);
                CHECK((v == 0.0 || v == 1.0));
                ones += v;
            }
            CHECK(ones == static_cast<double>(k));
        }
    }
}

TEST_CASE("k outside [1, C] is rejected") {
    Matrix scores(2, 5);
    CHECK_THROWS_AS(topk_mask(scores, 0), InvalidArgument);
    CHECK_THROWS_AS(topk_mask(scores, 6), InvalidArgument);
    CHECK_THROWS_AS(bottomk_mask(scores, 0), InvalidArgument);
    CHECK_THROWS_AS(bottomk_mask(scores, -2), InvalidArgument);
}

TEST_CASE("masked_consistency hand values") {
    SUBCASE("empty non-confident set") {
        Matrix p(1, 3);
        NegativeMask nm = topk_mask(row_matrix({0.5, 0.3, 0.2}), 1);
        CHECK(masked_consistency(p, p, nm, {}) == 0.0);
    }
    SUBCASE("single sample, k=1") {
        Matrix p_w = row_matrix({0.7, 0.2, 0.1});
        Matrix p_s = row_matrix({0.6, 0.3, 0.1});
        NegativeMask nm = topk_mask(p_w, 1); // mask [1,0,0]
        CHECK(nm.mask.at(0, 0) == 1.0);
        CHECK(masked_consistency(p_w, p_s, nm, {0}) ==
              doctest::Approx(0.357577).epsilon(1e-6));
    }
    SUBCASE("self-consistency at k=C is the Shannon entropy") {
        Matrix p = row_matrix({0.7, 0.2, 0.1});
        NegativeMask nm = topk_mask(p, 3);
        const double entropy =
            -(0.7 * std::log(0.7) + 0.2 * std::log(0.2) + 0.1 * std::log(0.1));
        CHECK(masked_consistency(p, p, nm, {0}) == doctest::Approx(entropy).epsilon(1e-12));
    }
}

TEST_CASE("masked_consistency averages over the row subset only") {
    Rng rng(mix_seed({0x10555ull, 3}));
    Matrix p_w = random_probs(rng, 5, 4);
    Matrix p_s = random_probs(rng, 5, 4);
    NegativeMask nm = topk_mask(p_w, 2);
    const double base = masked_consistency(p_w, p_s, nm, {0, 3});
    // rows outside the subset must not contribute
    for (int c = 0; c < 4; ++c) p_s.at(2, c) = 1e-13; // would clamp if read
    int clamps = 0;
    CHECK(masked_consistency(p_w, p_s, nm, {0, 3}, &clamps) == base);
    CHECK(clamps == 0);
}

TEST_CASE("masked_consistency grows with k") {
    Rng rng(mix_seed({0x10555ull, 4}));
    const int C = 6;
    Matrix p_w = random_probs(rng, 8, C);
    Matrix p_s = random_probs(rng, 8, C);
    std::vector<int> rows = {0, 2, 3, 5, 7};
    double prev = 0.0;
    for (int k = 1; k <= C; ++k) {
        const double v = masked_consistency(p_w, p_s, topk_mask(p_w, k), rows);
        CHECK(v >= prev); // each extra class adds a nonnegative summand
        prev = v;
    }
}

TEST_CASE("masked_consistency is nonnegative and clamps strong zeros") {
    Matrix p_w = row_matrix({0.5, 0.5, 0.0});
    Matrix p_s = row_matrix({0.0, 1.0, 0.0});
    NegativeMask nm = topk_mask(p_w, 2); // classes {0, 1}
    int clamps = 0;
    const double v = masked_consistency(p_w, p_s, nm, {0}, &clamps);
    CHECK(clamps == 1); // only class 0's p_s hits the floor; class 1 is log(1)
    CHECK(v == doctest::Approx(0.5 * -std::log(1e-12)));
    CHECK(v >= 0.0);
}

TEST_CASE("combine is an exact sum with counts attached") {
    LossReport r = combine(1.039721, 0.357577, 3, 5, 2);
    CHECK(r.total == doctest::Approx(1.397298).epsilon(1e-6));
    CHECK(r.total == r.loss_s + r.loss_c); // bitwise, not approximate
    CHECK(r.num_confident == 3);
    CHECK(r.num_non_confident == 5);
    CHECK(r.clamp_events == 2);

    CHECK(combine(0.0, 0.0).total == 0.0);
    CHECK(combine(2.5, 0.0).total == 2.5);
    CHECK_THROWS_AS(combine(std::nan(""), 0.0), Error);
}

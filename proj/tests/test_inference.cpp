#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "grove/inference.hpp"

#include "test_support.hpp"

using Catch::Approx;
using testsupport::random_dataset;

TEST_CASE("variance_simple hand-checked values") {
    REQUIRE(grove::variance_simple({0, 0, 0, 4}) == Approx(1.0));       // mean 1, ssd 12, 12/(4*3)
    REQUIRE(grove::variance_simple({7, 7, 7, 7, 7}) == Approx(0.0));
    REQUIRE(grove::variance_simple({3.0, 8.0}) == Approx(25.0 / 4.0));  // (a-b)^2/4
    REQUIRE_THROWS(grove::variance_simple({1.0}));
}

TEST_CASE("confidence intervals use the normal quantile") {
    const auto ci95 = grove::confidence_interval(0.0, 1.0, 0.95);
    REQUIRE(ci95.first == Approx(-1.959964).margin(1e-3));
    REQUIRE(ci95.second == Approx(1.959964).margin(1e-3));

    const auto degenerate = grove::confidence_interval(2.5, 0.0, 0.95);
    REQUIRE(degenerate.first == 2.5);
    REQUIRE(degenerate.second == 2.5);

    // ~one-sigma two-sided level.
    const auto ci68 = grove::confidence_interval(1.0, 4.0, 0.6827);
    REQUIRE(ci68.first == Approx(1.0 - 2.0).margin(2e-3));
    REQUIRE(ci68.second == Approx(1.0 + 2.0).margin(2e-3));

    REQUIRE_THROWS(grove::confidence_interval(0.0, 1.0, 1.5));
}

TEST_CASE("normal quantile reference values") {
    REQUIRE(grove::normal_quantile(0.975) == Approx(1.959963985).margin(1e-8));
    REQUIRE(grove::normal_quantile(0.5) == Approx(0.0).margin(1e-15));
    REQUIRE(grove::normal_quantile(0.9) == Approx(1.2815515655).margin(1e-8));
    REQUIRE(grove::normal_quantile(0.01) == Approx(-2.3263478740).margin(1e-8));
    REQUIRE(grove::normal_quantile(1e-9) == Approx(-5.9978070150).margin(1e-6));
}

TEST_CASE("the finite-sample correction factor is applied to the raw sum") {
    // Synthetic two-tree forest with hand-set memberships at n=100, s=50:
    // correction (99/100) * (100/50)^2 = 3.96.
    const int n = 100, s = 50;
    std::vector<int> members_a, members_b;
    for (int i = 0; i < s; ++i) members_a.push_back(i);          // rows 0..49
    for (int i = 25; i < 25 + s; ++i) members_b.push_back(i);    // rows 25..74
    const std::vector<double> preds{1.0, 3.0};

    double raw = 0.0;
    const double mean_pred = 2.0;
    for (int i = 0; i < n; ++i) {
        const double in_a = (i < 50) ? 1.0 : 0.0;
        const double in_b = (i >= 25 && i < 75) ? 1.0 : 0.0;
        const double cov =
            (preds[0] * in_a + preds[1] * in_b) / 2.0 - mean_pred * (in_a + in_b) / 2.0;
        raw += cov * cov;
    }
    const std::vector<const std::vector<int>*> memberships{&members_a, &members_b};
    const double got = grove::detail::variance_ij_from(preds, memberships, n, s);
    REQUIRE(got == Approx(3.96 * raw).epsilon(1e-12));
}

TEST_CASE("identical tree predictions give zero variance") {
    std::vector<int> a{0, 1}, b{1, 2}, c{0, 2};
    const std::vector<const std::vector<int>*> memberships{&a, &b, &c};
    const std::vector<double> preds{5.0, 5.0, 5.0};
    REQUIRE(grove::detail::variance_ij_from(preds, memberships, 4, 2) == Approx(0.0).margin(1e-18));
}

TEST_CASE("variance_ij rejects s = n and B < 2") {
    std::vector<int> a{0, 1};
    const std::vector<const std::vector<int>*> one{&a};
    REQUIRE_THROWS(grove::detail::variance_ij_from({1.0}, one, 2, 1));
    const std::vector<const std::vector<int>*> two{&a, &a};
    REQUIRE_THROWS(grove::detail::variance_ij_from({1.0, 2.0}, two, 2, 2));
}

TEST_CASE("enumerate_exact_forest lists each subsample once") {
    const auto data = testsupport::make_dataset({{0.1}, {0.4}, {0.6}, {0.9}}, {0, 0, 0, 4});
    const auto forest = grove::enumerate_exact_forest(data, 2);
    REQUIRE(forest.trees.size() == 6);  // C(4,2)
    std::set<std::vector<int>> seen;
    for (const auto& tree : forest.trees) {
        REQUIRE(tree.record.indices.size() == 2);
        seen.insert(tree.record.indices);
    }
    REQUIRE(seen.size() == 6);
    // Trivial regression trees average the whole subsample; the forest mean is ybar.
    REQUIRE(grove::predict(forest, {0.5}) == Approx(1.0));
}

TEST_CASE("trivial-tree exactness: variance_ij equals variance_simple") {
    // n=4, s=2, Y=(0,0,0,4): both estimators give exactly 1.
    const auto data = testsupport::make_dataset({{0.1}, {0.4}, {0.6}, {0.9}}, {0, 0, 0, 4});
    const auto forest = grove::enumerate_exact_forest(data, 2);
    const double vij = grove::variance_ij(forest, {0.5});
    REQUIRE(vij == Approx(1.0).epsilon(1e-13));
    REQUIRE(vij == Approx(grove::variance_simple({0, 0, 0, 4})).epsilon(1e-13));
}

TEST_CASE("trivial-tree exactness holds on randomized instances") {
    auto stream = grove::derive_stream(81, 0);
    for (int round = 0; round < 25; ++round) {
        const int n = 4 + static_cast<int>(stream.next_bounded(7));  // 4..10
        const int s = 1 + static_cast<int>(stream.next_bounded(static_cast<std::uint32_t>(n - 1)));
        std::vector<std::vector<double>> xs;
        std::vector<double> ys;
        for (int i = 0; i < n; ++i) {
            xs.push_back({stream.next_double()});
            ys.push_back(4.0 * stream.next_double() - 2.0);
        }
        const auto data = testsupport::make_dataset(xs, ys);
        const auto forest = grove::enumerate_exact_forest(data, s);
        const double vij = grove::variance_ij(forest, {0.5});
        const double vsimple = grove::variance_simple(ys);
        REQUIRE(std::fabs(vij - vsimple) <= 1e-12 * std::max(1.0, std::fabs(vsimple)));
    }
}

TEST_CASE("translation equivariance of estimates and variance") {
    auto stream = grove::derive_stream(83, 0);
    const int n = 60;
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    std::vector<int> ws;
    for (int i = 0; i < n; ++i) {
        xs.push_back({stream.next_double(), stream.next_double()});
        ys.push_back(stream.next_double());
        ws.push_back(stream.next_bernoulli(0.5) ? 1 : 0);
    }
    const double c = 7.5;
    std::vector<double> shifted = ys;
    for (double& y : shifted) y += c;

    grove::ForestConfig reg;
    reg.num_trees = 30;
    reg.subsample_size = 30;
    reg.mode = grove::Mode::regression_double_sample;
    reg.seed = 101;
    const auto f1 = grove::train(testsupport::make_dataset(xs, ys), reg);
    const auto f2 = grove::train(testsupport::make_dataset(xs, shifted), reg);
    const std::vector<double> x{0.5, 0.5};
    REQUIRE(grove::predict(f2, x) == Approx(grove::predict(f1, x) + c).margin(1e-9));
    REQUIRE(grove::variance_ij(f2, x) == Approx(grove::variance_ij(f1, x)).margin(1e-9));

    grove::ForestConfig causal = reg;
    causal.mode = grove::Mode::causal_double_sample;
    const auto g1 = grove::train(testsupport::make_dataset(xs, ys, ws), causal);
    const auto g2 = grove::train(testsupport::make_dataset(xs, shifted, ws), causal);
    REQUIRE(grove::predict(g2, x) == Approx(grove::predict(g1, x)).margin(1e-9));
    REQUIRE(grove::variance_ij(g2, x) == Approx(grove::variance_ij(g1, x)).margin(1e-9));
}

TEST_CASE("variance estimates stabilize as B grows") {
    auto stream = grove::derive_stream(85, 0);
    const auto data = random_dataset(100, 2, true, stream);
    grove::ForestConfig cfg;
    cfg.subsample_size = 40;
    cfg.mode = grove::Mode::causal_double_sample;
    cfg.seed = 55;

    // Same seed family: the first B trees agree across runs, so the sequence
    // of estimates is nested; deviations from the largest B shrink on average.
    auto variance_at = [&](int b, const std::vector<double>& x) {
        auto c = cfg;
        c.num_trees = b;
        return grove::variance_ij(grove::train(data, c), x);
    };
    auto probe = grove::derive_stream(86, 0);
    double dev_small = 0.0, dev_large = 0.0;
    for (int t = 0; t < 8; ++t) {
        const std::vector<double> x{probe.next_double(), probe.next_double()};
        const double reference = variance_at(1600, x);
        dev_small += std::fabs(variance_at(100, x) - reference);
        dev_large += std::fabs(variance_at(400, x) - reference);
    }
    REQUIRE(dev_large < dev_small);
}

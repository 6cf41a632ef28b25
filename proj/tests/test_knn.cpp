#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "grove/knn.hpp"

#include "test_support.hpp"

using Catch::Approx;
using testsupport::make_dataset;
using testsupport::random_dataset;

using testsupport::oracle_knn;

TEST_CASE("k=1 with one unit per class returns the forced difference") {
    const auto data = make_dataset({{0.2}, {0.8}}, {1.0, 0.0}, {1, 0});
    const auto est = grove::knn_estimate(data, {0.5}, 1, /*with_variance=*/false);
    REQUIRE(est.estimate == Approx(1.0));
    REQUIRE(est.neighbors_treated == std::vector<int>{0});
    REQUIRE(est.neighbors_control == std::vector<int>{1});
}

TEST_CASE("variance requires k >= 2") {
    const auto data = make_dataset({{0.2}, {0.8}}, {1.0, 0.0}, {1, 0});
    REQUIRE_THROWS(grove::knn_estimate(data, {0.5}, 1, true));
}

TEST_CASE("constant responses give a constant difference with zero variance") {
    const auto data = make_dataset({{0.1}, {0.3}, {0.6}, {0.9}}, {2.0, 2.0, 5.0, 5.0}, {0, 0, 1, 1});
    const auto est = grove::knn_estimate(data, {0.5}, 2);
    REQUIRE(est.estimate == Approx(3.0));
    REQUIRE(est.variance == Approx(0.0).margin(1e-15));
}

TEST_CASE("insufficient class counts are rejected") {
    const auto data = make_dataset({{0.1}, {0.3}, {0.6}}, {1, 2, 3}, {1, 0, 0});
    REQUIRE_THROWS(grove::knn_estimate(data, {0.5}, 2));
}

TEST_CASE("matches the exhaustive-sort oracle on random 20-point instances") {
    auto stream = grove::derive_stream(91, 0);
    for (int round = 0; round < 30; ++round) {
        const auto data = random_dataset(20, 2, true, stream);
        int treated = data.count_treated();
        const int k = std::min({4, treated, data.n() - treated});
        if (k < 2) continue;
        const std::vector<double> x{stream.next_double(), stream.next_double()};
        const auto got = grove::knn_estimate(data, x, k);
        const auto want = oracle_knn(data, x, k);
        REQUIRE(got.estimate == want.estimate);
        REQUIRE(got.variance == Approx(want.variance).epsilon(1e-12));
        REQUIRE(got.neighbors_treated == want.neighbors_treated);
        REQUIRE(got.neighbors_control == want.neighbors_control);
    }
}

TEST_CASE("row order never changes the estimate") {
    auto stream = grove::derive_stream(93, 0);
    const auto data = random_dataset(24, 2, true, stream);
    grove::Dataset reversed(2, true);
    for (int i = data.n() - 1; i >= 0; --i) {
        grove::Sample s;
        s.x = data.row(i);
        s.y = data.y(i);
        s.w = data.w(i);
        reversed.add(s);
    }
    auto probe = grove::derive_stream(94, 0);
    for (int t = 0; t < 20; ++t) {
        const std::vector<double> x{probe.next_double(), probe.next_double()};
        const auto a = grove::knn_estimate(data, x, 3);
        const auto b = grove::knn_estimate(reversed, x, 3);
        REQUIRE(a.estimate == b.estimate);
        REQUIRE(a.variance == b.variance);
    }
}

TEST_CASE("estimate lies in the response-spread bounds") {
    auto stream = grove::derive_stream(95, 0);
    for (int round = 0; round < 10; ++round) {
        const auto data = random_dataset(30, 2, true, stream);
        double y_min = 1e300, y_max = -1e300;
        for (int i = 0; i < data.n(); ++i) {
            y_min = std::min(y_min, data.y(i));
            y_max = std::max(y_max, data.y(i));
        }
        const std::vector<double> x{stream.next_double(), stream.next_double()};
        const int treated = data.count_treated();
        const int k = std::min({3, treated, data.n() - treated});
        if (k < 1) continue;
        const auto est = grove::knn_estimate(data, x, k, k >= 2);
        REQUIRE(est.estimate >= y_min - y_max - 1e-12);
        REQUIRE(est.estimate <= y_max - y_min + 1e-12);
    }
}

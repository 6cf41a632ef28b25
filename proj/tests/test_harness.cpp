#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "grove/harness.hpp"

using Catch::Approx;

namespace {

grove::CellSpec oracle_cell(grove::Method method, int n = 300, int test_points = 200,
                            int reps = 5) {
    grove::CellSpec spec;
    spec.table = "selftest";
    spec.design = grove::make_design(grove::DesignKind::smooth, 2);
    spec.n = n;
    spec.method = std::move(method);
    spec.replications = reps;
    spec.test_points = test_points;
    return spec;
}

}  // namespace

TEST_CASE("an exact oracle with unit variance has zero MSE and full coverage") {
    auto method = grove::Method::custom_method(
        "oracle", [](const grove::Dataset&, const std::vector<std::vector<double>>& xs,
                     const grove::Design& design, grove::RandomStream&) {
            std::vector<grove::PredictionResult> out;
            for (const auto& x : xs) {
                grove::PredictionResult r;
                r.estimate = design.true_tau(x);
                r.variance = 1.0;
                const auto ci = grove::confidence_interval(r.estimate, r.variance, 0.95);
                r.ci_low = ci.first;
                r.ci_high = ci.second;
                out.push_back(r);
            }
            return out;
        });
    const auto cell = grove::run_cell(oracle_cell(std::move(method)), 42);
    REQUIRE(cell.mse == Approx(0.0).margin(1e-18));
    REQUIRE(cell.coverage == 1.0);
    REQUIRE(cell.mean_variance == Approx(1.0));
    REQUIRE(cell.replications == 5);
}

TEST_CASE("a zero-variance exact oracle still covers: intervals are closed") {
    auto method = grove::Method::custom_method(
        "degenerate", [](const grove::Dataset&, const std::vector<std::vector<double>>& xs,
                         const grove::Design& design, grove::RandomStream&) {
            std::vector<grove::PredictionResult> out;
            for (const auto& x : xs) {
                grove::PredictionResult r;
                r.estimate = design.true_tau(x);
                r.variance = 0.0;
                r.ci_low = r.estimate;
                r.ci_high = r.estimate;
                out.push_back(r);
            }
            return out;
        });
    const auto cell = grove::run_cell(oracle_cell(std::move(method)), 43);
    REQUIRE(cell.coverage == 1.0);
}

TEST_CASE("a correctly specified noisy oracle attains nominal coverage") {
    const double sigma = 0.5;
    auto method = grove::Method::custom_method(
        "noisy", [sigma](const grove::Dataset&, const std::vector<std::vector<double>>& xs,
                         const grove::Design& design, grove::RandomStream& stream) {
            std::vector<grove::PredictionResult> out;
            for (const auto& x : xs) {
                grove::PredictionResult r;
                r.estimate = design.true_tau(x) + sigma * grove::normal_draw(stream);
                r.variance = sigma * sigma;
                const auto ci = grove::confidence_interval(r.estimate, r.variance, 0.95);
                r.ci_low = ci.first;
                r.ci_high = ci.second;
                out.push_back(r);
            }
            return out;
        });
    const auto cell = grove::run_cell(oracle_cell(std::move(method), 200, 500, 8), 44);
    // 4000 draws: binomial SE ~ 0.0034.
    REQUIRE(cell.coverage == Approx(0.95).margin(0.015));
}

TEST_CASE("zero predictor MSE on the smooth design matches quadrature") {
    // E[tau^2] = (int bump^2)^2 by independence of the two coordinates.
    auto bump = [](double u) { return 1.0 + 1.0 / (1.0 + std::exp(-20.0 * (u - 1.0 / 3.0))); };
    const int panels = 20000;
    double integral = 0.0;  // Simpson's rule
    for (int p = 0; p < panels; ++p) {
        const double a = static_cast<double>(p) / panels;
        const double b = static_cast<double>(p + 1) / panels;
        const double fa = bump(a) * bump(a);
        const double fm = bump((a + b) / 2) * bump((a + b) / 2);
        const double fb = bump(b) * bump(b);
        integral += (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    }
    const double expected_mse = integral * integral;

    auto method = grove::Method::custom_method(
        "zero", [](const grove::Dataset&, const std::vector<std::vector<double>>& xs,
                   const grove::Design&, grove::RandomStream&) {
            return std::vector<grove::PredictionResult>(xs.size());
        });
    const auto cell = grove::run_cell(oracle_cell(std::move(method), 200, 2000, 10), 45);
    REQUIRE(cell.mse == Approx(expected_mse).margin(0.1));
}

TEST_CASE("run_cell is deterministic for a fixed seed") {
    auto make_spec = [] {
        grove::CellSpec spec;
        spec.table = "det";
        spec.design = grove::make_design(grove::DesignKind::confounded, 2);
        spec.n = 120;
        spec.method = grove::Method::forest_method("CF", grove::Mode::propensity, 60, 25);
        spec.replications = 3;
        spec.test_points = 50;
        return spec;
    };
    const auto a = grove::run_cell(make_spec(), 77);
    const auto b = grove::run_cell(make_spec(), 77);
    REQUIRE(a.mse == b.mse);
    REQUIRE(a.coverage == b.coverage);
    REQUIRE(a.mean_variance == b.mean_variance);
    REQUIRE(a.bias == b.bias);

    const auto c = grove::run_cell(make_spec(), 77, /*num_threads=*/4);
    REQUIRE(c.mse == a.mse);
    REQUIRE(c.coverage == a.coverage);
}

TEST_CASE("forest cells exercise training, prediction, and the jackknife") {
    grove::CellSpec spec;
    spec.table = "smoke";
    spec.design = grove::make_design(grove::DesignKind::smooth, 2);
    spec.n = 200;
    spec.method = grove::Method::forest_method("CF", grove::Mode::causal_double_sample, 100, 60);
    spec.replications = 3;
    spec.test_points = 100;
    const auto cell = grove::run_cell(spec, 99);
    REQUIRE(cell.replications == 3);
    REQUIRE(cell.mse > 0.0);
    REQUIRE(cell.coverage >= 0.0);
    REQUIRE(cell.coverage <= 1.0);
    REQUIRE(cell.mean_variance > 0.0);
    REQUIRE(cell.B == 100);
    REQUIRE(cell.s == 60);
}

TEST_CASE("knn cells report the knn-k method label") {
    grove::CellSpec spec;
    spec.table = "smoke";
    spec.design = grove::make_design(grove::DesignKind::confounded, 2);
    spec.n = 150;
    spec.method = grove::Method::knn_method(10);
    spec.replications = 2;
    spec.test_points = 50;
    const auto cell = grove::run_cell(spec, 7);
    REQUIRE(cell.method == "knn-10");
    REQUIRE(cell.k == 10);
    REQUIRE(cell.mse > 0.0);
}

TEST_CASE("qq diagnostic has the right shape and near-normal output on a calibrated source") {
    // Use a tiny forest problem so the test stays fast; shape properties hold
    // regardless of the forest's statistical quality.
    const auto design = grove::make_design(grove::DesignKind::confounded, 2);
    const auto method = grove::Method::forest_method("CF", grove::Mode::propensity, 60, 25);
    const int sets = 12, points = 40;
    const auto qq = grove::qq_diagnostic(design, 120, method, sets, points, 5);
    REQUIRE(qq.points.size() == static_cast<std::size_t>(sets * points));

    double mean = 0.0, var = 0.0;
    for (const auto& p : qq.points) mean += p.second;
    mean /= qq.points.size();
    for (const auto& p : qq.points) var += (p.second - mean) * (p.second - mean);
    var /= qq.points.size();
    REQUIRE(mean == Approx(0.0).margin(1e-12));
    REQUIRE(var == Approx(1.0).margin(1e-12));
    // Theoretical quantiles are sorted and symmetric.
    REQUIRE(qq.points.front().first < 0.0);
    REQUIRE(qq.points.back().first > 0.0);
}

TEST_CASE("scaled tables shrink replications first") {
    const auto full = grove::detail::apply_scale(40, 5000, 1.0);
    REQUIRE(full.replications == 40);
    REQUIRE(full.n == 5000);

    const auto half = grove::detail::apply_scale(40, 5000, 0.5);
    REQUIRE(half.replications == 20);
    REQUIRE(half.n == 5000);

    const auto deep = grove::detail::apply_scale(40, 5000, 0.01);
    REQUIRE(deep.replications == 2);
    REQUIRE(deep.n < 5000);
    REQUIRE(deep.n >= 200);

    REQUIRE_THROWS(grove::detail::apply_scale(40, 5000, 0.0));
    REQUIRE_THROWS(grove::detail::apply_scale(40, 5000, 1.5));
}

TEST_CASE("run_table produces the t1 grid at tiny scale") {
    const auto cells = grove::run_table("t1", 0.004, 2024);
    // 6 dimensions x 3 methods.
    REQUIRE(cells.size() == 18);
    for (const auto& c : cells) {
        REQUIRE(c.design == "confounded");
        REQUIRE(c.replications == 2);
        REQUIRE((c.method == "CF" || c.method == "knn-10" || c.method == "knn-100"));
    }
    const std::string path = "grove_test_cells.csv";
    grove::save_cells_csv(path, cells);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    REQUIRE(header.find("mse,mse_se,coverage,coverage_se,mean_variance") != std::string::npos);
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) rows += line.empty() ? 0 : 1;
    REQUIRE(rows == 18);
    std::remove(path.c_str());

    const std::string table_path = "grove_test_table.csv";
    grove::save_table_csv(table_path, cells);
    std::ifstream tin(table_path);
    std::getline(tin, header);
    REQUIRE(header ==
            "n,d,q,s,CF_mse,knn-10_mse,knn-100_mse,CF_coverage,knn-10_coverage,knn-100_coverage");
    rows = 0;
    while (std::getline(tin, line)) rows += line.empty() ? 0 : 1;
    REQUIRE(rows == 6);
    std::remove(table_path.c_str());
}

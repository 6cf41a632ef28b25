// grove: honest subsampled forests for heterogeneous treatment effects, with
// infinitesimal-jackknife confidence intervals and a simulation harness.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "grove/config.hpp"
#include "grove/dataset.hpp"
#include "grove/forest.hpp"
#include "grove/harness.hpp"
#include "grove/inference.hpp"
#include "grove/knn.hpp"
#include "grove/serialize.hpp"
#include "grove/simgen.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

int run_simulate(const std::string& design_name, int n, int d, int q, std::uint64_t seed,
                 const std::string& out_path, int test_points) {
    const grove::DesignKind kind = grove::design_from_name(design_name);
    const grove::Design design = grove::make_design(kind, d, q);
    grove::RandomStream stream = grove::derive_stream(seed, 0);
    const grove::Dataset data = grove::generate(design, n, stream);
    grove::save_dataset(out_path, data);

    // Sidecar: design parameters plus a fresh test grid with true effects.
    const auto points = grove::draw_test_points(test_points, design.d, stream);
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& p : points) {
        grid.push_back({{"x", p}, {"true_tau", design.true_tau(p)}});
    }
    nlohmann::json meta{
        {"design", design.name()},
        {"n", n},
        {"d", design.d},
        {"seed", seed},
        {"test_point_policy", "fresh uniform draws on [0,1]^d"},
        {"test_grid", std::move(grid)},
    };
    if (kind == grove::DesignKind::dense) meta["q"] = design.q;
    const std::string meta_path = out_path + ".meta.json";
    std::ofstream meta_out(meta_path);
    if (!meta_out) throw std::runtime_error("cannot open output file: " + meta_path);
    meta_out << meta.dump(2) << "\n";
    std::cout << "wrote " << n << " rows to " << out_path << " (sidecar " << meta_path << ")\n";
    return 0;
}

int run_train(const std::string& data_path, const std::string& config_path,
              grove::ForestConfig cfg, const std::string& model_out, int threads) {
    grove::ForestConfig effective = cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open config file: " + config_path);
        nlohmann::json j;
        in >> j;
        effective = grove::config_from_json(j);
        if (cfg.seed != 0) effective.seed = cfg.seed;
    }
    const bool expect_treatment = grove::is_treatment_mode(effective.mode);
    const grove::Dataset data = grove::load_dataset(data_path, expect_treatment);
    if (effective.num_trees <= 0) effective.num_trees = data.n();
    grove::validate_config(effective, data);

    const auto start = std::chrono::steady_clock::now();
    const grove::Forest forest = grove::train(data, effective, threads);
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    grove::save_forest(model_out, forest);
    std::cout << "trained " << effective.num_trees << " " << grove::mode_name(effective.mode)
              << " trees on n=" << data.n() << ", d=" << data.d() << " in " << elapsed.count()
              << " s -> " << model_out << "\n";
    return 0;
}

int run_predict(const std::string& model_path, const std::string& points_path, double ci_level,
                const std::string& out_path) {
    const grove::Forest forest = grove::load_forest(model_path);
    if (forest.trees.empty()) throw std::runtime_error("model has no trees");
    const int d = [&] {
        // Infer d from the widest feature index used anywhere in the model.
        int max_feature = 0;
        for (const auto& tree : forest.trees) {
            for (const auto& node : tree.nodes) {
                if (!node.is_leaf()) max_feature = std::max(max_feature, node.feature + 1);
            }
        }
        return max_feature;
    }();
    auto points = grove::load_points(points_path);
    if (d > 0 && static_cast<int>(points.front().size()) < d) {
        throw std::runtime_error("points have fewer features than the model uses");
    }
    if (forest.config.num_trees < forest.n_train) {
        std::cerr << "note: B=" << forest.config.num_trees << " < n=" << forest.n_train
                  << "; Monte Carlo noise may inflate the jackknife variance\n";
    }
    std::vector<grove::PredictionResult> results;
    results.reserve(points.size());
    for (const auto& x : points) results.push_back(grove::predict_with_ci(forest, x, ci_level));
    grove::save_predictions(out_path, points, results);
    std::cout << "wrote " << results.size() << " predictions to " << out_path << "\n";
    return 0;
}

int run_knn(const std::string& data_path, int k, const std::string& points_path, double ci_level,
            const std::string& out_path) {
    const grove::Dataset data = grove::load_dataset(data_path, true);
    const auto points = grove::load_points(points_path, data.d());
    const double z = grove::normal_critical_value(ci_level);
    std::vector<grove::PredictionResult> results;
    results.reserve(points.size());
    for (const auto& x : points) {
        const grove::KnnEstimate est = grove::knn_estimate(data, x, k);
        grove::PredictionResult r;
        r.estimate = est.estimate;
        r.variance = est.variance;
        r.ci_level = ci_level;
        r.ci_low = est.estimate - z * std::sqrt(est.variance);
        r.ci_high = est.estimate + z * std::sqrt(est.variance);
        results.push_back(r);
    }
    grove::save_predictions(out_path, points, results, "knn-" + std::to_string(k));
    std::cout << "wrote " << results.size() << " knn predictions to " << out_path << "\n";
    return 0;
}

int run_experiment(const std::string& table, double scale, std::uint64_t seed,
                   const std::string& out_dir, int threads) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto start = std::chrono::steady_clock::now();

    nlohmann::json meta{
        {"tool", "grove"}, {"version", kVersion},       {"table", table},
        {"scale", scale},  {"seed", seed},              {"threads", threads},
        {"test_point_policy", "fresh uniform draws on [0,1]^d"},
    };

    if (table == "qq") {
        const grove::Design design = grove::make_design(grove::DesignKind::confounded, 20);
        const auto method = grove::Method::forest_method("CF", grove::Mode::propensity, 1000, 50);
        const int training_sets = std::max(10, static_cast<int>(std::llround(20 * scale)));
        const auto qq =
            grove::qq_diagnostic(design, 800, method, training_sets, 1000, seed, threads);
        grove::save_qq_csv((fs::path(out_dir) / "qq.csv").string(), qq);
        meta["qq"] = {{"design", design.name()},
                      {"n", 800},
                      {"d", design.d},
                      {"B", method.num_trees},
                      {"s", method.subsample},
                      {"training_sets", training_sets},
                      {"test_points", 1000},
                      {"correlation", qq.correlation},
                      {"skewness", qq.skewness}};
        std::cout << "qq correlation=" << qq.correlation << " skewness=" << qq.skewness << "\n";
    } else {
        const auto cells = grove::run_table(table, scale, seed, threads);
        grove::save_cells_csv((fs::path(out_dir) / "cells.csv").string(), cells);
        grove::save_table_csv((fs::path(out_dir) / "table.csv").string(), cells);
        meta["cells"] = cells.size();
        for (const auto& c : cells) {
            std::cout << c.table << " design=" << c.design << " n=" << c.n << " d=" << c.d
                      << (c.q ? " q=" + std::to_string(c.q) : "") << " s=" << c.s
                      << " B=" << c.B << " method=" << c.method << " reps=" << c.replications
                      << " mse=" << c.mse << " coverage=" << c.coverage
                      << " mean_var=" << c.mean_variance << " bias=" << c.bias << "\n";
        }
    }

    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    meta["duration_seconds"] = elapsed.count();
    std::ofstream meta_out((fs::path(out_dir) / "meta.json").string());
    meta_out << meta.dump(2) << "\n";
    std::cout << "done in " << elapsed.count() << " s; results in " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"honest subsampled forests with jackknife confidence intervals"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    std::string sim_design = "smooth";
    int sim_n = 1000, sim_d = 2, sim_q = 0, sim_test_points = 1000;
    std::uint64_t sim_seed = 1;
    std::string sim_out;
    sim->add_option("--design", sim_design, "confounded|smooth|spike|dense|corner")->required();
    sim->add_option("--n", sim_n, "training rows")->required();
    sim->add_option("--d", sim_d, "feature dimension (ignored for corner)");
    sim->add_option("--q", sim_q, "signal dimensions (dense design)");
    sim->add_option("--seed", sim_seed, "random seed");
    sim->add_option("--out", sim_out, "output CSV path")->required();
    sim->add_option("--test-points", sim_test_points, "true-effect grid size in the sidecar");

    // train
    auto* tr = app.add_subcommand("train", "train a forest on a dataset CSV");
    std::string tr_data, tr_mode = "causal_double_sample", tr_model_out, tr_config;
    grove::ForestConfig tr_cfg;
    int tr_threads = static_cast<int>(std::thread::hardware_concurrency());
    tr->add_option("--data", tr_data, "training CSV")->required();
    tr->add_option("--mode", tr_mode,
                   "regression_double_sample|causal_double_sample|propensity|causal_adaptive");
    tr->add_option("--trees", tr_cfg.num_trees, "number of trees B (default: n)");
    tr->add_option("--subsample", tr_cfg.subsample_size, "subsample size s");
    tr->add_option("--min-leaf", tr_cfg.min_leaf, "minimum leaf size k");
    tr->add_option("--alpha", tr_cfg.alpha, "regularity fraction in (0,0.2]");
    tr->add_option("--pi", tr_cfg.pi, "random-split probability in (0,1]");
    tr->add_option("--seed", tr_cfg.seed, "random seed");
    tr->add_option("--config", tr_config, "JSON config file (overrides the flags above)");
    tr->add_option("--model-out", tr_model_out, "output model JSON")->required();
    tr->add_option("--threads", tr_threads, "worker threads");

    // predict
    auto* pr = app.add_subcommand("predict", "forest predictions with confidence intervals");
    std::string pr_model, pr_points, pr_out;
    double pr_level = 0.95;
    pr->add_option("--model", pr_model, "model JSON from train")->required();
    pr->add_option("--points", pr_points, "query CSV with header x1..xd")->required();
    pr->add_option("--ci-level", pr_level, "confidence level");
    pr->add_option("--out", pr_out, "output CSV")->required();

    // knn
    auto* kn = app.add_subcommand("knn", "k-NN matching baseline with Gaussian intervals");
    std::string kn_data, kn_points, kn_out;
    int kn_k = 10;
    double kn_level = 0.95;
    kn->add_option("--data", kn_data, "training CSV (with treatment column)")->required();
    kn->add_option("--k", kn_k, "neighbors per treatment class")->required();
    kn->add_option("--points", kn_points, "query CSV with header x1..xd")->required();
    kn->add_option("--ci-level", kn_level, "confidence level");
    kn->add_option("--out", kn_out, "output CSV")->required();

    // experiment
    auto* ex = app.add_subcommand("experiment", "run a reproduction table");
    std::string ex_table, ex_out;
    double ex_scale = 1.0;
    std::uint64_t ex_seed = 1;
    int ex_threads = static_cast<int>(std::thread::hardware_concurrency());
    ex->add_option("--table", ex_table, "t1|t2|t3|grid|dense|honesty|qq")->required();
    ex->add_option("--scale", ex_scale, "scale factor in (0,1]");
    ex->add_option("--seed", ex_seed, "master seed");
    ex->add_option("--out", ex_out, "output directory")->required();
    ex->add_option("--threads", ex_threads, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            return run_simulate(sim_design, sim_n, sim_d, sim_q, sim_seed, sim_out,
                                sim_test_points);
        }
        if (tr->parsed()) {
            tr_cfg.mode = grove::mode_from_name(tr_mode);
            return run_train(tr_data, tr_config, tr_cfg, tr_model_out, std::max(1, tr_threads));
        }
        if (pr->parsed()) return run_predict(pr_model, pr_points, pr_level, pr_out);
        if (kn->parsed()) return run_knn(kn_data, kn_k, kn_points, kn_level, kn_out);
        if (ex->parsed()) {
            return run_experiment(ex_table, ex_scale, ex_seed, ex_out, std::max(1, ex_threads));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

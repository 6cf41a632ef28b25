#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "grove/config.hpp"
#include "grove/dataset.hpp"
#include "grove/forest.hpp"
#include "grove/inference.hpp"
#include "grove/knn.hpp"
#include "grove/math.hpp"
#include "grove/simgen.hpp"

namespace grove {

// Plug-in estimator used by harness self-tests: maps a training set and test
// points to per-point estimates with variances.
using CustomEstimator = std::function<std::vector<PredictionResult>(
    const Dataset& train, const std::vector<std::vector<double>>& test_points,
    const Design& design, RandomStream& stream)>;

struct Method {
    enum class Kind { forest, knn, custom };
    Kind kind = Kind::forest;
    std::string label;

    // kind == forest
    Mode mode = Mode::causal_double_sample;
    int num_trees = 0;
    int subsample = 0;
    int min_leaf = 1;
    double alpha = 0.05;
    double pi = 0.05;

    // kind == knn
    int knn_k = 0;

    CustomEstimator custom;

    static Method forest_method(std::string label, Mode mode, int num_trees, int subsample,
                                int min_leaf = 1, double alpha = 0.05, double pi = 0.05) {
        Method m;
        m.kind = Kind::forest;
        m.label = std::move(label);
        m.mode = mode;
        m.num_trees = num_trees;
        m.subsample = subsample;
        m.min_leaf = min_leaf;
        m.alpha = alpha;
        m.pi = pi;
        return m;
    }

    static Method knn_method(int k) {
        Method m;
        m.kind = Kind::knn;
        m.label = "knn-" + std::to_string(k);
        m.knn_k = k;
        return m;
    }

    static Method custom_method(std::string label, CustomEstimator fn) {
        Method m;
        m.kind = Kind::custom;
        m.label = std::move(label);
        m.custom = std::move(fn);
        return m;
    }
};

struct CellSpec {
    std::string table;
    Design design;
    int n = 0;
    Method method;
    int replications = 0;
    int test_points = 1000;
    double ci_level = 0.95;
    bool test_at_origin = false;  // honesty experiment predicts at x0 = (0,...,0)
};

// One cell of a results table: errors and coverage aggregated over
// replications, with replication standard errors (sample SD / sqrt(R)).
struct ExperimentCell {
    std::string table;
    std::string design;
    int n = 0;
    int d = 0;
    int q = 0;
    int s = 0;
    int B = 0;
    int k = 0;
    std::string method;
    int replications = 0;
    double mse = 0.0;
    double mse_se = 0.0;
    double coverage = 0.0;
    double coverage_se = 0.0;
    double mean_variance = 0.0;
    double bias = 0.0;
    double bias_se = 0.0;
    int failed_replicates = 0;
};

namespace detail {

struct ReplicateStats {
    double mse = 0.0;
    double coverage = 0.0;
    double mean_variance = 0.0;
    double bias = 0.0;
    bool ok = false;
};

inline Forest train_forest_checked(const Dataset& data, const ForestConfig& cfg) {
    return train(data, cfg, 1);
}

inline ReplicateStats run_replicate(const CellSpec& spec, std::uint64_t seed, int replicate) {
    RandomStream stream = derive_stream(seed, static_cast<std::uint64_t>(replicate));
    const Dataset train = generate(spec.design, spec.n, stream);
    const std::uint64_t forest_seed = stream.next_u64();
    std::vector<std::vector<double>> test_points;
    if (spec.test_at_origin) {
        test_points.assign(1, std::vector<double>(spec.design.d, 0.0));
    } else {
        test_points = draw_test_points(spec.test_points, spec.design.d, stream);
    }

    std::vector<PredictionResult> results;
    switch (spec.method.kind) {
        case Method::Kind::forest: {
            ForestConfig cfg;
            cfg.mode = spec.method.mode;
            cfg.num_trees = spec.method.num_trees > 0 ? spec.method.num_trees : spec.n;
            cfg.subsample_size = spec.method.subsample;
            cfg.min_leaf = spec.method.min_leaf;
            cfg.alpha = spec.method.alpha;
            cfg.pi = spec.method.pi;
            cfg.seed = forest_seed;
            const Forest forest = train_forest_checked(train, cfg);
            results.reserve(test_points.size());
            for (const auto& x : test_points) {
                results.push_back(predict_with_ci(forest, x, spec.ci_level));
            }
            break;
        }
        case Method::Kind::knn: {
            const double z = normal_critical_value(spec.ci_level);
            results.reserve(test_points.size());
            for (const auto& x : test_points) {
                const KnnEstimate est = knn_estimate(train, x, spec.method.knn_k);
                PredictionResult r;
                r.estimate = est.estimate;
                r.variance = est.variance;
                r.ci_level = spec.ci_level;
                const double hw = z * std::sqrt(est.variance);
                r.ci_low = est.estimate - hw;
                r.ci_high = est.estimate + hw;
                results.push_back(r);
            }
            break;
        }
        case Method::Kind::custom:
            results = spec.method.custom(train, test_points, spec.design, stream);
            break;
    }
    if (results.size() != test_points.size()) {
        throw std::runtime_error("estimator returned wrong number of predictions");
    }

    ReplicateStats stats;
    for (std::size_t i = 0; i < test_points.size(); ++i) {
        const double truth = spec.design.true_tau(test_points[i]);
        const double err = results[i].estimate - truth;
        stats.mse += err * err;
        stats.bias += err;
        stats.mean_variance += results[i].variance;
        // Closed interval: boundary hits count as covered.
        stats.coverage += (truth >= results[i].ci_low && truth <= results[i].ci_high) ? 1.0 : 0.0;
    }
    const auto count = static_cast<double>(test_points.size());
    stats.mse /= count;
    stats.bias /= count;
    stats.mean_variance /= count;
    stats.coverage /= count;
    stats.ok = true;
    return stats;
}

}  // namespace detail

// Runs one experiment cell: per replicate, generate training data, fit the
// method, evaluate on fresh test points, then aggregate. Failed replicates
// (propagated training errors) are skipped and counted.
inline ExperimentCell run_cell(const CellSpec& spec, std::uint64_t seed, int num_threads = 1) {
    if (spec.replications < 1) throw std::invalid_argument("run_cell: need replications >= 1");

    std::vector<detail::ReplicateStats> reps(spec.replications);
    const int workers = std::max(1, std::min(num_threads, spec.replications));
    if (workers == 1) {
        for (int r = 0; r < spec.replications; ++r) {
            try {
                reps[r] = detail::run_replicate(spec, seed, r);
            } catch (const std::exception&) {
                reps[r].ok = false;
            }
        }
    } else {
        std::atomic<int> next{0};
        auto work = [&]() {
            while (true) {
                const int r = next.fetch_add(1);
                if (r >= spec.replications) return;
                try {
                    reps[r] = detail::run_replicate(spec, seed, r);
                } catch (const std::exception&) {
                    reps[r].ok = false;
                }
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    std::vector<double> mses, coverages, variances, biases;
    int failed = 0;
    for (const auto& rep : reps) {
        if (!rep.ok) {
            ++failed;
            continue;
        }
        mses.push_back(rep.mse);
        coverages.push_back(rep.coverage);
        variances.push_back(rep.mean_variance);
        biases.push_back(rep.bias);
    }
    if (mses.empty()) {
        throw std::runtime_error("run_cell: every replicate failed for method " + spec.method.label);
    }

    ExperimentCell cell;
    cell.table = spec.table;
    cell.design = spec.design.name();
    cell.n = spec.n;
    cell.d = spec.design.d;
    cell.q = spec.design.q;
    cell.method = spec.method.label;
    if (spec.method.kind == Method::Kind::forest) {
        cell.s = spec.method.subsample;
        cell.B = spec.method.num_trees > 0 ? spec.method.num_trees : spec.n;
        cell.k = spec.method.min_leaf;
    } else if (spec.method.kind == Method::Kind::knn) {
        cell.k = spec.method.knn_k;
    }
    cell.replications = static_cast<int>(mses.size());
    cell.failed_replicates = failed;
    cell.mse = mean_of(mses);
    cell.mse_se = standard_error(mses);
    cell.coverage = mean_of(coverages);
    cell.coverage_se = standard_error(coverages);
    cell.mean_variance = mean_of(variances);
    cell.bias = mean_of(biases);
    cell.bias_se = standard_error(biases);
    return cell;
}

namespace detail {

struct ScaledCell {
    int replications;
    int n;
    double size_factor;  // applied to s and B when n shrinks
};

// Scale policy: the factor reduces replications first; only when the scaled
// replication count would drop below 2 does n start shrinking, never below
// 200. Subsample sizes and tree counts follow n proportionally.
inline ScaledCell apply_scale(int base_reps, int base_n, double scale) {
    if (!(scale > 0.0 && scale <= 1.0)) throw std::invalid_argument("scale must lie in (0, 1]");
    ScaledCell out{base_reps, base_n, 1.0};
    const double scaled_reps = base_reps * scale;
    if (scaled_reps >= 2.0) {
        out.replications = static_cast<int>(std::llround(scaled_reps));
        return out;
    }
    out.replications = 2;
    out.size_factor = std::max(scaled_reps / 2.0, 200.0 / base_n);
    out.size_factor = std::min(out.size_factor, 1.0);
    out.n = std::max(200, static_cast<int>(std::llround(base_n * out.size_factor)));
    return out;
}

inline int scaled_count(int base, double factor, int floor_value) {
    return std::max(floor_value, static_cast<int>(std::llround(base * factor)));
}

}  // namespace detail

// Parameter grids for the reproduction tables. Cell seeds are derived from the
// master seed by cell index, so individual cells can be re-run independently.
inline std::vector<ExperimentCell> run_table(const std::string& table, double scale,
                                             std::uint64_t seed, int num_threads = 1) {
    std::vector<CellSpec> specs;

    auto push_methods = [&](const Design& design, int n, const std::vector<Method>& methods,
                            int base_reps, const std::string& label, bool at_origin = false) {
        for (const auto& m : methods) {
            CellSpec spec;
            spec.table = label;
            spec.design = design;
            spec.n = n;
            spec.method = m;
            spec.replications = base_reps;
            spec.test_at_origin = at_origin;
            specs.push_back(std::move(spec));
        }
    };

    if (table == "t1") {
        const auto sc = detail::apply_scale(500, 500, scale);
        const int s = detail::scaled_count(50, sc.size_factor, 20);
        const int B = detail::scaled_count(1000, sc.size_factor, 50);
        for (int d : {2, 5, 10, 15, 20, 30}) {
            push_methods(make_design(DesignKind::confounded, d), sc.n,
                         {Method::forest_method("CF", Mode::propensity, B, s),
                          Method::knn_method(10), Method::knn_method(100)},
                         sc.replications, table);
        }
    } else if (table == "t2") {
        const auto sc = detail::apply_scale(25, 5000, scale);
        const int s = detail::scaled_count(2500, sc.size_factor, 100);
        const int B = detail::scaled_count(2000, sc.size_factor, 50);
        for (int d : {2, 3, 4, 5, 6, 8}) {
            push_methods(make_design(DesignKind::smooth, d), sc.n,
                         {Method::forest_method("CF", Mode::causal_double_sample, B, s),
                          Method::knn_method(7), Method::knn_method(50)},
                         sc.replications, table);
        }
    } else if (table == "t3") {
        const auto sc = detail::apply_scale(40, 10000, scale);
        const int s = detail::scaled_count(2000, sc.size_factor, 100);
        const int B = detail::scaled_count(10000, sc.size_factor, 50);
        for (int d : {2, 3, 4, 5, 6, 8}) {
            push_methods(make_design(DesignKind::spike, d), sc.n,
                         {Method::forest_method("CF", Mode::causal_double_sample, B, s),
                          Method::knn_method(10), Method::knn_method(100)},
                         sc.replications, table);
        }
    } else if (table == "grid") {
        const auto sc = detail::apply_scale(10, 1000, scale);
        for (int base_n : {1000, 2000, 5000, 10000}) {
            const int n = detail::scaled_count(base_n, sc.size_factor, 200);
            for (int d : {2, 3, 4, 5, 6, 8}) {
                for (double ratio : {0.1, 0.2, 0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0}) {
                    const int s = std::max(10, static_cast<int>(std::llround(n * ratio)));
                    push_methods(make_design(DesignKind::smooth, d), n,
                                 {Method::forest_method("CF", Mode::causal_double_sample, n, s)},
                                 sc.replications, table);
                }
            }
        }
    } else if (table == "dense") {
        const auto sc = detail::apply_scale(20, 5000, scale);
        const int s = detail::scaled_count(2500, sc.size_factor, 100);
        const int B = detail::scaled_count(2000, sc.size_factor, 50);
        for (int d : {6, 12}) {
            for (int q : {2, 4, 6}) {
                push_methods(make_design(DesignKind::dense, d, q), sc.n,
                             {Method::forest_method("CF", Mode::causal_double_sample, B, s),
                              Method::knn_method(10), Method::knn_method(100)},
                             sc.replications, table);
            }
        }
    } else if (table == "honesty") {
        const auto sc = detail::apply_scale(40, 5000, scale);
        for (int base_n : {1000, 2500, 5000}) {
            const int n = detail::scaled_count(base_n, sc.size_factor, 200);
            const int s_adaptive = static_cast<int>(std::llround(std::pow(n, 0.8)));
            const int s_honest = std::min(2 * s_adaptive, n);
            push_methods(make_design(DesignKind::corner, 10), n,
                         {Method::forest_method("honest", Mode::causal_double_sample, 500, s_honest),
                          Method::forest_method("adaptive", Mode::causal_adaptive, 500, s_adaptive)},
                         sc.replications, table, /*at_origin=*/true);
        }
    } else {
        throw std::invalid_argument("unknown table: " + table);
    }

    std::vector<ExperimentCell> cells;
    cells.reserve(specs.size());
    for (std::size_t c = 0; c < specs.size(); ++c) {
        RandomStream cell_stream = derive_stream(seed, static_cast<std::uint64_t>(c) + 1000000);
        const std::uint64_t cell_seed = cell_stream.next_u64();
        cells.push_back(run_cell(specs[c], cell_seed, num_threads));
    }
    return cells;
}

// Pooled standardized-prediction QQ data (the Figure-1 style diagnostic).
struct QQData {
    std::vector<std::pair<double, double>> points;  // (theoretical, sample) quantile pairs
    double correlation = 0.0;
    double skewness = 0.0;
};

// Trains forests on independent training sets, standardizes the predictions at
// each test point by their across-training-set mean and SD (population form,
// so the pooled moments are exact), and pools everything into one QQ table.
inline QQData qq_diagnostic(const Design& design, int n, const Method& method,
                            int num_training_sets, int num_test_points, std::uint64_t seed,
                            int num_threads = 1) {
    if (num_training_sets < 10) {
        throw std::invalid_argument("qq_diagnostic: need at least 10 training sets");
    }
    if (method.kind != Method::Kind::forest) {
        throw std::invalid_argument("qq_diagnostic: forest methods only");
    }
    RandomStream master = derive_stream(seed, 0);
    const auto test_points = draw_test_points(num_test_points, design.d, master);

    std::vector<std::vector<double>> preds(num_training_sets);
    std::atomic<int> next{0};
    auto work = [&]() {
        while (true) {
            const int t = next.fetch_add(1);
            if (t >= num_training_sets) return;
            RandomStream stream = derive_stream(seed, static_cast<std::uint64_t>(t) + 1);
            const Dataset train_data = generate(design, n, stream);
            ForestConfig cfg;
            cfg.mode = method.mode;
            cfg.num_trees = method.num_trees;
            cfg.subsample_size = method.subsample;
            cfg.min_leaf = method.min_leaf;
            cfg.alpha = method.alpha;
            cfg.pi = method.pi;
            cfg.seed = stream.next_u64();
            const Forest forest = train(train_data, cfg, 1);
            preds[t] = predict_batch(forest, test_points);
        }
    };
    const int workers = std::max(1, std::min(num_threads, num_training_sets));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    std::vector<double> pooled;
    pooled.reserve(static_cast<std::size_t>(num_training_sets) * num_test_points);
    for (int j = 0; j < num_test_points; ++j) {
        double mean = 0.0;
        for (int t = 0; t < num_training_sets; ++t) mean += preds[t][j];
        mean /= num_training_sets;
        double var = 0.0;
        for (int t = 0; t < num_training_sets; ++t) {
            const double dev = preds[t][j] - mean;
            var += dev * dev;
        }
        var /= num_training_sets;
        const double sd = std::sqrt(var);
        for (int t = 0; t < num_training_sets; ++t) {
            pooled.push_back(sd > 0.0 ? (preds[t][j] - mean) / sd : 0.0);
        }
    }
    std::sort(pooled.begin(), pooled.end());

    QQData out;
    const auto total = static_cast<double>(pooled.size());
    std::vector<double> theoretical(pooled.size());
    for (std::size_t r = 0; r < pooled.size(); ++r) {
        theoretical[r] = normal_quantile((static_cast<double>(r) + 0.5) / total);
    }
    out.points.reserve(pooled.size());
    for (std::size_t r = 0; r < pooled.size(); ++r) {
        out.points.emplace_back(theoretical[r], pooled[r]);
    }
    out.correlation = pearson_correlation(theoretical, pooled);
    out.skewness = skewness_of(pooled);
    return out;
}

// --- result output ---------------------------------------------------------

inline void save_cells_csv(const std::string& path, const std::vector<ExperimentCell>& cells) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << "table,design,n,d,q,s,B,k,method,replications,mse,mse_se,coverage,coverage_se,"
           "mean_variance,bias,bias_se,failed_replicates\n";
    for (const auto& c : cells) {
        out << c.table << "," << c.design << "," << c.n << "," << c.d << "," << c.q << "," << c.s
            << "," << c.B << "," << c.k << "," << c.method << "," << c.replications << ","
            << detail::format_double(c.mse) << "," << detail::format_double(c.mse_se) << ","
            << detail::format_double(c.coverage) << "," << detail::format_double(c.coverage_se)
            << "," << detail::format_double(c.mean_variance) << ","
            << detail::format_double(c.bias) << "," << detail::format_double(c.bias_se) << ","
            << c.failed_replicates << "\n";
    }
}

// Paper-style pivot: one row per grid point, method x {mse, coverage} columns.
inline void save_table_csv(const std::string& path, const std::vector<ExperimentCell>& cells) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);

    std::vector<std::string> methods;
    for (const auto& c : cells) {
        if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) {
            methods.push_back(c.method);
        }
    }
    struct RowKey {
        int n, d, q, s;
        bool operator==(const RowKey& o) const {
            return n == o.n && d == o.d && q == o.q && s == o.s;
        }
    };
    // Rows come from forest cells (they carry s); knn cells attach to the row
    // sharing their (n, d, q). A knn-only table falls back to s = 0 rows.
    const bool any_forest =
        std::any_of(cells.begin(), cells.end(), [](const auto& c) { return c.s > 0; });
    std::vector<RowKey> keys;
    for (const auto& c : cells) {
        if (any_forest && c.s == 0) continue;
        const RowKey key{c.n, c.d, c.q, c.s};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    auto matches = [](const ExperimentCell& c, const RowKey& key) {
        if (c.n != key.n || c.d != key.d || c.q != key.q) return false;
        return c.s == 0 || c.s == key.s;
    };

    out << "n,d,q,s";
    for (const auto& m : methods) out << "," << m << "_mse";
    for (const auto& m : methods) out << "," << m << "_coverage";
    out << "\n";
    for (const auto& key : keys) {
        out << key.n << "," << key.d << "," << key.q << "," << key.s;
        auto emit = [&](bool want_mse) {
            for (const auto& m : methods) {
                bool found = false;
                for (const auto& c : cells) {
                    if (c.method == m && matches(c, key)) {
                        out << "," << detail::format_double(want_mse ? c.mse : c.coverage);
                        found = true;
                        break;
                    }
                }
                if (!found) out << ",";
            }
        };
        emit(true);
        emit(false);
        out << "\n";
    }
}

inline void save_qq_csv(const std::string& path, const QQData& qq) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << "theoretical_quantile,sample_quantile\n";
    for (const auto& p : qq.points) {
        out << detail::format_double(p.first) << "," << detail::format_double(p.second) << "\n";
    }
}

}  // namespace grove

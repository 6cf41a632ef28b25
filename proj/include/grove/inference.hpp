#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "grove/config.hpp"
#include "grove/forest.hpp"
#include "grove/math.hpp"

namespace grove {

// Unbiased variance estimator for a sample mean: sum (y - ybar)^2 / (n (n-1)).
inline double variance_simple(const std::vector<double>& ys) {
    const int n = static_cast<int>(ys.size());
    if (n < 2) throw std::invalid_argument("variance_simple: need at least 2 values");
    double mean = 0.0;
    for (double y : ys) mean += y;
    mean /= n;
    double ss = 0.0;
    for (double y : ys) ss += (y - mean) * (y - mean);
    return ss / (static_cast<double>(n) * (n - 1));
}

namespace detail {

// Infinitesimal jackknife from per-tree predictions and subsample membership.
// For each training index the covariance (1/B normalization) between tree
// predictions and the membership indicator is accumulated; the squared
// covariances are then summed and scaled by the without-replacement correction
// (n-1)/n * (n/(n-s))^2.
inline double variance_ij_from(const std::vector<double>& tree_predictions,
                               const std::vector<const std::vector<int>*>& memberships,
                               int n, int s) {
    const auto b_count = static_cast<double>(tree_predictions.size());
    if (b_count < 2) throw std::invalid_argument("variance_ij: need at least 2 trees");
    if (s >= n) {
        throw std::invalid_argument(
            "variance_ij: unsupported for s = n (finite-sample correction diverges)");
    }
    double pred_mean = 0.0;
    for (double p : tree_predictions) pred_mean += p;
    pred_mean /= b_count;

    // sum_for[i] = sum over trees containing i of the tree prediction.
    std::vector<double> sum_for(n, 0.0);
    std::vector<int> count_for(n, 0);
    for (std::size_t b = 0; b < memberships.size(); ++b) {
        const double pred = tree_predictions[b];
        for (int i : *memberships[b]) {
            sum_for[i] += pred;
            count_for[i] += 1;
        }
    }
    double sum_sq_cov = 0.0;
    for (int i = 0; i < n; ++i) {
        const double cov = sum_for[i] / b_count - pred_mean * (count_for[i] / b_count);
        sum_sq_cov += cov * cov;
    }
    const double ratio = static_cast<double>(n) / static_cast<double>(n - s);
    return (static_cast<double>(n - 1) / n) * ratio * ratio * sum_sq_cov;
}

}  // namespace detail

// Infinitesimal jackknife variance of the forest prediction at x. Requires
// subsampling without replacement with s < n; always nonnegative.
inline double variance_ij(const Forest& forest, const std::vector<double>& x) {
    std::vector<double> preds;
    preds.reserve(forest.trees.size());
    std::vector<const std::vector<int>*> memberships;
    memberships.reserve(forest.trees.size());
    for (const Tree& tree : forest.trees) {
        preds.push_back(predict_tree(tree, x));
        memberships.push_back(&tree.record.indices);
    }
    return detail::variance_ij_from(preds, memberships, forest.n_train,
                                    forest.config.subsample_size);
}

// Central two-sided normal interval: estimate +/- z(level) * sqrt(variance).
inline std::pair<double, double> confidence_interval(double estimate, double variance,
                                                     double level) {
    if (!(variance >= 0.0)) throw std::invalid_argument("confidence_interval: variance must be >= 0");
    const double half_width = normal_critical_value(level) * std::sqrt(variance);
    return {estimate - half_width, estimate + half_width};
}

inline PredictionResult predict_with_ci(const Forest& forest, const std::vector<double>& x,
                                        double level = 0.95) {
    PredictionResult r;
    r.estimate = predict(forest, x);
    r.variance = variance_ij(forest, x);
    r.ci_level = level;
    const auto ci = confidence_interval(r.estimate, r.variance, level);
    r.ci_low = ci.first;
    r.ci_high = ci.second;
    return r;
}

// The B -> infinity forest of the subsampling definition, realized exactly for
// trivial (depth-0) base learners: one tree per size-s subsample, each subset
// enumerated once. Oracle for the jackknife's exact-equivalence property.
inline Forest enumerate_exact_forest(const Dataset& data, int s) {
    const int n = data.n();
    if (s < 1 || s >= n) throw std::invalid_argument("enumerate_exact_forest: need 1 <= s < n");
    double combos = 1.0;
    for (int i = 0; i < s; ++i) combos = combos * (n - i) / (i + 1);
    if (combos > 1e6) throw std::invalid_argument("enumerate_exact_forest: C(n,s) exceeds budget");

    Forest forest;
    forest.n_train = n;
    forest.config.mode = Mode::regression_double_sample;
    forest.config.subsample_size = s;
    forest.config.min_leaf = 1;

    std::vector<int> combo(s);
    for (int i = 0; i < s; ++i) combo[i] = i;
    int b = 0;
    while (true) {
        Tree tree;
        tree.mode = Mode::regression_double_sample;
        tree.record.tree_index = b++;
        tree.record.indices = combo;
        TreeNode leaf;
        for (int i : combo) {
            leaf.stats.n_total += 1;
            leaf.stats.sum_y += data.y(i);
        }
        tree.nodes.push_back(leaf);
        forest.trees.push_back(std::move(tree));

        int pos = s - 1;
        while (pos >= 0 && combo[pos] == n - s + pos) --pos;
        if (pos < 0) break;
        ++combo[pos];
        for (int q = pos + 1; q < s; ++q) combo[q] = combo[q - 1] + 1;
    }
    forest.config.num_trees = static_cast<int>(forest.trees.size());
    return forest;
}

}  // namespace grove

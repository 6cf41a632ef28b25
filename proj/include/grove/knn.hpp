#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "grove/dataset.hpp"

namespace grove {

// k-NN matching estimate: difference between the mean response of the k
// nearest treated and the k nearest control neighbors, with Gaussian variance
// (ssd(S0) + ssd(S1)) / (k (k-1)) where ssd is the sum of squared deviations.
struct KnnEstimate {
    double estimate = 0.0;
    double variance = 0.0;
    std::vector<int> neighbors_treated;
    std::vector<int> neighbors_control;
};

namespace detail {

// Canonical rank of every row under (x lexicographic, y, w); distance ties
// break toward the lower rank, so row order never matters.
inline std::vector<int> canonical_ranks(const Dataset& data) {
    const int n = data.n();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        for (int j = 0; j < data.d(); ++j) {
            if (data.x(a, j) != data.x(b, j)) return data.x(a, j) < data.x(b, j);
        }
        if (data.y(a) != data.y(b)) return data.y(a) < data.y(b);
        return data.w(a) < data.w(b);
    });
    std::vector<int> rank(n);
    for (int r = 0; r < n; ++r) rank[order[r]] = r;
    return rank;
}

struct NeighborKey {
    double dist_sq;
    int rank;
    int row;
    bool operator<(const NeighborKey& other) const {
        if (dist_sq != other.dist_sq) return dist_sq < other.dist_sq;
        return rank < other.rank;
    }
};

}  // namespace detail

inline KnnEstimate knn_estimate(const Dataset& data, const std::vector<double>& x, int k,
                                bool with_variance = true) {
    if (!data.has_treatment()) throw std::invalid_argument("knn_estimate: dataset has no treatment");
    if (k < 1) throw std::invalid_argument("knn_estimate: k must be >= 1");
    if (with_variance && k < 2) {
        throw std::invalid_argument("knn_estimate: variance requires k >= 2");
    }
    if (static_cast<int>(x.size()) != data.d()) {
        throw std::invalid_argument("knn_estimate: query dimension mismatch");
    }

    const auto ranks = detail::canonical_ranks(data);
    std::vector<detail::NeighborKey> treated, control;
    for (int i = 0; i < data.n(); ++i) {
        double d2 = 0.0;
        for (int j = 0; j < data.d(); ++j) {
            const double diff = data.x(i, j) - x[j];
            d2 += diff * diff;
        }
        (data.w(i) == 1 ? treated : control).push_back({d2, ranks[i], i});
    }
    if (static_cast<int>(treated.size()) < k || static_cast<int>(control.size()) < k) {
        throw std::invalid_argument("knn_estimate: fewer than k observations in a treatment class");
    }

    auto select = [&](std::vector<detail::NeighborKey>& keys) {
        std::partial_sort(keys.begin(), keys.begin() + k, keys.end());
        keys.resize(k);
    };
    select(treated);
    select(control);

    KnnEstimate out;
    auto summarize = [&](const std::vector<detail::NeighborKey>& keys, std::vector<int>& rows,
                         double& mean, double& ssd) {
        double sum = 0.0;
        for (const auto& key : keys) {
            rows.push_back(key.row);
            sum += data.y(key.row);
        }
        mean = sum / k;
        ssd = 0.0;
        for (const auto& key : keys) {
            const double dev = data.y(key.row) - mean;
            ssd += dev * dev;
        }
    };
    double mean1, mean0, ssd1, ssd0;
    summarize(treated, out.neighbors_treated, mean1, ssd1);
    summarize(control, out.neighbors_control, mean0, ssd0);
    out.estimate = mean1 - mean0;
    if (with_variance) {
        out.variance = (ssd0 + ssd1) / (static_cast<double>(k) * (k - 1));
    }
    return out;
}

}  // namespace grove

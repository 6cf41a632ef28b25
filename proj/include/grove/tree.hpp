#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "grove/config.hpp"
#include "grove/dataset.hpp"
#include "grove/random.hpp"

namespace grove {

// Estimation-sample counts and response sums held by a leaf. In double-sample
// modes these cover the I-sample only; in propensity/adaptive modes the full
// subsample.
struct LeafStats {
    int n_treated = 0;
    int n_control = 0;
    double sum_y_treated = 0.0;
    double sum_y_control = 0.0;
    int n_total = 0;
    double sum_y = 0.0;
};

// Nodes are stored flat; feature < 0 marks a leaf. A split routes x to the
// left child iff x[feature] <= threshold.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    LeafStats stats;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;
    SubsampleRecord record;
    Mode mode = Mode::causal_double_sample;

    const TreeNode& leaf_for(const std::vector<double>& x) const {
        int idx = 0;
        while (!nodes[idx].is_leaf()) {
            idx = (x[nodes[idx].feature] <= nodes[idx].threshold) ? nodes[idx].left
                                                                  : nodes[idx].right;
        }
        return nodes[idx];
    }
};

struct DegenerateSubsampleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double leaf_estimate(const LeafStats& stats, Mode mode) {
    if (mode == Mode::regression_double_sample) {
        return stats.sum_y / static_cast<double>(stats.n_total);
    }
    return stats.sum_y_treated / static_cast<double>(stats.n_treated) -
           stats.sum_y_control / static_cast<double>(stats.n_control);
}

// Within-leaf mean response (regression) or difference of treated and control
// means (treatment modes). Leaf invariants guarantee nonzero denominators.
inline double predict_tree(const Tree& tree, const std::vector<double>& x) {
    return leaf_estimate(tree.leaf_for(x).stats, tree.mode);
}

enum class SplitCriterion { mse, causal_effect, gini };

inline SplitCriterion criterion_for(Mode mode) {
    switch (mode) {
        case Mode::regression_double_sample: return SplitCriterion::mse;
        case Mode::causal_double_sample: return SplitCriterion::causal_effect;
        case Mode::causal_adaptive: return SplitCriterion::causal_effect;
        case Mode::propensity: return SplitCriterion::gini;
    }
    throw std::logic_error("unknown mode");
}

struct ThresholdChoice {
    double threshold = 0.0;
    double score = 0.0;  // lower is better for mse/gini, higher for causal_effect
};

struct ThresholdSearchLimits {
    int min_split_class = 0;  // per-class floor on each child of the splitting sample
    int min_est_total = 1;    // estimation-observation floor per child
    int min_est_class = 0;    // per-class estimation floor per child (treatment modes)
};

// Smallest admissible child size under the regularity fraction.
inline int regularity_floor(double alpha, int m) {
    return static_cast<int>(std::ceil(alpha * static_cast<double>(m) - 1e-9));
}

namespace detail {

struct SortedObs {
    double x;
    double y;
    int w;  // -1 when the dataset has no treatment column
};

// Sorting by (x, y, w) makes every downstream prefix sum independent of the
// original row order, which is what gives trees their symmetry property.
inline bool obs_less(const SortedObs& a, const SortedObs& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.w < b.w;
}

// Order-canonical rescoring of one fixed partition. Candidates on different
// features frequently induce the same row partition at small nodes; computing
// their scores over value-sorted responses makes such ties bitwise-exact, so
// the lowest-feature tie-break resolves identically under any row order or
// response translation.
inline double canonical_mse_score(const std::vector<SortedObs>& obs, int split_pos) {
    auto child_sse = [&](int begin, int end) {
        std::vector<double> ys;
        ys.reserve(end - begin);
        for (int p = begin; p < end; ++p) ys.push_back(obs[p].y);
        std::sort(ys.begin(), ys.end());
        double mean = 0.0;
        for (double y : ys) mean += y;
        mean /= static_cast<double>(ys.size());
        double sse = 0.0;
        for (double y : ys) sse += (y - mean) * (y - mean);
        return sse;
    };
    return child_sse(0, split_pos) + child_sse(split_pos, static_cast<int>(obs.size()));
}

inline double canonical_causal_score(const std::vector<SortedObs>& obs, int split_pos) {
    auto child_tau = [&](int begin, int end) {
        std::vector<double> y1, y0;
        for (int p = begin; p < end; ++p) (obs[p].w == 1 ? y1 : y0).push_back(obs[p].y);
        std::sort(y1.begin(), y1.end());
        std::sort(y0.begin(), y0.end());
        double s1 = 0.0, s0 = 0.0;
        for (double y : y1) s1 += y;
        for (double y : y0) s0 += y;
        return s1 / static_cast<double>(y1.size()) - s0 / static_cast<double>(y0.size());
    };
    const int m = static_cast<int>(obs.size());
    const int nL = split_pos;
    const int nR = m - split_pos;
    const double tauL = child_tau(0, split_pos);
    const double tauR = child_tau(split_pos, m);
    const double mean = (nL * tauL + nR * tauR) / m;
    return (nL * tauL * tauL + nR * tauR * tauR) / m - mean * mean;
}

}  // namespace detail

// Best admissible threshold on one feature, or nullopt when no candidate meets
// the limits. Candidates are midpoints between consecutive distinct values of
// the splitting sample; child statistics come from one sorted prefix pass.
// `est_idx` may be empty (no estimation-side constraints) or alias `split_idx`.
inline std::optional<ThresholdChoice> best_threshold_on_feature(
    const Dataset& data, SplitCriterion criterion, int feature,
    const std::vector<int>& split_idx, const std::vector<int>& est_idx,
    const ThresholdSearchLimits& lim) {
    const int m = static_cast<int>(split_idx.size());
    if (m < 2) return std::nullopt;

    std::vector<detail::SortedObs> obs(m);
    const bool has_w = data.has_treatment();
    for (int p = 0; p < m; ++p) {
        const int i = split_idx[p];
        obs[p] = {data.x(i, feature), data.y(i), has_w ? data.w(i) : -1};
    }
    std::sort(obs.begin(), obs.end(), detail::obs_less);

    const bool check_est = !est_idx.empty();
    std::vector<std::pair<double, int>> est;  // (x, w) sorted by x
    if (check_est) {
        est.reserve(est_idx.size());
        for (int i : est_idx) est.emplace_back(data.x(i, feature), has_w ? data.w(i) : -1);
        std::sort(est.begin(), est.end());
    }
    const int m_est = static_cast<int>(est.size());

    // Responses enter the prefix sums centered on the node mean. Scores are
    // translation-invariant, and centering keeps the accumulation from
    // cancelling catastrophically when responses sit far from zero.
    double node_mean = 0.0;
    for (const auto& o : obs) node_mean += o.y;
    node_mean /= m;

    // Totals over the splitting sample.
    int n1 = 0, n0 = 0;
    double sy = 0.0, syy = 0.0, sy1 = 0.0, sy0 = 0.0;
    for (const auto& o : obs) {
        const double yc = o.y - node_mean;
        sy += yc;
        syy += yc * yc;
        if (o.w == 1) {
            ++n1;
            sy1 += yc;
        } else if (o.w == 0) {
            ++n0;
            sy0 += yc;
        }
    }
    int est1 = 0;
    for (const auto& e : est) est1 += (e.second == 1) ? 1 : 0;

    const bool minimize = (criterion != SplitCriterion::causal_effect);
    std::optional<ThresholdChoice> best;
    int best_pos = -1;

    int nL = 0, nL1 = 0, nL0 = 0;
    double syL = 0.0, syyL = 0.0, syL1 = 0.0, syL0 = 0.0;
    int ep = 0, estL = 0, estL1 = 0;
    for (int p = 1; p < m; ++p) {
        const auto& prev = obs[p - 1];
        const double prev_yc = prev.y - node_mean;
        nL += 1;
        syL += prev_yc;
        syyL += prev_yc * prev_yc;
        if (prev.w == 1) {
            ++nL1;
            syL1 += prev_yc;
        } else if (prev.w == 0) {
            ++nL0;
            syL0 += prev_yc;
        }
        if (!(prev.x < obs[p].x)) continue;
        const double t = prev.x + (obs[p].x - prev.x) / 2.0;

        if (check_est) {
            while (ep < m_est && est[ep].first <= t) {
                ++estL;
                estL1 += (est[ep].second == 1) ? 1 : 0;
                ++ep;
            }
            const int estR = m_est - estL;
            if (estL < lim.min_est_total || estR < lim.min_est_total) continue;
            if (lim.min_est_class > 0) {
                const int estL0 = estL - estL1;
                const int estR1 = est1 - estL1;
                const int estR0 = estR - estR1;
                if (estL1 < lim.min_est_class || estL0 < lim.min_est_class ||
                    estR1 < lim.min_est_class || estR0 < lim.min_est_class) {
                    continue;
                }
            }
        }

        const int nR = m - nL;
        const int nR1 = n1 - nL1;
        const int nR0 = n0 - nL0;
        if (lim.min_split_class > 0 &&
            (nL1 < lim.min_split_class || nL0 < lim.min_split_class ||
             nR1 < lim.min_split_class || nR0 < lim.min_split_class)) {
            continue;
        }

        double score;
        switch (criterion) {
            case SplitCriterion::mse: {
                const double syR = sy - syL;
                const double syyR = syy - syyL;
                score = (syyL - syL * syL / nL) + (syyR - syR * syR / nR);
                break;
            }
            case SplitCriterion::causal_effect: {
                const double tauL = syL1 / nL1 - syL0 / nL0;
                const double tauR = (sy1 - syL1) / nR1 - (sy0 - syL0) / nR0;
                const double mean = (nL * tauL + nR * tauR) / m;
                score = (nL * tauL * tauL + nR * tauR * tauR) / m - mean * mean;
                break;
            }
            case SplitCriterion::gini: {
                const double pL = static_cast<double>(nL1) / nL;
                const double pR = static_cast<double>(nR1) / nR;
                score = nL * 2.0 * pL * (1.0 - pL) + nR * 2.0 * pR * (1.0 - pR);
                break;
            }
        }
        const bool improves =
            !best || (minimize ? score < best->score : score > best->score);
        if (improves) {
            best = ThresholdChoice{t, score};
            best_pos = p;
        }
    }
    if (best && criterion == SplitCriterion::mse) {
        best->score = detail::canonical_mse_score(obs, best_pos);
    } else if (best && criterion == SplitCriterion::causal_effect) {
        best->score = detail::canonical_causal_score(obs, best_pos);
    }
    return best;
}

// Spec-level criterion entry points (splitting-sample constraints only).
inline std::optional<ThresholdChoice> criterion_mse(const Dataset& data,
                                                    const std::vector<int>& j_sample,
                                                    int feature) {
    return best_threshold_on_feature(data, SplitCriterion::mse, feature, j_sample, {}, {});
}

inline std::optional<ThresholdChoice> criterion_causal(const Dataset& data,
                                                       const std::vector<int>& j_sample,
                                                       int feature, int k) {
    return best_threshold_on_feature(data, SplitCriterion::causal_effect, feature, j_sample,
                                     {}, {k, 1, 0});
}

inline std::optional<ThresholdChoice> criterion_gini(const Dataset& data,
                                                     const std::vector<int>& subsample,
                                                     int feature, int k) {
    return best_threshold_on_feature(data, SplitCriterion::gini, feature, subsample, {},
                                     {k, 1, 0});
}

struct SplitChoice {
    int feature = 0;
    double threshold = 0.0;
};

namespace detail {

struct NodeCounts {
    int est_total = 0;
    int est_treated = 0;
    int split_total = 0;
    int split_treated = 0;
};

inline NodeCounts node_counts(const Dataset& data, const std::vector<int>& est,
                              const std::vector<int>& split) {
    NodeCounts c;
    c.est_total = static_cast<int>(est.size());
    c.split_total = static_cast<int>(split.size());
    if (data.has_treatment()) {
        for (int i : est) c.est_treated += data.w(i);
        for (int i : split) c.split_treated += data.w(i);
    }
    return c;
}

// Size-only admissibility test; looks at X/W counts, never at responses, so
// the stream stays aligned under response permutations.
inline bool node_can_split(const NodeCounts& c, Mode mode, int k) {
    if (c.split_total < 2) return false;
    if (mode == Mode::regression_double_sample) return c.est_total >= 2 * k;
    const int est_control = c.est_total - c.est_treated;
    if (c.est_treated < 2 * k || est_control < 2 * k) return false;
    const int split_control = c.split_total - c.split_treated;
    return c.split_treated >= 2 * k && split_control >= 2 * k;
}

// Per-child floors before the regularity fraction is folded in. Regression
// leaves need k estimation observations; treatment modes need k of each class
// on both the splitting sample (search feasibility) and the estimation sample.
inline ThresholdSearchLimits limits_for(Mode mode, int k) {
    if (mode == Mode::regression_double_sample) return {0, k, 0};
    return {k, 1, k};
}

}  // namespace detail

// Chooses the next split, or nullopt when no candidate satisfies regularity
// and leaf feasibility (the normal stop signal). With probability pi the
// candidate feature is drawn uniformly; otherwise the criterion is optimized
// greedily over all features. Score ties break toward the lowest feature
// index, then the lowest threshold. If the randomly drawn feature admits no
// valid threshold, the search falls back to the greedy scan so that growth
// stops exactly when no feature has a valid candidate.
inline std::optional<SplitChoice> select_split(const Dataset& data, const ForestConfig& cfg,
                                               const std::vector<int>& est,
                                               const std::vector<int>& split,
                                               RandomStream& stream) {
    const auto counts = detail::node_counts(data, est, split);
    if (!detail::node_can_split(counts, cfg.mode, cfg.min_leaf)) return std::nullopt;

    ThresholdSearchLimits lim = detail::limits_for(cfg.mode, cfg.min_leaf);
    lim.min_est_total = std::max(lim.min_est_total, regularity_floor(cfg.alpha, counts.est_total));
    const SplitCriterion criterion = criterion_for(cfg.mode);
    const int d = data.d();

    if (stream.next_double() < cfg.pi) {
        const int j = static_cast<int>(stream.next_bounded(static_cast<std::uint32_t>(d)));
        if (auto choice = best_threshold_on_feature(data, criterion, j, split, est, lim)) {
            return SplitChoice{j, choice->threshold};
        }
    }

    std::optional<SplitChoice> best;
    double best_score = 0.0;
    const bool minimize = (criterion != SplitCriterion::causal_effect);
    for (int j = 0; j < d; ++j) {
        const auto choice = best_threshold_on_feature(data, criterion, j, split, est, lim);
        if (!choice) continue;
        const bool improves =
            !best || (minimize ? choice->score < best_score : choice->score > best_score);
        if (improves) {
            best = SplitChoice{j, choice->threshold};
            best_score = choice->score;
        }
    }
    return best;
}

namespace detail {

// Sums run over value-sorted responses so the result is a function of the
// index set alone, not of the order rows arrived in.
inline LeafStats leaf_stats(const Dataset& data, const std::vector<int>& est) {
    LeafStats s;
    s.n_total = static_cast<int>(est.size());
    std::vector<double> treated, control, all;
    all.reserve(est.size());
    for (int i : est) {
        const double yi = data.y(i);
        all.push_back(yi);
        if (data.has_treatment()) {
            (data.w(i) == 1 ? treated : control).push_back(yi);
        }
    }
    auto sorted_sum = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        double sum = 0.0;
        for (double y : v) sum += y;
        return sum;
    };
    s.sum_y = sorted_sum(all);
    if (data.has_treatment()) {
        s.n_treated = static_cast<int>(treated.size());
        s.n_control = static_cast<int>(control.size());
        s.sum_y_treated = sorted_sum(treated);
        s.sum_y_control = sorted_sum(control);
    }
    return s;
}

inline int grow_node(Tree& tree, const Dataset& data, const ForestConfig& cfg,
                     std::vector<int> est, std::vector<int> split, RandomStream& stream) {
    const auto choice = select_split(data, cfg, est, split, stream);
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (!choice) {
        tree.nodes[idx].stats = leaf_stats(data, est);
        return idx;
    }
    const int j = choice->feature;
    const double t = choice->threshold;
    tree.nodes[idx].feature = j;
    tree.nodes[idx].threshold = t;

    auto partition = [&](const std::vector<int>& in, std::vector<int>& lo, std::vector<int>& hi) {
        for (int i : in) {
            (data.x(i, j) <= t ? lo : hi).push_back(i);
        }
    };
    std::vector<int> est_lo, est_hi, split_lo, split_hi;
    partition(est, est_lo, est_hi);
    partition(split, split_lo, split_hi);
    est.clear();
    est.shrink_to_fit();
    split.clear();
    split.shrink_to_fit();

    const int left = grow_node(tree, data, cfg, std::move(est_lo), std::move(split_lo), stream);
    const int right = grow_node(tree, data, cfg, std::move(est_hi), std::move(split_hi), stream);
    tree.nodes[idx].left = left;
    tree.nodes[idx].right = right;
    return idx;
}

}  // namespace detail

// Grows one tree over the record's subsample. Double-sample modes place splits
// with the J-half (responses allowed) and estimate leaves with the I-half
// (responses never consulted for splitting); propensity trees split on the
// treatment indicator only; adaptive trees waive honesty and use the full
// subsample for both jobs. Recursion stops exactly when no candidate split
// satisfies the regularity and leaf-size constraints.
inline Tree grow_tree(const Dataset& data, const SubsampleRecord& record,
                      const ForestConfig& cfg, RandomStream& stream) {
    Tree tree;
    tree.record = record;
    tree.mode = cfg.mode;

    std::vector<int> est, split;
    if (is_double_sample(cfg.mode)) {
        est = record.i_half;
        split = record.j_half;
    } else {
        est = record.indices;
        split = record.indices;
    }

    if (is_treatment_mode(cfg.mode)) {
        int treated = 0;
        for (int i : est) treated += data.w(i);
        const int control = static_cast<int>(est.size()) - treated;
        if (treated < cfg.min_leaf || control < cfg.min_leaf) {
            throw DegenerateSubsampleError(
                "degenerate subsample: fewer than min_leaf observations of a treatment class");
        }
    }

    tree.nodes.reserve(2 * est.size() + 1);
    detail::grow_node(tree, data, cfg, std::move(est), std::move(split), stream);
    return tree;
}

}  // namespace grove

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "grove/dataset.hpp"

namespace grove {

enum class Mode {
    regression_double_sample,
    causal_double_sample,
    propensity,
    causal_adaptive,
};

inline bool is_double_sample(Mode m) {
    return m == Mode::regression_double_sample || m == Mode::causal_double_sample;
}

// Treatment-effect modes estimate a within-leaf difference of means and need
// per-class leaf counts; regression estimates a plain within-leaf mean.
inline bool is_treatment_mode(Mode m) { return m != Mode::regression_double_sample; }

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::regression_double_sample: return "regression_double_sample";
        case Mode::causal_double_sample: return "causal_double_sample";
        case Mode::propensity: return "propensity";
        case Mode::causal_adaptive: return "causal_adaptive";
    }
    throw std::logic_error("unknown mode");
}

inline Mode mode_from_name(const std::string& name) {
    if (name == "regression_double_sample") return Mode::regression_double_sample;
    if (name == "causal_double_sample") return Mode::causal_double_sample;
    if (name == "propensity") return Mode::propensity;
    if (name == "causal_adaptive") return Mode::causal_adaptive;
    throw std::invalid_argument("unknown mode: " + name);
}

struct ForestConfig {
    int num_trees = 0;        // B; 0 means "default to n" at the CLI layer
    int subsample_size = 0;   // s
    int min_leaf = 1;         // k
    double alpha = 0.05;      // regularity fraction, must lie in (0, 0.2]
    double pi = 0.05;         // random-split probability, must lie in (0, 1]
    Mode mode = Mode::causal_double_sample;
    std::uint64_t seed = 0;
};

// Checks every ForestConfig invariant against the dataset and reports all
// violations at once, before any training begins.
inline void validate_config(const ForestConfig& cfg, const Dataset& data) {
    std::vector<std::string> errors;
    if (cfg.num_trees < 1) errors.push_back("num_trees must be >= 1");
    if (cfg.subsample_size < 2) errors.push_back("subsample size must be >= 2");
    if (cfg.subsample_size > data.n()) errors.push_back("subsample exceeds n");
    if (cfg.min_leaf < 1) errors.push_back("min_leaf must be >= 1");
    if (!(cfg.alpha > 0.0 && cfg.alpha <= 0.2)) errors.push_back("alpha must lie in (0, 0.2]");
    if (!(cfg.pi > 0.0 && cfg.pi <= 1.0)) errors.push_back("pi must lie in (0, 1]");
    if (cfg.subsample_size < 2 * cfg.min_leaf) {
        errors.push_back("subsample size must be at least 2*min_leaf");
    }
    if (is_double_sample(cfg.mode) && cfg.subsample_size / 2 < cfg.min_leaf) {
        errors.push_back("floor(s/2) must be at least min_leaf in double-sample modes");
    }
    if (is_treatment_mode(cfg.mode) && !data.has_treatment()) {
        errors.push_back("mode " + mode_name(cfg.mode) + " requires a treatment column");
    }
    if (!errors.empty()) {
        std::string msg = "invalid forest configuration:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }
}

// Minimum subsample-scaling exponent for which forest predictions are both
// asymptotically Gaussian and centered:
//   beta_min = 1 - (1 + (d/pi) * ln(1/alpha) / ln(1/(1-alpha)))^-1.
// Strictly inside (0,1); increasing in d, decreasing in pi.
inline double beta_min(double alpha, double pi, int d) {
    if (!(alpha > 0.0 && alpha <= 0.2)) throw std::invalid_argument("beta_min: alpha must lie in (0, 0.2]");
    if (!(pi > 0.0 && pi <= 1.0)) throw std::invalid_argument("beta_min: pi must lie in (0, 1]");
    if (d < 1) throw std::invalid_argument("beta_min: d must be >= 1");
    const double ratio = std::log(1.0 / alpha) / std::log(1.0 / (1.0 - alpha));
    return 1.0 - 1.0 / (1.0 + (static_cast<double>(d) / pi) * ratio);
}

// Point estimate with its jackknife variance and two-sided normal interval.
struct PredictionResult {
    double estimate = 0.0;
    double variance = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double ci_level = 0.95;
};

}  // namespace grove

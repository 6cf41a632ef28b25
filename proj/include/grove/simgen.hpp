#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "grove/dataset.hpp"
#include "grove/math.hpp"
#include "grove/random.hpp"

namespace grove {

enum class DesignKind { confounded, smooth, spike, dense, corner };

inline std::string design_name(DesignKind kind) {
    switch (kind) {
        case DesignKind::confounded: return "confounded";
        case DesignKind::smooth: return "smooth";
        case DesignKind::spike: return "spike";
        case DesignKind::dense: return "dense";
        case DesignKind::corner: return "corner";
    }
    throw std::logic_error("unknown design");
}

inline DesignKind design_from_name(const std::string& name) {
    if (name == "confounded") return DesignKind::confounded;
    if (name == "smooth") return DesignKind::smooth;
    if (name == "spike") return DesignKind::spike;
    if (name == "dense") return DesignKind::dense;
    if (name == "corner") return DesignKind::corner;
    throw std::invalid_argument("unknown design: " + name);
}

// A synthetic data-generating design together with its analytic treatment
// effect, main effect, and propensity. Features are U([0,1]^d); treatment is
// drawn from e(X) independently of the potential outcomes given X, so
// unconfoundedness holds by construction, and e stays inside [1/4, 199/256].
struct Design {
    DesignKind kind = DesignKind::smooth;
    int d = 2;
    int q = 0;  // signal dimensions, dense design only

    std::string name() const { return design_name(kind); }

    double true_tau(const std::vector<double>& x) const {
        switch (kind) {
            case DesignKind::confounded: return 0.0;
            case DesignKind::smooth:
                return smooth_bump(x[0]) * smooth_bump(x[1]);
            case DesignKind::spike:
                return spike_bump(x[0]) * spike_bump(x[1]);
            case DesignKind::dense: {
                double sum = 0.0;
                for (int j = 0; j < q; ++j) {
                    sum += 1.0 / (1.0 + std::exp(-12.0 * (x[j] - 0.5))) - 0.5;
                }
                return 4.0 / q * sum;
            }
            case DesignKind::corner: return 0.1;
        }
        throw std::logic_error("unknown design");
    }

    double main_effect(const std::vector<double>& x) const {
        return kind == DesignKind::confounded ? 2.0 * x[0] - 1.0 : 0.0;
    }

    double propensity(const std::vector<double>& x) const {
        if (kind != DesignKind::confounded) return 0.5;
        const double u = x[0];
        const double beta_2_4 = 20.0 * u * (1.0 - u) * (1.0 - u) * (1.0 - u);
        return (1.0 + beta_2_4) / 4.0;
    }

private:
    static double smooth_bump(double u) { return 1.0 + 1.0 / (1.0 + std::exp(-20.0 * (u - 1.0 / 3.0))); }
    static double spike_bump(double u) { return 2.0 / (1.0 + std::exp(-12.0 * (u - 0.5))); }
};

inline Design make_design(DesignKind kind, int d, int q = 0) {
    Design design;
    design.kind = kind;
    switch (kind) {
        case DesignKind::confounded:
            if (d < 1) throw std::invalid_argument("confounded design needs d >= 1");
            break;
        case DesignKind::smooth:
        case DesignKind::spike:
            if (d < 2) throw std::invalid_argument(design_name(kind) + " design needs d >= 2");
            break;
        case DesignKind::dense:
            if (q < 1 || q > d) throw std::invalid_argument("dense design needs 1 <= q <= d");
            design.q = q;
            break;
        case DesignKind::corner:
            d = 10;  // fixed by the design
            break;
    }
    design.d = d;
    return design;
}

// Draws n rows from the design. Homoscedastic unit-normal potential outcomes
// Y^(w) ~ N(m(X) + (w - 1/2) tau(X), 1), except the corner design, which uses
// Y = 2 W A + eps with A ~ Bernoulli(0.05) and eps ~ N(0, 0.1^2).
inline Dataset generate(const Design& design, int n, RandomStream& stream) {
    if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
    Dataset data(design.d, true);
    std::vector<double> x(design.d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < design.d; ++j) x[j] = stream.next_double();
        Sample s;
        s.x = x;
        if (design.kind == DesignKind::corner) {
            const int w = stream.next_bernoulli(0.5) ? 1 : 0;
            const int a = stream.next_bernoulli(0.05) ? 1 : 0;
            const double eps = 0.1 * normal_draw(stream);
            s.w = w;
            s.y = 2.0 * w * a + eps;
        } else {
            const int w = stream.next_bernoulli(design.propensity(x)) ? 1 : 0;
            s.w = w;
            s.y = design.main_effect(x) + (w - 0.5) * design.true_tau(x) + normal_draw(stream);
        }
        data.add(s);
    }
    return data;
}

inline std::vector<std::vector<double>> draw_test_points(int count, int d, RandomStream& stream) {
    std::vector<std::vector<double>> points(count, std::vector<double>(d));
    for (auto& p : points) {
        for (double& v : p) v = stream.next_double();
    }
    return points;
}

}  // namespace grove

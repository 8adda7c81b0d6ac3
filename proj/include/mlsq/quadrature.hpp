#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlsq/legendre.hpp"

namespace mlsq {

/// Tensor Gauss-Legendre rule on [0,1]^d. The weights sum to one, so the
/// rule integrates against the normalized Lebesgue measure. Used only as
/// a verification oracle; nothing in the approximation pipeline
/// integrates.
struct quadrature_rule {
    std::size_t d = 0;
    std::vector<double> nodes;   // flattened, point-major
    std::vector<double> weights; // one per point

    std::size_t point_count() const { return weights.size(); }
    std::span<const double> point(std::size_t i) const {
        return {nodes.data() + i * d, d};
    }

    double integrate(const std::function<double(std::span<const double>)>& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < point_count(); ++i) s += weights[i] * f(point(i));
        return s;
    }
};

/// Univariate Gauss-Legendre nodes/weights on [0,1]; exact for degree
/// <= 2q-1. Nodes by Newton iteration on the standard interval.
inline void gauss_nodes_1d(std::size_t q, std::vector<double>& nodes,
                           std::vector<double>& weights) {
    nodes.resize(q);
    weights.resize(q);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < q; ++i) {
        // Chebyshev initial guess, then Newton on P_q(t)
        double t = std::cos(pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(q) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p_prev = 1.0, p = t;
            if (q == 1) { p = t; p_prev = 1.0; }
            for (std::size_t k = 2; k <= q; ++k) {
                double p_next = ((2.0 * k - 1.0) * t * p - (k - 1.0) * p_prev) / k;
                p_prev = p;
                p = p_next;
            }
            dp = q * (t * p - p_prev) / (t * t - 1.0);
            double step = p / dp;
            t -= step;
            if (std::abs(step) < 1e-15) break;
        }
        {
            double p_prev = 1.0, p = t;
            for (std::size_t k = 2; k <= q; ++k) {
                double p_next = ((2.0 * k - 1.0) * t * p - (k - 1.0) * p_prev) / k;
                p_prev = p;
                p = p_next;
            }
            dp = q * (t * p - p_prev) / (t * t - 1.0);
        }
        nodes[q - 1 - i] = 0.5 * (t + 1.0);
        weights[q - 1 - i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
}

/// Tensor rule with q points per axis.
inline quadrature_rule gauss_rule(std::size_t d, std::size_t q) {
    if (q < 1) throw std::invalid_argument("gauss_rule: q must be >= 1");
    std::vector<double> n1, w1;
    gauss_nodes_1d(q, n1, w1);
    quadrature_rule rule;
    rule.d = d;
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) total *= q;
    rule.nodes.resize(total * d);
    rule.weights.resize(total);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t p = 0; p < total; ++p) {
        double w = 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            rule.nodes[p * d + j] = n1[idx[j]];
            w *= w1[idx[j]];
        }
        rule.weights[p] = w;
        for (std::size_t j = d; j-- > 0;) {
            if (++idx[j] < q) break;
            idx[j] = 0;
        }
    }
    return rule;
}

} // namespace mlsq

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlsq/families.hpp"
#include "mlsq/least_squares.hpp"
#include "mlsq/parallel.hpp"

namespace mlsq {

/// Parametric diffusion benchmark on the square [-1,1]^2: the level-l
/// evaluator solves
///     -div(a(x, y) grad u) = 1,   u = 0 on the boundary,
/// with a(x, y) = 1 + |x|_2^r + |y|_2^s, on a grid of 2^(l+2)+1 points
/// per axis, and returns the quantity of interest 0.5 * integral of u.
/// Parameters live on the canonical cube [0,1]^d and are mapped affinely
/// onto [-1,1]^d; the kink of |y|_2^s at the mapped origin is what limits
/// the parametric smoothness.
class elliptic_family : public level_family {
public:
    explicit elliptic_family(std::size_t d, double r_exponent = 1.0,
                             double s_exponent = 3.0)
        : d_(d), r_(r_exponent), s_(s_exponent) {
        if (d == 0) throw std::invalid_argument("elliptic_family: d must be >= 1");
    }

    std::size_t dimension() const override { return d_; }

    static std::size_t points_per_axis(int level) {
        return (std::size_t{1} << (level + 2)) + 1;
    }

    double nominal_cost(int level) const override {
        double interior = static_cast<double>(points_per_axis(level) - 2);
        return interior * interior;
    }

    double cost_growth_factor() const override { return 4.0; }

    evaluation evaluate(int level, std::span<const double> y) const override {
        if (level < 0) throw std::invalid_argument("elliptic_family: negative level");
        if (y.size() != d_)
            throw std::invalid_argument("elliptic_family: dimension mismatch");
        double param_term = 0.0;
        for (double c : y) {
            double mapped = 2.0 * c - 1.0;
            param_term += mapped * mapped;
        }
        param_term = std::pow(std::sqrt(param_term), s_);
        double q = solve_level(level, param_term, y);
        return {q, nominal_cost(level)};
    }

private:
    /// Matrix-free conjugate gradient on the flux-form 5-point stencil
    /// with Jacobi scaling. Face coefficients are arithmetic means of the
    /// nodal values, which keeps the operator symmetric.
    double solve_level(int level, double param_term, std::span<const double> y) const {
        const std::size_t p = points_per_axis(level);
        const std::size_t n = p - 2; // interior per axis
        const double h = 2.0 / static_cast<double>(p - 1);
        const double inv_h2 = 1.0 / (h * h);

        // nodal coefficient field
        std::vector<double> a(p * p);
        parallel_for(p, [&](std::size_t i) {
            double x1 = -1.0 + h * static_cast<double>(i);
            for (std::size_t j = 0; j < p; ++j) {
                double x2 = -1.0 + h * static_cast<double>(j);
                double rad = std::sqrt(x1 * x1 + x2 * x2);
                double kink = r_ == 1.0 ? rad : std::pow(rad, r_);
                a[i * p + j] = 1.0 + kink + param_term;
            }
        });
        // face coefficients scaled by 1/h^2, flattened over the interior:
        // east/north of interior node (ii,jj); the west/south faces are the
        // east/north faces of the neighbors, with a leading column/row for
        // the boundary-adjacent ones
        std::vector<double> fe((n + 1) * n), fn(n * (n + 1));
        parallel_for(n + 1, [&](std::size_t ii) {
            std::size_t i = ii; // grid index of the west node of the face
            for (std::size_t jj = 0; jj < n; ++jj) {
                std::size_t j = jj + 1;
                fe[ii * n + jj] = 0.5 * (a[i * p + j] + a[(i + 1) * p + j]) * inv_h2;
            }
        });
        parallel_for(n, [&](std::size_t ii) {
            std::size_t i = ii + 1;
            for (std::size_t jj = 0; jj <= n; ++jj) {
                std::size_t j = jj;
                fn[ii * (n + 1) + jj] =
                    0.5 * (a[i * p + j] + a[i * p + j + 1]) * inv_h2;
            }
        });

        std::vector<double> diag(n * n);
        parallel_for(n, [&](std::size_t ii) {
            for (std::size_t jj = 0; jj < n; ++jj)
                diag[ii * n + jj] = fe[(ii + 1) * n + jj] + fe[ii * n + jj] +
                                    fn[ii * (n + 1) + jj + 1] + fn[ii * (n + 1) + jj];
        });

        // A u: flux differences; boundary values are zero
        auto apply = [&](const std::vector<double>& u, std::vector<double>& out) {
            parallel_for(n, [&](std::size_t ii) {
                const double* urow = u.data() + ii * n;
                const double* unorth = ii + 1 < n ? u.data() + (ii + 1) * n : nullptr;
                const double* usouth = ii > 0 ? u.data() + (ii - 1) * n : nullptr;
                const double* fe_hi = fe.data() + (ii + 1) * n;
                const double* fe_lo = fe.data() + ii * n;
                const double* fn_row = fn.data() + ii * (n + 1);
                const double* drow = diag.data() + ii * n;
                double* orow = out.data() + ii * n;
                for (std::size_t jj = 0; jj < n; ++jj) {
                    double acc = drow[jj] * urow[jj];
                    if (unorth) acc -= fe_hi[jj] * unorth[jj];
                    if (usouth) acc -= fe_lo[jj] * usouth[jj];
                    if (jj + 1 < n) acc -= fn_row[jj + 1] * urow[jj + 1];
                    if (jj > 0) acc -= fn_row[jj] * urow[jj - 1];
                    orow[jj] = acc;
                }
            });
        };

        const std::size_t unknowns = n * n;
        std::vector<double> inv_diag(unknowns);
        for (std::size_t i = 0; i < unknowns; ++i) inv_diag[i] = 1.0 / diag[i];
        std::vector<double> u(unknowns, 0.0), r(unknowns, 1.0), z(unknowns),
            pvec(unknowns), ap(unknowns);
        // b = 1 everywhere; Jacobi-preconditioned CG with fused sweeps
        double nb = std::sqrt(static_cast<double>(unknowns));
        double rz = 0.0, rn = static_cast<double>(unknowns);
        for (std::size_t i = 0; i < unknowns; ++i) {
            z[i] = r[i] * inv_diag[i];
            rz += r[i] * z[i];
        }
        pvec = z;
        const double tol = 1e-10 * nb;
        const std::size_t cap = 40 * p + 200;
        std::size_t it = 0;
        for (; it < cap; ++it) {
            if (std::sqrt(rn) <= tol) break;
            apply(pvec, ap);
            double pap = 0.0;
            for (std::size_t i = 0; i < unknowns; ++i) pap += pvec[i] * ap[i];
            double alpha = rz / pap;
            double rz_next = 0.0, rn_next = 0.0;
            for (std::size_t i = 0; i < unknowns; ++i) {
                u[i] += alpha * pvec[i];
                double ri = r[i] - alpha * ap[i];
                r[i] = ri;
                double zi = ri * inv_diag[i];
                z[i] = zi;
                rz_next += ri * zi;
                rn_next += ri * ri;
            }
            double beta = rz_next / rz;
            rz = rz_next;
            rn = rn_next;
            for (std::size_t i = 0; i < unknowns; ++i) pvec[i] = z[i] + beta * pvec[i];
        }
        if (it >= cap) {
            std::string where = "elliptic_family: CG stalled at level " +
                                std::to_string(level) + ", y = (";
            for (std::size_t j = 0; j < y.size(); ++j)
                where += (j ? "," : "") + std::to_string(y[j]);
            throw numerical_failure(where + ")");
        }

        // trapezoid rule; boundary contributes nothing
        double sum = 0.0;
        for (double v : u) sum += v;
        return 0.5 * h * h * sum;
    }

    std::size_t d_;
    double r_, s_;
};

} // namespace mlsq

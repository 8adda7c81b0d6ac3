#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlsq/legendre.hpp"
#include "mlsq/multi_index.hpp"
#include "mlsq/parallel.hpp"
#include "mlsq/rng.hpp"
#include "mlsq/sampling.hpp"

namespace mlsq {

struct numerical_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Coupling constant kappa = (1 - log 2)/(2(1+r)); r = L for multilevel
/// schedules, r = 1 elsewhere.
inline double coupling_kappa(double r) {
    return (1.0 - std::log(2.0)) / (2.0 * (1.0 + r));
}

/// Replacement constant when samples follow a perturbed distribution.
inline double perturbed_kappa(double r) {
    return (5.0 / 36.0 - (5.0 / 6.0) * std::log(5.0 / 6.0)) / (1.0 + r);
}

/// Minimal integer N >= 3 with kappa * N / log N >= target. Monotone and
/// superlinear in the target.
inline std::size_t sample_count_for(double target, double kappa) {
    if (kappa <= 0.0) throw std::invalid_argument("sample_count_for: kappa <= 0");
    auto ok = [&](std::size_t n) {
        double dn = static_cast<double>(n);
        return kappa * dn / std::log(dn) >= target;
    };
    std::size_t lo = 3;
    if (ok(lo)) return lo;
    std::size_t hi = 6;
    while (!ok(hi)) {
        lo = hi;
        hi *= 2;
        if (hi > (std::size_t{1} << 48))
            throw std::invalid_argument("sample_count_for: target too large");
    }
    while (hi - lo > 1) {
        std::size_t mid = lo + (hi - lo) / 2;
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

/// True when the rounded count overshoots the upper coupling bound
/// kappa N / log N <= 2 * target; only possible near the N = 3 floor.
inline bool coupling_overshoot(std::size_t n, double target, double kappa) {
    double dn = static_cast<double>(n);
    return kappa * dn / std::log(dn) > 2.0 * target;
}

/// A weighted least squares instance: target values of one function at
/// the sample points, to be projected onto the span of a downward closed
/// exponent set.
struct least_squares_problem {
    tensor_basis basis;
    weighted_sample_set samples;
    std::vector<double> values;

    void validate() const {
        if (values.size() != samples.size())
            throw std::invalid_argument("least_squares_problem: values/points mismatch");
        if (basis.dim() != samples.d)
            throw std::invalid_argument("least_squares_problem: dimension mismatch");
    }
};

/// The scaled design matrix M with entries sqrt(w_i / N) B_j(y_i), kept
/// in factored form: the Gramian G = M^T M is never formed densely, only
/// applied. Per-point univariate tables are cached so repeated operator
/// applications cost one multiply-add per entry.
class design_operator {
public:
    design_operator(const tensor_basis& basis, const weighted_sample_set& samples)
        : basis_(&basis), n_(samples.size()), m_(basis.size()),
          stride_(basis.table_stride()) {
        tables_.resize(n_ * stride_);
        scale_.resize(n_);
        const double inv_n = 1.0 / static_cast<double>(n_);
        parallel_for(n_, [&](std::size_t i) {
            basis.fill_tables(samples.point(i),
                              std::span<double>(tables_.data() + i * stride_, stride_));
            scale_[i] = std::sqrt(samples.weights[i] * inv_n);
        });
        offsets_.resize(basis.dim());
        std::size_t off = 0;
        for (std::size_t j = 0; j < basis.dim(); ++j) {
            offsets_[j] = off;
            off += static_cast<std::size_t>(basis.max_degrees()[j]) + 1;
        }
        // flattened per-column table offsets; the matvec hot loop indexes
        // these instead of walking exponent tuples
        d_ = basis.dim();
        col_offsets_.resize(m_ * d_);
        for (std::size_t j = 0; j < m_; ++j) {
            const auto& e = basis.exponents()[j];
            for (std::size_t c = 0; c < d_; ++c)
                col_offsets_[j * d_ + c] = offsets_[c] + static_cast<std::size_t>(e[c]);
        }
    }

    std::size_t rows() const { return n_; }
    std::size_t cols() const { return m_; }

    double entry(std::size_t i, std::size_t j) const {
        const auto& e = basis_->exponents()[j];
        const double* t = tables_.data() + i * stride_;
        double v = scale_[i];
        for (std::size_t c = 0; c < basis_->dim(); ++c) v *= t[offsets_[c] + e[c]];
        return v;
    }

    /// out = M x
    void apply(std::span<const double> x, std::span<double> out) const {
        auto row = [&](std::size_t i) {
            const double* t = tables_.data() + i * stride_;
            const std::size_t* co = col_offsets_.data();
            double acc = 0.0;
            for (std::size_t j = 0; j < m_; ++j) {
                double v = t[co[0]];
                for (std::size_t c = 1; c < d_; ++c) v *= t[co[c]];
                acc += v * x[j];
                co += d_;
            }
            out[i] = scale_[i] * acc;
        };
        if (n_ * m_ < (std::size_t{1} << 20)) {
            for (std::size_t i = 0; i < n_; ++i) row(i);
        } else {
            parallel_for(n_, row);
        }
    }

    /// out = M^T r
    void apply_transpose(std::span<const double> r, std::span<double> out) const {
        const std::size_t chunks = 8;
        std::size_t chunk = (n_ + chunks - 1) / chunks;
        std::vector<double> partial(chunks * m_, 0.0);
        auto run_chunk = [&](std::size_t c) {
            std::size_t lo = c * chunk, hi = std::min(n_, lo + chunk);
            double* acc = partial.data() + c * m_;
            for (std::size_t i = lo; i < hi; ++i) {
                const double* t = tables_.data() + i * stride_;
                const std::size_t* co = col_offsets_.data();
                double s = scale_[i] * r[i];
                for (std::size_t j = 0; j < m_; ++j) {
                    double v = t[co[0]];
                    for (std::size_t cc = 1; cc < d_; ++cc) v *= t[co[cc]];
                    acc[j] += v * s;
                    co += d_;
                }
            }
        };
        if (n_ * m_ < (std::size_t{1} << 20)) {
            for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
        } else {
            parallel_for(chunks, run_chunk, static_cast<unsigned>(chunks));
        }
        for (std::size_t j = 0; j < m_; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < chunks; ++c) s += partial[c * m_ + j];
            out[j] = s;
        }
    }

    /// out = G x = M^T (M x)
    void apply_gramian(std::span<const double> x, std::span<double> out) const {
        std::vector<double> tmp(n_);
        apply(x, tmp);
        apply_transpose(tmp, out);
    }

    /// Right-hand side c with c_j = (1/N) sum_i w_i f(y_i) B_j(y_i),
    /// assembled as M^T b for b_i = sqrt(w_i/N) f(y_i).
    std::vector<double> rhs(std::span<const double> values) const {
        std::vector<double> b(n_);
        for (std::size_t i = 0; i < n_; ++i) b[i] = scale_[i] * values[i];
        std::vector<double> c(m_);
        apply_transpose(b, c);
        return c;
    }

private:
    const tensor_basis* basis_;
    std::size_t n_, m_, stride_, d_ = 0;
    std::vector<double> tables_;
    std::vector<double> scale_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> col_offsets_;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

} // namespace detail

/// Spectral norm of G - I by power iteration on the squared operator
/// (G - I)^2, with a deterministic seeded start vector. The square keeps
/// the iteration monotone regardless of the sign of the extreme
/// eigenvalue.
inline double gramian_deviation(const design_operator& op, double rel_tol = 1e-6,
                                std::size_t max_iters = 10000) {
    std::size_t m = op.cols();
    std::vector<double> v(m), gv(m), av(m);
    rng_stream rng(0xDE71A7E5ULL, {op.rows(), m});
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    double nv = detail::norm2(v);
    for (auto& x : v) x /= nv;

    auto apply_shifted = [&](std::span<const double> x, std::span<double> out) {
        op.apply_gramian(x, out);
        for (std::size_t j = 0; j < m; ++j) out[j] -= x[j];
    };

    double dev = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        apply_shifted(v, gv);
        apply_shifted(gv, av);
        double lambda_sq = detail::dot(v, av); // Rayleigh quotient of (G-I)^2
        double next = std::sqrt(std::max(lambda_sq, 0.0));
        double na = detail::norm2(av);
        if (na < 1e-300) return 0.0; // operator annihilates the start vector
        for (std::size_t j = 0; j < m; ++j) v[j] = av[j] / na;
        if (it > 0 && std::abs(next - dev) <= rel_tol * std::max(next, 1e-30))
            return next;
        dev = next;
    }
    throw numerical_failure("gramian_deviation: power iteration did not converge");
}

/// Basis coefficients of a projection plus its conditioning certificate.
struct least_squares_fit {
    std::vector<double> coefficients;
    double gramian_deviation = 0.0;
    bool conditioned_zeroed = false;
    std::size_t solver_iterations = 0;

    double evaluate(const tensor_basis& basis, std::span<const double> y) const {
        std::vector<double> vals(basis.size());
        basis.eval_all(y, vals);
        return detail::dot(coefficients, vals);
    }
};

namespace detail {

/// Conjugate gradient on the factored normal equations. Started from
/// zero, so the limit is the minimal-norm solution whenever the system is
/// singular but consistent; hitting the iteration cap is flagged, not
/// thrown.
inline least_squares_fit fit_with(const design_operator& op,
                                  std::span<const double> values, bool conditioned,
                                  double rel_tol) {
    std::size_t m = op.cols();
    least_squares_fit fit;
    fit.gramian_deviation = gramian_deviation(op);
    fit.coefficients.assign(m, 0.0);
    if (conditioned && fit.gramian_deviation > 0.5) {
        fit.conditioned_zeroed = true;
        return fit;
    }

    std::vector<double> c = op.rhs(values);
    double nc = norm2(c);
    if (nc == 0.0) return fit;

    std::vector<double> r = c, p = c, gp(m);
    double rr = dot(r, r);
    const std::size_t cap = 10 * m;
    std::size_t it = 0;
    for (; it < cap; ++it) {
        if (std::sqrt(rr) <= rel_tol * nc) break;
        op.apply_gramian(p, gp);
        double pgp = dot(p, gp);
        if (pgp <= 0.0) break; // numerically singular direction
        double alpha = rr / pgp;
        for (std::size_t j = 0; j < m; ++j) {
            fit.coefficients[j] += alpha * p[j];
            r[j] -= alpha * gp[j];
        }
        double rr_next = dot(r, r);
        double beta = rr_next / rr;
        rr = rr_next;
        for (std::size_t j = 0; j < m; ++j) p[j] = r[j] + beta * p[j];
    }
    fit.solver_iterations = it;
    return fit;
}

} // namespace detail

inline least_squares_fit solve(const least_squares_problem& problem,
                               double rel_tol = 1e-10) {
    problem.validate();
    design_operator op(problem.basis, problem.samples);
    return detail::fit_with(op, problem.values, false, rel_tol);
}

/// Conditioned projection: identical to solve while the Gramian stays
/// within 1/2 of the identity, and exactly zero otherwise.
inline least_squares_fit solve_conditioned(const least_squares_problem& problem,
                                           double rel_tol = 1e-10) {
    problem.validate();
    design_operator op(problem.basis, problem.samples);
    return detail::fit_with(op, problem.values, true, rel_tol);
}

/// Grid supremum of w(y) * sum_j B_j(y)^2 over an interior-shifted tensor
/// grid; diagnostic only.
inline double k_constant(const downward_closed_set& space,
                         const std::function<double(std::span<const double>)>& weight,
                         std::size_t grid_per_axis = 2000) {
    if (space.dim() > 3) throw std::invalid_argument("k_constant: d must be <= 3");
    grid_per_axis = std::min<std::size_t>(grid_per_axis, 10000);
    tensor_basis basis(space);
    std::size_t d = basis.dim();
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) total *= grid_per_axis;
    double sup = 0.0;
    std::vector<double> y(d);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t p = 0; p < total; ++p) {
        for (std::size_t j = 0; j < d; ++j)
            y[j] = (static_cast<double>(idx[j]) + 0.5) / static_cast<double>(grid_per_axis);
        sup = std::max(sup, weight(y) * basis.sum_of_squares(y));
        for (std::size_t j = d; j-- > 0;) {
            if (++idx[j] < grid_per_axis) break;
            idx[j] = 0;
        }
    }
    return sup;
}

/// Fit rows serialized as (exponent tuple, coefficient) lines.
inline void write_fit(std::ostream& os, const tensor_basis& basis,
                      const least_squares_fit& fit) {
    os.precision(17);
    for (std::size_t j = 0; j < basis.size(); ++j) {
        const auto& e = basis.exponents()[j];
        for (std::size_t c = 0; c < e.dim(); ++c) os << e[c] << ' ';
        os << fit.coefficients[j] << '\n';
    }
}

} // namespace mlsq

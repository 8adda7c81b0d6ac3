#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlsq/legendre.hpp"
#include "mlsq/multi_index.hpp"
#include "mlsq/rng.hpp"

namespace mlsq {

struct evaluation {
    double value = 0.0;
    double cost = 0.0;
};

/// A hierarchy of increasingly accurate, increasingly expensive
/// evaluators of one target function on the unit cube. Evaluations are
/// deterministic in (level, point) and report their model cost.
class level_family {
public:
    virtual ~level_family() = default;

    virtual std::size_t dimension() const = 0;

    /// Value and model cost of the level-l evaluator at a point of
    /// [0,1]^d.
    virtual evaluation evaluate(int level, std::span<const double> y) const = 0;

    /// Model cost of one evaluation; a pure function of the level.
    virtual double nominal_cost(int level) const = 0;

    /// Multiplicative growth of the discretization parameter between
    /// consecutive levels.
    virtual double refinement_ratio() const { return 2.0; }

    /// Cost growth between consecutive levels, used to seed work-rate
    /// priors before any evaluation has been observed.
    virtual double cost_growth_factor() const {
        return nominal_cost(1) / nominal_cost(0);
    }

    /// Closed-form limit, when one exists.
    virtual std::optional<double> exact_value(std::span<const double>) const {
        return std::nullopt;
    }

    /// Value of f_l - f_{l-1} with the convention f_{-1} = 0; cost is the
    /// combined cost of the evaluations involved.
    evaluation evaluate_difference(int level, std::span<const double> y) const {
        evaluation hi = evaluate(level, y);
        if (level == 0) return hi;
        evaluation lo = evaluate(level - 1, y);
        return {hi.value - lo.value, hi.cost + lo.cost};
    }
};

/// Reference used by Monte Carlo error estimates: one level finer than
/// the run, or the exact limit when configured and available.
inline double reference_value(const level_family& family, std::span<const double> y,
                              int run_level, bool prefer_exact = false) {
    if (prefer_exact)
        if (auto exact = family.exact_value(y)) return *exact;
    return family.evaluate(run_level + 1, y).value;
}

struct synthetic_rates {
    double alpha = 3.0;
    double beta_s = 2.0;
    double beta_w = 2.0;
    double gamma = 2.0;
};

/// Closed-form family with prescribed convergence and cost rates. The
/// limit is a fixed Legendre series whose coefficients decay fast enough
/// to give polynomial approximability with exponent alpha; level l sees
/// the limit plus a perturbation of size n_l^{-beta_s} with n_l = 2^l,
/// whose L2 mass shrinks by the extra factor n_l^{-(beta_w-beta_s)}.
class synthetic_family : public level_family {
public:
    synthetic_family(std::size_t d, synthetic_rates rates, int limit_degree = 30,
                     double perturbation_scale = 1.0, std::uint64_t coeff_seed = 29)
        : d_(d), rates_(rates), scale_(perturbation_scale) {
        if (rates.beta_w < rates.beta_s)
            throw std::invalid_argument("synthetic_family: beta_w < beta_s");
        auto space = total_degree_set(d, limit_degree);
        limit_basis_ = tensor_basis(space);
        limit_coef_.resize(limit_basis_.size());
        // algebraic decay (1+|eta|)^-(alpha + d/2) gives total-degree tail
        // energy ~ m^{-2 alpha}; deterministic signs keep the target
        // non-trivial in every direction
        double p = rates.alpha + static_cast<double>(d) / 2.0;
        for (std::size_t j = 0; j < limit_coef_.size(); ++j) {
            const auto& eta = limit_basis_.exponents()[j];
            rng_stream sign_rng(coeff_seed, {static_cast<std::uint64_t>(j)});
            double sign = sign_rng.uniform() < 0.5 ? -1.0 : 1.0;
            limit_coef_[j] = sign * std::pow(1.0 + eta.degree(), -p);
        }
    }

    std::size_t dimension() const override { return d_; }

    double limit_value(std::span<const double> y) const {
        std::vector<double> vals(limit_basis_.size());
        limit_basis_.eval_all(y, vals);
        double s = 0.0;
        for (std::size_t j = 0; j < vals.size(); ++j) s += limit_coef_[j] * vals[j];
        return s;
    }

    /// Perturbation direction of level l: an equal mix of the constant
    /// and one tensor Legendre function, with bounded peak size and L2
    /// mass n_l^-(beta_w-beta_s). The constant share keeps the level
    /// differences generic (nonzero mean), the way discretized solver
    /// hierarchies behave.
    double perturbation(int level, std::span<const double> y) const {
        double eta = std::pow(std::pow(2.0, level), rates_.beta_s - rates_.beta_w);
        double sign = level % 2 == 0 ? 1.0 : -1.0;
        const double inv_sqrt2 = 0.70710678118654752;
        if (rates_.beta_w == rates_.beta_s) {
            // cycle through the coordinate directions; every member has
            // unit L2 norm and the same peak size
            std::size_t axis = static_cast<std::size_t>(level) % d_;
            return sign * inv_sqrt2 * (1.0 + legendre_eval(1, y[axis]));
        }
        // degree chosen so that the L2-normalized polynomial has peak
        // ~ 1/eta; scaling by eta then keeps the peak near one while the
        // L2 norm is exactly eta
        int q = static_cast<int>(std::ceil(0.5 * (1.0 / (eta * eta) - 1.0)));
        return sign * inv_sqrt2 * eta * (1.0 + legendre_eval(q, y[0]));
    }

    evaluation evaluate(int level, std::span<const double> y) const override {
        if (level < 0) throw std::invalid_argument("synthetic_family: negative level");
        double n_l = std::pow(2.0, level);
        double v = limit_value(y) +
                   scale_ * std::pow(n_l, -rates_.beta_s) * perturbation(level, y);
        return {v, nominal_cost(level)};
    }

    double nominal_cost(int level) const override {
        return std::pow(2.0, rates_.gamma * static_cast<double>(level));
    }

    double cost_growth_factor() const override { return std::pow(2.0, rates_.gamma); }

    std::optional<double> exact_value(std::span<const double> y) const override {
        return limit_value(y);
    }

    const synthetic_rates& rates() const { return rates_; }

private:
    std::size_t d_;
    synthetic_rates rates_;
    double scale_;
    tensor_basis limit_basis_;
    std::vector<double> limit_coef_;
};

/// Family whose levels all evaluate the same function; level differences
/// vanish identically. Used to exercise telescoping identities.
class constant_level_family : public level_family {
public:
    constant_level_family(std::size_t d,
                          std::function<double(std::span<const double>)> f,
                          double base_cost = 1.0, double growth = 2.0)
        : d_(d), f_(std::move(f)), base_cost_(base_cost), growth_(growth) {}

    std::size_t dimension() const override { return d_; }

    evaluation evaluate(int level, std::span<const double> y) const override {
        return {f_(y), nominal_cost(level)};
    }

    double nominal_cost(int level) const override {
        return base_cost_ * std::pow(growth_, level);
    }

    std::optional<double> exact_value(std::span<const double> y) const override {
        return f_(y);
    }

private:
    std::size_t d_;
    std::function<double(std::span<const double>)> f_;
    double base_cost_, growth_;
};

} // namespace mlsq

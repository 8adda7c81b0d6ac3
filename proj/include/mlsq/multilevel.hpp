#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlsq/families.hpp"
#include "mlsq/least_squares.hpp"
#include "mlsq/legendre.hpp"
#include "mlsq/multi_index.hpp"
#include "mlsq/sampling.hpp"

namespace mlsq {

/// Convergence and work exponents of an evaluator hierarchy paired with a
/// polynomial approximation scale.
struct rate_params {
    double alpha = 1.0;   // polynomial approximability rate
    double sigma = 1.0;   // space-dimension exponent
    double beta_s = 1.0;  // strong (smooth-norm) convergence rate
    double beta_w = 1.0;  // weak (L2) convergence rate, >= beta_s
    double gamma = 1.0;   // work growth exponent
    double kappa_scale = 1.0; // sample-coupling adjustment for non-optimal sampling

    void validate() const {
        if (!(alpha > 0 && sigma > 0 && beta_s > 0 && beta_w > 0 && gamma > 0))
            throw std::invalid_argument("rate_params: exponents must be positive");
        if (beta_w < beta_s)
            throw std::invalid_argument("rate_params: beta_w < beta_s");
        if (!(kappa_scale > 0))
            throw std::invalid_argument("rate_params: kappa_scale must be positive");
    }
};

enum class regime { a, b, c_equal, c_strict };

inline const char* to_string(regime r) {
    switch (r) {
        case regime::a: return "a";
        case regime::b: return "b";
        case regime::c_equal: return "c-equal";
        case regime::c_strict: return "c-strict";
    }
    return "?";
}

struct regime_info {
    regime which = regime::a;
    double lambda = 0.0; // work exponent
    double t = 0.0;      // log power
    double delta = 0.0;  // shift-factor exponent; zero unless c-strict
    bool shifted = false; // whether the shift factor M exceeds one
};

/// Case analysis of the complexity exponents: compares gamma/beta_s with
/// sigma/alpha via cross products so hand-built boundary cases classify
/// exactly.
inline regime_info classify_regime(const rate_params& p) {
    p.validate();
    regime_info info;
    double lhs = p.gamma * p.alpha;   // gamma/beta_s (cross-multiplied)
    double rhs = p.sigma * p.beta_s;  // sigma/alpha
    if (lhs < rhs) {
        info.which = regime::a;
        info.lambda = p.sigma / p.alpha;
        info.t = 2.0;
    } else if (lhs == rhs) {
        info.which = regime::b;
        info.lambda = p.sigma / p.alpha;
        info.t = 3.0 + p.sigma / p.alpha;
    } else {
        double theta = p.beta_s / p.beta_w;
        info.lambda = theta * p.gamma / p.beta_s + (1.0 - theta) * p.sigma / p.alpha;
        if (p.beta_w == p.beta_s) {
            info.which = regime::c_equal;
            info.t = 1.0;
        } else {
            info.which = regime::c_strict;
            info.t = 2.0;
            info.delta = (p.beta_w - p.beta_s) / (p.alpha * (p.gamma + p.beta_s));
            info.shifted = true;
        }
    }
    return info;
}

/// Builds the smallest total-degree space of the given dimension whose
/// basis has at least min_dim members.
using space_builder = std::function<downward_closed_set(std::size_t min_dim)>;

inline space_builder total_degree_builder(std::size_t d) {
    return [d](std::size_t min_dim) {
        int degree = 0;
        while (total_degree_set(d, degree).size() < min_dim) ++degree;
        return total_degree_set(d, degree);
    };
}

/// Per-level plan of a multilevel run: space scales, discretization
/// parameters, realized polynomial spaces, and coupled sample counts.
struct multilevel_schedule {
    int levels = 0;     // L; indices run 0..L
    double shift = 1.0; // M
    double delta = 0.0;
    double level_scale = 1.0; // growth ratio of the discretization parameter
    double kappa = 0.0;
    std::vector<double> space_scales;     // m_k
    std::vector<double> disc_params;      // n_l
    std::vector<std::size_t> sample_counts; // |Gamma_k|
    std::vector<downward_closed_set> spaces;
    regime_info regime;
    int coupling_warnings = 0; // rounded counts past the upper bound

    std::size_t space_dim(int k) const { return spaces[k].size(); }
};

/// Default scale: one level of the hierarchy advances the discretization
/// parameter by exp(1/(gamma+beta_s)).
inline double default_level_scale(const rate_params& p) {
    return std::exp(1.0 / (p.gamma + p.beta_s));
}

/// Assembles the schedule for L levels. The subsequences follow
///   n_l = nu^l,   m_k = M nu^{k (gamma+beta_s)/(sigma+alpha)}
/// with nu the level scale; the default scale reduces these to the
/// canonical exp(l/(gamma+beta_s)) and M exp(k/(sigma+alpha)). Families
/// with dyadic discretizations pass nu = 2 so that schedule levels line
/// up with realizable evaluators while keeping the same coupling of
/// accuracy, dimension, and work. Sample counts are the minimal ones
/// satisfying kappa |Gamma_k| / log|Gamma_k| >= m_k^sigma with
/// kappa = kappa_scale (1-log 2)/(2+2L).
inline multilevel_schedule build_schedule(const rate_params& p, int levels,
                                          const space_builder& builder,
                                          double level_scale = 0.0,
                                          bool include_solver_cost = false) {
    p.validate();
    if (levels < 0) throw std::invalid_argument("build_schedule: negative L");
    multilevel_schedule s;
    s.levels = levels;
    s.regime = classify_regime(p);
    s.level_scale = level_scale > 0.0 ? level_scale : default_level_scale(p);
    s.delta = s.regime.delta;
    s.shift = s.regime.shifted
                  ? std::pow(s.level_scale,
                             levels * (p.beta_w - p.beta_s) / p.alpha)
                  : 1.0;
    s.kappa = p.kappa_scale * (1.0 - std::log(2.0)) / (2.0 + 2.0 * levels);
    // accounting for the iterative-solver cost slows the space growth
    double dim_exp = include_solver_cost
                         ? (p.gamma + p.beta_s) / (2.0 * p.sigma + p.alpha)
                         : (p.gamma + p.beta_s) / (p.sigma + p.alpha);
    for (int k = 0; k <= levels; ++k) {
        double m_k = s.shift * std::pow(s.level_scale, k * dim_exp);
        double n_l = std::pow(s.level_scale, k);
        s.space_scales.push_back(m_k);
        s.disc_params.push_back(n_l);
        double target = std::pow(m_k, p.sigma);
        std::size_t count = sample_count_for(target, s.kappa);
        if (coupling_overshoot(count, target, s.kappa)) ++s.coupling_warnings;
        s.sample_counts.push_back(count);
        s.spaces.push_back(builder(static_cast<std::size_t>(std::ceil(target))));
    }
    return s;
}

/// Real-valued level count balancing the per-regime residual bound
/// against the target accuracy, before integer rounding.
inline double choose_levels_real(const rate_params& p, double epsilon) {
    p.validate();
    if (!(epsilon > 0.0) || epsilon >= 1.0)
        throw std::domain_error("choose_levels: epsilon must lie in (0,1)");
    auto info = classify_regime(p);
    double log_inv = -std::log(epsilon);
    switch (info.which) {
        case regime::a:
            return (p.sigma + p.alpha) / p.alpha * log_inv;
        case regime::b: {
            // unique root of exp(-L alpha/(sigma+alpha)) (L+1) = eps past
            // the maximum of the left-hand side
            double c = p.alpha / (p.sigma + p.alpha);
            double lo = std::max(0.0, 1.0 / c - 1.0), hi = lo + 1.0;
            auto val = [&](double L) { return std::exp(-c * L) * (L + 1.0); };
            while (val(hi) > epsilon) hi *= 2.0;
            while (hi - lo > 1e-10) {
                double mid = 0.5 * (lo + hi);
                (val(mid) > epsilon ? lo : hi) = mid;
            }
            return hi;
        }
        case regime::c_equal:
        case regime::c_strict:
            return (p.gamma + p.beta_s) / p.beta_w * log_inv;
    }
    return 0.0;
}

/// L needed for a target accuracy; always at least ceil(|log eps|).
inline int choose_levels(const rate_params& p, double epsilon) {
    double raw = choose_levels_real(p, epsilon);
    double wanted = std::max(raw, -std::log(epsilon));
    return static_cast<int>(std::ceil(wanted - 1e-9));
}

/// The assembled estimator: one fit per level l, projecting f_l - f_{l-1}
/// onto the space of index L - l.
struct multilevel_estimate {
    multilevel_schedule schedule;
    std::vector<tensor_basis> bases;      // basis of fit l (space index L-l)
    std::vector<least_squares_fit> fits;  // indexed by level l
    double work = 0.0;                     // model work of all evaluations
    bool conditioned = false;

    double evaluate(std::span<const double> y) const {
        double s = 0.0;
        for (std::size_t l = 0; l < fits.size(); ++l)
            s += fits[l].evaluate(bases[l], y);
        return s;
    }

    int max_deviation_level() const {
        int worst = 0;
        for (std::size_t l = 1; l < fits.size(); ++l)
            if (fits[l].gramian_deviation > fits[worst].gramian_deviation)
                worst = static_cast<int>(l);
        return worst;
    }
};

/// Model work of evaluating every level's sample set: the finest level's
/// samples are cheap (level-0 evaluator), the coarsest space's samples
/// pay for the two finest evaluators.
inline double work_estimate(const multilevel_schedule& s,
                            const std::function<double(int)>& cost_of_level) {
    int L = s.levels;
    double w = static_cast<double>(s.sample_counts[L]) * cost_of_level(0);
    for (int l = 1; l <= L; ++l)
        w += static_cast<double>(s.sample_counts[L - l]) *
             (cost_of_level(l) + cost_of_level(l - 1));
    return w;
}

struct multilevel_options {
    sampler_kind sampler = sampler_kind::optimal;
    bool conditioned = false;
    bool nested_samples = false; // arcsine only: level sets are prefixes of one stream
};

/// Runs the full estimator: per level, draws the coupled number of points
/// for the paired space, evaluates the level difference, and fits it.
/// Levels use independent sample streams unless nesting is requested.
inline multilevel_estimate run_multilevel(const level_family& family,
                                          const multilevel_schedule& schedule,
                                          std::uint64_t seed,
                                          const multilevel_options& opts = {}) {
    if (opts.nested_samples && opts.sampler != sampler_kind::arcsine)
        throw std::invalid_argument("run_multilevel: nested samples require arcsine");
    std::size_t d = family.dimension();
    int L = schedule.levels;
    multilevel_estimate est;
    est.schedule = schedule;
    est.conditioned = opts.conditioned;
    for (int l = 0; l <= L; ++l) {
        int k = L - l;
        const auto& space = schedule.spaces[k];
        std::size_t n = schedule.sample_counts[k];
        std::uint64_t level_seed = opts.nested_samples ? seed : derive_seed(seed, l);
        weighted_sample_set samples;
        switch (opts.sampler) {
            case sampler_kind::optimal:
                samples = sample_optimal(space, n, level_seed);
                break;
            case sampler_kind::arcsine:
                samples = sample_arcsine(d, n, level_seed);
                break;
            case sampler_kind::mis:
                samples = mis_sample(space, n, level_seed);
                break;
        }
        least_squares_problem prob{tensor_basis(space), std::move(samples), {}};
        prob.values.resize(n);
        const auto& pts = prob.samples;
        try {
            parallel_for(n, [&](std::size_t i) {
                prob.values[i] = family.evaluate_difference(l, pts.point(i)).value;
            });
        } catch (const std::exception& e) {
            throw std::runtime_error("run_multilevel: evaluation failed at level " +
                                     std::to_string(l) + ": " + e.what());
        }
        auto fit = opts.conditioned ? solve_conditioned(prob) : solve(prob);
        est.bases.push_back(std::move(prob.basis));
        est.fits.push_back(std::move(fit));
    }
    est.work = work_estimate(schedule, [&](int l) { return family.nominal_cost(l); });
    return est;
}

} // namespace mlsq

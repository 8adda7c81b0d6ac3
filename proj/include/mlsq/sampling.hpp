#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlsq/legendre.hpp"
#include "mlsq/multi_index.hpp"
#include "mlsq/parallel.hpp"
#include "mlsq/quadrature.hpp"
#include "mlsq/rng.hpp"

namespace mlsq {

inline constexpr double pi_const = 3.14159265358979323846;

/// Envelope constant of the squared orthonormal Legendre polynomials over
/// the arcsine density; also the expected number of rejection proposals.
inline double rejection_envelope() { return 4.0 * std::exp(1.0); }

/// Density of the d-dimensional arcsine distribution on (0,1)^d.
inline double arcsine_density(std::span<const double> y) {
    double p = 1.0;
    for (double v : y) p *= 1.0 / (pi_const * std::sqrt(v * (1.0 - v)));
    return p;
}

inline double arcsine_density_1d(double y) {
    return 1.0 / (pi_const * std::sqrt(y * (1.0 - y)));
}

/// Weight paired with arcsine samples when the reference measure is the
/// normalized Lebesgue measure.
inline double arcsine_weight(std::span<const double> y) {
    double w = 1.0;
    for (double v : y) w *= pi_const * std::sqrt(v * (1.0 - v));
    return w;
}

enum class sampler_kind { optimal, arcsine, mis, perturbed };

inline const char* to_string(sampler_kind k) {
    switch (k) {
        case sampler_kind::optimal: return "optimal";
        case sampler_kind::arcsine: return "arcsine";
        case sampler_kind::mis: return "mis";
        case sampler_kind::perturbed: return "perturbed";
    }
    return "?";
}

struct sampling_spec {
    sampler_kind kind = sampler_kind::arcsine;
    std::size_t d = 1;
    double contamination = 0.0; // perturbed kind only; in [0, 1)
};

/// Random points with matched weights; the raw material of every
/// projection. Points are stored flat, point-major.
struct weighted_sample_set {
    std::size_t d = 0;
    std::vector<double> points;  // n * d
    std::vector<double> weights; // n
    sampling_spec spec;
    std::uint64_t rng_seed = 0;

    std::size_t size() const { return weights.size(); }
    std::span<const double> point(std::size_t i) const {
        return {points.data() + i * d, d};
    }
};

/// Columnar dump: one point per row, coordinates then weight.
inline void write_samples(std::ostream& os, const weighted_sample_set& s) {
    os.precision(17);
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto p = s.point(i);
        for (double c : p) os << c << ' ';
        os << s.weights[i] << '\n';
    }
}

/// One arcsine draw: (sin(X)+1)/2 for X uniform on [-pi/2, pi/2]. Never
/// returns exactly 0 or 1 in floating point.
inline double arcsine_draw(rng_stream& rng) {
    double x = rng.uniform(-pi_const / 2.0, pi_const / 2.0);
    double y = 0.5 * (std::sin(x) + 1.0);
    // clamp away from the endpoints where the weight vanishes and the
    // density diverges
    const double eps = 1e-300;
    if (y <= 0.0) y = eps;
    if (y >= 1.0) y = 1.0 - 1e-16;
    return y;
}

/// n i.i.d. points from the d-dimensional arcsine distribution with the
/// matching weights 1/p_inf. Streams are keyed per (seed, point,
/// coordinate), so point i is the same regardless of how many points are
/// drawn or in what order.
inline weighted_sample_set sample_arcsine(std::size_t d, std::size_t n,
                                          std::uint64_t seed,
                                          std::uint64_t point_offset = 0) {
    weighted_sample_set out;
    out.d = d;
    out.spec = {sampler_kind::arcsine, d};
    out.rng_seed = seed;
    out.points.resize(n * d);
    out.weights.resize(n);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < d; ++j) {
            rng_stream rng(seed, {point_offset + i, j});
            out.points[i * d + j] = arcsine_draw(rng);
        }
        out.weights[i] = arcsine_weight(out.point(i));
    });
    return out;
}

/// m / sum of squared basis values; the weight that equalizes the sample
/// count constant at exactly m. Finite and positive for any non-empty
/// downward closed space since the constant contributes 1 to the sum.
inline double optimal_weight(const tensor_basis& basis, std::span<const double> y) {
    double s = basis.sum_of_squares(y);
    return static_cast<double>(basis.size()) / s;
}

inline double optimal_weight(const downward_closed_set& space,
                             std::span<const double> y) {
    return optimal_weight(tensor_basis(space), y);
}

/// Mixture density (1/m) sum of squared basis values relative to the
/// Lebesgue measure.
inline double optimal_density(const tensor_basis& basis, std::span<const double> y) {
    return basis.sum_of_squares(y) / static_cast<double>(basis.size());
}

struct rejection_stats {
    std::uint64_t proposals = 0;
    std::uint64_t accepts = 0;
    double mean_proposals_per_accept() const {
        return accepts ? static_cast<double>(proposals) / static_cast<double>(accepts)
                       : 0.0;
    }
};

/// Draws one coordinate from the squared-polynomial density of degree n
/// by rejection against the arcsine proposal. The proposal count is
/// geometric with mean equal to the envelope constant; a cap converts a
/// (theoretically impossible) envelope violation into an error.
inline double rejection_draw_squared(int n, rng_stream& rng,
                                     rejection_stats* stats = nullptr) {
    const double envelope = rejection_envelope();
    for (std::uint64_t trial = 0; trial < 1000000; ++trial) {
        double y = arcsine_draw(rng);
        double u = rng.uniform();
        if (stats) ++stats->proposals;
        double v = legendre_eval(n, y);
        if (u * envelope * arcsine_density_1d(y) <= v * v) {
            if (stats) ++stats->accepts;
            return y;
        }
    }
    throw std::runtime_error("rejection_draw_squared: proposal cap exceeded");
}

/// n i.i.d. points from the optimal distribution of a downward closed
/// space: uniform choice of a mixture component, then per-coordinate
/// rejection sampling. Weights are the optimal ones, m / sum B^2.
inline weighted_sample_set sample_optimal(const downward_closed_set& space,
                                          std::size_t n, std::uint64_t seed,
                                          rejection_stats* stats = nullptr) {
    if (space.empty())
        throw std::invalid_argument("sample_optimal: empty space");
    tensor_basis basis(space);
    std::size_t d = space.dim();
    weighted_sample_set out;
    out.d = d;
    out.spec = {sampler_kind::optimal, d};
    out.rng_seed = seed;
    out.points.resize(n * d);
    out.weights.resize(n);
    std::vector<rejection_stats> chunk_stats(stats ? n : 0);
    parallel_for(n, [&](std::size_t i) {
        rng_stream pick(seed, {i, 0xC0FFEEULL});
        const multi_index& eta = basis.exponents()[pick.uniform_index(basis.size())];
        rejection_stats* st = stats ? &chunk_stats[i] : nullptr;
        for (std::size_t j = 0; j < d; ++j) {
            rng_stream rng(seed, {i, j});
            out.points[i * d + j] = rejection_draw_squared(eta[j], rng, st);
        }
        out.weights[i] = optimal_weight(basis, out.point(i));
    });
    if (stats)
        for (const auto& cs : chunk_stats) {
            stats->proposals += cs.proposals;
            stats->accepts += cs.accepts;
        }
    return out;
}

/// Draws from the uniformly contaminated density
/// (1-eps) rho* + eps while keeping the optimal weights, the setting of
/// the perturbation-stability diagnostics.
inline weighted_sample_set sample_perturbed(const downward_closed_set& space,
                                            std::size_t n, double contamination,
                                            std::uint64_t seed) {
    if (!(contamination >= 0.0) || contamination >= 1.0)
        throw std::invalid_argument("sample_perturbed: contamination outside [0,1)");
    tensor_basis basis(space);
    std::size_t d = space.dim();
    weighted_sample_set out;
    out.d = d;
    out.spec = {sampler_kind::perturbed, d, contamination};
    out.rng_seed = seed;
    out.points.resize(n * d);
    out.weights.resize(n);
    parallel_for(n, [&](std::size_t i) {
        rng_stream pick(seed, {i, 0xC0FFEEULL});
        if (pick.uniform() < contamination) {
            for (std::size_t j = 0; j < d; ++j) {
                rng_stream rng(seed, {i, j});
                out.points[i * d + j] = rng.uniform();
            }
        } else {
            const multi_index& eta =
                basis.exponents()[pick.uniform_index(basis.size())];
            for (std::size_t j = 0; j < d; ++j) {
                rng_stream rng(seed, {i, j});
                out.points[i * d + j] = rejection_draw_squared(eta[j], rng);
            }
        }
        out.weights[i] = optimal_weight(basis, out.point(i));
    });
    return out;
}

/// Lower bound estimate of inf proposal/target over an interior-shifted
/// tensor grid. Underestimating g only lengthens the burn-in.
inline double estimate_mis_floor(const tensor_basis& basis,
                                 const std::function<double(std::span<const double>)>& proposal_density,
                                 std::size_t grid_per_axis = 512) {
    std::size_t d = basis.dim();
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) total *= grid_per_axis;
    double g = std::numeric_limits<double>::infinity();
    std::vector<double> y(d);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t p = 0; p < total; ++p) {
        for (std::size_t j = 0; j < d; ++j)
            y[j] = (static_cast<double>(idx[j]) + 0.5) / static_cast<double>(grid_per_axis);
        g = std::min(g, proposal_density(y) / optimal_density(basis, y));
        for (std::size_t j = d; j-- > 0;) {
            if (++idx[j] < grid_per_axis) break;
            idx[j] = 0;
        }
    }
    return g;
}

/// Burn-in length that brings the chain within 1/(12 m^2) of the target
/// in total variation.
inline std::size_t mis_burn_in(double g, std::size_t m) {
    if (g <= 0.0) throw std::invalid_argument("mis_burn_in: need g > 0");
    double n = std::log(24.0 * static_cast<double>(m) * static_cast<double>(m)) / g;
    return static_cast<std::size_t>(std::ceil(n - 1e-12));
}

/// Metropolized independence sampler targeting the optimal distribution.
/// Each output point is the terminal state of its own chain of burn-in
/// length ceil(log(24 m^2)/g), started from the proposal; chains are
/// independent across points. If g is not supplied it is estimated as a
/// grid minimum of proposal/target.
inline weighted_sample_set mis_sample(const downward_closed_set& space, std::size_t n,
                                      std::uint64_t seed,
                                      double g_lower_bound = 0.0) {
    if (space.empty()) throw std::invalid_argument("mis_sample: empty space");
    tensor_basis basis(space);
    std::size_t d = space.dim();
    double g = g_lower_bound;
    if (g <= 0.0) g = estimate_mis_floor(basis, arcsine_density, d == 1 ? 4096 : 256);
    if (!(g > 0.0) || !std::isfinite(g))
        throw std::invalid_argument("mis_sample: proposal floor g not estimable");
    std::size_t burn = mis_burn_in(g, basis.size());

    weighted_sample_set out;
    out.d = d;
    out.spec = {sampler_kind::mis, d};
    out.rng_seed = seed;
    out.points.resize(n * d);
    out.weights.resize(n);
    parallel_for(n, [&](std::size_t i) {
        rng_stream rng(seed, {i, 0x3157ULL});
        std::vector<double> x(d), prop(d);
        for (std::size_t j = 0; j < d; ++j) x[j] = arcsine_draw(rng);
        double fx = optimal_density(basis, x) / arcsine_density(x);
        for (std::size_t s = 0; s < burn; ++s) {
            for (std::size_t j = 0; j < d; ++j) prop[j] = arcsine_draw(rng);
            double fp = optimal_density(basis, prop) / arcsine_density(prop);
            if (rng.uniform() * fx <= fp) {
                x = prop;
                fx = fp;
            }
        }
        for (std::size_t j = 0; j < d; ++j) out.points[i * d + j] = x[j];
        out.weights[i] = optimal_weight(basis, x);
    });
    return out;
}

enum class lp_norm { one, two, infinity };

struct stability_report {
    double margin = 0.0;    // ||1 - rho~/rho*|| in the requested norm
    double threshold = 0.0; // (1/6) m^{-1-1/p}
    bool pass = false;
};

inline double stability_threshold(std::size_t m, lp_norm p) {
    double inv_p = p == lp_norm::one ? 1.0 : p == lp_norm::two ? 0.5 : 0.0;
    return (1.0 / 6.0) * std::pow(static_cast<double>(m), -1.0 - inv_p);
}

/// Perturbation margin of a sampling density against the optimal one. The
/// norm is taken under the optimal distribution itself, estimated with a
/// Monte Carlo draw from it.
inline stability_report stability_margin(
    const downward_closed_set& space,
    const std::function<double(std::span<const double>)>& density_ratio,
    lp_norm p, std::size_t mc_points = 100000, std::uint64_t seed = 417) {
    tensor_basis basis(space);
    auto samples = sample_optimal(space, mc_points, seed);
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double dev = std::abs(1.0 - density_ratio(samples.point(i)));
        switch (p) {
            case lp_norm::one: acc += dev; break;
            case lp_norm::two: acc += dev * dev; break;
            case lp_norm::infinity: acc = std::max(acc, dev); break;
        }
    }
    stability_report rep;
    switch (p) {
        case lp_norm::one: rep.margin = acc / static_cast<double>(mc_points); break;
        case lp_norm::two:
            rep.margin = std::sqrt(acc / static_cast<double>(mc_points));
            break;
        case lp_norm::infinity: rep.margin = acc; break;
    }
    rep.threshold = stability_threshold(basis.size(), p);
    rep.pass = rep.margin <= rep.threshold;
    return rep;
}

struct density_bounds {
    double inf_density = 0.0;   // inf over the grid of d nu*/d lambda
    double sup_ratio = 0.0;     // sup of (d nu*/d lambda) / p_inf
};

/// Empirical bounds of the optimal density: it stays above a constant and
/// below a multiple of the arcsine density. Grid evaluation, d <= 3.
inline density_bounds density_bounds_check(const downward_closed_set& space,
                                           std::size_t grid_per_axis) {
    if (space.dim() > 3)
        throw std::invalid_argument("density_bounds_check: d must be <= 3");
    tensor_basis basis(space);
    std::size_t d = basis.dim();
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) total *= grid_per_axis;
    density_bounds b;
    b.inf_density = std::numeric_limits<double>::infinity();
    std::vector<double> y(d);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t p = 0; p < total; ++p) {
        for (std::size_t j = 0; j < d; ++j)
            y[j] = (static_cast<double>(idx[j]) + 0.5) / static_cast<double>(grid_per_axis);
        double rho = optimal_density(basis, y);
        b.inf_density = std::min(b.inf_density, rho);
        b.sup_ratio = std::max(b.sup_ratio, rho / arcsine_density(y));
        for (std::size_t j = d; j-- > 0;) {
            if (++idx[j] < grid_per_axis) break;
            idx[j] = 0;
        }
    }
    return b;
}

} // namespace mlsq

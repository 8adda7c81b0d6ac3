#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlsq/families.hpp"
#include "mlsq/least_squares.hpp"
#include "mlsq/multi_index.hpp"
#include "mlsq/sampling.hpp"

namespace mlsq {

struct adaptive_options {
    double kappa = coupling_kappa(1.0);
    double kappa_scale = 1.0;

    double effective_kappa() const { return kappa * kappa_scale; }
};

/// Per-level sample pool. Points are arcsine-distributed with the fixed
/// weight 1/p_inf, which is what makes extending the space without
/// discarding evaluations legitimate. Values hold f_l - f_{l-1}.
struct adaptive_pool {
    std::vector<double> points; // flat, point-major
    std::vector<double> weights;
    std::vector<double> values;

    std::size_t size() const { return weights.size(); }
};

/// Growing state of the adaptive run: a downward closed set over
/// (spatial block, level) indices, the per-level pools and fits, and
/// running work-rate estimates.
struct adaptive_state {
    std::size_t param_dim = 0;
    downward_closed_set index_set; // dimension param_dim + 1, level last
    std::vector<adaptive_pool> pools;
    std::vector<tensor_basis> bases;        // per-level union-of-blocks space
    std::vector<least_squares_fit> fits;    // per-level difference fit
    std::vector<double> observed_cost;      // cumulative per level
    std::vector<double> work_rates;         // per-evaluation estimate per level
    double total_work = 0.0;
    std::uint64_t seed = 0;
    adaptive_options options;

    int max_level() const {
        int L = -1;
        for (const auto& idx : index_set.members())
            L = std::max(L, idx[idx.dim() - 1]);
        return L;
    }

    /// Spatial block indices of the level-l slice.
    std::vector<multi_index> level_blocks(int level) const {
        std::vector<multi_index> out;
        for (const auto& idx : index_set.members()) {
            if (idx[idx.dim() - 1] != level) continue;
            std::vector<int> spatial(idx.entries().begin(), idx.entries().end() - 1);
            out.emplace_back(std::move(spatial));
        }
        return out;
    }

    std::size_t level_dim(int level) const {
        std::size_t dim = 0;
        for (const auto& k : level_blocks(level)) dim += block_size(k);
        return dim;
    }

    /// Current estimator: the sum of the per-level difference fits.
    double evaluate(std::span<const double> y) const {
        double s = 0.0;
        for (std::size_t l = 0; l < fits.size(); ++l)
            if (!fits[l].coefficients.empty()) s += fits[l].evaluate(bases[l], y);
        return s;
    }
};

namespace detail {

inline void split_candidate(const multi_index& cand, multi_index& spatial, int& level) {
    std::vector<int> s(cand.entries().begin(), cand.entries().end() - 1);
    spatial = multi_index(std::move(s));
    level = cand[cand.dim() - 1];
}

inline std::size_t pool_requirement(std::size_t dim, double kappa) {
    return dim == 0 ? 0 : sample_count_for(static_cast<double>(dim), kappa);
}

} // namespace detail

inline adaptive_state make_adaptive_state(std::size_t param_dim, std::uint64_t seed,
                                          adaptive_options options = {}) {
    adaptive_state st;
    st.param_dim = param_dim;
    st.seed = seed;
    st.options = options;
    return st;
}

/// Mean, over the candidate's neighbors inside the index set, of the
/// Euclidean norm of the neighbor-block coefficients of that level's
/// fit. A candidate with no neighbors (only the root, at startup) gets
/// infinite priority.
inline double gain(const multi_index& candidate, const adaptive_state& state) {
    if (!state.index_set.admits(candidate))
        throw std::invalid_argument("gain: candidate not admissible");
    auto nbrs = neighbors(candidate, state.index_set);
    if (nbrs.empty()) return std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const auto& nb : nbrs) {
        multi_index spatial;
        int level = 0;
        detail::split_candidate(nb, spatial, level);
        double norm_sq = 0.0;
        if (level < static_cast<int>(state.fits.size()) &&
            !state.fits[level].coefficients.empty()) {
            const auto& basis = state.bases[level];
            const auto& coef = state.fits[level].coefficients;
            for (const auto& e : block_indices(spatial)) {
                std::size_t pos = basis.position_of(e);
                if (pos != tensor_basis::npos) norm_sq += coef[pos] * coef[pos];
            }
        }
        sum += std::sqrt(norm_sq);
    }
    return sum / static_cast<double>(nbrs.size());
}

/// Work-rate estimate for evaluations of f_l - f_{l-1}: the observed
/// average once the level has been sampled, the family's declared cost
/// before that.
inline double level_work_rate(int level, const adaptive_state& state,
                              const level_family& family) {
    if (level < static_cast<int>(state.pools.size()) && state.pools[level].size() > 0)
        return state.observed_cost[level] / static_cast<double>(state.pools[level].size());
    double declared = family.nominal_cost(level);
    if (level > 0) declared += family.nominal_cost(level - 1);
    if (declared > 0.0) return declared;
    if (level > 0 && level - 1 < static_cast<int>(state.work_rates.size()) &&
        state.work_rates[level - 1] > 0.0)
        return state.work_rates[level - 1] * family.cost_growth_factor();
    return 1.0;
}

/// Predicted cost of admitting the candidate: the work rate of its level
/// times the number of additional samples the coupling requires.
inline double work_increment(const multi_index& candidate, const adaptive_state& state,
                             const level_family& family) {
    multi_index spatial;
    int level = 0;
    detail::split_candidate(candidate, spatial, level);
    double kappa = state.options.effective_kappa();
    std::size_t before = detail::pool_requirement(state.level_dim(level), kappa);
    std::size_t after = detail::pool_requirement(
        state.level_dim(level) + block_size(spatial), kappa);
    return level_work_rate(level, state, family) *
           static_cast<double>(after - before);
}

/// One expansion: picks the admissible index with the best gain/work
/// ratio, draws the newly required arcsine points of its level, extends
/// the pool, and refits that level on the enlarged space using the whole
/// pool.
inline void step(adaptive_state& state, const level_family& family) {
    auto admissible = admissible_set(state.index_set, state.param_dim + 1);
    if (admissible.empty()) throw std::logic_error("adaptive step: no admissible index");

    // argmax of gain/work; ties break lexicographically on (level, block)
    const multi_index* best = nullptr;
    double best_profit = -1.0;
    multi_index best_key, key, spatial;
    int level = 0;
    for (const auto& cand : admissible) {
        double g = gain(cand, state);
        double w = std::max(work_increment(cand, state, family), 1e-12);
        double profit = g / w;
        detail::split_candidate(cand, spatial, level);
        std::vector<int> key_entries;
        key_entries.push_back(level);
        for (std::size_t j = 0; j < spatial.dim(); ++j)
            key_entries.push_back(spatial[j]);
        key = multi_index(std::move(key_entries));
        if (!best || profit > best_profit ||
            (profit == best_profit && key < best_key)) {
            best = &cand;
            best_profit = profit;
            best_key = key;
        }
    }

    detail::split_candidate(*best, spatial, level);
    double kappa = state.options.effective_kappa();
    std::size_t dim_before = state.level_dim(level);
    std::size_t need_before = detail::pool_requirement(dim_before, kappa);
    std::size_t need_after =
        detail::pool_requirement(dim_before + block_size(spatial), kappa);

    state.index_set.insert_admissible(*best);
    if (level >= static_cast<int>(state.pools.size())) {
        state.pools.resize(level + 1);
        state.bases.resize(level + 1);
        state.fits.resize(level + 1);
        state.observed_cost.resize(level + 1, 0.0);
        state.work_rates.resize(level + 1, 0.0);
    }

    auto& pool = state.pools[level];
    if (need_after > need_before) {
        std::size_t fresh = need_after - need_before;
        auto pts = sample_arcsine(state.param_dim, fresh,
                                  derive_seed(state.seed, static_cast<std::uint64_t>(level)),
                                  pool.size());
        std::vector<double> values(fresh), costs(fresh);
        parallel_for(fresh, [&](std::size_t i) {
            evaluation e = family.evaluate_difference(level, pts.point(i));
            values[i] = e.value;
            costs[i] = e.cost;
        });
        for (std::size_t i = 0; i < fresh; ++i) {
            pool.points.insert(pool.points.end(), pts.point(i).begin(), pts.point(i).end());
            pool.weights.push_back(pts.weights[i]);
            pool.values.push_back(values[i]);
            state.observed_cost[level] += costs[i];
            state.total_work += costs[i];
        }
    }
    if (pool.size() > 0)
        state.work_rates[level] =
            state.observed_cost[level] / static_cast<double>(pool.size());

    // full refit of this level on the union-of-blocks space
    std::vector<multi_index> exps;
    for (const auto& k : state.level_blocks(level))
        for (auto& e : block_indices(k)) exps.push_back(e);
    tensor_basis basis{std::move(exps)};
    weighted_sample_set set;
    set.d = state.param_dim;
    set.spec = {sampler_kind::arcsine, state.param_dim};
    set.rng_seed = state.seed;
    set.points = pool.points;
    set.weights = pool.weights;
    least_squares_problem prob{std::move(basis), std::move(set), pool.values};
    state.fits[level] = solve(prob);
    state.bases[level] = std::move(prob.basis);
}

struct adaptive_budget {
    std::size_t max_steps = 0; // 0 = unbounded
    double max_work = 0.0;     // 0 = unbounded

    void validate() const {
        if (max_steps == 0 && max_work <= 0.0)
            throw std::invalid_argument("adaptive_budget: no bound given");
    }
};

/// Runs the adaptive loop until the step or work budget is exhausted and
/// returns the final state; the estimator is state.evaluate.
inline adaptive_state run_adaptive(const level_family& family,
                                   adaptive_budget budget, std::uint64_t seed,
                                   adaptive_options options = {}) {
    budget.validate();
    adaptive_state state = make_adaptive_state(family.dimension(), seed, options);
    std::size_t steps = 0;
    while (true) {
        if (budget.max_steps > 0 && steps >= budget.max_steps) break;
        if (budget.max_work > 0.0 && state.total_work >= budget.max_work) break;
        step(state, family);
        ++steps;
    }
    return state;
}

/// Rebuilds bases and fits from pools and the index set; used after a
/// checkpoint restore, where only the raw state travels.
inline void refit_all(adaptive_state& state) {
    int L = state.max_level();
    state.bases.assign(L + 1, {});
    state.fits.assign(L + 1, {});
    for (int l = 0; l <= L; ++l) {
        if (state.level_dim(l) == 0 || state.pools[l].size() == 0) continue;
        std::vector<multi_index> exps;
        for (const auto& k : state.level_blocks(l))
            for (auto& e : block_indices(k)) exps.push_back(e);
        tensor_basis basis{std::move(exps)};
        weighted_sample_set set;
        set.d = state.param_dim;
        set.spec = {sampler_kind::arcsine, state.param_dim};
        set.rng_seed = state.seed;
        set.points = state.pools[l].points;
        set.weights = state.pools[l].weights;
        least_squares_problem prob{std::move(basis), std::move(set), state.pools[l].values};
        state.fits[l] = solve(prob);
        state.bases[l] = std::move(prob.basis);
    }
}

} // namespace mlsq

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlsq/adaptive.hpp"
#include "mlsq/elliptic.hpp"
#include "mlsq/families.hpp"
#include "mlsq/multilevel.hpp"
#include "mlsq/version.hpp"

namespace mlsq {

using nlohmann::json;

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class method_kind { sl, ml, ml_conditioned, adaptive };

inline const char* to_string(method_kind m) {
    switch (m) {
        case method_kind::sl: return "sl";
        case method_kind::ml: return "ml";
        case method_kind::ml_conditioned: return "ml-conditioned";
        case method_kind::adaptive: return "adaptive";
    }
    return "?";
}

inline method_kind method_from_string(const std::string& s) {
    if (s == "sl") return method_kind::sl;
    if (s == "ml") return method_kind::ml;
    if (s == "ml-conditioned") return method_kind::ml_conditioned;
    if (s == "adaptive") return method_kind::adaptive;
    throw config_error("unknown method: " + s);
}

inline sampler_kind sampler_from_string(const std::string& s) {
    if (s == "optimal") return sampler_kind::optimal;
    if (s == "arcsine") return sampler_kind::arcsine;
    if (s == "mis") return sampler_kind::mis;
    throw config_error("unknown sampler: " + s);
}

/// Everything one experiment needs; mirrors the JSON config documents
/// field for field.
struct run_config {
    // problem
    std::string problem = "synthetic"; // or "elliptic2d"
    std::size_t d = 2;
    double r = 1.0, s = 3.0;               // elliptic coefficient exponents
    synthetic_rates rates{3.0, 2.0, 2.0, 2.0}; // synthetic family rates
    // method and sweep
    method_kind method = method_kind::ml;
    std::string sweep_kind = "L"; // "L" | "tolerance" | "budget"
    std::vector<double> sweep;
    sampler_kind sampler = sampler_kind::optimal;
    std::vector<std::uint64_t> seeds{0};
    std::size_t mc_count = 1000;
    std::string out = "run";
    // single-level grid
    std::vector<int> sl_levels{0, 1, 2, 3};
    std::vector<int> sl_degrees{1, 2, 3, 4};
    // flags
    bool nested_samples = false;
    bool include_solver_cost = false;
    std::string kappa_mode = "optimal"; // or "rigorous"
    std::string sigma_mode = "d";       // or "half-d"
    bool reference_exact = false;

    void validate() const {
        if (sweep.empty() && method != method_kind::sl)
            throw config_error("sweep must not be empty");
        if (seeds.empty()) throw config_error("seeds must not be empty");
        if (mc_count < 1) throw config_error("mc_count must be >= 1");
        if (problem != "synthetic" && problem != "elliptic2d")
            throw config_error("unknown problem: " + problem);
        if (sweep_kind != "L" && sweep_kind != "tolerance" && sweep_kind != "budget")
            throw config_error("unknown sweep kind: " + sweep_kind);
        if (method == method_kind::sl && (sl_levels.empty() || sl_degrees.empty()))
            throw config_error("single-level grid must not be empty");
    }
};

inline void to_json(json& j, const run_config& c) {
    j = json{{"problem", c.problem},
             {"d", c.d},
             {"r", c.r},
             {"s", c.s},
             {"rates",
              {{"alpha", c.rates.alpha},
               {"beta_s", c.rates.beta_s},
               {"beta_w", c.rates.beta_w},
               {"gamma", c.rates.gamma}}},
             {"method", to_string(c.method)},
             {"sweep_kind", c.sweep_kind},
             {"sweep", c.sweep},
             {"sampler", to_string(c.sampler)},
             {"seeds", c.seeds},
             {"mc_count", c.mc_count},
             {"out", c.out},
             {"sl_levels", c.sl_levels},
             {"sl_degrees", c.sl_degrees},
             {"flags",
              {{"nested_samples", c.nested_samples},
               {"include_solver_cost", c.include_solver_cost},
               {"kappa_mode", c.kappa_mode},
               {"sigma_mode", c.sigma_mode},
               {"reference_exact", c.reference_exact}}}};
}

inline void from_json(const json& j, run_config& c) {
    c.problem = j.value("problem", c.problem);
    c.d = j.value("d", c.d);
    c.r = j.value("r", c.r);
    c.s = j.value("s", c.s);
    if (j.contains("rates")) {
        const auto& r = j.at("rates");
        c.rates.alpha = r.value("alpha", c.rates.alpha);
        c.rates.beta_s = r.value("beta_s", c.rates.beta_s);
        c.rates.beta_w = r.value("beta_w", c.rates.beta_w);
        c.rates.gamma = r.value("gamma", c.rates.gamma);
    }
    if (j.contains("method")) c.method = method_from_string(j.at("method"));
    c.sweep_kind = j.value("sweep_kind", c.sweep_kind);
    if (j.contains("sweep")) c.sweep = j.at("sweep").get<std::vector<double>>();
    if (j.contains("sampler")) c.sampler = sampler_from_string(j.at("sampler"));
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.mc_count = j.value("mc_count", c.mc_count);
    c.out = j.value("out", c.out);
    if (j.contains("sl_levels")) c.sl_levels = j.at("sl_levels").get<std::vector<int>>();
    if (j.contains("sl_degrees"))
        c.sl_degrees = j.at("sl_degrees").get<std::vector<int>>();
    if (j.contains("flags")) {
        const auto& f = j.at("flags");
        c.nested_samples = f.value("nested_samples", c.nested_samples);
        c.include_solver_cost = f.value("include_solver_cost", c.include_solver_cost);
        c.kappa_mode = f.value("kappa_mode", c.kappa_mode);
        c.sigma_mode = f.value("sigma_mode", c.sigma_mode);
        c.reference_exact = f.value("reference_exact", c.reference_exact);
    }
}

inline std::unique_ptr<level_family> make_family(const run_config& c) {
    if (c.problem == "elliptic2d") return std::make_unique<elliptic_family>(c.d, c.r, c.s);
    if (c.problem == "synthetic")
        return std::make_unique<synthetic_family>(c.d, c.rates);
    throw config_error("unknown problem: " + c.problem);
}

/// Exponents used by the schedules: the elliptic benchmark converges at
/// second order with quadratic per-solve work and parametric smoothness
/// limited by the coefficient exponent s; sigma is the space-dimension
/// exponent, optionally halved to describe pre-asymptotic growth of
/// total-degree dimensions.
inline rate_params params_for(const run_config& c) {
    rate_params p;
    if (c.problem == "elliptic2d") {
        p.alpha = c.s;
        p.beta_s = p.beta_w = 2.0;
        p.gamma = 2.0;
    } else {
        p.alpha = c.rates.alpha;
        p.beta_s = c.rates.beta_s;
        p.beta_w = c.rates.beta_w;
        p.gamma = c.rates.gamma;
    }
    p.sigma = c.sigma_mode == "half-d" ? static_cast<double>(c.d) / 2.0
                                       : static_cast<double>(c.d);
    if (c.kappa_mode == "rigorous" && c.sampler == sampler_kind::arcsine)
        p.kappa_scale = std::pow(rejection_envelope(), -static_cast<double>(c.d));
    else if (c.kappa_mode != "optimal" && c.kappa_mode != "rigorous")
        throw config_error("unknown kappa mode: " + c.kappa_mode);
    return p;
}

/// One sweep point of one seed.
struct run_row {
    double sweep_value = 0.0; // L, tolerance, or budget as configured
    double work = 0.0;        // model work
    double wall_time_s = 0.0; // measured around evaluations and fits only
    double error = 0.0;
    double error_se = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> level_samples;
    std::vector<double> level_deviations;
    std::vector<bool> level_zeroed;

    bool operator==(const run_row& o) const {
        return sweep_value == o.sweep_value && work == o.work &&
               wall_time_s == o.wall_time_s && error == o.error &&
               error_se == o.error_se && seed == o.seed &&
               level_samples == o.level_samples &&
               level_deviations == o.level_deviations && level_zeroed == o.level_zeroed;
    }
};

struct run_record {
    json config_echo;
    std::vector<run_row> rows; // sorted by work
};

struct error_estimate {
    double error = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo estimate of the L2 distance between an estimator and the
/// next-finer evaluator, with the delta-method standard error of the
/// root. Reference values may be supplied to share the expensive finer
/// solves across rows with the same seed.
inline error_estimate mc_error(const std::function<double(std::span<const double>)>& estimate,
                               const level_family& family, int run_level, std::size_t M,
                               std::uint64_t seed, bool prefer_exact = false,
                               const std::vector<double>* cached_reference = nullptr) {
    if (M < 1) throw config_error("mc_error: M must be >= 1");
    std::size_t d = family.dimension();
    std::vector<double> sq(M);
    std::vector<double> refs;
    if (!cached_reference) {
        refs.resize(M);
        parallel_for(M, [&](std::size_t i) {
            std::vector<double> y(d);
            rng_stream rng(seed, {0xE5717ULL, i});
            for (std::size_t j = 0; j < d; ++j) y[j] = rng.uniform();
            refs[i] = reference_value(family, y, run_level, prefer_exact);
        });
        cached_reference = &refs;
    }
    for (std::size_t i = 0; i < M; ++i) {
        std::vector<double> y(d);
        rng_stream rng(seed, {0xE5717ULL, i});
        for (std::size_t j = 0; j < d; ++j) y[j] = rng.uniform();
        double diff = (*cached_reference)[i] - estimate(y);
        sq[i] = diff * diff;
    }
    double mean = 0.0;
    for (double v : sq) mean += v;
    mean /= static_cast<double>(M);
    double var = 0.0;
    for (double v : sq) var += (v - mean) * (v - mean);
    var /= static_cast<double>(M);
    error_estimate out;
    out.error = std::sqrt(mean);
    double se_mean = std::sqrt(var / static_cast<double>(M));
    out.std_error = out.error > 0.0 ? se_mean / (2.0 * out.error) : 0.0;
    return out;
}

/// Precomputes reference evaluations for the shared MC point set of a
/// seed; keyed by the run level so sweeps reuse finer solves.
class reference_cache {
public:
    reference_cache(const level_family& family, std::size_t M, std::uint64_t seed,
                    bool prefer_exact)
        : family_(family), m_(M), seed_(seed), exact_(prefer_exact) {}

    const std::vector<double>& at_level(int run_level) {
        int key = exact_ ? -1 : run_level;
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        std::vector<double> refs(m_);
        std::size_t d = family_.dimension();
        parallel_for(m_, [&](std::size_t i) {
            std::vector<double> y(d);
            rng_stream rng(seed_, {0xE5717ULL, i});
            for (std::size_t j = 0; j < d; ++j) y[j] = rng.uniform();
            refs[i] = reference_value(family_, y, run_level, exact_);
        });
        return cache_.emplace(key, std::move(refs)).first->second;
    }

private:
    const level_family& family_;
    std::size_t m_;
    std::uint64_t seed_;
    bool exact_;
    std::map<int, std::vector<double>> cache_;
};

namespace detail {

using clock = std::chrono::steady_clock;

inline double seconds_since(clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
}

} // namespace detail

/// One multilevel row: build the schedule at the family's refinement
/// ratio, run the estimator, and measure the error against the next
/// finer level at the shared MC points.
inline run_row run_ml_row(const run_config& c, const level_family& family,
                          const rate_params& params, int L, std::uint64_t seed,
                          reference_cache& refs) {
    auto t0 = detail::clock::now();
    auto schedule = build_schedule(params, L, total_degree_builder(family.dimension()),
                                   family.refinement_ratio(), c.include_solver_cost);
    multilevel_options opts;
    opts.sampler = c.sampler;
    opts.conditioned = c.method == method_kind::ml_conditioned;
    opts.nested_samples = c.nested_samples;
    auto est = run_multilevel(family, schedule, seed, opts);

    run_row row;
    row.seed = seed;
    row.work = est.work;
    if (c.include_solver_cost)
        for (double m_k : schedule.space_scales)
            row.work += std::pow(m_k, 2.0 * params.sigma);
    auto err = mc_error([&](std::span<const double> y) { return est.evaluate(y); },
                        family, L, c.mc_count, seed, c.reference_exact,
                        &refs.at_level(L));
    row.error = err.error;
    row.error_se = err.std_error;
    for (int l = 0; l <= L; ++l) {
        row.level_samples.push_back(schedule.sample_counts[L - l]);
        row.level_deviations.push_back(est.fits[l].gramian_deviation);
        row.level_zeroed.push_back(est.fits[l].conditioned_zeroed);
    }
    row.wall_time_s = detail::seconds_since(t0);
    return row;
}

/// One adaptive row driven by a work budget.
inline run_row run_adaptive_row(const run_config& c, const level_family& family,
                                const rate_params& params, double work_budget,
                                std::uint64_t seed, reference_cache& refs) {
    auto t0 = detail::clock::now();
    adaptive_options opts;
    opts.kappa_scale = params.kappa_scale;
    auto state = run_adaptive(family, {.max_work = work_budget}, seed, opts);
    run_row row;
    row.seed = seed;
    row.work = state.total_work;
    int L = std::max(state.max_level(), 0);
    auto err = mc_error([&](std::span<const double> y) { return state.evaluate(y); },
                        family, L, c.mc_count, seed, c.reference_exact,
                        &refs.at_level(L));
    row.error = err.error;
    row.error_se = err.std_error;
    for (const auto& pool : state.pools) row.level_samples.push_back(pool.size());
    for (const auto& fit : state.fits) {
        row.level_deviations.push_back(fit.gramian_deviation);
        row.level_zeroed.push_back(fit.conditioned_zeroed);
    }
    row.wall_time_s = detail::seconds_since(t0);
    return row;
}

/// Single-level grid: every (discretization level, total degree) pair,
/// each fit coupled to its own space dimension. The envelope over these
/// rows is taken in post-processing.
inline std::vector<run_row> run_sl_rows(const run_config& c, const level_family& family,
                                        const rate_params& params, std::uint64_t seed,
                                        reference_cache& refs) {
    std::vector<run_row> rows;
    double kappa = coupling_kappa(1.0) * params.kappa_scale;
    for (int n : c.sl_levels) {
        const auto& ref = refs.at_level(n);
        for (int m : c.sl_degrees) {
            auto t0 = detail::clock::now();
            auto space = total_degree_set(family.dimension(), m);
            std::size_t count =
                sample_count_for(static_cast<double>(space.size()), kappa);
            std::uint64_t cell_seed = derive_seed(seed, (n + 1) * 1000 + m);
            weighted_sample_set samples;
            switch (c.sampler) {
                case sampler_kind::optimal:
                    samples = sample_optimal(space, count, cell_seed);
                    break;
                case sampler_kind::arcsine:
                    samples = sample_arcsine(family.dimension(), count, cell_seed);
                    break;
                case sampler_kind::mis:
                    samples = mis_sample(space, count, cell_seed);
                    break;
            }
            least_squares_problem prob{tensor_basis(space), std::move(samples), {}};
            prob.values.resize(count);
            parallel_for(count, [&](std::size_t i) {
                prob.values[i] = family.evaluate(n, prob.samples.point(i)).value;
            });
            auto fit = c.method == method_kind::ml_conditioned ? solve_conditioned(prob)
                                                               : solve(prob);
            run_row row;
            row.seed = seed;
            row.sweep_value = n;
            row.work = static_cast<double>(count) * family.nominal_cost(n);
            auto err = mc_error(
                [&](std::span<const double> y) { return fit.evaluate(prob.basis, y); },
                family, n, c.mc_count, seed, c.reference_exact, &ref);
            row.error = err.error;
            row.error_se = err.std_error;
            row.level_samples = {count};
            row.level_deviations = {fit.gramian_deviation};
            row.level_zeroed = {fit.conditioned_zeroed};
            row.wall_time_s = detail::seconds_since(t0);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

/// Points of the running lower envelope: rows that improve on the best
/// error seen at smaller or equal work.
inline std::vector<run_row> lower_envelope(std::vector<run_row> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const run_row& a, const run_row& b) {
        return a.work < b.work;
    });
    std::vector<run_row> out;
    double best = std::numeric_limits<double>::infinity();
    for (auto& r : rows) {
        if (r.error < best) {
            best = r.error;
            out.push_back(std::move(r));
        }
    }
    return out;
}

/// Full sweep: dispatches per method, runs every (sweep value, seed)
/// pair, and returns rows sorted by work.
inline run_record run_sweep(const run_config& c) {
    c.validate();
    auto family = make_family(c);
    auto params = params_for(c);
    run_record record;
    json echo;
    to_json(echo, c);
    record.config_echo = echo;
    for (std::uint64_t seed : c.seeds) {
        reference_cache refs(*family, c.mc_count, seed, c.reference_exact);
        switch (c.method) {
            case method_kind::sl: {
                auto rows = run_sl_rows(c, *family, params, seed, refs);
                for (auto& r : rows) record.rows.push_back(std::move(r));
                break;
            }
            case method_kind::ml:
            case method_kind::ml_conditioned:
                for (double v : c.sweep) {
                    int L = c.sweep_kind == "tolerance"
                                ? choose_levels(params, v)
                                : static_cast<int>(v);
                    auto row = run_ml_row(c, *family, params, L, seed, refs);
                    row.sweep_value = v;
                    record.rows.push_back(std::move(row));
                }
                break;
            case method_kind::adaptive:
                for (double v : c.sweep) {
                    if (c.sweep_kind != "budget")
                        throw config_error("adaptive sweeps use work budgets");
                    auto row = run_adaptive_row(c, *family, params, v, seed, refs);
                    row.sweep_value = v;
                    record.rows.push_back(std::move(row));
                }
                break;
        }
    }
    std::stable_sort(record.rows.begin(), record.rows.end(),
                     [](const run_row& a, const run_row& b) { return a.work < b.work; });
    return record;
}

struct rate_fit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Least-squares slope of log(error) against log(work). When a log power
/// t is supplied, each row's work is divided by |log error|^t first, so
/// a bound work ~ eps^-lambda |log eps|^t fits a clean slope -1/lambda.
inline rate_fit fit_rate(const std::vector<run_row>& rows,
                         std::optional<double> log_power = std::nullopt) {
    std::vector<const run_row*> usable;
    for (const auto& r : rows)
        if (r.work > 0.0 && r.error > 0.0) usable.push_back(&r);
    if (usable.size() < 3)
        throw config_error("fit_rate: need at least 3 rows with positive work/error");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto* r : usable) {
        double w = r->work;
        if (log_power)
            w /= std::pow(std::max(std::abs(std::log(r->error)), 1.0), *log_power);
        double x = std::log(w), y = std::log(r->error);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double n = static_cast<double>(usable.size());
    rate_fit f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

/// CSV with a fixed column order: L, work, wall_time_s, error, error_se,
/// seed, then the per-level blocks (sample counts, deviations,
/// conditioned-zero flags), padded to the deepest row. wall_time_s is
/// the one non-deterministic column.
inline std::string to_csv(const run_record& record) {
    std::size_t depth = 0;
    for (const auto& r : record.rows) depth = std::max(depth, r.level_samples.size());
    std::ostringstream os;
    os << "L,work,wall_time_s,error,error_se,seed";
    for (std::size_t k = 0; k < depth; ++k) os << ",samples_" << k;
    for (std::size_t k = 0; k < depth; ++k) os << ",dev_" << k;
    for (std::size_t k = 0; k < depth; ++k) os << ",zeroed_" << k;
    os << '\n';
    for (const auto& r : record.rows) {
        os << detail::format_double(r.sweep_value) << ','
           << detail::format_double(r.work) << ','
           << detail::format_double(r.wall_time_s) << ','
           << detail::format_double(r.error) << ','
           << detail::format_double(r.error_se) << ',' << r.seed;
        for (std::size_t k = 0; k < depth; ++k) {
            os << ',';
            if (k < r.level_samples.size()) os << r.level_samples[k];
        }
        for (std::size_t k = 0; k < depth; ++k) {
            os << ',';
            if (k < r.level_deviations.size())
                os << detail::format_double(r.level_deviations[k]);
        }
        for (std::size_t k = 0; k < depth; ++k) {
            os << ',';
            if (k < r.level_zeroed.size()) os << (r.level_zeroed[k] ? 1 : 0);
        }
        os << '\n';
    }
    return os.str();
}

inline std::vector<run_row> parse_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw config_error("parse_csv: empty input");
    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    std::size_t depth = 0;
    for (const auto& h : header)
        if (h.rfind("samples_", 0) == 0) ++depth;
    std::vector<run_row> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        while (cells.size() < header.size()) cells.emplace_back();
        run_row r;
        r.sweep_value = std::stod(cells[0]);
        r.work = std::stod(cells[1]);
        r.wall_time_s = std::stod(cells[2]);
        r.error = std::stod(cells[3]);
        r.error_se = std::stod(cells[4]);
        r.seed = std::stoull(cells[5]);
        for (std::size_t k = 0; k < depth; ++k) {
            const auto& c = cells[6 + k];
            if (!c.empty()) r.level_samples.push_back(std::stoull(c));
        }
        for (std::size_t k = 0; k < depth; ++k) {
            const auto& c = cells[6 + depth + k];
            if (!c.empty()) r.level_deviations.push_back(std::stod(c));
        }
        for (std::size_t k = 0; k < depth; ++k) {
            const auto& c = cells[6 + 2 * depth + k];
            if (!c.empty()) r.level_zeroed.push_back(c == "1");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Writes the CSV and a metadata document (config echo, version, seeds,
/// fitted rates); byte-stable given identical records.
inline void emit(const run_record& record, const std::string& out_prefix) {
    {
        std::ofstream csv(out_prefix + ".csv", std::ios::binary);
        if (!csv) throw std::runtime_error("emit: cannot write " + out_prefix + ".csv");
        csv << to_csv(record);
    }
    json meta;
    meta["config"] = record.config_echo;
    meta["version"] = version_string;
    meta["rows"] = record.rows.size();
    std::vector<std::uint64_t> seeds;
    for (const auto& r : record.rows)
        if (seeds.empty() || seeds.back() != r.seed) seeds.push_back(r.seed);
    meta["seeds"] = seeds;
    if (record.rows.size() >= 3) {
        try {
            auto f = fit_rate(record.rows);
            meta["fitted_rate"] = {{"slope", f.slope}, {"intercept", f.intercept}};
        } catch (const config_error&) {
        }
    }
    std::ofstream mf(out_prefix + ".meta.json", std::ios::binary);
    if (!mf)
        throw std::runtime_error("emit: cannot write " + out_prefix + ".meta.json");
    mf << meta.dump(2) << '\n';
}

inline json schedule_to_json(const multilevel_schedule& s) {
    json j;
    j["levels"] = s.levels;
    j["shift"] = s.shift;
    j["delta"] = s.delta;
    j["level_scale"] = s.level_scale;
    j["kappa"] = s.kappa;
    j["regime"] = to_string(s.regime.which);
    j["lambda"] = s.regime.lambda;
    j["t"] = s.regime.t;
    j["space_scales"] = s.space_scales;
    j["disc_params"] = s.disc_params;
    j["sample_counts"] = s.sample_counts;
    std::vector<std::size_t> dims;
    for (const auto& sp : s.spaces) dims.push_back(sp.size());
    j["space_dims"] = dims;
    j["coupling_warnings"] = s.coupling_warnings;
    return j;
}

inline json estimate_to_json(const multilevel_estimate& est) {
    json j;
    j["schedule"] = schedule_to_json(est.schedule);
    j["work"] = est.work;
    j["conditioned"] = est.conditioned;
    json fits = json::array();
    for (std::size_t l = 0; l < est.fits.size(); ++l) {
        json f;
        f["level"] = l;
        f["gramian_deviation"] = est.fits[l].gramian_deviation;
        f["conditioned_zeroed"] = est.fits[l].conditioned_zeroed;
        f["solver_iterations"] = est.fits[l].solver_iterations;
        std::vector<std::vector<int>> exps;
        for (const auto& e : est.bases[l].exponents()) exps.push_back(e.entries());
        f["exponents"] = exps;
        f["coefficients"] = est.fits[l].coefficients;
        fits.push_back(std::move(f));
    }
    j["fits"] = fits;
    return j;
}

/// Adaptive checkpoints: raw state only; fits are rebuilt on restore.
inline json checkpoint_to_json(const adaptive_state& st) {
    json j;
    j["param_dim"] = st.param_dim;
    j["seed"] = st.seed;
    j["total_work"] = st.total_work;
    j["kappa"] = st.options.kappa;
    j["kappa_scale"] = st.options.kappa_scale;
    j["observed_cost"] = st.observed_cost;
    j["work_rates"] = st.work_rates;
    std::vector<std::vector<int>> indices;
    for (const auto& m : st.index_set.members()) indices.push_back(m.entries());
    j["index_set"] = indices;
    json pools = json::array();
    for (const auto& p : st.pools) {
        pools.push_back(json{{"points", p.points}, {"weights", p.weights},
                             {"values", p.values}});
    }
    j["pools"] = pools;
    return j;
}

/// Writes the raw state next to a newline-delimited dump of the index
/// set (one tuple per line, level last).
inline void write_adaptive_artifacts(const adaptive_state& st,
                                     const std::string& out_prefix) {
    {
        std::ofstream sf(out_prefix + ".state.json", std::ios::binary);
        if (!sf)
            throw std::runtime_error("cannot write " + out_prefix + ".state.json");
        sf << checkpoint_to_json(st).dump(2) << '\n';
    }
    std::ofstream xf(out_prefix + ".indexset.txt", std::ios::binary);
    if (!xf) throw std::runtime_error("cannot write " + out_prefix + ".indexset.txt");
    write_index_set(xf, st.index_set.members());
}

inline adaptive_state checkpoint_from_json(const json& j) {
    adaptive_options opts;
    opts.kappa = j.at("kappa").get<double>();
    opts.kappa_scale = j.at("kappa_scale").get<double>();
    adaptive_state st = make_adaptive_state(j.at("param_dim").get<std::size_t>(),
                                            j.at("seed").get<std::uint64_t>(), opts);
    st.total_work = j.at("total_work").get<double>();
    st.observed_cost = j.at("observed_cost").get<std::vector<double>>();
    st.work_rates = j.at("work_rates").get<std::vector<double>>();
    std::vector<multi_index> members;
    for (const auto& e : j.at("index_set"))
        members.emplace_back(e.get<std::vector<int>>());
    st.index_set = downward_closed_set(std::move(members));
    for (const auto& p : j.at("pools")) {
        adaptive_pool pool;
        pool.points = p.at("points").get<std::vector<double>>();
        pool.weights = p.at("weights").get<std::vector<double>>();
        pool.values = p.at("values").get<std::vector<double>>();
        st.pools.push_back(std::move(pool));
    }
    refit_all(st);
    return st;
}

} // namespace mlsq

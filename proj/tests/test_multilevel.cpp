#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mlsq/multilevel.hpp"
#include "mlsq/quadrature.hpp"

using namespace mlsq;

namespace {

// independent re-statement of the case table, ratio-based
regime_info table_oracle(const rate_params& p) {
    regime_info info;
    double q = p.gamma / p.beta_s, r = p.sigma / p.alpha;
    if (q < r) {
        info.which = regime::a;
        info.lambda = r;
        info.t = 2;
    } else if (q == r) {
        info.which = regime::b;
        info.lambda = r;
        info.t = 3 + r;
    } else {
        double theta = p.beta_s / p.beta_w;
        info.lambda = theta * q + (1 - theta) * r;
        info.which = p.beta_w == p.beta_s ? regime::c_equal : regime::c_strict;
        info.t = p.beta_w == p.beta_s ? 1 : 2;
    }
    return info;
}

} // namespace

TEST_CASE("regime classification examples") {
    rate_params p{3.0, 4.0, 2.0, 2.0, 2.0};
    auto r = classify_regime(p);
    CHECK(r.which == regime::a);
    CHECK(r.lambda == doctest::Approx(4.0 / 3.0));
    CHECK(r.t == 2.0);

    rate_params p6{3.0, 6.0, 2.0, 2.0, 2.0};
    auto r6 = classify_regime(p6);
    CHECK(r6.which == regime::a);
    CHECK(r6.lambda == doctest::Approx(2.0));
    CHECK(r6.t == 2.0);

    rate_params pe{1.0, 1.0, 1.0, 1.0, 1.0};
    auto re = classify_regime(pe);
    CHECK(re.which == regime::b);
    CHECK(re.lambda == doctest::Approx(1.0));
    CHECK(re.t == doctest::Approx(4.0));

    rate_params pc{3.0, 2.0, 2.0, 2.0, 2.0}; // gamma/beta_s = 1 > 2/3
    auto rc = classify_regime(pc);
    CHECK(rc.which == regime::c_equal);
    CHECK(rc.lambda == doctest::Approx(1.0));
    CHECK(rc.t == 1.0);

    rate_params ps{2.0, 1.0, 1.0, 3.0, 2.0}; // strict case, shifted
    auto rs = classify_regime(ps);
    CHECK(rs.which == regime::c_strict);
    CHECK(rs.shifted);
    CHECK(rs.delta == doctest::Approx((3.0 - 1.0) / (2.0 * (2.0 + 1.0))));

    CHECK_THROWS_AS(classify_regime(rate_params{1, 1, 2, 1, 1}), std::invalid_argument);
}

TEST_CASE("regime classification agrees with the table on random tuples") {
    rng_stream rng(5, {0});
    for (int rep = 0; rep < 1000; ++rep) {
        rate_params p;
        p.alpha = rng.uniform(0.2, 5.0);
        p.sigma = rng.uniform(0.2, 5.0);
        p.beta_s = rng.uniform(0.2, 5.0);
        p.beta_w = p.beta_s + (rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, 2.0));
        p.gamma = rng.uniform(0.2, 5.0);
        if (rep % 7 == 0) { // exercise the boundary exactly
            p.gamma = p.sigma;
            p.alpha = p.beta_s;
        }
        auto got = classify_regime(p);
        auto want = table_oracle(p);
        // cross-product comparison may classify float boundary cases into
        // a neighboring regime; lambda and t must still agree
        CHECK(got.lambda == doctest::Approx(want.lambda).epsilon(1e-12));
        CHECK(got.t == doctest::Approx(want.t).epsilon(1e-12));
    }
}

TEST_CASE("build_schedule basics") {
    rate_params p{3.0, 2.0, 2.0, 2.0, 2.0};
    auto s0 = build_schedule(p, 0, total_degree_builder(2));
    CHECK(s0.levels == 0);
    CHECK(s0.space_scales.size() == 1);
    CHECK(s0.space_scales[0] == doctest::Approx(1.0));
    CHECK(s0.disc_params[0] == doctest::Approx(1.0));
    CHECK(s0.sample_counts.size() == 1);

    auto s2 = build_schedule(p, 2, total_degree_builder(2));
    CHECK(s2.kappa == doctest::Approx((1.0 - std::log(2.0)) / 6.0).epsilon(1e-12));
    CHECK(s2.kappa == doctest::Approx(0.0511422).epsilon(1e-4));

    // constant ratio of consecutive space scales under the default level scale
    auto s5 = build_schedule(p, 5, total_degree_builder(2));
    double want_ratio = std::exp(1.0 / (p.sigma + p.alpha));
    for (int k = 0; k + 1 <= 5; ++k)
        CHECK(s5.space_scales[k + 1] / s5.space_scales[k] ==
              doctest::Approx(want_ratio).epsilon(1e-12));

    // strictly increasing sequences
    for (int k = 0; k + 1 <= 5; ++k) {
        CHECK(s5.space_scales[k + 1] > s5.space_scales[k]);
        CHECK(s5.disc_params[k + 1] > s5.disc_params[k]);
    }
}

TEST_CASE("schedule satisfies the sample-count coupling") {
    rng_stream rng(8, {1});
    for (int rep = 0; rep < 25; ++rep) {
        rate_params p;
        p.alpha = rng.uniform(0.5, 4.0);
        p.sigma = rng.uniform(0.5, 3.0);
        p.beta_s = rng.uniform(0.5, 3.0);
        p.beta_w = p.beta_s + rng.uniform(0.0, 1.0);
        p.gamma = rng.uniform(0.5, 3.0);
        int L = static_cast<int>(rng.uniform_index(5));
        double scale = rng.uniform() < 0.5 ? 0.0 : 2.0;
        auto s = build_schedule(p, L, total_degree_builder(2), scale);
        for (int k = 0; k <= L; ++k) {
            double n = static_cast<double>(s.sample_counts[k]);
            CHECK(s.kappa * n / std::log(n) >=
                  std::pow(s.space_scales[k], p.sigma) - 1e-9);
            CHECK(s.space_dim(k) >= static_cast<std::size_t>(
                                        std::ceil(std::pow(s.space_scales[k], p.sigma))));
        }
    }
}

TEST_CASE("choose_levels closed forms") {
    rate_params pa{2.0, 2.0, 1.0, 1.0, 0.4}; // gamma/beta_s < sigma/alpha, sigma = alpha
    CHECK(classify_regime(pa).which == regime::a);
    CHECK(choose_levels(pa, std::exp(-1.0)) == 2);

    rate_params pc{2.0, 0.5, 1.0, 3.0, 2.0}; // regime c with beta_w = gamma + beta_s
    CHECK(classify_regime(pc).which == regime::c_strict);
    CHECK(choose_levels(pc, std::exp(-3.0)) == 3);

    CHECK_THROWS_AS(choose_levels(pa, 1.0), std::domain_error);
    CHECK_THROWS_AS(choose_levels(pa, -0.5), std::domain_error);
}

TEST_CASE("choose_levels bisection residual") {
    rate_params pb{1.0, 1.0, 1.0, 1.0, 1.0};
    REQUIRE(classify_regime(pb).which == regime::b);
    double raw = choose_levels_real(pb, 0.1);
    double res = std::exp(-raw / 2.0) * (raw + 1.0) - 0.1;
    CHECK(std::abs(res) < 1e-9);
    CHECK(choose_levels(pb, 0.1) == static_cast<int>(std::ceil(raw - 1e-9)));
}

TEST_CASE("choose_levels never drops below |log eps|") {
    // regime c with beta_w > gamma + beta_s: formula value below |log eps|
    rate_params p{1.0, 0.5, 1.0, 3.0, 1.0};
    REQUIRE(classify_regime(p).which == regime::c_strict);
    double raw = choose_levels_real(p, 1e-4);
    double log_inv = -std::log(1e-4);
    CHECK(raw < log_inv);
    CHECK(choose_levels(p, 1e-4) == static_cast<int>(std::ceil(log_inv - 1e-9)));
}

TEST_CASE("work_estimate arithmetic") {
    multilevel_schedule s;
    s.levels = 0;
    s.sample_counts = {7};
    CHECK(work_estimate(s, [](int) { return 3.0; }) == doctest::Approx(21.0));

    multilevel_schedule s1;
    s1.levels = 1;
    s1.sample_counts = {5, 10};
    auto cost = [](int l) { return l == 0 ? 1.0 : 4.0; };
    CHECK(work_estimate(s1, cost) == doctest::Approx(35.0));
}

TEST_CASE("work_estimate matches a hand-summed dyadic cost model") {
    rate_params p{3.0, 2.0, 2.0, 2.0, 2.0};
    auto s = build_schedule(p, 2, total_degree_builder(2), 2.0);
    auto cost = [](int l) { return std::pow(2.0, 2.0 * (l + 1)); }; // h_l^{-2}
    double want = static_cast<double>(s.sample_counts[2]) * 4.0 +
                  static_cast<double>(s.sample_counts[1]) * (16.0 + 4.0) +
                  static_cast<double>(s.sample_counts[0]) * (64.0 + 16.0);
    CHECK(work_estimate(s, cost) == doctest::Approx(want));
}

TEST_CASE("work_estimate is monotone in L") {
    rate_params p{3.0, 2.0, 2.0, 2.0, 2.0};
    synthetic_family fam(2, {p.alpha, p.beta_s, p.beta_w, p.gamma});
    double prev = 0.0;
    for (int L = 0; L <= 5; ++L) {
        auto s = build_schedule(p, L, total_degree_builder(2), 2.0);
        double w = work_estimate(s, [&](int l) { return fam.nominal_cost(l); });
        CHECK(w > prev);
        prev = w;
    }
}

TEST_CASE("telescoping: level-independent family collapses to one projection") {
    auto f = [](std::span<const double> y) {
        return 1.0 + y[0] - 0.5 * y[1] + 0.25 * y[0] * y[1];
    };
    constant_level_family fam(2, f);
    rate_params p{3.0, 2.0, 2.0, 2.0, 2.0};
    auto schedule = build_schedule(p, 3, total_degree_builder(2), 2.0);
    auto est = run_multilevel(fam, schedule, 42);

    for (std::size_t l = 1; l < est.fits.size(); ++l)
        for (double c : est.fits[l].coefficients) CHECK(c == 0.0);

    // the single projection on the finest space with the level-0 stream
    const auto& space = schedule.spaces[schedule.levels];
    auto samples = sample_optimal(space, schedule.sample_counts[schedule.levels],
                                  derive_seed(42, 0));
    least_squares_problem prob{tensor_basis(space), std::move(samples), {}};
    prob.values.resize(prob.samples.size());
    for (std::size_t i = 0; i < prob.samples.size(); ++i)
        prob.values[i] = f(prob.samples.point(i));
    auto single = solve(prob);
    CHECK(est.fits[0].coefficients == single.coefficients);

    // and since f lies in every space, the estimate reproduces it
    if (est.fits[0].gramian_deviation <= 0.5) {
        rng_stream rng(4);
        for (int rep = 0; rep < 25; ++rep) {
            std::vector<double> y{rng.uniform(), rng.uniform()};
            CHECK(est.evaluate(y) == doctest::Approx(f(y)).epsilon(1e-8));
        }
    }
}

TEST_CASE("zero family gives a zero estimate but full model work") {
    constant_level_family fam(2, [](std::span<const double>) { return 0.0; });
    rate_params p{3.0, 2.0, 2.0, 2.0, 2.0};
    auto schedule = build_schedule(p, 2, total_degree_builder(2), 2.0);
    auto est = run_multilevel(fam, schedule, 7);
    std::vector<double> y{0.3, 0.6};
    CHECK(est.evaluate(y) == 0.0);
    double want = work_estimate(schedule, [&](int l) { return fam.nominal_cost(l); });
    CHECK(est.work == doctest::Approx(want));
    CHECK(est.work > 0.0);
}

TEST_CASE("estimator is linear in the data under a shared seed") {
    auto f = [](std::span<const double> y) { return std::sin(2.0 * y[0]) + y[1]; };
    auto f3 = [&](std::span<const double> y) { return 3.0 * f(y); };
    constant_level_family fam(2, f), fam3(2, f3);
    rate_params p{3.0, 2.0, 2.0, 2.0, 2.0};
    auto schedule = build_schedule(p, 2, total_degree_builder(2), 2.0);
    auto est = run_multilevel(fam, schedule, 99);
    auto est3 = run_multilevel(fam3, schedule, 99);
    rng_stream rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> y{rng.uniform(), rng.uniform()};
        CHECK(est3.evaluate(y) == doctest::Approx(3.0 * est.evaluate(y)).epsilon(1e-11));
    }
}

TEST_CASE("conditioned estimator coincides with the plain one in the good event") {
    synthetic_family fam(2, {3.0, 2.0, 2.0, 2.0});
    rate_params p{3.0, 2.0, 2.0, 2.0, 2.0};
    auto schedule = build_schedule(p, 2, total_degree_builder(2), 2.0);
    auto plain = run_multilevel(fam, schedule, 3);
    multilevel_options opts;
    opts.conditioned = true;
    auto cond = run_multilevel(fam, schedule, 3, opts);
    bool all_good = true;
    for (const auto& fit : plain.fits)
        if (fit.gramian_deviation > 0.5) all_good = false;
    REQUIRE(all_good);
    for (std::size_t l = 0; l < plain.fits.size(); ++l)
        CHECK(plain.fits[l].coefficients == cond.fits[l].coefficients);
}

TEST_CASE("nested arcsine sampling yields prefix point sets") {
    multilevel_options opts;
    opts.sampler = sampler_kind::arcsine;
    opts.nested_samples = true;
    synthetic_family fam(2, {3.0, 2.0, 2.0, 2.0});
    rate_params p{3.0, 2.0, 2.0, 2.0, 2.0};
    auto schedule = build_schedule(p, 2, total_degree_builder(2), 2.0);
    auto est = run_multilevel(fam, schedule, 5, opts);
    // with a shared stream, smaller level sets are prefixes of the larger
    auto big = sample_arcsine(2, schedule.sample_counts[2], 5);
    auto small = sample_arcsine(2, schedule.sample_counts[0], 5);
    for (std::size_t i = 0; i < small.points.size(); ++i)
        CHECK(small.points[i] == big.points[i]);
    CHECK(est.fits.size() == 3);

    multilevel_options bad;
    bad.sampler = sampler_kind::optimal;
    bad.nested_samples = true;
    CHECK_THROWS_AS(run_multilevel(fam, schedule, 5, bad), std::invalid_argument);
}

TEST_CASE("solver-cost schedule mode slows the space growth") {
    rate_params p{3.0, 2.0, 2.0, 2.0, 2.0};
    auto plain = build_schedule(p, 3, total_degree_builder(2), 2.0, false);
    auto solver = build_schedule(p, 3, total_degree_builder(2), 2.0, true);
    double want_plain = std::pow(2.0, (p.gamma + p.beta_s) / (p.sigma + p.alpha));
    double want_solver = std::pow(2.0, (p.gamma + p.beta_s) / (2.0 * p.sigma + p.alpha));
    CHECK(plain.space_scales[1] / plain.space_scales[0] ==
          doctest::Approx(want_plain).epsilon(1e-12));
    CHECK(solver.space_scales[1] / solver.space_scales[0] ==
          doctest::Approx(want_solver).epsilon(1e-12));
    CHECK(solver.space_scales[3] < plain.space_scales[3]);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mlsq/least_squares.hpp"
#include "mlsq/quadrature.hpp"
#include "mlsq/sampling.hpp"

using namespace mlsq;

namespace {

weighted_sample_set unit_weight_set(std::vector<double> flat_points, std::size_t d) {
    weighted_sample_set s;
    s.d = d;
    s.points = std::move(flat_points);
    s.weights.assign(s.points.size() / d, 1.0);
    return s;
}

// dense Gaussian-elimination solve, used only to cross-check CG
std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    std::size_t n = b.size();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
        std::swap(a[k], a[piv]);
        std::swap(b[k], b[piv]);
        for (std::size_t i = k + 1; i < n; ++i) {
            double f = a[i][k] / a[k][k];
            for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
        x[i] = s / a[i][i];
    }
    return x;
}

double quadrature_l2_distance(const tensor_basis& basis, const least_squares_fit& fit,
                              const std::function<double(std::span<const double>)>& f,
                              std::size_t q) {
    auto rule = gauss_rule(basis.dim(), q);
    double s = rule.integrate([&](std::span<const double> y) {
        double diff = fit.evaluate(basis, y) - f(y);
        return diff * diff;
    });
    return std::sqrt(std::max(s, 0.0));
}

} // namespace

TEST_CASE("sample_count_for") {
    double kappa = coupling_kappa(1.0); // (1 - log 2)/4
    CHECK(kappa == doctest::Approx(0.0767133).epsilon(1e-5));
    CHECK(sample_count_for(10.0, kappa) == 885);
    CHECK(sample_count_for(1e-12, kappa) == 3);
    for (double target : {0.5, 2.0, 7.0, 40.0}) {
        auto n1 = sample_count_for(target, kappa);
        auto n2 = sample_count_for(2.0 * target, kappa);
        CHECK(n2 >= 2 * n1);
        // minimality: N satisfies the coupling, N-1 does not
        double dn = static_cast<double>(n1);
        CHECK(kappa * dn / std::log(dn) >= target);
        if (n1 > 3) {
            double dm = static_cast<double>(n1 - 1);
            CHECK(kappa * dm / std::log(dm) < target);
        }
    }
}

TEST_CASE("assemble: constants with unit weights") {
    auto set = unit_weight_set({0.1, 0.5, 0.9, 0.2}, 1);
    tensor_basis basis(total_degree_set(1, 0));
    design_operator op(basis, set);
    REQUIRE(op.rows() == 4);
    REQUIRE(op.cols() == 1);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(op.entry(i, 0) == doctest::Approx(0.5)); // 1/sqrt(4)
    std::vector<double> values{1.0, 2.0, 3.0, 6.0};
    auto c = op.rhs(values);
    CHECK(c[0] == doctest::Approx(3.0)); // mean
    std::vector<double> zeros(4, 0.0);
    auto c0 = op.rhs(zeros);
    CHECK(c0[0] == 0.0);
}

TEST_CASE("assemble: hand-computed entries in one dimension") {
    std::vector<double> pts{0.1, 0.6, 0.85};
    auto set = unit_weight_set(std::vector<double>(pts), 1);
    tensor_basis basis(total_degree_set(1, 1));
    design_operator op(basis, set);
    double inv_sqrt_n = 1.0 / std::sqrt(3.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(op.entry(i, 0) == doctest::Approx(inv_sqrt_n));
        double want = inv_sqrt_n * std::sqrt(3.0) * (2.0 * pts[i] - 1.0);
        CHECK(op.entry(i, 1) == doctest::Approx(want).epsilon(1e-13));
    }
}

TEST_CASE("gramian deviation: exact zero for constants with optimal weight") {
    auto space = total_degree_set(1, 0);
    auto samples = sample_optimal(space, 50, 3);
    tensor_basis basis(space);
    design_operator op(basis, samples);
    CHECK(gramian_deviation(op) == 0.0);
}

TEST_CASE("gramian deviation: duplicated point matches closed-form eigenvalues") {
    tensor_basis basis(total_degree_set(1, 1));
    std::vector<double> y0{0.3};
    weighted_sample_set set;
    set.d = 1;
    for (int i = 0; i < 5; ++i) set.points.push_back(y0[0]);
    set.weights.assign(5, optimal_weight(basis, y0));
    design_operator op(basis, set);
    // rank one: eigenvalues are {w * sum B^2, 0}
    double trace = optimal_weight(basis, y0) * basis.sum_of_squares(y0);
    double want = std::max(std::abs(trace - 1.0), 1.0);
    CHECK(gramian_deviation(op) == doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("gramian deviation: median decreases from N to 4N") {
    auto space = total_degree_set(2, 5); // m = 21
    tensor_basis basis(space);
    std::size_t n = sample_count_for(21.0, coupling_kappa(1.0));
    std::vector<double> dev_n, dev_4n;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto s1 = sample_optimal(space, n, seed);
        auto s4 = sample_optimal(space, 4 * n, seed + 1000);
        dev_n.push_back(gramian_deviation(design_operator(basis, s1)));
        dev_4n.push_back(gramian_deviation(design_operator(basis, s4)));
    }
    std::sort(dev_n.begin(), dev_n.end());
    std::sort(dev_4n.begin(), dev_4n.end());
    CHECK(dev_4n[25] < dev_n[25]);
}

TEST_CASE("solve reproduces members of the space") {
    auto space = total_degree_set(2, 3);
    tensor_basis basis(space);
    rng_stream rng(9);
    std::size_t n = sample_count_for(static_cast<double>(basis.size()), coupling_kappa(1.0));
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> coef(basis.size());
        for (auto& c : coef) c = rng.uniform(-2.0, 2.0);
        auto samples = sample_optimal(space, n, 100 + rep);
        least_squares_problem prob{basis, samples, {}};
        prob.values.resize(samples.size());
        std::vector<double> vals(basis.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            basis.eval_all(samples.point(i), vals);
            prob.values[i] = std::inner_product(coef.begin(), coef.end(), vals.begin(), 0.0);
        }
        auto fit = solve(prob);
        if (fit.gramian_deviation <= 0.5) {
            double err2 = 0.0;
            for (std::size_t j = 0; j < coef.size(); ++j)
                err2 += (fit.coefficients[j] - coef[j]) * (fit.coefficients[j] - coef[j]);
            CHECK(std::sqrt(err2) < 1e-8); // coefficient error = orthonormal L2 error
        }
    }
}

TEST_CASE("solve: constant target") {
    auto space = total_degree_set(1, 2);
    tensor_basis basis(space);
    auto samples = sample_optimal(space, 400, 17);
    least_squares_problem prob{basis, samples, std::vector<double>(samples.size(), 2.5)};
    auto fit = solve(prob);
    REQUIRE(fit.gramian_deviation <= 0.5);
    CHECK(fit.coefficients[0] == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(std::abs(fit.coefficients[1]) < 1e-9);
    CHECK(std::abs(fit.coefficients[2]) < 1e-9);
    // discrete residual vanishes for a consistent system
    design_operator op(basis, samples);
    std::vector<double> mv(samples.size());
    op.apply(fit.coefficients, mv);
    double res = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double b = std::sqrt(samples.weights[i] / samples.size()) * 2.5;
        res += (mv[i] - b) * (mv[i] - b);
    }
    CHECK(std::sqrt(res) < 1e-9);
}

TEST_CASE("solve stays within the quasi-optimality factor for a cubic") {
    auto space = total_degree_set(1, 2);
    tensor_basis basis(space);
    auto cube = [](std::span<const double> y) { return y[0] * y[0] * y[0]; };
    std::size_t n = 200;
    // best-approximation proxy: L2-orthogonal truncation, measured in the
    // weighted sup norm on a grid
    auto rule = gauss_rule(1, 20);
    std::vector<double> best_coef(basis.size());
    for (std::size_t j = 0; j < basis.size(); ++j)
        best_coef[j] = rule.integrate([&](std::span<const double> y) {
            return cube(y) * tensor_eval(basis.exponents()[j], y);
        });
    double e_sup = 0.0;
    for (int i = 1; i < 2000; ++i) {
        std::vector<double> y{static_cast<double>(i) / 2000.0};
        std::vector<double> vals(basis.size());
        basis.eval_all(y, vals);
        double v = std::inner_product(best_coef.begin(), best_coef.end(), vals.begin(), 0.0);
        double w = optimal_weight(basis, y);
        e_sup = std::max(e_sup, std::abs(cube(y) - v) * std::sqrt(w));
    }
    int good = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto samples = sample_optimal(space, n, seed);
        least_squares_problem prob{basis, samples, {}};
        prob.values.resize(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i)
            prob.values[i] = cube(samples.point(i));
        auto fit = solve(prob);
        if (fit.gramian_deviation > 0.5) continue;
        ++good;
        double err = quadrature_l2_distance(basis, fit, cube, 20);
        CHECK(err <= (1.0 + std::sqrt(2.0) + 0.5) * e_sup);
    }
    CHECK(good >= 15);
}

TEST_CASE("conditioned solve matches plain solve in the good event") {
    auto space = total_degree_set(2, 2);
    tensor_basis basis(space);
    auto samples = sample_optimal(space, 500, 21);
    least_squares_problem prob{basis, samples, {}};
    prob.values.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        prob.values[i] = std::exp(samples.point(i)[0]) * samples.point(i)[1];
    auto plain = solve(prob);
    auto cond = solve_conditioned(prob);
    REQUIRE(plain.gramian_deviation <= 0.5);
    CHECK_FALSE(cond.conditioned_zeroed);
    CHECK(cond.coefficients == plain.coefficients); // bitwise identical
}

TEST_CASE("conditioned solve zeroes a forced ill-conditioned fit") {
    tensor_basis basis(total_degree_set(1, 2)); // m = 3
    weighted_sample_set set;
    set.d = 1;
    for (int i = 0; i < 7; ++i) set.points.push_back(0.42);
    std::vector<double> y0{0.42};
    set.weights.assign(7, optimal_weight(basis, y0));
    least_squares_problem prob{basis, set, std::vector<double>(7, 1.0)};
    auto fit = solve_conditioned(prob);
    CHECK(fit.conditioned_zeroed);
    CHECK(fit.gramian_deviation > 0.5);
    for (double c : fit.coefficients) CHECK(c == 0.0);
}

TEST_CASE("conditioned solve obeys the mean-square contract") {
    auto space = total_degree_set(1, 2);
    tensor_basis basis(space);
    auto f = [](std::span<const double> y) { return std::exp(y[0]); };
    auto rule = gauss_rule(1, 30);
    double f_norm_sq = rule.integrate([&](std::span<const double> y) {
        return f(y) * f(y);
    });
    // exact L2 best-approximation error: orthonormal tail energy
    double proj_energy = 0.0;
    for (std::size_t j = 0; j < basis.size(); ++j) {
        double cj = rule.integrate([&](std::span<const double> y) {
            return f(y) * tensor_eval(basis.exponents()[j], y);
        });
        proj_energy += cj * cj;
    }
    double e2_sq = f_norm_sq - proj_energy;

    double kappa = coupling_kappa(1.0);
    std::size_t n = sample_count_for(static_cast<double>(basis.size()), kappa);
    const int reps = 200;
    std::vector<double> sq_errors;
    for (int rep = 0; rep < reps; ++rep) {
        auto samples = sample_optimal(space, n, 3000 + rep);
        least_squares_problem prob{basis, samples, {}};
        prob.values.resize(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i)
            prob.values[i] = f(samples.point(i));
        auto fit = solve_conditioned(prob);
        double err = quadrature_l2_distance(basis, fit, f, 30);
        sq_errors.push_back(err * err);
    }
    double mean = std::accumulate(sq_errors.begin(), sq_errors.end(), 0.0) / reps;
    double var = 0.0;
    for (double e : sq_errors) var += (e - mean) * (e - mean);
    double se = std::sqrt(var / reps / reps);
    double bound = (1.0 + 4.0 * kappa / std::log(static_cast<double>(n))) * e2_sq +
                   2.0 * f_norm_sq / static_cast<double>(n); // r = 1
    CHECK(mean <= bound + 3.0 * se);
}

TEST_CASE("CG matches a dense solve") {
    auto space = total_degree_set(2, 7); // m = 36
    tensor_basis basis(space);
    auto samples = sample_optimal(space, 2500, 31);
    least_squares_problem prob{basis, samples, {}};
    prob.values.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto p = samples.point(i);
        prob.values[i] = std::sin(3.0 * p[0]) + p[1] * p[1];
    }
    auto fit = solve(prob);
    REQUIRE(fit.gramian_deviation <= 0.5);

    design_operator op(basis, samples);
    std::size_t m = basis.size();
    std::vector<std::vector<double>> g(m, std::vector<double>(m));
    std::vector<double> e(m, 0.0), col(m);
    for (std::size_t j = 0; j < m; ++j) {
        e[j] = 1.0;
        op.apply_gramian(e, col);
        for (std::size_t i = 0; i < m; ++i) g[i][j] = col[i];
        e[j] = 0.0;
    }
    auto x = dense_solve(g, op.rhs(prob.values));
    double diff = 0.0;
    for (std::size_t j = 0; j < m; ++j)
        diff = std::max(diff, std::abs(x[j] - fit.coefficients[j]));
    CHECK(diff < 1e-8);
}

TEST_CASE("discrete norm is a consistent estimate of the L2 norm") {
    auto space = total_degree_set(2, 3);
    tensor_basis basis(space);
    // fixed polynomial g: sum of a few basis functions
    std::vector<double> coef(basis.size(), 0.0);
    coef[0] = 1.0;
    coef[3] = -0.7;
    coef[basis.size() - 1] = 0.4;
    double g_l2_sq = 0.0;
    for (double c : coef) g_l2_sq += c * c;

    const std::size_t n = 10000;
    double mean = 0.0;
    const int sets = 100;
    for (int rep = 0; rep < sets; ++rep) {
        auto samples = sample_optimal(space, n, 500 + rep);
        double norm_sq = 0.0;
        std::vector<double> vals(basis.size());
        for (std::size_t i = 0; i < n; ++i) {
            basis.eval_all(samples.point(i), vals);
            double gv = std::inner_product(coef.begin(), coef.end(), vals.begin(), 0.0);
            norm_sq += samples.weights[i] * gv * gv;
        }
        mean += norm_sq / static_cast<double>(n);
    }
    mean /= sets;
    CHECK(std::abs(mean - g_l2_sq) / g_l2_sq < 0.05);
}

TEST_CASE("k_constant") {
    auto space = total_degree_set(1, 9); // m = 10
    tensor_basis basis(space);
    auto optimal_w = [&](std::span<const double> y) { return optimal_weight(basis, y); };
    CHECK(k_constant(space, optimal_w, 3000) == doctest::Approx(10.0).epsilon(1e-9));

    auto constants = total_degree_set(1, 0);
    auto unit_w = [](std::span<const double>) { return 1.0; };
    CHECK(k_constant(constants, unit_w, 1000) == doctest::Approx(1.0));

    auto arc_w = [](std::span<const double> y) { return arcsine_weight(y); };
    double k_arc = k_constant(space, arc_w, 5000);
    CHECK(k_arc >= 10.0);
    CHECK(k_arc <= rejection_envelope() * 10.0);
}

TEST_CASE("ill-conditioning frequency drops with N") {
    auto space = total_degree_set(2, 4); // m = 15
    tensor_basis basis(space);
    auto count_bad = [&](std::size_t n, std::uint64_t base) {
        int bad = 0;
        for (std::uint64_t s = 0; s < 40; ++s) {
            auto set = sample_optimal(space, n, base + s);
            if (gramian_deviation(design_operator(basis, set)) > 0.5) ++bad;
        }
        return bad;
    };
    CHECK(count_bad(400, 0) <= count_bad(60, 100));
}

TEST_CASE("fits serialize as exponent/coefficient rows") {
    tensor_basis basis(total_degree_set(2, 1));
    least_squares_fit fit;
    fit.coefficients = {1.5, -2.0, 0.25};
    std::ostringstream os;
    write_fit(os, basis, fit);
    CHECK(os.str() == "0 0 1.5\n0 1 -2\n1 0 0.25\n");
}

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlsq/harness.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numerical = 3;
constexpr int exit_io = 4;

std::vector<double> parse_sweep(const std::string& spec) {
    std::vector<double> out;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
}

struct inline_overrides {
    std::function<void(mlsq::run_config&)> apply;
};

int run_command(const std::string& config_path,
                const std::function<void(mlsq::run_config&)>& apply_inline,
                const std::string& checkpoint_out, const std::string& resume_path) {
    mlsq::run_config config;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "error:io: cannot read config " << config_path << "\n";
            return exit_io;
        }
        mlsq::json j = mlsq::json::parse(in);
        mlsq::from_json(j, config);
    }
    apply_inline(config);
    config.validate();

    if (!resume_path.empty() || !checkpoint_out.empty()) {
        if (config.method != mlsq::method_kind::adaptive)
            throw mlsq::config_error("checkpointing applies to adaptive runs only");
    }
    if (!resume_path.empty()) {
        std::ifstream in(resume_path);
        if (!in) {
            std::cerr << "error:io: cannot read checkpoint " << resume_path << "\n";
            return exit_io;
        }
        auto state = mlsq::checkpoint_from_json(mlsq::json::parse(in));
        auto family = mlsq::make_family(config);
        double budget = config.sweep.empty() ? 0.0 : config.sweep.back();
        while (state.total_work < budget) mlsq::step(state, *family);
        if (!checkpoint_out.empty()) mlsq::write_adaptive_artifacts(state, checkpoint_out);
        std::cout << "resumed to work " << state.total_work << ", index set size "
                  << state.index_set.size() << "\n";
        return exit_ok;
    }

    auto record = mlsq::run_sweep(config);
    mlsq::emit(record, config.out);
    std::cout << "wrote " << config.out << ".csv (" << record.rows.size()
              << " rows) and " << config.out << ".meta.json\n";

    if (!checkpoint_out.empty()) {
        auto family = mlsq::make_family(config);
        auto params = mlsq::params_for(config);
        mlsq::adaptive_options opts;
        opts.kappa_scale = params.kappa_scale;
        auto state = mlsq::run_adaptive(
            *family, {.max_work = config.sweep.back()}, config.seeds.front(), opts);
        mlsq::write_adaptive_artifacts(state, checkpoint_out);
        std::cout << "wrote " << checkpoint_out << ".state.json and "
                  << checkpoint_out << ".indexset.txt\n";
    }
    return exit_ok;
}

int fit_command(const std::string& in_path, double log_power, bool have_power) {
    std::ifstream in(in_path);
    if (!in) {
        std::cerr << "error:io: cannot read " << in_path << "\n";
        return exit_io;
    }
    auto rows = mlsq::parse_csv(in);
    auto fit = have_power ? mlsq::fit_rate(rows, log_power) : mlsq::fit_rate(rows);
    std::printf("rows %zu\nslope %.6f\nintercept %.6f\n", rows.size(), fit.slope,
                fit.intercept);
    return exit_ok;
}

int check_command(std::size_t d, int degree, std::size_t grid, double contamination) {
    auto space = mlsq::total_degree_set(d, degree);
    mlsq::tensor_basis basis(space);
    std::printf("space: total degree %d in %zu dims, dimension %zu\n", degree, d,
                basis.size());

    auto w_opt = [&](std::span<const double> y) { return mlsq::optimal_weight(basis, y); };
    auto w_arc = [](std::span<const double> y) { return mlsq::arcsine_weight(y); };
    double k_opt = mlsq::k_constant(space, w_opt, grid);
    double k_arc = mlsq::k_constant(space, w_arc, grid);
    std::printf("k_constant optimal weight: %.6f (dimension %zu)\n", k_opt, basis.size());
    std::printf("k_constant arcsine weight: %.6f (envelope bound %.6f)\n", k_arc,
                mlsq::rejection_envelope() * static_cast<double>(basis.size()));

    auto bounds = mlsq::density_bounds_check(space, grid);
    std::printf("density inf: %.6e, sup over arcsine: %.6e\n", bounds.inf_density,
                bounds.sup_ratio);

    auto ratio = [&](std::span<const double> y) {
        return (1.0 - contamination) + contamination / mlsq::optimal_density(basis, y);
    };
    for (auto p : {mlsq::lp_norm::one, mlsq::lp_norm::two, mlsq::lp_norm::infinity}) {
        auto rep = mlsq::stability_margin(space, ratio, p, 20000, 1);
        const char* label =
            p == mlsq::lp_norm::one ? "1" : p == mlsq::lp_norm::two ? "2" : "inf";
        std::printf("stability p=%s: margin %.6e threshold %.6e -> %s\n", label,
                    rep.margin, rep.threshold, rep.pass ? "pass" : "fail");
    }
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multilevel weighted least squares approximation"};
    app.require_subcommand(1);

    // run: inline flags override config-file fields when given explicitly
    auto* run = app.add_subcommand("run", "run an experiment sweep");
    std::string config_path, sweep_spec, checkpoint_out, resume_path;
    std::string method = "ml", sampler = "optimal", problem = "synthetic";
    std::string sweep_kind = "L", out = "run";
    std::size_t dim = 2, mc_count = 1000;
    std::vector<std::uint64_t> seeds;
    run->add_option("--config", config_path, "JSON config file");
    auto* problem_opt = run->add_option("--problem", problem, "synthetic | elliptic2d");
    auto* method_opt =
        run->add_option("--method", method, "sl | ml | ml-conditioned | adaptive");
    auto* d_opt = run->add_option("--d", dim, "parameter dimension");
    auto* sweep_opt = run->add_option("--sweep", sweep_spec, "comma-separated values");
    auto* kind_opt = run->add_option("--sweep-kind", sweep_kind, "L | tolerance | budget");
    auto* seed_opt = run->add_option("--seed", seeds, "seed list");
    auto* sampler_opt = run->add_option("--sampler", sampler, "optimal | arcsine | mis");
    auto* mc_opt = run->add_option("--mc-count", mc_count, "error MC sample count");
    auto* out_opt = run->add_option("--out", out, "output path prefix");
    run->add_option("--checkpoint-out", checkpoint_out, "adaptive state output");
    run->add_option("--resume", resume_path, "adaptive state to resume");

    // fit
    auto* fit = app.add_subcommand("fit", "fit work-error rates on a CSV");
    std::string fit_in;
    double log_power = 0.0;
    fit->add_option("--in", fit_in, "CSV produced by run")->required();
    auto* power_opt = fit->add_option("--log-power", log_power,
                                      "divide work by |log error|^t before fitting");

    // check
    auto* check = app.add_subcommand("check", "sampling diagnostics for a space");
    std::size_t check_d = 1, check_grid = 2000;
    int check_degree = 5;
    double contamination = 0.01;
    check->add_option("--d", check_d, "dimension (<= 3)");
    check->add_option("--degree", check_degree, "total degree");
    check->add_option("--grid", check_grid, "grid points per axis");
    check->add_option("--contamination", contamination, "uniform density contamination");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            auto apply_inline = [&](mlsq::run_config& c) {
                if (problem_opt->count()) c.problem = problem;
                if (method_opt->count()) c.method = mlsq::method_from_string(method);
                if (d_opt->count()) c.d = dim;
                if (sweep_opt->count()) c.sweep = parse_sweep(sweep_spec);
                if (kind_opt->count()) c.sweep_kind = sweep_kind;
                if (seed_opt->count()) c.seeds = seeds;
                if (sampler_opt->count()) c.sampler = mlsq::sampler_from_string(sampler);
                if (mc_opt->count()) c.mc_count = mc_count;
                if (out_opt->count()) c.out = out;
            };
            return run_command(config_path, apply_inline, checkpoint_out, resume_path);
        }
        if (fit->parsed()) return fit_command(fit_in, log_power, power_opt->count() > 0);
        if (check->parsed())
            return check_command(check_d, check_degree, check_grid, contamination);
    } catch (const mlsq::config_error& e) {
        std::cerr << "error:config: " << e.what() << "\n";
        return exit_config;
    } catch (const mlsq::numerical_failure& e) {
        std::cerr << "error:numerical: " << e.what() << "\n";
        return exit_numerical;
    } catch (const mlsq::json::exception& e) {
        std::cerr << "error:config: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error:runtime: " << e.what() << "\n";
        return exit_numerical;
    }
    return exit_ok;
}

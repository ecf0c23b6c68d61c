#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "rankfolio/estimate.hpp"
#include "rankfolio/io.hpp"
#include "rankfolio/strategy.hpp"
#include "rankfolio/verify.hpp"

namespace {

using nlohmann::ordered_json;
using namespace rankfolio;

ordered_json json_vector(const Vector& v) {
    ordered_json a = ordered_json::array();
    for (double x : v) a.push_back(x);
    return a;
}

ordered_json json_matrix(const Matrix& m) {
    ordered_json a = ordered_json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(row);
    }
    return a;
}

ordered_json report_header(const io::AppConfig& cfg) {
    ordered_json j;
    j["schema_version"] = io::kSchemaVersion;
    j["fingerprint"] = io::fingerprint_hex(cfg.model, cfg.prefs, cfg.constraint, cfg.sim);
    j["seed"] = cfg.sim.master_seed;
    return j;
}

ordered_json json_constraint(const ConstraintSpec& c) {
    ordered_json j;
    j["kind"] = io::constraint_name(c.kind);
    if (c.kind != ConstraintKind::Unconstrained) {
        j["n"] = c.lo;
        j["N"] = c.hi;
    }
    return j;
}

ordered_json json_estimate(const ValueEstimate& est) {
    ordered_json j;
    j["mean"] = est.mean;
    j["stderr"] = est.stderr_;
    j["n_paths"] = est.n_paths;
    j["n_inadmissible"] = est.n_inadmissible;
    j["reliable"] = est.reliable;
    return j;
}

int cmd_validate(const io::AppConfig& cfg) {
    const ValidationReport rep = validate(cfg.model);
    ordered_json j = report_header(cfg);
    j["passed"] = rep.passed;
    j["min_eigenvalue"] = rep.min_eigenvalue;
    ordered_json checks = ordered_json::array();
    for (const auto& c : rep.checks) {
        ordered_json cj;
        cj["name"] = c.name;
        cj["passed"] = c.passed;
        if (!c.detail.empty()) cj["detail"] = c.detail;
        cj["value"] = c.value;
        checks.push_back(cj);
    }
    j["checks"] = checks;
    std::cout << j.dump(2) << '\n';
    return rep.passed ? 0 : 1;
}

int cmd_solve(const io::AppConfig& cfg) {
    const ClosedFormSolution sol = solve_closed_form(cfg.model, cfg.prefs, cfg.constraint);
    ordered_json j = report_header(cfg);
    j["constraint"] = json_constraint(cfg.constraint);
    j["pi_tilde_star"] = json_vector(sol.pi_tilde_star);
    j["kappa"] = sol.kappa;
    ordered_json fg = ordered_json::array();
    const int n_f = 20;
    for (int i = 0; i <= n_f; ++i) {
        const double t = cfg.prefs.horizon * i / n_f;
        ordered_json e;
        e["t"] = t;
        e["f"] = f_eval(t, sol.kappa, cfg.prefs);
        fg.push_back(e);
    }
    j["f_grid"] = fg;
    j["value_at"] = value_closed_form(cfg.sim.t0, cfg.w0, sol);
    j["consumption_at"] = consumption_rate(cfg.sim.t0, cfg.w0, sol);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_simulate(const io::AppConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    PathBundle b;
    if (cfg.sim.scheme == Scheme::NamedLogEuler) {
        b = simulate_named(cfg.model, cfg.x0, cfg.sim);
    } else {
        Vector y0 = rank_of(cfg.x0).sorted;
        b = simulate_ranked_reflected(cfg.model, y0, cfg.sim);
    }
    const std::string csv = (fs::path(out_dir) / "paths.csv").string();
    const std::string meta = (fs::path(out_dir) / "paths.meta.json").string();
    io::write_bundle_csv(b, csv, meta,
                         io::fingerprint_hex(cfg.model, cfg.prefs, cfg.constraint, cfg.sim));
    ordered_json j = report_header(cfg);
    j["scheme"] = io::scheme_name(cfg.sim.scheme);
    j["csv"] = csv;
    j["meta"] = meta;
    std::int64_t ok = 0;
    for (auto f : b.ok) ok += f;
    j["paths_ok"] = ok;
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_value(const io::AppConfig& cfg) {
    const ClosedFormSolution sol = solve_closed_form(cfg.model, cfg.prefs, cfg.constraint);
    const MarketState state{cfg.sim.t0, cfg.x0, cfg.w0};
    const ValueEstimate est = mc_value(cfg.model, cfg.prefs, feedback_strategy(sol), state, cfg.sim);
    ordered_json j = report_header(cfg);
    j["constraint"] = json_constraint(cfg.constraint);
    j["mc_value"] = json_estimate(est);
    j["closed_form_value"] = value_closed_form(cfg.sim.t0, cfg.w0, sol);
    const double z = est.stderr_ > 0.0
                         ? (est.mean - value_closed_form(cfg.sim.t0, cfg.w0, sol)) / est.stderr_
                         : 0.0;
    j["z_score"] = z;
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_verify(const io::AppConfig& cfg) {
    const ClosedFormSolution sol = solve_closed_form(cfg.model, cfg.prefs, cfg.constraint);

    const ResidualReport hjb = hjb_residual(sol, cfg.model);
    const auto samples = make_boundary_samples(cfg.model.d, 32, cfg.prefs.horizon, 7u);
    const CandidateFn closed_form_candidate = [&sol](double t, const Vector&, double w) {
        return value_closed_form(t, w, sol);
    };
    const double neumann = neumann_check(closed_form_candidate, samples);

    const MarketState state{cfg.sim.t0, cfg.x0, cfg.w0};
    const ValueEstimate est = mc_value(cfg.model, cfg.prefs, feedback_strategy(sol), state, cfg.sim);
    const double vstar = value_closed_form(cfg.sim.t0, cfg.w0, sol);
    const double z = est.stderr_ > 0.0 ? (est.mean - vstar) / est.stderr_ : 0.0;

    const auto perts = standard_perturbations(sol, cfg.model.d, cfg.sim.master_seed + 101);
    const auto gaps = optimality_gap(cfg.model, cfg.prefs, sol, perts, state, cfg.sim);

    bool ok = hjb.max_normalized_residual < 1e-6 && std::abs(z) <= 3.0 && est.reliable;
    ordered_json gj = ordered_json::array();
    for (const auto& e : gaps) {
        ordered_json g;
        g["name"] = e.name;
        g["gap"] = e.gap;
        g["stderr"] = e.stderr_;
        g["z"] = e.z();
        gj.push_back(g);
        if (e.gap < -2.0 * e.stderr_) ok = false;
    }

    ordered_json j = report_header(cfg);
    j["constraint"] = json_constraint(cfg.constraint);
    j["hjb_residual"] = hjb.max_normalized_residual;
    j["hjb_terminal_gap"] = hjb.terminal_gap;
    j["hjb_maximizer_improvement"] = hjb.maximizer_improvement;
    j["neumann_max"] = neumann;
    j["mc_value"] = json_estimate(est);
    j["closed_form_value"] = vstar;
    j["z_score"] = z;
    j["gaps"] = gj;
    j["bands_ok"] = ok;
    std::cout << j.dump(2) << '\n';
    return ok ? 0 : 1;
}

int cmd_estimate(const io::AppConfig& cfg, const std::string& in_csv) {
    PathBundle b;
    if (!in_csv.empty()) {
        b = io::read_bundle_csv(in_csv);
    } else {
        Vector y0 = rank_of(cfg.x0).sorted;
        b = simulate_ranked_reflected(cfg.model, y0, cfg.sim);
    }
    const EstimationResult est = collision_drift_estimator(b);
    ordered_json j = report_header(cfg);
    j["n_paths"] = est.n_paths;
    j["horizon"] = est.horizon;
    j["phi_source"] = est.phi_source;
    j["mu_hat"] = json_vector(est.mu_hat);
    j["mu_stderr"] = json_vector(est.mu_stderr);
    j["a_hat"] = json_matrix(est.a_hat);
    j["a_stderr"] = json_matrix(est.a_stderr);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_compare(const io::AppConfig& cfg) {
    const ClosedFormSolution sol = solve_closed_form(cfg.model, cfg.prefs, cfg.constraint);
    const MarketState state{cfg.sim.t0, cfg.x0, cfg.w0};
    const auto perts = standard_perturbations(sol, cfg.model.d, cfg.sim.master_seed + 101);
    const auto gaps = optimality_gap(cfg.model, cfg.prefs, sol, perts, state, cfg.sim);
    ordered_json j = report_header(cfg);
    ordered_json gj = ordered_json::array();
    for (const auto& e : gaps) {
        ordered_json g;
        g["name"] = e.name;
        g["gap"] = e.gap;
        g["stderr"] = e.stderr_;
        g["z"] = e.z();
        g["n_inadmissible"] = e.n_inadmissible;
        gj.push_back(g);
    }
    j["gaps"] = gj;
    std::cout << j.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rank-based market simulator and closed-form strategy toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string in_csv;
    std::int64_t seed_override = -1;
    std::int64_t paths_override = -1;
    int steps_override = -1;
    int threads_override = -1;

    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--seed", seed_override, "override master seed");
    app.add_option("--paths", paths_override, "override path count");
    app.add_option("--steps", steps_override, "override step count");
    app.add_option("--threads", threads_override, "worker cap (results are independent of it)");
    app.add_option("--out", out_dir, "output directory (default $RANKFOLIO_OUT or .)");

    auto* c_validate = app.add_subcommand("validate", "model assumption checks");
    auto* c_solve = app.add_subcommand("solve", "closed-form optimal strategy");
    auto* c_simulate = app.add_subcommand("simulate", "simulate paths to CSV");
    auto* c_value = app.add_subcommand("value", "Monte Carlo value estimate");
    auto* c_verify = app.add_subcommand("verify", "residuals, gaps, MC-vs-closed-form");
    auto* c_estimate = app.add_subcommand("estimate", "parameter recovery from paths");
    auto* c_compare = app.add_subcommand("compare", "optimality gap table");
    c_estimate->add_option("--in", in_csv, "bundle CSV to estimate from");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (out_dir.empty()) {
        const char* env = std::getenv("RANKFOLIO_OUT");
        out_dir = env ? env : ".";
    }

    try {
        io::AppConfig cfg = io::load_config(config_path);
        if (seed_override >= 0) cfg.sim.master_seed = static_cast<std::uint64_t>(seed_override);
        if (paths_override > 0) cfg.sim.n_paths = paths_override;
        if (steps_override > 0) cfg.sim.n_steps = steps_override;
        if (threads_override > 0) cfg.sim.threads = threads_override;

        if (c_validate->parsed()) return cmd_validate(cfg);

        const ValidationReport rep = validate(cfg.model);
        if (!rep.passed) {
            std::cerr << "config: model failed validation; run the validate command for details\n";
            return 2;
        }
        if (c_solve->parsed()) return cmd_solve(cfg);
        if (c_simulate->parsed()) return cmd_simulate(cfg, out_dir);
        if (c_value->parsed()) return cmd_value(cfg);
        if (c_verify->parsed()) return cmd_verify(cfg);
        if (c_estimate->parsed()) return cmd_estimate(cfg, in_csv);
        if (c_compare->parsed()) return cmd_compare(cfg);
    } catch (const std::runtime_error& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}

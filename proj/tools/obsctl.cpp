#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "obsopt/config.hpp"
#include "obsopt/io.hpp"
#include "obsopt/oracle.hpp"
#include "obsopt/stationarity.hpp"

namespace fs = std::filesystem;
using namespace obsopt;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitSolverFailure = 3;

Eigen::VectorXd read_interior(const fs::path& dir, const std::string& name, int nsub,
                              const Mesh& mesh) {
    const io::FieldFile f = io::read_field_file((dir / name).string());
    if (f.nsub != nsub)
        throw InvalidData("verify: field '" + name + "' has nsub=" + std::to_string(f.nsub) +
                          ", config says " + std::to_string(nsub));
    if (f.values.size() == mesh.n_interior()) return f.values;
    return restrict_interior(mesh, f.values);
}

int run_solve(const ScenarioConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    const OCPProblem pb = build_problem(cfg);
    const Mesh& mesh = pb.sp().mesh();
    const PathSchedule schedule = build_schedule(cfg);
    const PathHistory hist = path_follow(pb, schedule);

    {
        std::ofstream csv(out / "path.csv");
        io::write_path_csv(csv, hist);
    }
    if (hist.iterates.empty()) {
        std::cerr << "solver failure before the first path step: " << hist.failure_message
                  << "\n";
        return kExitSolverFailure;
    }
    const OCPIterate& fin = hist.final_iterate();
    io::write_field_file((out / "y.txt").string(), cfg.nsub, "primal",
                         extend_zero(mesh, fin.y));
    io::write_field_file((out / "u.txt").string(), cfg.nsub, "control",
                         extend_zero(mesh, fin.u));
    io::write_field_file((out / "p.txt").string(), cfg.nsub, "primal",
                         extend_zero(mesh, fin.p));
    io::write_field_file((out / "xi.txt").string(), cfg.nsub, "measure", fin.xi);
    io::write_field_file((out / "nu.txt").string(), cfg.nsub, "measure", fin.nu);
    io::write_field_file((out / "mu.txt").string(), cfg.nsub, "measure", fin.mu);
    io::write_field_file((out / "lambda.txt").string(), cfg.nsub, "control",
                         extend_zero(mesh, fin.lambda));
    if (cfg.vtk) {
        io::write_vtk((out / "y.vtk").string(), mesh, extend_zero(mesh, fin.y), "y");
        io::write_vtk((out / "u.vtk").string(), mesh, extend_zero(mesh, fin.u), "u");
    }

    std::ofstream sum(out / "summary.txt");
    sum << "J = " << io::fmt(fin.j_value) << "\n";
    sum << "gamma_final = " << io::fmt(fin.gamma) << "\n";
    sum << "kkt_residual = " << io::fmt(fin.kkt_residual) << "\n";
    const auto& d = hist.diagnostics.back();
    sum << "viol_l2 = " << io::fmt(d.viol_l2) << "\n";
    sum << "nu_l1 = " << io::fmt(d.nu_l1) << "\n";
    sum << "mu_hm1 = " << io::fmt(d.mu_hm1) << "\n";
    sum << "rho = " << io::fmt(d.rho) << "\n";
    sum << "comp_gap = " << io::fmt(d.comp_gap) << "\n";
    if (!cfg.u_hat.empty()) {
        NodalField u_hat = NodalField::zeros(mesh, NodalKind::Control);
        u_hat.values = eval_on_nodes(mesh, cfg.u_hat);
        sum << "tau = " << io::fmt(slater_check(pb, u_hat)) << "\n";
    }
    if (hist.solver_failed) {
        std::cerr << "solver failure along the path: " << hist.failure_message << "\n";
        return kExitSolverFailure;
    }
    std::cout << "solve: " << hist.diagnostics.size() << " path steps, final kkt_residual "
              << io::fmt(fin.kkt_residual) << "\n";
    return kExitPass;
}

int run_verify(const ScenarioConfig& cfg, const fs::path& dir, const std::string& which,
               unsigned seed) {
    const OCPProblem pb = build_problem(cfg);
    const Mesh& mesh = pb.sp().mesh();
    StationarityTolerances tols;
    tols.residual = cfg.residual_tol;
    tols.b_stat = cfg.b_stat_tol;

    const Eigen::VectorXd u = read_interior(dir, "u.txt", cfg.nsub, mesh);

    StationarityReport rep;
    if (which == "c" || which == "strong") {
        CandidatePoint cp;
        cp.u = u;
        NodalField uf = NodalField::zeros(mesh, NodalKind::Control);
        uf.values = extend_zero(mesh, u);
        NodalField ya;
        ya.values = pb.y_a;
        cp.vi = solve_vi(pb.sp(), pb.op, uf, ya);
        cp.p = read_interior(dir, "p.txt", cfg.nsub, mesh);
        cp.nu = read_interior(dir, "nu.txt", cfg.nsub, mesh);
        cp.mu = read_interior(dir, "mu.txt", cfg.nsub, mesh);
        cp.lambda = read_interior(dir, "lambda.txt", cfg.nsub, mesh);
        rep = which == "c" ? check_c_stationarity(pb, cp, tols)
                           : check_strong_stationarity(pb, cp, tols);
        if (which == "strong" && pb.u_box)
            std::cerr << "warning: control box present, strong-stationarity items are "
                         "not applicable\n";
    } else if (which == "b") {
        const Eigen::VectorXd yd = restrict_interior(mesh, pb.y_d);
        NodalField uf = NodalField::zeros(mesh, NodalKind::Control);
        uf.values = extend_zero(mesh, u);
        NodalField ya;
        ya.values = pb.y_a;
        const VISolution vi = solve_vi(pb.sp(), pb.op, uf, ya);
        const Eigen::VectorXd j_y = restrict_interior(mesh, vi.y.values) - yd;
        const Eigen::VectorXd j_u = pb.alpha * u + pb.g_or_zero();
        const auto dirs =
            make_default_directions(pb, u, j_y, j_u, cfg.b_directions, seed);
        rep = check_b_stationarity(pb, u, j_y, j_u, dirs, tols).report;
    } else if (which == "normal-cone") {
        const Eigen::VectorXd tau = read_interior(dir, "tau.txt", cfg.nsub, mesh);
        rep = normal_cone_certificate(pb, u, tau, cfg.b_directions, seed, tols).report;
    } else {
        std::cerr << "unknown verification target '" << which << "'\n";
        return kExitConfigError;
    }

    io::write_report(std::cout, rep);
    {
        std::ofstream rf(dir / ("report_" + which + ".txt"));
        io::write_report(rf, rep);
    }
    return rep.all_pass() ? kExitPass : kExitVerifyFail;
}

int run_oracle(const ScenarioConfig& cfg, unsigned seed) {
    auto space = std::make_shared<P1Space>(cfg.nsub);
    if (space->mesh().n_interior() > 14) {
        std::cerr << "oracle: enumeration cap exceeded (" << space->mesh().n_interior()
                  << " interior nodes > 14)\n";
        return kExitConfigError;
    }
    const OCPProblem pb = build_problem(cfg, space);
    const Mesh& mesh = space->mesh();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;

    bool all_ok = true;
    auto row = [&](const char* name, bool ok) {
        std::cout << (ok ? "pass  " : "FAIL  ") << name << "\n";
        all_ok = all_ok && ok;
    };

    // enumeration cross-check on random instances
    bool enum_ok = true;
    for (int k = 0; k < 20; ++k) {
        NodalField u = NodalField::zeros(mesh, NodalKind::Control);
        NodalField ya = NodalField::zeros(mesh);
        for (int nid = 0; nid < mesh.n_nodes(); ++nid) {
            u.values[nid] = 3.0 * nd(rng);
            ya.values[nid] = mesh.boundary_mask[nid] ? 0.0 : 0.2 * nd(rng) - 0.1;
        }
        const VISolution sol = solve_vi(*space, pb.op, u, ya);
        const auto ref = oracle::enumerate_vi(*space, pb.op, space->lumped_load(u), ya);
        const Eigen::VectorXd yi = restrict_interior(mesh, sol.y.values);
        if ((yi - ref.y).cwiseAbs().maxCoeff() > 1e-10) enum_ok = false;
    }
    row("solve_vi vs active-set enumeration", enum_ok);

    // directional derivative vs extrapolated finite differences
    bool fd_ok = true;
    for (int k = 0; k < 3; ++k) {
        NodalField u = NodalField::zeros(mesh, NodalKind::Control);
        NodalField h = NodalField::zeros(mesh, NodalKind::Control);
        NodalField ya = NodalField::constant(mesh, -0.05);
        for (int nid = 0; nid < mesh.n_nodes(); ++nid) {
            u.values[nid] = nd(rng);
            h.values[nid] = nd(rng);
            if (mesh.boundary_mask[nid]) ya.values[nid] = 0.0;
        }
        const VISolution sol = solve_vi(*space, pb.op, u, ya);
        const NodalField z = directional_derivative(*space, pb.op, sol, h);
        const auto fd = oracle::fd_directional(*space, pb.op, u, ya, h,
                                               {1e-3, 5e-4, 2.5e-4, 1.25e-4});
        if ((z.values - fd.extrapolated).cwiseAbs().maxCoeff() > 1e-6) fd_ok = false;
    }
    row("directional_derivative vs fd extrapolation", fd_ok);

    // coupled LQ solve consistency with its own optimality system
    const auto lq = oracle::lq_kkt_solve(*space, pb.op, restrict_interior(mesh, pb.y_d), 1.0,
                                         Eigen::VectorXd::Zero(pb.n()),
                                         Eigen::VectorXd::Zero(pb.n()));
    row("lq_kkt_solve residual", lq.residual <= 1e-10);

    return all_ok ? kExitPass : kExitVerifyFail;
}

int run_slater(const ScenarioConfig& cfg) {
    const OCPProblem pb = build_problem(cfg);
    const Mesh& mesh = pb.sp().mesh();
    NodalField u_hat = NodalField::zeros(mesh, NodalKind::Control);
    if (!cfg.u_hat.empty())
        u_hat.values = eval_on_nodes(mesh, cfg.u_hat);
    else
        u_hat = construct_slater_candidate(pb);
    const double tau = slater_check(pb, u_hat);
    std::cout << "tau = " << io::fmt(tau) << "\n";
    return tau > 0.0 ? kExitPass : kExitVerifyFail;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"obstacle-problem optimal control: solve, verify, oracle, slater"};
    app.require_subcommand(1);

    std::string config_path, out_dir, which = "c";
    unsigned seed = 0;
    bool seed_set = false;
    double gamma_max = 0.0;
    bool gamma_max_set = false;

    auto add_common = [&](CLI::App* sub, bool need_out) {
        sub->add_option("--config", config_path, "scenario config file")->required();
        auto* o = sub->add_option("--out", out_dir, "artifact directory");
        if (need_out) o->required();
        sub->add_option("--seed", seed, "override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--gamma-max", gamma_max, "override schedule.gamma_end")
            ->each([&](const std::string&) { gamma_max_set = true; });
    };

    auto* solve = app.add_subcommand("solve", "run the penalty continuation");
    add_common(solve, true);
    auto* verify = app.add_subcommand("verify", "certify a stationarity system");
    add_common(verify, true);
    verify->add_option("--which", which, "b | c | strong | normal-cone");
    auto* oracle_cmd = app.add_subcommand("oracle", "run the oracle cross-validation suite");
    add_common(oracle_cmd, false);
    auto* slater = app.add_subcommand("slater", "evaluate the discrete Slater margin");
    add_common(slater, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfigError;
    }

    try {
        ScenarioConfig cfg = parse_config_file(config_path);
        if (seed_set) cfg.seed = seed;
        if (gamma_max_set) cfg.gamma_end = gamma_max;
        if (solve->parsed()) return run_solve(cfg, out_dir);
        if (verify->parsed()) return run_verify(cfg, out_dir, which, cfg.seed);
        if (oracle_cmd->parsed()) return run_oracle(cfg, cfg.seed);
        if (slater->parsed()) return run_slater(cfg);
        return kExitConfigError;
    } catch (const SolverFailure& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolverFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
}

#include <doctest.h>

#include <random>
#include <sstream>

#include "obsopt/io.hpp"
#include "obsopt/oracle.hpp"
#include "obsopt/stationarity.hpp"

using namespace obsopt;

namespace {

OCPProblem make_problem(std::shared_ptr<const P1Space> sp, double ya, double yb, double yd,
                        double alpha) {
    OCPProblem pb;
    pb.space = sp;
    pb.op = assemble_operator(sp->mesh(), OperatorSpec::laplace());
    pb.y_a = Eigen::VectorXd::Constant(sp->mesh().n_nodes(), ya);
    pb.y_b = Eigen::VectorXd::Constant(sp->mesh().n_nodes(), yb);
    pb.y_d = Eigen::VectorXd::Constant(sp->mesh().n_nodes(), yd);
    pb.alpha = alpha;
    pb.u_ref = Eigen::VectorXd::Zero(pb.n());
    return pb;
}

PathHistory run_path(const OCPProblem& pb, double gamma_end) {
    PathSchedule sched;
    sched.gamma_end = gamma_end;
    sched.prox_update = true;
    return path_follow(pb, sched);
}

} // namespace

TEST_CASE("unconstrained optimum: C and strong stationarity pass with tiny residuals") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, -1e3, 1e3, 1.0, 1e-1);
    const OCPIterate opt = solve_pgamma(pb, 1.0, 1.0, 1.0, Eigen::VectorXd::Zero(pb.n()),
                                        pb.u_ref, 1e-10, 200, /*prox_weight=*/0.0);
    const CandidatePoint cp = recover_multipliers(pb, opt.u);
    CHECK(cp.nu.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(cp.mu.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(cp.lambda.cwiseAbs().maxCoeff() <= 1e-6);

    const StationarityReport crep = check_c_stationarity(pb, cp);
    CHECK(crep.all_pass());
    const StationarityReport srep = check_strong_stationarity(pb, cp);
    CHECK(srep.all_pass());
    CHECK(srep.verdicts.at("strong_stat_p_sign") == "pass");
}

TEST_CASE("obstacle-active scenario: strong stationarity holds, perturbation breaks it") {
    auto sp = std::make_shared<P1Space>(8);
    OCPProblem pb = make_problem(sp, 0.0, 1.0, -1.0, 1e-2);
    const PathHistory hist = run_path(pb, 1e8);
    REQUIRE(!hist.solver_failed);
    const Eigen::VectorXd u = hist.final_iterate().u;

    const CandidatePoint cp = recover_multipliers(pb, u, &hist.final_iterate());
    CHECK(!cp.vi.active_set.empty());
    const StationarityReport rep = check_strong_stationarity(pb, cp);
    for (const auto& [k, v] : rep.verdicts) {
        INFO(k, " residual ", rep.residuals.at(k));
        CHECK(v != "fail");
    }

    // perturbed control: residual of the gradient system flags the shift
    Eigen::VectorXd u_bad = u;
    u_bad[pb.n() / 2] += 0.1;
    const CandidatePoint cp_bad = recover_multipliers(pb, u_bad);
    const StationarityReport rep_bad = check_c_stationarity(pb, cp_bad);
    CHECK(!rep_bad.all_pass());
}

TEST_CASE("adversarial adjoint: positive p on the active set fails the sign test") {
    auto sp = std::make_shared<P1Space>(8);
    OCPProblem pb = make_problem(sp, 0.0, 1.0, -1.0, 1e-2);
    const PathHistory hist = run_path(pb, 1e6);
    REQUIRE(!hist.solver_failed);
    CandidatePoint cp = recover_multipliers(pb, hist.final_iterate().u,
                                            &hist.final_iterate());
    const StationarityReport good = check_strong_stationarity(pb, cp);
    REQUIRE(!good.omega_a.empty());

    cp.p[good.omega_a.front()] = 1.0;
    const StationarityReport bad = check_strong_stationarity(pb, cp);
    CHECK(bad.verdicts.at("strong_stat_p_sign") == "fail");
    CHECK(bad.residuals.at("strong_stat_p_sign") == doctest::Approx(1.0));
}

TEST_CASE("corrupted multiplier: negated nu fails the adjoint and sign residuals") {
    auto sp = std::make_shared<P1Space>(8);
    OCPProblem pb = make_problem(sp, -0.3, 0.1, 1.0, 1e-2);
    const PathHistory hist = run_path(pb, 1e6);
    REQUIRE(!hist.solver_failed);
    CandidatePoint cp = recover_multipliers(pb, hist.final_iterate().u,
                                            &hist.final_iterate());
    REQUIRE(cp.nu.maxCoeff() > 0.0);
    const StationarityReport good = check_c_stationarity(pb, cp);
    CHECK(good.verdicts.at("c_stat_1") == "pass");
    CHECK(good.verdicts.at("nu_nonneg") == "pass");

    cp.nu = -cp.nu;
    const StationarityReport bad = check_c_stationarity(pb, cp);
    CHECK(bad.verdicts.at("c_stat_1") == "fail");
    CHECK(bad.verdicts.at("nu_nonneg") == "fail");
}

TEST_CASE("strong stationarity is not applicable with a control box") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, -1e3, 1e3, 1.0, 1.0);
    BoxConstraints box;
    box.lo = Eigen::VectorXd::Constant(pb.n(), -10.0);
    box.hi = Eigen::VectorXd::Constant(pb.n(), 10.0);
    pb.u_box = box;
    const OCPIterate opt = solve_pgamma(pb, 1.0, 1.0, 1.0, Eigen::VectorXd::Zero(pb.n()),
                                        pb.u_ref, 1e-10, 200, 0.0);
    const CandidatePoint cp = recover_multipliers(pb, opt.u);
    const StationarityReport rep = check_strong_stationarity(pb, cp);
    CHECK(rep.verdicts.at("strong_stat_p_sign") == "not-applicable");
    CHECK(rep.verdicts.at("strong_stat_mu_polar") == "not-applicable");
    CHECK(rep.all_pass());  // not-applicable does not count as failure
}

TEST_CASE("B-stationarity: optimum passes, perturbed control exposes descent") {
    auto sp = std::make_shared<P1Space>(8);
    OCPProblem pb = make_problem(sp, 0.0, 1.0, -1.0, 1e-2);
    const PathHistory hist = run_path(pb, 1e8);
    REQUIRE(!hist.solver_failed);
    const Eigen::VectorXd u = hist.final_iterate().u;
    const Eigen::VectorXd yd = restrict_interior(sp->mesh(), pb.y_d);

    auto dirs_at = [&](const Eigen::VectorXd& uu) {
        NodalField uf = NodalField::zeros(sp->mesh(), NodalKind::Control);
        uf.values = extend_zero(sp->mesh(), uu);
        NodalField ya;
        ya.values = pb.y_a;
        const VISolution vi = solve_vi(*sp, pb.op, uf, ya);
        const Eigen::VectorXd j_y = restrict_interior(sp->mesh(), vi.y.values) - yd;
        const Eigen::VectorXd j_u = pb.alpha * uu;
        return make_default_directions(pb, uu, j_y, j_u, 200, 42u);
    };

    const BStatResult good = check_b_stationarity(pb, u, dirs_at(u));
    CHECK(good.admitted > 0);
    CHECK(good.min_value >= -1e-5);

    Eigen::VectorXd u_bad = u;
    u_bad[pb.n() / 2] += 0.1;
    const BStatResult bad = check_b_stationarity(pb, u_bad, dirs_at(u_bad));
    CHECK(bad.min_value < -1e-5);
}

TEST_CASE("tangent cone membership") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, -1.0, 1.0, 0.0, 1.0);
    const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(pb.n());

    // no state-constraint contact: every direction is tangent
    std::mt19937_64 rng(53);
    std::normal_distribution<double> nd;
    NodalField h = NodalField::zeros(sp->mesh(), NodalKind::Control);
    for (int nid = 0; nid < sp->mesh().n_nodes(); ++nid) h.values[nid] = nd(rng);
    CHECK(tangent_cone_membership(pb, u0, h));

    // infeasible base point throws
    OCPProblem tight = make_problem(sp, -1.0, 0.01, 0.0, 1.0);
    Eigen::VectorXd u_big = Eigen::VectorXd::Constant(pb.n(), 10.0);
    CHECK_THROWS_AS(tangent_cone_membership(tight, u_big, h), std::invalid_argument);

    // contact at the bound: a direction pushing further up is not tangent
    // (u chosen so that S(u) = y_b exactly at the peak of a bump)
    const Mesh& mesh = sp->mesh();
    Eigen::VectorXd z(mesh.n_interior());
    for (int i = 0; i < mesh.n_interior(); ++i) {
        const auto& x = mesh.nodes[mesh.interior_to_node[i]];
        z[i] = 16.0 * x.x() * (1.0 - x.x()) * x.y() * (1.0 - x.y());
    }
    OCPProblem touch = make_problem(sp, -10.0, 1.0, 0.0, 1.0);
    touch.y_b = Eigen::VectorXd::Constant(mesh.n_nodes(), z.maxCoeff());
    const Eigen::VectorXd load = touch.op.matrix * z;
    const Eigen::VectorXd u_touch = load.cwiseQuotient(sp->lumped_interior());
    NodalField up = NodalField::zeros(mesh, NodalKind::Control);
    up.values = extend_zero(mesh, u_touch);  // pushes the same profile higher
    CHECK_FALSE(tangent_cone_membership(touch, u_touch, up));
    NodalField down = up;
    down.values = -up.values;
    CHECK(tangent_cone_membership(touch, u_touch, down));
}

TEST_CASE("normal cone certificate: zero always passes, interior nonzero fails") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, -1.0, 1.0, 0.0, 1.0);
    const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(pb.n());

    const Eigen::VectorXd tau0 = Eigen::VectorXd::Zero(pb.n());
    const BStatResult ok = normal_cone_certificate(pb, u0, tau0, 100, 42u);
    CHECK(ok.report.verdicts.at("normal_cone") == "pass");

    Eigen::VectorXd tau = Eigen::VectorXd::Constant(pb.n(), 1.0);
    const BStatResult fail = normal_cone_certificate(pb, u0, tau, 100, 42u);
    CHECK(fail.report.verdicts.at("normal_cone") == "fail");
}

TEST_CASE("normal cone certificate at a state-constrained path endpoint") {
    auto sp = std::make_shared<P1Space>(8);
    OCPProblem pb = make_problem(sp, -0.3, 0.1, 1.0, 1e-2);
    const PathHistory hist = run_path(pb, 1e8);
    REQUIRE(!hist.solver_failed);
    const OCPIterate& fin = hist.final_iterate();
    REQUIRE(fin.nu.maxCoeff() > 0.0);

    // tau = -p_aux with K^T p_aux = -nu, the Lagrangian piece of the adjoint
    SparseOperator adj = pb.op.adjoint();
    const Eigen::VectorXd tau = solve_linear(adj, fin.nu);
    const BStatResult res = normal_cone_certificate(pb, fin.u, tau, 200, 42u);
    CHECK(res.admitted > 0);
    CHECK(res.report.verdicts.at("normal_cone") == "pass");
    CHECK(res.report.residuals.at("normal_cone_nu_sign") <= 1e-8);
}

TEST_CASE("complementarity gap") {
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(4, 0.5);
    Eigen::VectorXd yb = Eigen::VectorXd::Constant(4, 1.0);
    CHECK(complementarity_gap(nu, y, yb) == 0.0);

    nu[2] = 3.0;
    y[2] = 1.0;  // nu supported exactly on the contact
    CHECK(complementarity_gap(nu, y, yb) == 0.0);

    y[2] = 0.9;
    CHECK(complementarity_gap(nu, y, yb) == doctest::Approx(0.3));
}

TEST_CASE("reports are deterministic") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, 0.0, 1.0, -1.0, 1e-1);
    const OCPIterate opt = solve_pgamma(pb, 1e4, 1e4, 1e-4, Eigen::VectorXd::Zero(pb.n()),
                                        pb.u_ref, 1e-9, 200, 0.0);
    const CandidatePoint cp = recover_multipliers(pb, opt.u, &opt);
    std::ostringstream a, b;
    io::write_report(a, check_c_stationarity(pb, cp));
    io::write_report(b, check_c_stationarity(pb, cp));
    CHECK(a.str() == b.str());
    CHECK(a.str().find("residual.c_stat_1") != std::string::npos);
}

#include <doctest.h>

#include <random>

#include "obsopt/ocp.hpp"
#include "obsopt/oracle.hpp"

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

} // namespace

TEST_CASE("smoothed state solve: inactive smoothing reproduces the linear solve") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, -10.0, 10.0, 0.0, 1.0);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(pb.n(), 1.0);
    const SmoothedState st = smoothed_state_solve(pb, u, 1e4, 1e-4);
    const Eigen::VectorXd yref = solve_linear(pb.op, sp->lumped_interior().cwiseProduct(u));
    CHECK((st.y - yref).cwiseAbs().maxCoeff() <= 1e-11);
    CHECK(st.xi.cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(smoothed_state_solve(pb, u, -1.0, 1e-3), std::invalid_argument);
    CHECK_THROWS_AS(smoothed_state_solve(pb, u, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("smoothed state solve converges to the exact VI as gamma_a grows") {
    auto sp = std::make_shared<P1Space>(8);
    OCPProblem pb = make_problem(sp, 0.0, 10.0, 0.0, 1.0);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(pb.n(), -1.0);

    NodalField uf = NodalField::zeros(sp->mesh(), NodalKind::Control);
    uf.values = extend_zero(sp->mesh(), u);
    NodalField ya;
    ya.values = pb.y_a;
    const VISolution exact = solve_vi(*sp, pb.op, uf, ya);

    double prev_err = std::numeric_limits<double>::infinity();
    for (double gamma_a : {1e2, 1e4, 1e6}) {
        const SmoothedState st = smoothed_state_solve(pb, u, gamma_a, 1.0 / gamma_a);
        const double err =
            (st.y - restrict_interior(sp->mesh(), exact.y.values)).cwiseAbs().maxCoeff();
        CHECK(err < prev_err);
        prev_err = err;
        CHECK((-st.y).maxCoeff() <= 2.0 / gamma_a);  // obstacle violation O(1/gamma_a)
    }
    const SmoothedState fine = smoothed_state_solve(pb, u, 1e8, 1e-8);
    CHECK(std::abs(fine.xi.sum() - exact.xi.values.sum()) <= 1e-6);
}

TEST_CASE("solve_pgamma matches the coupled LQ oracle when nothing is active") {
    auto sp = std::make_shared<P1Space>(8);
    OCPProblem pb = make_problem(sp, -1e9, 1e9, 1.0, 1.0);
    const int n = pb.n();
    const Eigen::VectorXd yd = restrict_interior(sp->mesh(), pb.y_d);

    const auto lq = oracle::lq_kkt_solve(*sp, pb.op, yd, pb.alpha, pb.u_ref,
                                         Eigen::VectorXd::Zero(n));
    const OCPIterate it =
        solve_pgamma(pb, 1.0, 1.0, 1.0, Eigen::VectorXd::Zero(n), pb.u_ref);
    CHECK(sp->lumped_norm(it.u - lq.u) <= 1e-8);
    CHECK(it.nu.cwiseAbs().maxCoeff() == 0.0);
    CHECK(it.mu.cwiseAbs().maxCoeff() == 0.0);
    CHECK(it.kkt_residual <= 1e-8);
}

TEST_CASE("solve_pgamma respects a control box") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, -1e9, 1e9, 1.0, 1e-2);
    BoxConstraints box;
    box.lo = Eigen::VectorXd::Constant(pb.n(), -0.5);
    box.hi = Eigen::VectorXd::Constant(pb.n(), 0.5);
    pb.u_box = box;
    const OCPIterate it =
        solve_pgamma(pb, 1.0, 1.0, 1.0, Eigen::VectorXd::Zero(pb.n()), pb.u_ref);
    CHECK(it.u.maxCoeff() <= 0.5 + 1e-14);
    CHECK(it.u.minCoeff() >= -0.5 - 1e-14);
    CHECK(it.kkt_residual <= 1e-8);
    // lambda lives in the box normal cone: nonnegative at the upper bound
    for (int i = 0; i < pb.n(); ++i)
        if (it.u[i] >= 0.5 - 1e-10) CHECK(it.lambda[i] >= -1e-8);
}

TEST_CASE("path_follow on an unconstrained scenario keeps all diagnostics at zero") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, -1e3, 1e3, 1.0, 1.0);
    PathSchedule sched;
    sched.gamma_end = 1e4;
    const PathHistory hist = path_follow(pb, sched);
    REQUIRE(!hist.solver_failed);
    REQUIRE(!hist.diagnostics.empty());
    for (std::size_t k = 0; k < hist.diagnostics.size(); ++k) {
        const auto& d = hist.diagnostics[k];
        CHECK(d.viol_l2 == 0.0);
        CHECK(d.nu_l1 == 0.0);
        CHECK(d.mu_hm1 == 0.0);
        CHECK(d.rho == doctest::Approx(std::sqrt(2.0)));
        if (k > 0) CHECK(hist.diagnostics[k].gamma > hist.diagnostics[k - 1].gamma);
    }
}

TEST_CASE("path_follow on a state-constrained scenario: multiplier support and signs") {
    auto sp = std::make_shared<P1Space>(8);
    OCPProblem pb = make_problem(sp, -0.3, 0.1, 1.0, 1e-2);
    PathSchedule sched;
    sched.gamma_end = 1e6;
    sched.prox_update = true;
    const PathHistory hist = path_follow(pb, sched);
    REQUIRE(!hist.solver_failed);
    const OCPIterate& fin = hist.final_iterate();
    CHECK(fin.nu.minCoeff() >= 0.0);
    CHECK(fin.nu.sum() > 0.0);
    const Eigen::VectorXd yb = restrict_interior(sp->mesh(), pb.y_b);
    for (int i = 0; i < pb.n(); ++i)
        if (fin.nu[i] > 0.0) CHECK(fin.y[i] >= yb[i] - 1e-6);

    // the control settles as gamma saturates: shrinking steps at the tail
    const auto& ds = hist.diagnostics;
    REQUIRE(ds.size() >= 5);
    for (std::size_t k = ds.size() - 3; k + 1 < ds.size(); ++k)
        CHECK(ds[k].u_step <= ds[k - 1].u_step * (1.0 + 1e-9) + 1e-12);
}

TEST_CASE("reduced gradient matches central finite differences") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, -0.1, 0.2, 1.0, 1e-1);
    const int n = pb.n();
    const double gamma = 1e2, gamma_a = 1e2, delta = 1e-2;
    const Eigen::VectorXd& m = sp->lumped_interior();
    const Eigen::VectorXd yb = restrict_interior(sp->mesh(), pb.y_b);

    auto reduced = [&](const Eigen::VectorXd& u) {
        const SmoothedState st = smoothed_state_solve(pb, u, gamma_a, delta);
        double f = pb.objective(st.y, u);
        const Eigen::VectorXd viol = (st.y - yb).cwiseMax(0.0);
        f += 0.5 * gamma * m.cwiseProduct(viol).dot(viol);
        f += 0.5 * m.cwiseProduct(u - pb.u_ref).dot(u - pb.u_ref);
        return f;
    };

    std::mt19937_64 rng(71);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd u(n), h(n);
        for (int i = 0; i < n; ++i) { u[i] = 2.0 * nd(rng); h[i] = nd(rng); }

        const SmoothedState st = smoothed_state_solve(pb, u, gamma_a, delta);
        const Eigen::VectorXd yd = restrict_interior(sp->mesh(), pb.y_d);
        Eigen::VectorXd adj_rhs = -(m.cwiseProduct(st.y - yd) +
                                    gamma * m.cwiseProduct((st.y - yb).cwiseMax(0.0)));
        Eigen::SparseLU<SpMat> lut(SpMat(st.linearized.transpose()));
        REQUIRE(lut.info() == Eigen::Success);
        const Eigen::VectorXd p = lut.solve(adj_rhs);
        const Eigen::VectorXd grad = pb.alpha * u + (u - pb.u_ref) - p;

        const double t = 1e-5;
        const double fd = (reduced(u + t * h) - reduced(u - t * h)) / (2.0 * t);
        const double dg = sp->lumped_inner(grad, h);
        CHECK(std::abs(fd - dg) <= 1e-5 * (1.0 + std::abs(dg)));
    }
}

TEST_CASE("slater_check hand values and candidate construction") {
    auto sp = std::make_shared<P1Space>(6);
    OCPProblem pb = make_problem(sp, -1.0, 1.0, 0.0, 1.0);
    NodalField u0 = NodalField::zeros(sp->mesh(), NodalKind::Control);
    CHECK(slater_check(pb, u0) == doctest::Approx(1.0).epsilon(1e-14));

    NodalField big = NodalField::constant(sp->mesh(), 500.0, NodalKind::Control);
    OCPProblem tight = make_problem(sp, -1.0, 0.5, 0.0, 1.0);
    CHECK(slater_check(tight, big) <= 0.0);

    const NodalField u_hat = construct_slater_candidate(pb);
    CHECK(slater_check(pb, u_hat) > 0.0);

    // positive obstacle hump in the interior
    OCPProblem hump = make_problem(sp, -1.0, 1.0, 0.0, 1.0);
    for (int nid = 0; nid < sp->mesh().n_nodes(); ++nid) {
        const auto& x = sp->mesh().nodes[nid];
        if (!sp->mesh().boundary_mask[nid] &&
            (x - Eigen::Vector2d(0.5, 0.5)).norm() < 0.25)
            hump.y_a[nid] = 0.3;
    }
    const NodalField u_hump = construct_slater_candidate(hump);
    CHECK(slater_check(hump, u_hump) > 0.0);

    OCPProblem degenerate = make_problem(sp, 0.0, 0.0, 0.0, 1.0);
    degenerate.y_b = degenerate.y_a.cwiseMax(0.0);  // zero gap
    CHECK_THROWS_AS(construct_slater_candidate(degenerate), InvalidData);

    OCPProblem boxed = make_problem(sp, -1.0, 1.0, 0.0, 1.0);
    BoxConstraints box;
    box.lo = Eigen::VectorXd::Constant(boxed.n(), -1.0);
    box.hi = Eigen::VectorXd::Constant(boxed.n(), 1.0);
    boxed.u_box = box;
    CHECK_THROWS_AS(construct_slater_candidate(boxed), std::invalid_argument);
}

TEST_CASE("problem validation rejects inconsistent data") {
    auto sp = std::make_shared<P1Space>(4);
    OCPProblem bad_gap = make_problem(sp, 0.5, 0.4, 0.0, 1.0);
    CHECK_THROWS_AS(bad_gap.validate(), InvalidData);

    OCPProblem bad_boundary = make_problem(sp, 0.1, 1.0, 0.0, 1.0);
    CHECK_THROWS_AS(bad_boundary.validate(), InvalidData);

    OCPProblem bad_box = make_problem(sp, -1.0, 1.0, 0.0, 1.0);
    BoxConstraints box;
    box.lo = Eigen::VectorXd::Constant(bad_box.n(), 1.0);
    box.hi = Eigen::VectorXd::Constant(bad_box.n(), -1.0);
    bad_box.u_box = box;
    CHECK_THROWS_AS(bad_box.validate(), InvalidData);

    OCPProblem ok = make_problem(sp, -1.0, 1.0, 0.0, 1.0);
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("active_set_separation falls back to the diameter on empty sets") {
    auto sp = std::make_shared<P1Space>(4);
    const int n = sp->mesh().n_interior();
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd ya = Eigen::VectorXd::Constant(n, -1.0);
    Eigen::VectorXd yb = Eigen::VectorXd::Constant(n, 1.0);
    CHECK(active_set_separation(*sp, y, ya, yb, 1e-6) == doctest::Approx(std::sqrt(2.0)));

    // one node on each bound: distance between the two nodes
    y[0] = -1.0;
    y[n - 1] = 1.0;
    const auto& mesh = sp->mesh();
    const double d = (mesh.nodes[mesh.interior_to_node[0]] -
                      mesh.nodes[mesh.interior_to_node[n - 1]]).norm();
    CHECK(active_set_separation(*sp, y, ya, yb, 1e-6) == doctest::Approx(d));
}

TEST_CASE("path schedule validation") {
    PathSchedule bad;
    bad.factor = 0.5;
    CHECK_THROWS_AS(bad.gammas(), std::invalid_argument);

    PathSchedule ok;
    const auto gs = ok.gammas();
    REQUIRE(gs.size() == 9);
    CHECK(gs.front() == 1.0);
    CHECK(gs.back() == doctest::Approx(1e8));
}

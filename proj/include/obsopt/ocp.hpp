#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "obsopt/vi.hpp"

namespace obsopt {

struct BoxConstraints {
    Eigen::VectorXd lo, hi;  // interior values
};

/// Tracking-type optimal control problem for the obstacle VI with a pointwise
/// upper state bound: minimize
///   1/2 ||y - y_d||^2 + alpha/2 ||u||^2 + <g, u>
/// over u (optionally box constrained), y = S(u), subject to y <= y_b.
struct OCPProblem {
    std::shared_ptr<const P1Space> space;
    SparseOperator op;
    Eigen::VectorXd y_a, y_b, y_d;  // full nodal
    double alpha = 1.0;
    Eigen::VectorXd g;              // interior linear term, may be empty
    std::optional<BoxConstraints> u_box;
    Eigen::VectorXd u_ref;          // interior prox center / initial guess
    double slater_tau = std::numeric_limits<double>::quiet_NaN();

    const P1Space& sp() const { return *space; }
    int n() const { return op.dim(); }

    Eigen::VectorXd g_or_zero() const {
        return g.size() ? g : Eigen::VectorXd::Zero(n());
    }

    void validate() const {
        const Mesh& mesh = sp().mesh();
        double gap = std::numeric_limits<double>::infinity();
        for (int nid = 0; nid < mesh.n_nodes(); ++nid) {
            gap = std::min(gap, y_b[nid] - y_a[nid]);
            if (mesh.boundary_mask[nid]) {
                if (y_a[nid] > 0.0) throw InvalidData("OCPProblem: y_a > 0 on the boundary");
                if (!(y_b[nid] > 0.0)) throw InvalidData("OCPProblem: y_b <= 0 on the boundary");
            }
        }
        if (!(gap > 0.0)) throw InvalidData("OCPProblem: bounds y_a, y_b are not separated");
        if (u_box && (u_box->hi - u_box->lo).minCoeff() < 0.0)
            throw InvalidData("OCPProblem: empty control box");
    }

    Eigen::VectorXd project_box(Eigen::VectorXd u) const {
        if (u_box) u = u.cwiseMax(u_box->lo).cwiseMin(u_box->hi);
        return u;
    }

    /// Objective value from interior state and control vectors.
    double objective(const Eigen::VectorXd& y_int, const Eigen::VectorXd& u_int) const {
        const Eigen::VectorXd& m = sp().lumped_interior();
        const Eigen::VectorXd yd = restrict_interior(sp().mesh(), y_d);
        const Eigen::VectorXd e = y_int - yd;
        double j = 0.5 * m.cwiseProduct(e).dot(e) + 0.5 * alpha * m.cwiseProduct(u_int).dot(u_int);
        if (g.size()) j += m.cwiseProduct(g).dot(u_int);
        return j;
    }
};

/// C^1 ramp smoothing of max(0, s): 0 for s<=0, s^2/(2 delta) on [0, delta],
/// s - delta/2 beyond.
inline double mdelta(double s, double delta) {
    if (s <= 0.0) return 0.0;
    if (s <= delta) return 0.5 * s * s / delta;
    return s - 0.5 * delta;
}
inline double mdelta_prime(double s, double delta) {
    if (s <= 0.0) return 0.0;
    if (s <= delta) return s / delta;
    return 1.0;
}
inline double mdelta_second(double s, double delta) {
    return (s > 0.0 && s < delta) ? 1.0 / delta : 0.0;
}

struct SmoothedState {
    Eigen::VectorXd y;    // interior
    Eigen::VectorXd xi;   // lumped masses, gamma_a * m .* mdelta(y_a - y)
    SpMat linearized;     // K + gamma_a diag(m .* mdelta'(y_a - y))
    int newton_iterations = 0;
};

/// Damped-Newton solve of the penalized state system
///   K y = m.*u + gamma_a m.*mdelta(y_a - y).
inline SmoothedState smoothed_state_solve(const OCPProblem& pb, const Eigen::VectorXd& u_int,
                                          double gamma_a, double delta,
                                          const Eigen::VectorXd* y_init = nullptr,
                                          double tol = 1e-11, int max_iter = 80) {
    if (!(gamma_a > 0.0) || !(delta > 0.0))
        throw std::invalid_argument("smoothed_state_solve: gamma_a, delta must be positive");
    const P1Space& sp = pb.sp();
    const int n = pb.n();
    const Eigen::VectorXd& m = sp.lumped_interior();
    const Eigen::VectorXd psi = restrict_interior(sp.mesh(), pb.y_a);
    const Eigen::VectorXd r = m.cwiseProduct(u_int);
    const double rtol = tol * (1.0 + r.norm());

    Eigen::VectorXd y = y_init ? *y_init : solve_linear(pb.op, r);

    auto residual = [&](const Eigen::VectorXd& yy) {
        Eigen::VectorXd f = pb.op.matrix * yy - r;
        for (int i = 0; i < n; ++i) f[i] -= gamma_a * m[i] * mdelta(psi[i] - yy[i], delta);
        return f;
    };

    Eigen::VectorXd f = residual(y);
    int it = 0;
    while (f.norm() > rtol) {
        if (++it > max_iter)
            throw SolverFailure("smoothed_state_solve: Newton stalled", f.norm());
        SpMat jac = pb.op.matrix;
        Eigen::VectorXd diag(n);
        for (int i = 0; i < n; ++i)
            diag[i] = gamma_a * m[i] * mdelta_prime(psi[i] - y[i], delta);
        std::vector<Triplet> trips;
        for (int i = 0; i < n; ++i) trips.emplace_back(i, i, diag[i]);
        SpMat dmat(n, n);
        dmat.setFromTriplets(trips.begin(), trips.end());
        jac = jac + dmat;
        Eigen::SparseLU<SpMat> lu(jac);
        if (lu.info() != Eigen::Success)
            throw SolverFailure("smoothed_state_solve: singular Newton system");
        const Eigen::VectorXd step = lu.solve(-f);
        double t = 1.0;
        const double f0 = f.norm();
        while (t > 1e-12) {
            const Eigen::VectorXd yt = y + t * step;
            const Eigen::VectorXd ft = residual(yt);
            if (ft.norm() <= (1.0 - 1e-4 * t) * f0) {
                y = yt;
                f = ft;
                break;
            }
            t *= 0.5;
        }
        if (t <= 1e-12)
            throw SolverFailure("smoothed_state_solve: line search failed", f.norm());
    }

    SmoothedState st;
    st.y = y;
    st.xi = Eigen::VectorXd(n);
    Eigen::VectorXd diag(n);
    for (int i = 0; i < n; ++i) {
        st.xi[i] = gamma_a * m[i] * mdelta(psi[i] - y[i], delta);
        diag[i] = gamma_a * m[i] * mdelta_prime(psi[i] - y[i], delta);
    }
    std::vector<Triplet> trips;
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, diag[i]);
    SpMat dmat(n, n);
    dmat.setFromTriplets(trips.begin(), trips.end());
    st.linearized = pb.op.matrix + dmat;
    st.newton_iterations = it;
    return st;
}

struct OCPIterate {
    Eigen::VectorXd u, y, p;          // interior
    Eigen::VectorXd xi, nu, mu, lambda;  // xi, nu, mu lumped masses; lambda a function
    double gamma = 0.0, gamma_a = 0.0, delta = 0.0;
    double kkt_residual = 0.0;
    double j_value = 0.0;       // unpenalized objective
    Eigen::VectorXd u_ref_used; // prox center the iterate was solved with
    int outer_iterations = 0;
};

/// Reduced-space projected Newton (projected gradient fallback) for the
/// doubly penalized problem at fixed (gamma, gamma_a, delta). prox_weight
/// scales the proximal term (prox_weight/2)||u - u_ref||^2; zero solves the
/// plain penalized problem.
inline OCPIterate solve_pgamma(const OCPProblem& pb, double gamma, double gamma_a, double delta,
                               const Eigen::VectorXd& u0, const Eigen::VectorXd& u_ref,
                               double kkt_tol = 1e-8, int max_iter = 200,
                               double prox_weight = 1.0) {
    const P1Space& sp = pb.sp();
    const int n = pb.n();
    const Eigen::VectorXd& m = sp.lumped_interior();
    const Eigen::VectorXd yd = restrict_interior(sp.mesh(), pb.y_d);
    const Eigen::VectorXd yb = restrict_interior(sp.mesh(), pb.y_b);
    const Eigen::VectorXd psi = restrict_interior(sp.mesh(), pb.y_a);
    const Eigen::VectorXd gl = pb.g_or_zero();

    Eigen::VectorXd u = pb.project_box(u0);
    Eigen::VectorXd y_warm;
    bool have_warm = false;

    auto state = [&](const Eigen::VectorXd& uu) {
        return smoothed_state_solve(pb, uu, gamma_a, delta, have_warm ? &y_warm : nullptr);
    };

    auto penalized_objective = [&](const Eigen::VectorXd& uu, const Eigen::VectorXd& yy) {
        double f = pb.objective(yy, uu);
        Eigen::VectorXd viol = (yy - yb).cwiseMax(0.0);
        f += 0.5 * gamma * m.cwiseProduct(viol).dot(viol);
        const Eigen::VectorXd du = uu - u_ref;
        f += 0.5 * prox_weight * m.cwiseProduct(du).dot(du);
        return f;
    };

    SmoothedState st = state(u);
    y_warm = st.y;
    have_warm = true;
    double fval = penalized_objective(u, st.y);

    OCPIterate out;
    for (int it = 1; it <= max_iter; ++it) {
        // adjoint of the linearized state system
        Eigen::VectorXd adj_rhs = -(m.cwiseProduct(st.y - yd) +
                                    gamma * m.cwiseProduct((st.y - yb).cwiseMax(0.0)));
        Eigen::SparseLU<SpMat> lut(SpMat(st.linearized.transpose()));
        if (lut.info() != Eigen::Success)
            throw SolverFailure("solve_pgamma: adjoint factorization failed");
        const Eigen::VectorXd p = lut.solve(adj_rhs);

        Eigen::VectorXd grad = pb.alpha * u + gl + prox_weight * (u - u_ref) - p;
        const Eigen::VectorXd u_trial_kkt = pb.project_box(u - grad);
        const double kkt = sp.lumped_norm(u - u_trial_kkt);

        if (kkt <= kkt_tol || it == max_iter) {
            if (kkt > kkt_tol)
                throw SolverFailure("solve_pgamma: no convergence", kkt);
            out.u = u;
            out.y = st.y;
            out.p = p;
            out.xi = st.xi;
            out.nu = gamma * m.cwiseProduct((st.y - yb).cwiseMax(0.0));
            out.mu = Eigen::VectorXd(n);
            for (int i = 0; i < n; ++i)
                out.mu[i] = gamma_a * m[i] * mdelta_prime(psi[i] - st.y[i], delta) * p[i];
            out.lambda = p - (pb.alpha * u + gl) - prox_weight * (u - u_ref);
            out.gamma = gamma;
            out.gamma_a = gamma_a;
            out.delta = delta;
            out.kkt_residual = kkt;
            out.j_value = pb.objective(st.y, u);
            out.u_ref_used = u_ref;
            out.outer_iterations = it;
            return out;
        }

        // inactive set of the box at the current point
        std::vector<bool> inactive(n, true);
        if (pb.u_box) {
            for (int i = 0; i < n; ++i) {
                const bool at_lo = u[i] <= pb.u_box->lo[i] + 1e-14 && grad[i] > 0.0;
                const bool at_hi = u[i] >= pb.u_box->hi[i] - 1e-14 && grad[i] < 0.0;
                inactive[i] = !(at_lo || at_hi);
            }
        }

        // coupled Newton step for (dy, dp); du eliminated through the
        // gradient equation on the inactive set
        Eigen::VectorXd du;
        bool newton_ok = false;
        {
            std::vector<Triplet> trips;
            for (int c = 0; c < st.linearized.outerSize(); ++c)
                for (SpMat::InnerIterator itk(st.linearized, c); itk; ++itk) {
                    trips.emplace_back(static_cast<int>(itk.row()),
                                       static_cast<int>(itk.col()), itk.value());
                    trips.emplace_back(n + static_cast<int>(itk.col()),
                                       n + static_cast<int>(itk.row()), itk.value());
                }
            for (int i = 0; i < n; ++i) {
                double t = m[i] * (1.0 + gamma * (st.y[i] > yb[i] ? 1.0 : 0.0));
                t -= gamma_a * m[i] * mdelta_second(psi[i] - st.y[i], delta) * p[i];
                trips.emplace_back(n + i, i, t);
                if (inactive[i])
                    trips.emplace_back(i, n + i, -m[i] / (pb.alpha + prox_weight));
            }
            SpMat A(2 * n, 2 * n);
            A.setFromTriplets(trips.begin(), trips.end());
            Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * n);
            for (int i = 0; i < n; ++i)
                if (inactive[i]) b[i] = -m[i] * grad[i] / (pb.alpha + prox_weight);
            Eigen::SparseLU<SpMat> lu(A);
            if (lu.info() == Eigen::Success) {
                const Eigen::VectorXd x = lu.solve(b);
                du = Eigen::VectorXd::Zero(n);
                for (int i = 0; i < n; ++i)
                    if (inactive[i]) du[i] = (x[n + i] - grad[i]) / (pb.alpha + prox_weight);
                newton_ok = sp.lumped_inner(grad, du) < 0.0 && du.allFinite();
            }
        }
        if (!newton_ok) {
            du = Eigen::VectorXd::Zero(n);
            for (int i = 0; i < n; ++i)
                if (inactive[i]) du[i] = -grad[i];
        }

        // Armijo along the projection arc
        double t = 1.0;
        bool accepted = false;
        while (t > 1e-14) {
            const Eigen::VectorXd ut = pb.project_box(u + t * du);
            SmoothedState stt = state(ut);
            const double ft = penalized_objective(ut, stt.y);
            const double pred = sp.lumped_inner(grad, ut - u);
            if (ft <= fval + 1e-4 * pred || (pred >= 0.0 && ft < fval)) {
                u = ut;
                st = std::move(stt);
                y_warm = st.y;
                fval = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // retry with the plain projected gradient before giving up
            bool grad_ok = false;
            double tg = 1.0;
            while (tg > 1e-14) {
                const Eigen::VectorXd ut = pb.project_box(u - tg * grad);
                SmoothedState stt = state(ut);
                const double ft = penalized_objective(ut, stt.y);
                if (ft < fval) {
                    u = ut;
                    st = std::move(stt);
                    y_warm = st.y;
                    fval = ft;
                    grad_ok = true;
                    break;
                }
                tg *= 0.5;
            }
            if (!grad_ok)
                throw SolverFailure("solve_pgamma: line search failed", kkt);
        }
    }
    throw SolverFailure("solve_pgamma: iteration limit");
}

struct PathSchedule {
    double gamma_start = 1.0;
    double gamma_end = 1e8;
    double factor = 10.0;
    double gamma_a_coupling = 1.0;  // gamma_a = coupling * gamma
    bool prox_update = false;       // move the prox center to the previous iterate
    double u_step_tol = 1e-9;       // early termination on successive controls

    std::vector<double> gammas() const {
        if (!(factor > 1.0)) throw std::invalid_argument("PathSchedule: factor must exceed 1");
        if (!(gamma_start > 0.0) || gamma_end < gamma_start)
            throw std::invalid_argument("PathSchedule: bad gamma range");
        std::vector<double> gs;
        for (double gamma = gamma_start; gamma <= gamma_end * (1.0 + 1e-12); gamma *= factor)
            gs.push_back(gamma);
        return gs;
    }
};

struct PathStepDiagnostics {
    double gamma = 0.0;
    double j_value = 0.0;
    double viol_l2 = 0.0;       // || max(0, y - y_b) ||_L2 (lumped)
    double nu_l1 = 0.0;         // sum of the nu masses
    double mu_hm1 = 0.0;
    double rho = 0.0;           // separation of the two active regions
    double kkt_residual = 0.0;
    double comp_gap = 0.0;      // gamma * viol_l2^2
    double u_step = 0.0;        // lumped distance to the previous control
};

struct PathHistory {
    std::vector<OCPIterate> iterates;
    std::vector<PathStepDiagnostics> diagnostics;
    bool solver_failed = false;
    std::string failure_message;

    const OCPIterate& final_iterate() const {
        if (iterates.empty()) throw std::runtime_error("PathHistory: empty");
        return iterates.back();
    }
};

/// Nodal separation between the obstacle-active region {y <= y_a + eps} and
/// the state-constraint region {y >= y_b - eps}; the domain diameter when one
/// of them is empty.
inline double active_set_separation(const P1Space& sp, const Eigen::VectorXd& y_int,
                                    const Eigen::VectorXd& y_a_int,
                                    const Eigen::VectorXd& y_b_int, double eps) {
    const Mesh& mesh = sp.mesh();
    std::vector<int> lower, upper;
    for (int i = 0; i < static_cast<int>(y_int.size()); ++i) {
        if (y_int[i] <= y_a_int[i] + eps) lower.push_back(i);
        if (y_int[i] >= y_b_int[i] - eps) upper.push_back(i);
    }
    if (lower.empty() || upper.empty()) return std::sqrt(2.0);
    double best = std::numeric_limits<double>::infinity();
    for (int i : lower)
        for (int j : upper)
            best = std::min(best, (mesh.nodes[mesh.interior_to_node[i]] -
                                   mesh.nodes[mesh.interior_to_node[j]]).norm());
    return best;
}

/// Penalty continuation: warm-started solve_pgamma along the schedule with
/// gamma_a = coupling * gamma and delta = 1 / gamma_a.
inline PathHistory path_follow(const OCPProblem& pb, const PathSchedule& schedule) {
    pb.validate();
    const P1Space& sp = pb.sp();
    const Eigen::VectorXd psi_b = restrict_interior(sp.mesh(), pb.y_b);
    const Eigen::VectorXd psi_a = restrict_interior(sp.mesh(), pb.y_a);
    const Eigen::VectorXd& m = sp.lumped_interior();
    const double eps_sep = 1e-6 * (1.0 + pb.y_b.cwiseAbs().maxCoeff());

    PathHistory hist;
    Eigen::VectorXd u = pb.project_box(pb.u_ref);
    Eigen::VectorXd u_ref = pb.u_ref;

    auto diagnose = [&](const OCPIterate& it, const Eigen::VectorXd& u_prev) {
        PathStepDiagnostics d;
        d.gamma = it.gamma;
        d.j_value = it.j_value;
        const Eigen::VectorXd viol = (it.y - psi_b).cwiseMax(0.0);
        d.viol_l2 = std::sqrt(m.cwiseProduct(viol).dot(viol));
        d.nu_l1 = it.nu.sum();
        d.mu_hm1 = sp.h_minus1_norm(it.mu);
        d.rho = active_set_separation(sp, it.y, psi_a, psi_b, eps_sep);
        d.kkt_residual = it.kkt_residual;
        d.comp_gap = it.gamma * d.viol_l2 * d.viol_l2;
        d.u_step = sp.lumped_norm(it.u - u_prev);
        return d;
    };

    for (double gamma : schedule.gammas()) {
        const double gamma_a = schedule.gamma_a_coupling * gamma;
        const double delta = 1.0 / gamma_a;
        OCPIterate it;
        try {
            it = solve_pgamma(pb, gamma, gamma_a, delta, u, u_ref);
            // the proximal solve is only a globalized warm start: polish with
            // the prox term off so the iterate is stationary for the
            // penalized objective at this gamma, not for the damped one
            if (schedule.prox_update && pb.alpha > 0.0)
                it = solve_pgamma(pb, gamma, gamma_a, delta, it.u, it.u, 1e-8, 200,
                                  /*prox_weight=*/0.0);
        } catch (const SolverFailure& e) {
            hist.solver_failed = true;
            hist.failure_message = e.what();
            return hist;
        }
        const PathStepDiagnostics d = diagnose(it, u);
        const bool first = hist.iterates.empty();
        hist.iterates.push_back(it);
        hist.diagnostics.push_back(d);
        const bool settled = !first && d.u_step < schedule.u_step_tol;
        u = it.u;
        if (schedule.prox_update) u_ref = it.u;
        if (settled && hist.diagnostics.back().gamma >= schedule.gamma_end) break;
    }

    return hist;
}

/// tau = min over nodes of (y_b - S(u_hat)); positive tau certifies the
/// discrete Slater property.
inline double slater_check(const OCPProblem& pb, const NodalField& u_hat) {
    if (pb.u_box) {
        const Eigen::VectorXd uh = restrict_interior(pb.sp().mesh(), u_hat.values);
        if ((uh - pb.u_box->lo).minCoeff() < -1e-12 || (pb.u_box->hi - uh).minCoeff() < -1e-12)
            throw std::invalid_argument("slater_check: u_hat violates the control box");
    }
    NodalField ya;
    ya.values = pb.y_a;
    const VISolution sol = solve_vi(pb.sp(), pb.op, u_hat, ya);
    return (pb.y_b - sol.y.values).minCoeff();
}

/// Interpolate y_tilde = max(y_a, 0) + (gap/2) * bubble and pull it back
/// through the operator; requires an unconstrained control set.
inline NodalField construct_slater_candidate(const OCPProblem& pb) {
    if (pb.u_box)
        throw std::invalid_argument("construct_slater_candidate: control box not supported");
    const Mesh& mesh = pb.sp().mesh();
    double gap = std::numeric_limits<double>::infinity();
    for (int nid = 0; nid < mesh.n_nodes(); ++nid)
        gap = std::min(gap, pb.y_b[nid] - std::max(pb.y_a[nid], 0.0));
    if (!(gap > 0.0))
        throw InvalidData("construct_slater_candidate: no gap between max(y_a,0) and y_b");

    Eigen::VectorXd y_tilde(mesh.n_nodes());
    for (int nid = 0; nid < mesh.n_nodes(); ++nid) {
        const auto& x = mesh.nodes[nid];
        const double bubble = 16.0 * x.x() * (1.0 - x.x()) * x.y() * (1.0 - x.y());
        y_tilde[nid] = std::max(pb.y_a[nid], 0.0) + 0.5 * gap * bubble;
        if (mesh.boundary_mask[nid]) y_tilde[nid] = 0.0;
    }
    const Eigen::VectorXd load = pb.op.matrix * restrict_interior(mesh, y_tilde);
    NodalField u_hat = NodalField::zeros(mesh, NodalKind::Control);
    u_hat.values = extend_zero(mesh, load.cwiseQuotient(pb.sp().lumped_interior()));
    return u_hat;
}

} // namespace obsopt

#pragma once

#include <vector>

#include <Eigen/Dense>

#include "obsopt/vi.hpp"

namespace obsopt {
namespace oracle {

struct EnumerationResult {
    Eigen::VectorXd y;    // interior values
    Eigen::VectorXd xi;   // lumped multiplier masses
    std::vector<int> active_set;
    long sets_tried = 0;
    long feasible_sets = 0;
};

/// Brute-force reference for the obstacle VI: try every active set, solve the
/// corresponding linear system and keep the complementarity-feasible ones.
/// Reports the lowest-bitmask feasible set; any further feasible set must
/// reproduce the same solution (uniqueness witness).
inline EnumerationResult enumerate_vi(const P1Space& sp, const SparseOperator& op,
                                      const Eigen::VectorXd& rhs, const NodalField& y_a,
                                      double feas_tol = 1e-12) {
    const int n = op.dim();
    if (n > 14)
        throw std::invalid_argument("enumerate_vi: interior node count exceeds 14");
    const Eigen::VectorXd psi = restrict_interior(sp.mesh(), y_a.values);
    const Eigen::MatrixXd K = Eigen::MatrixXd(op.matrix);
    const double scale = 1.0 + rhs.cwiseAbs().maxCoeff() + psi.cwiseAbs().maxCoeff();

    EnumerationResult res;
    bool found = false;
    for (long mask = 0; mask < (1L << n); ++mask) {
        ++res.sets_tried;
        std::vector<int> act, inact;
        for (int i = 0; i < n; ++i)
            ((mask >> i) & 1 ? act : inact).push_back(i);

        Eigen::VectorXd y(n);
        for (int i : act) y[i] = psi[i];
        if (!inact.empty()) {
            const int ni = static_cast<int>(inact.size());
            Eigen::MatrixXd kii(ni, ni);
            Eigen::VectorXd r(ni);
            for (int a = 0; a < ni; ++a) {
                r[a] = rhs[inact[a]];
                for (int i : act) r[a] -= K(inact[a], i) * psi[i];
                for (int b = 0; b < ni; ++b) kii(a, b) = K(inact[a], inact[b]);
            }
            const Eigen::VectorXd yi = kii.partialPivLu().solve(r);
            for (int a = 0; a < ni; ++a) y[inact[a]] = yi[a];
        }
        Eigen::VectorXd xi = Eigen::VectorXd::Zero(n);
        const Eigen::VectorXd ky = K * y;
        bool ok = true;
        for (int i : act) {
            xi[i] = ky[i] - rhs[i];
            if (xi[i] < -feas_tol * scale) { ok = false; break; }
        }
        if (ok)
            for (int i : inact)
                if (y[i] < psi[i] - feas_tol * scale) { ok = false; break; }
        if (!ok) continue;

        ++res.feasible_sets;
        if (!found) {
            res.y = y;
            res.xi = xi;
            res.active_set = act;
            found = true;
        } else if ((res.y - y).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw std::runtime_error("enumerate_vi: two feasible sets with distinct solutions");
        }
    }
    if (!found)
        throw std::runtime_error("enumerate_vi: no feasible active set");
    return res;
}

struct FdDirectionalResult {
    std::vector<Eigen::VectorXd> quotients;  // one per step size, full nodal
    Eigen::VectorXd extrapolated;            // full nodal limit estimate
};

/// One-sided difference quotients (S(u+th)-S(u))/t with Richardson (Neville)
/// extrapolation to t = 0.
inline FdDirectionalResult fd_directional(const P1Space& sp, const SparseOperator& op,
                                          const NodalField& u, const NodalField& y_a,
                                          const NodalField& h,
                                          const std::vector<double>& t_list) {
    const VISolution base = solve_vi(sp, op, u, y_a);
    FdDirectionalResult res;
    for (double t : t_list) {
        NodalField ut = u;
        ut.values = u.values + t * h.values;
        const VISolution st = solve_vi(sp, op, ut, y_a);
        res.quotients.push_back((st.y.values - base.y.values) / t);
    }
    // Neville tableau in the step size
    std::vector<Eigen::VectorXd> tab = res.quotients;
    const int k = static_cast<int>(t_list.size());
    for (int lvl = 1; lvl < k; ++lvl)
        for (int i = 0; i < k - lvl; ++i)
            tab[i] = tab[i + 1] +
                     (tab[i + 1] - tab[i]) * (t_list[i + lvl] / (t_list[i] - t_list[i + lvl]));
    res.extrapolated = tab.empty() ? Eigen::VectorXd() : tab[0];
    return res;
}

struct LqSolution {
    Eigen::VectorXd u, y, p;  // interior values
    double residual = 0.0;
};

/// Coupled linear KKT solve for the constraint-inactive tracking problem:
///   K y = m.*u,   K^T p = -m.*(y - y_d),   (alpha+1) u - u_ref + g = p.
inline LqSolution lq_kkt_solve(const P1Space& sp, const SparseOperator& op,
                               const Eigen::VectorXd& y_d_int, double alpha,
                               const Eigen::VectorXd& u_ref_int,
                               const Eigen::VectorXd& g_int) {
    const int n = op.dim();
    const Eigen::VectorXd& m = sp.lumped_interior();
    // unknowns (y, p); u eliminated via u = (p + u_ref - g) / (alpha + 1)
    std::vector<Triplet> trips;
    for (int c = 0; c < op.matrix.outerSize(); ++c)
        for (SpMat::InnerIterator it(op.matrix, c); it; ++it) {
            trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
            trips.emplace_back(n + static_cast<int>(it.col()), n + static_cast<int>(it.row()),
                               it.value());  // K^T block
        }
    for (int i = 0; i < n; ++i) {
        trips.emplace_back(i, n + i, -m[i] / (alpha + 1.0));
        trips.emplace_back(n + i, i, m[i]);
    }
    SpMat A(2 * n, 2 * n);
    A.setFromTriplets(trips.begin(), trips.end());
    Eigen::VectorXd b(2 * n);
    b.head(n) = m.cwiseProduct(u_ref_int - g_int) / (alpha + 1.0);
    b.tail(n) = m.cwiseProduct(y_d_int);
    Eigen::SparseLU<SpMat> lu(A);
    if (lu.info() != Eigen::Success)
        throw SolverFailure("lq_kkt_solve: factorization failed");
    const Eigen::VectorXd x = lu.solve(b);

    LqSolution s;
    s.y = x.head(n);
    s.p = x.tail(n);
    s.u = (s.p + u_ref_int - g_int) / (alpha + 1.0);
    const double r1 = (op.matrix * s.y - m.cwiseProduct(s.u)).cwiseAbs().maxCoeff();
    const double r2 = (SpMat(op.matrix.transpose()) * s.p + m.cwiseProduct(s.y - y_d_int))
                          .cwiseAbs().maxCoeff();
    const double r3 = ((alpha + 1.0) * s.u - u_ref_int + g_int - s.p).cwiseAbs().maxCoeff();
    s.residual = std::max({r1, r2, r3});
    return s;
}

} // namespace oracle
} // namespace obsopt

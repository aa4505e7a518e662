#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "obsopt/space.hpp"

namespace obsopt {

/// Role of an interior node in a lower-obstacle complementarity problem.
enum class NodeRole : std::uint8_t {
    Free,         // plain unknown, no constraint
    Constrained,  // y >= psi with complementary multiplier
    FixedAtPsi,   // equality y = psi (used for the strict active set)
};

struct PdasResult {
    Eigen::VectorXd y;    // interior values
    Eigen::VectorXd xi;   // lumped multiplier masses, xi = K y - rhs on active nodes
    std::vector<int> active;
    int iterations = 0;
    double comp_residual = 0.0;
};

/// Primal-dual active set (semismooth Newton) solve of
///   K y = rhs + xi,  y >= psi,  xi >= 0,  xi (y - psi) = 0
/// on the nodes with the given roles. The activation test uses the lumped
/// scaling xi_i > m_i (y_i - psi_i), i.e. complementarity parameter c = 1
/// on the density representatives.
inline PdasResult pdas_solve(const P1Space& sp, const SparseOperator& op,
                             const Eigen::VectorXd& rhs, const Eigen::VectorXd& psi,
                             const std::vector<NodeRole>& role, int max_iter = 100,
                             double tol = 1e-10) {
    const int n = op.dim();
    if (rhs.size() != n || psi.size() != n || static_cast<int>(role.size()) != n)
        throw std::invalid_argument("pdas_solve: dimension mismatch");
    const Eigen::VectorXd& m = sp.lumped_interior();

    std::vector<std::uint8_t> act(n, 0);
    for (int i = 0; i < n; ++i) act[i] = (role[i] == NodeRole::FixedAtPsi);

    PdasResult res;
    res.y = Eigen::VectorXd::Zero(n);
    res.xi = Eigen::VectorXd::Zero(n);

    const double scale = 1.0 + rhs.cwiseAbs().maxCoeff() + psi.cwiseAbs().maxCoeff();

    std::vector<std::uint8_t> prev_act;
    for (int it = 1; it <= max_iter; ++it) {
        // solve with the current active set
        std::vector<int> inact_idx;
        inact_idx.reserve(n);
        for (int i = 0; i < n; ++i)
            if (!act[i]) inact_idx.push_back(i);
        const int ni = static_cast<int>(inact_idx.size());

        Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i)
            if (act[i]) y[i] = psi[i];

        if (ni > 0) {
            std::vector<int> col_map(n, -1);
            for (int k = 0; k < ni; ++k) col_map[inact_idx[k]] = k;
            std::vector<Triplet> trips;
            Eigen::VectorXd r(ni);
            for (int k = 0; k < ni; ++k) r[k] = rhs[inact_idx[k]];
            for (int c = 0; c < op.matrix.outerSize(); ++c) {
                for (SpMat::InnerIterator itk(op.matrix, c); itk; ++itk) {
                    const int rI = col_map[static_cast<int>(itk.row())];
                    if (rI < 0) continue;
                    const int cI = col_map[static_cast<int>(itk.col())];
                    if (cI >= 0)
                        trips.emplace_back(rI, cI, itk.value());
                    else
                        r[rI] -= itk.value() * psi[itk.col()];
                }
            }
            SpMat kii(ni, ni);
            kii.setFromTriplets(trips.begin(), trips.end());
            Eigen::SparseLU<SpMat> lu(kii);
            if (lu.info() != Eigen::Success)
                throw SolverFailure("pdas_solve: reduced factorization failed");
            const Eigen::VectorXd yi = lu.solve(r);
            for (int k = 0; k < ni; ++k) y[inact_idx[k]] = yi[k];
        }

        Eigen::VectorXd xi = Eigen::VectorXd::Zero(n);
        const Eigen::VectorXd ky = op.matrix * y;
        for (int i = 0; i < n; ++i)
            if (act[i]) xi[i] = ky[i] - rhs[i];

        res.y = y;
        res.xi = xi;
        res.iterations = it;

        // next active set
        prev_act = act;
        for (int i = 0; i < n; ++i) {
            if (role[i] == NodeRole::FixedAtPsi) { act[i] = 1; continue; }
            if (role[i] == NodeRole::Free) { act[i] = 0; continue; }
            act[i] = xi[i] - m[i] * (y[i] - psi[i]) > 0.0;
        }

        // |min(xi, m (y - psi))| covers complementarity and both
        // infeasibilities at once, so set stability is not required (exactly
        // degenerate nodes may chatter between the sets at roundoff level)
        double comp = 0.0;
        for (int i = 0; i < n; ++i) {
            if (role[i] != NodeRole::Constrained) continue;
            comp = std::max(comp, std::abs(std::min(xi[i], m[i] * (y[i] - psi[i]))));
        }
        res.comp_residual = comp;

        if (comp <= tol * scale) {
            res.active.clear();
            for (int i = 0; i < n; ++i)
                if (prev_act[i]) res.active.push_back(i);
            return res;
        }
    }
    throw SolverFailure("pdas_solve: no convergence after max_iter", res.comp_residual);
}

struct VISolution {
    NodalField y;                    // full nodal values, zero on the boundary
    DualField xi;                    // lumped multiplier masses on interior nodes
    std::vector<int> active_set;     // A   = { y <= y_a + eps_y }
    std::vector<int> strict_set;     // A_s = { xi density >= eps_xi }
    std::vector<int> biactive_set;   // B   = A \ A_s
    double eps_y = 0.0;
    double eps_xi = 0.0;
    double comp_residual = 0.0;
    int iterations = 0;
};

/// Solve the obstacle VI  y >= y_a,  <K y - rhs, v - y> >= 0  with the
/// lumped dual load rhs, then classify the active sets.
inline VISolution solve_vi_load(const P1Space& sp, const SparseOperator& op,
                                const Eigen::VectorXd& rhs, const NodalField& y_a,
                                int max_iter = 100) {
    const Mesh& mesh = sp.mesh();
    for (int nid = 0; nid < mesh.n_nodes(); ++nid)
        if (mesh.boundary_mask[nid] && y_a.values[nid] > 0.0)
            throw InvalidData("solve_vi: obstacle positive on the boundary");

    const Eigen::VectorXd psi = restrict_interior(mesh, y_a.values);
    std::vector<NodeRole> role(op.dim(), NodeRole::Constrained);
    const PdasResult r = pdas_solve(sp, op, rhs, psi, role, max_iter);

    VISolution sol;
    sol.y = NodalField::zeros(mesh);
    sol.y.values = extend_zero(mesh, r.y);
    sol.xi = DualField::zeros(mesh);
    sol.xi.values = r.xi;
    sol.comp_residual = r.comp_residual;
    sol.iterations = r.iterations;

    const Eigen::VectorXd& m = sp.lumped_interior();
    const Eigen::VectorXd xi_density = r.xi.cwiseQuotient(m);
    sol.eps_y = 1e-9 * (1.0 + y_a.values.cwiseAbs().maxCoeff());
    sol.eps_xi = 1e-9 * (1.0 + (xi_density.size() ? xi_density.cwiseAbs().maxCoeff() : 0.0));
    for (int i = 0; i < op.dim(); ++i) {
        if (r.y[i] <= psi[i] + sol.eps_y) {
            sol.active_set.push_back(i);
            if (xi_density[i] >= sol.eps_xi)
                sol.strict_set.push_back(i);
            else
                sol.biactive_set.push_back(i);
        }
    }
    return sol;
}

/// Control variant: the L2 control u enters through its lumped load.
inline VISolution solve_vi(const P1Space& sp, const SparseOperator& op,
                           const NodalField& u, const NodalField& y_a, int max_iter = 100) {
    return solve_vi_load(sp, op, sp.lumped_load(u), y_a, max_iter);
}

/// Directional derivative z = S'(u; h): the VI over the discrete critical cone,
/// z = 0 on the strict set, z >= 0 with a complementary multiplier on the
/// biactive set, K z = lumped(h) on the free nodes.
inline NodalField directional_derivative(const P1Space& sp, const SparseOperator& op,
                                         const VISolution& sol, const NodalField& h) {
    const int n = op.dim();
    std::vector<NodeRole> role(n, NodeRole::Free);
    for (int i : sol.biactive_set) role[i] = NodeRole::Constrained;
    for (int i : sol.strict_set) role[i] = NodeRole::FixedAtPsi;
    const Eigen::VectorXd psi = Eigen::VectorXd::Zero(n);
    const PdasResult r = pdas_solve(sp, op, sp.lumped_load(h), psi, role);
    NodalField z = NodalField::zeros(sp.mesh());
    z.values = extend_zero(sp.mesh(), r.y);
    return z;
}

/// u1 <= u2  =>  S(u1) <= S(u2) nodewise (up to tolerance).
inline bool check_monotonicity(const P1Space& sp, const SparseOperator& op,
                               const NodalField& u1, const NodalField& u2,
                               const NodalField& y_a, double tol = 1e-10) {
    if ((u2.values - u1.values).minCoeff() < 0.0)
        throw std::invalid_argument("check_monotonicity: u1 <= u2 required");
    const VISolution s1 = solve_vi(sp, op, u1, y_a);
    const VISolution s2 = solve_vi(sp, op, u2, y_a);
    return (s2.y.values - s1.y.values).minCoeff() >= -tol;
}

/// S(alpha u1 + (1-alpha) u2) <= alpha S(u1) + (1-alpha) S(u2) nodewise.
inline bool check_convexity(const P1Space& sp, const SparseOperator& op,
                            const NodalField& u1, const NodalField& u2, double alpha,
                            const NodalField& y_a, double tol = 1e-10) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("check_convexity: alpha must lie in (0,1)");
    NodalField u3 = u1;
    u3.values = alpha * u1.values + (1.0 - alpha) * u2.values;
    const VISolution s1 = solve_vi(sp, op, u1, y_a);
    const VISolution s2 = solve_vi(sp, op, u2, y_a);
    const VISolution s3 = solve_vi(sp, op, u3, y_a);
    const Eigen::VectorXd gap =
        alpha * s1.y.values + (1.0 - alpha) * s2.y.values - s3.y.values;
    return gap.minCoeff() >= -tol;
}

} // namespace obsopt

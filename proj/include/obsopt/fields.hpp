#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "obsopt/mesh.hpp"

namespace obsopt {

enum class NodalKind { PrimalFunction, Control };
enum class DualKind { HMinus1Residual, NodalMeasure };

/// Function on the full node set. H01-type fields carry value zero on the
/// boundary nodes; controls are unconstrained there as well (we only ever use
/// their interior part as a load).
struct NodalField {
    Eigen::VectorXd values;  // one entry per node
    NodalKind kind = NodalKind::PrimalFunction;

    static NodalField zeros(const Mesh& m, NodalKind k = NodalKind::PrimalFunction) {
        NodalField f;
        f.values = Eigen::VectorXd::Zero(m.n_nodes());
        f.kind = k;
        return f;
    }
    static NodalField constant(const Mesh& m, double c, NodalKind k = NodalKind::PrimalFunction) {
        NodalField f;
        f.values = Eigen::VectorXd::Constant(m.n_nodes(), c);
        f.kind = k;
        return f;
    }
};

/// Dual object stored as lumped nodal masses on interior nodes.
/// The pairing with a nodal function v is the plain dot product
/// sum_i xi_i v_i (equivalently the lumped pairing of the densities xi_i/m_i),
/// so for a nonnegative measure nu the total mass is simply sum_i nu_i.
struct DualField {
    Eigen::VectorXd values;  // one entry per interior node
    DualKind kind = DualKind::HMinus1Residual;

    static DualField zeros(const Mesh& m, DualKind k = DualKind::HMinus1Residual) {
        DualField f;
        f.values = Eigen::VectorXd::Zero(m.n_interior());
        f.kind = k;
        return f;
    }
};

/// Extract the interior part of a nodal field.
inline Eigen::VectorXd restrict_interior(const Mesh& m, const Eigen::VectorXd& nodal) {
    if (nodal.size() != m.n_nodes())
        throw std::invalid_argument("restrict_interior: size mismatch");
    Eigen::VectorXd out(m.n_interior());
    for (int i = 0; i < m.n_interior(); ++i) out[i] = nodal[m.interior_to_node[i]];
    return out;
}

/// Embed an interior vector as a nodal field vanishing on the boundary.
inline Eigen::VectorXd extend_zero(const Mesh& m, const Eigen::VectorXd& interior) {
    if (interior.size() != m.n_interior())
        throw std::invalid_argument("extend_zero: size mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m.n_nodes());
    for (int i = 0; i < m.n_interior(); ++i) out[m.interior_to_node[i]] = interior[i];
    return out;
}

} // namespace obsopt

#pragma once

#include <array>
#include <memory>
#include <optional>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "obsopt/errors.hpp"
#include "obsopt/fields.hpp"
#include "obsopt/mesh.hpp"

namespace obsopt {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Scalar coefficient field: a constant or one value per node.
struct Coefficient {
    std::optional<double> constant;
    Eigen::VectorXd nodal;

    Coefficient(double c = 0.0) : constant(c) {}
    Coefficient(Eigen::VectorXd v) : nodal(std::move(v)) {}

    bool is_constant() const { return constant.has_value(); }
    double at(int node) const { return constant ? *constant : nodal[node]; }
    double mean3(const std::array<int, 3>& t) const {
        if (constant) return *constant;
        return (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) / 3.0;
    }
};

/// Coefficients of the bilinear form
///   (y,v) -> int grad(v)^T A grad(y) + y (b . grad v) + v (c . grad y) + d y v.
struct OperatorSpec {
    std::array<std::array<Coefficient, 2>, 2> a{{{Coefficient(1.0), Coefficient(0.0)},
                                                 {Coefficient(0.0), Coefficient(1.0)}}};
    std::array<Coefficient, 2> b{Coefficient(0.0), Coefficient(0.0)};
    std::array<Coefficient, 2> c{Coefficient(0.0), Coefficient(0.0)};
    Coefficient d{0.0};

    static OperatorSpec laplace() { return OperatorSpec{}; }

    /// Smallest eigenvalue of the symmetric part of A over the given nodes.
    double ellipticity_margin(const Mesh& m) const {
        double gamma0 = std::numeric_limits<double>::infinity();
        for (int n = 0; n < m.n_nodes(); ++n) {
            const double a11 = a[0][0].at(n);
            const double a22 = a[1][1].at(n);
            const double s12 = 0.5 * (a[0][1].at(n) + a[1][0].at(n));
            // eigenvalues of [[a11, s12], [s12, a22]]
            const double tr = 0.5 * (a11 + a22);
            const double disc = std::sqrt(0.25 * (a11 - a22) * (a11 - a22) + s12 * s12);
            gamma0 = std::min(gamma0, tr - disc);
        }
        return gamma0;
    }

    void check_elliptic(const Mesh& m) const {
        if (!(ellipticity_margin(m) > 0.0))
            throw InvalidCoefficients("OperatorSpec: symmetric part of A is not positive definite");
    }
};

/// Interior-restricted sparse operator with an exact elementwise transpose
/// as its adjoint. The LU factorization is built lazily and shared.
struct SparseOperator {
    SpMat matrix;             // n_interior x n_interior
    const Mesh* mesh = nullptr;
    double coercivity_margin = 0.0;  // measured gamma1 w.r.t. the H1 norm; 0 if not computed

    mutable std::shared_ptr<Eigen::SparseLU<SpMat>> lu;

    int dim() const { return static_cast<int>(matrix.rows()); }

    SparseOperator adjoint() const {
        SparseOperator t;
        t.matrix = SpMat(matrix.transpose());
        t.mesh = mesh;
        t.coercivity_margin = coercivity_margin;
        return t;
    }

    const Eigen::SparseLU<SpMat>& factorization() const {
        if (!lu) {
            lu = std::make_shared<Eigen::SparseLU<SpMat>>();
            lu->compute(matrix);
            if (lu->info() != Eigen::Success)
                throw SolverFailure("SparseOperator: LU factorization failed");
        }
        return *lu;
    }
};

struct MassMatrices {
    SpMat consistent;          // n_nodes x n_nodes
    Eigen::VectorXd lumped;    // row sums, one per node
};

namespace detail {

struct ElementGeometry {
    double area;
    std::array<Eigen::Vector2d, 3> grad;  // gradients of the barycentric hats
};

inline ElementGeometry element_geometry(const Mesh& m, const std::array<int, 3>& t) {
    const auto& p0 = m.nodes[t[0]];
    const auto& p1 = m.nodes[t[1]];
    const auto& p2 = m.nodes[t[2]];
    const double det = triangle_double_area(m, t);
    ElementGeometry g;
    g.area = 0.5 * det;
    g.grad[0] = Eigen::Vector2d(p1.y() - p2.y(), p2.x() - p1.x()) / det;
    g.grad[1] = Eigen::Vector2d(p2.y() - p0.y(), p0.x() - p2.x()) / det;
    g.grad[2] = Eigen::Vector2d(p0.y() - p1.y(), p1.x() - p0.x()) / det;
    return g;
}

/// Local 3x3 matrix of the bilinear form on one element. Exact for constant
/// coefficients; variable coefficients are taken at the element centroid.
inline Eigen::Matrix3d local_operator(const Mesh& m, const OperatorSpec& spec,
                                      const std::array<int, 3>& t) {
    const ElementGeometry g = element_geometry(m, t);
    Eigen::Matrix2d A;
    A << spec.a[0][0].mean3(t), spec.a[0][1].mean3(t),
         spec.a[1][0].mean3(t), spec.a[1][1].mean3(t);
    const Eigen::Vector2d b(spec.b[0].mean3(t), spec.b[1].mean3(t));
    const Eigen::Vector2d c(spec.c[0].mean3(t), spec.c[1].mean3(t));
    const double d = spec.d.mean3(t);

    Eigen::Matrix3d loc;
    for (int r = 0; r < 3; ++r) {       // test function index
        for (int col = 0; col < 3; ++col) {  // trial function index
            double v = g.area * g.grad[r].dot(A * g.grad[col]);
            v += g.area / 3.0 * b.dot(g.grad[r]);      // int hat_col = area/3
            v += g.area / 3.0 * c.dot(g.grad[col]);
            v += d * g.area / 12.0 * (r == col ? 2.0 : 1.0);
            loc(r, col) = v;
        }
    }
    return loc;
}

} // namespace detail

/// Assemble the interior-restricted operator matrix.
inline SparseOperator assemble_operator(const Mesh& mesh, const OperatorSpec& spec) {
    spec.check_elliptic(mesh);

    std::vector<Triplet> trips;
    trips.reserve(mesh.triangles.size() * 9);
    for (const auto& t : mesh.triangles) {
        const Eigen::Matrix3d loc = detail::local_operator(mesh, spec, t);
        for (int r = 0; r < 3; ++r) {
            const int ir = mesh.node_to_interior[t[r]];
            if (ir < 0) continue;
            for (int c = 0; c < 3; ++c) {
                const int ic = mesh.node_to_interior[t[c]];
                if (ic < 0) continue;
                trips.emplace_back(ir, ic, loc(r, c));
            }
        }
    }
    SparseOperator op;
    op.mesh = &mesh;
    op.matrix.resize(mesh.n_interior(), mesh.n_interior());
    op.matrix.setFromTriplets(trips.begin(), trips.end());
    return op;
}

/// Consistent P1 mass matrix over all nodes plus its lumped row sums.
inline MassMatrices assemble_mass(const Mesh& mesh) {
    std::vector<Triplet> trips;
    trips.reserve(mesh.triangles.size() * 9);
    for (const auto& t : mesh.triangles) {
        const double area = 0.5 * triangle_double_area(mesh, t);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                trips.emplace_back(t[r], t[c], area / 12.0 * (r == c ? 2.0 : 1.0));
    }
    MassMatrices mm;
    mm.consistent.resize(mesh.n_nodes(), mesh.n_nodes());
    mm.consistent.setFromTriplets(trips.begin(), trips.end());
    mm.lumped = mm.consistent * Eigen::VectorXd::Ones(mesh.n_nodes());
    return mm;
}

/// Direct sparse solve K x = r on the interior with a residual guarantee.
inline Eigen::VectorXd solve_linear(const SparseOperator& op, const Eigen::VectorXd& rhs) {
    if (rhs.size() != op.dim())
        throw std::invalid_argument("solve_linear: rhs dimension mismatch");
    Eigen::VectorXd x = op.factorization().solve(rhs);
    const double res = (op.matrix * x - rhs).norm();
    if (!(res <= 1e-12 * (1.0 + rhs.norm())))
        throw SolverFailure("solve_linear: residual too large", res);
    return x;
}

} // namespace obsopt

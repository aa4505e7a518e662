#pragma once

#include <memory>

#include <Eigen/SparseCholesky>

#include "obsopt/assembly.hpp"

namespace obsopt {

struct FieldNorms {
    double l2 = 0.0;
    double h1_semi = 0.0;
    double linf = 0.0;
    double h_minus1 = 0.0;
};

/// Mesh plus the fixed reference objects used everywhere: the -Laplace
/// stiffness (the norm-defining operator for the discrete H^-1 norm),
/// the consistent mass matrix, and the lumped weights.
class P1Space {
public:
    explicit P1Space(int n_sub)
        : mesh_(build_structured_mesh(n_sub)),
          laplace_(assemble_operator(mesh_, OperatorSpec::laplace())),
          mass_(assemble_mass(mesh_)) {
        lumped_interior_ = restrict_interior(mesh_, mass_.lumped);
        k0_chol_ = std::make_shared<Eigen::SimplicialLDLT<SpMat>>(laplace_.matrix);
        if (k0_chol_->info() != Eigen::Success)
            throw SolverFailure("P1Space: Cholesky of the Laplace stiffness failed");
    }

    const Mesh& mesh() const { return mesh_; }
    const SparseOperator& laplace() const { return laplace_; }
    const MassMatrices& mass() const { return mass_; }
    const Eigen::VectorXd& lumped_interior() const { return lumped_interior_; }

    Eigen::VectorXd laplace_solve(const Eigen::VectorXd& rhs) const {
        return k0_chol_->solve(rhs);
    }

    /// Lumped load vector of an L2 control: r_i = m_i u_i on interior nodes.
    Eigen::VectorXd lumped_load(const NodalField& u) const {
        return lumped_interior_.cwiseProduct(restrict_interior(mesh_, u.values));
    }

    double lumped_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        return (lumped_interior_.cwiseProduct(a)).dot(b);
    }
    double lumped_norm(const Eigen::VectorXd& a) const {
        return std::sqrt(lumped_inner(a, a));
    }

    FieldNorms norms(const NodalField& f) const {
        FieldNorms n;
        n.l2 = std::sqrt(std::max(0.0, f.values.dot(mass_.consistent * f.values)));
        const Eigen::VectorXd fi = restrict_interior(mesh_, f.values);
        n.h1_semi = std::sqrt(std::max(0.0, fi.dot(laplace_.matrix * fi)));
        n.linf = f.values.size() ? f.values.cwiseAbs().maxCoeff() : 0.0;
        n.h_minus1 = 0.0;
        return n;
    }

    FieldNorms norms(const DualField& f) const {
        FieldNorms n;
        // density representative rho_i = values_i / m_i, so ||rho||_L2^2 = sum v_i^2/m_i
        n.l2 = std::sqrt(f.values.cwiseProduct(f.values).cwiseQuotient(lumped_interior_).sum());
        n.linf = f.values.size() ? f.values.cwiseAbs().maxCoeff() : 0.0;
        n.h_minus1 = std::sqrt(std::max(0.0, f.values.dot(laplace_solve(f.values))));
        n.h1_semi = 0.0;
        return n;
    }

    double h_minus1_norm(const Eigen::VectorXd& dual) const {
        return std::sqrt(std::max(0.0, dual.dot(laplace_solve(dual))));
    }

    /// Squared H1 norm of an interior vector (H1-seminorm via K0 plus L2).
    double h1_sq(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd nodal = extend_zero(mesh_, x);
        return x.dot(laplace_.matrix * x) + nodal.dot(mass_.consistent * nodal);
    }

    /// Generalized inverse-iteration estimate of the coercivity margin
    ///   min_x  x^T K_sym x / ||x||_H1^2.
    double coercivity_margin(const SparseOperator& op, int iters = 60) const {
        SpMat ksym = 0.5 * (SpMat(op.matrix.transpose()) + op.matrix);
        Eigen::SimplicialLDLT<SpMat> fac(ksym);
        if (fac.info() != Eigen::Success)
            throw InvalidCoefficients("coercivity check: symmetrized matrix not positive definite");
        // H1 Gram on the interior
        SpMat mint(mesh_.n_interior(), mesh_.n_interior());
        {
            std::vector<Triplet> trips;
            for (int k = 0; k < mass_.consistent.outerSize(); ++k)
                for (SpMat::InnerIterator it(mass_.consistent, k); it; ++it) {
                    const int r = mesh_.node_to_interior[static_cast<int>(it.row())];
                    const int c = mesh_.node_to_interior[static_cast<int>(it.col())];
                    if (r >= 0 && c >= 0) trips.emplace_back(r, c, it.value());
                }
            mint.setFromTriplets(trips.begin(), trips.end());
        }
        const SpMat gram = laplace_.matrix + mint;
        Eigen::VectorXd x = Eigen::VectorXd::Ones(mesh_.n_interior());
        x.normalize();
        double lambda = 0.0;
        for (int k = 0; k < iters; ++k) {
            Eigen::VectorXd y = fac.solve(gram * x);
            y.normalize();
            x = y;
            lambda = x.dot(ksym * x) / x.dot(gram * x);
        }
        if (!(lambda > 0.0))
            throw InvalidCoefficients("coercivity check: nonpositive margin");
        return lambda;
    }

private:
    Mesh mesh_;
    SparseOperator laplace_;
    MassMatrices mass_;
    Eigen::VectorXd lumped_interior_;
    std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> k0_chol_;
};

} // namespace obsopt

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "hk/eigensolver.hpp"
#include "hk/error.hpp"
#include "hk/fem.hpp"
#include "hk/mesh.hpp"

namespace hk {

/// Fourier coefficients of a field in an eigenbasis.
struct CoefficientVector {
    Eigen::VectorXd beta;
    MeshId basis_id = 0;

    Eigen::Index size() const noexcept { return beta.size(); }
};

namespace detail {

inline void check_field_for_basis(const EigenBasis& basis, Eigen::Index rows) {
    if (rows != basis.num_vertices())
        throw ValidationError("field has " + std::to_string(rows) + " values but the basis has " +
                              std::to_string(basis.num_vertices()) + " vertices");
}

inline void check_coefficients(const EigenBasis& basis, const CoefficientVector& c) {
    if (c.size() != basis.size())
        throw ValidationError("coefficient vector length " + std::to_string(c.size()) +
                              " does not match basis size " + std::to_string(basis.size()));
    if (c.basis_id != basis.mesh_id) throw ValidationError("coefficients belong to a different basis");
    if (!c.beta.allFinite()) throw ValidationError("non-finite coefficient");
}

}  // namespace detail

/**
 * Vertexwise least squares in a fixed basis. The QR factorisation of the n x (k+1)
 * design matrix is computed once and reused for every field.
 */
class LeastSquaresFitter {
public:
    explicit LeastSquaresFitter(const EigenBasis& basis) : basis_id_(basis.mesh_id) {
        if (basis.size() >= basis.num_vertices())
            throw ArgumentError("least squares needs more vertices than basis functions");
        qr_.compute(basis.eigenvectors);
        const Eigen::VectorXd diag = qr_.matrixQR().diagonal().cwiseAbs();
        if (diag.minCoeff() <= 1e-10 * diag.maxCoeff())
            throw NumericalError("design matrix is rank deficient");
    }

    /// Columns of Y are fields; returns the coefficient matrix.
    Eigen::MatrixXd solve(const Eigen::MatrixXd& Y) const {
        if (Y.rows() != qr_.rows()) throw ValidationError("field length does not match the basis");
        return qr_.solve(Y);
    }

    CoefficientVector fit(const ScalarField& field) const { return {solve(field.values), basis_id_}; }

private:
    Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
    MeshId basis_id_;
};

/// Least-squares coefficients minimising ||Y - Psi beta||^2 over vertex values.
inline CoefficientVector fit_coefficients(const EigenBasis& basis, const ScalarField& field) {
    if (field.mesh_id != 0 && basis.mesh_id != 0 && field.mesh_id != basis.mesh_id)
        throw ValidationError("field and basis are bound to different meshes");
    detail::check_field_for_basis(basis, field.size());
    return LeastSquaresFitter(basis).fit(field);
}

/// A-weighted projection beta_j = psi_j' A Y; exact for an A-orthonormal basis.
inline CoefficientVector project_coefficients(const EigenBasis& basis, const SparseSymmetric& A,
                                              const ScalarField& field) {
    detail::check_field_for_basis(basis, field.size());
    return {basis.eigenvectors.transpose() * (A * field.values), basis.mesh_id};
}

inline Eigen::VectorXd heat_weights(const EigenBasis& basis, double sigma) {
    if (!(sigma >= 0.0)) throw ArgumentError("bandwidth must be nonnegative");
    return (-sigma * basis.eigenvalues.array()).exp().matrix();
}

/// sum_j exp(-lambda_j sigma) beta_j psi_j at every vertex.
inline ScalarField heat_kernel_smooth(const EigenBasis& basis, const CoefficientVector& coeffs, double sigma) {
    detail::check_coefficients(basis, coeffs);
    const Eigen::VectorXd w = heat_weights(basis, sigma).cwiseProduct(coeffs.beta);
    return ScalarField(basis.eigenvectors * w, basis.mesh_id);
}

/// Fits and smooths many fields (columns) at once.
inline Eigen::MatrixXd heat_kernel_smooth_columns(const EigenBasis& basis, const LeastSquaresFitter& fitter,
                                                  const Eigen::MatrixXd& Y, double sigma) {
    const Eigen::MatrixXd beta = fitter.solve(Y);
    return basis.eigenvectors * (heat_weights(basis, sigma).asDiagonal() * beta);
}

/// Truncated heat kernel K_sigma(p, q) = sum_j exp(-lambda_j sigma) psi_j(p) psi_j(q).
inline double heat_kernel_eval(const EigenBasis& basis, double sigma, Eigen::Index p, Eigen::Index q) {
    if (!(sigma > 0.0)) throw ArgumentError("bandwidth must be positive");
    if (p < 0 || q < 0 || p >= basis.num_vertices() || q >= basis.num_vertices())
        throw ArgumentError("vertex index out of range");
    double k = 0.0;
    for (Eigen::Index j = 0; j < basis.size(); ++j)
        k += std::exp(-basis.eigenvalues[j] * sigma) * (basis.eigenvectors(p, j) * basis.eigenvectors(q, j));
    return k;
}

/// The kernel column K_sigma(p, .) over all vertices.
inline Eigen::VectorXd heat_kernel_column(const EigenBasis& basis, double sigma, Eigen::Index p) {
    if (!(sigma > 0.0)) throw ArgumentError("bandwidth must be positive");
    if (p < 0 || p >= basis.num_vertices()) throw ArgumentError("vertex index out of range");
    const Eigen::VectorXd w = heat_weights(basis, sigma).cwiseProduct(basis.eigenvectors.row(p).transpose());
    return basis.eigenvectors * w;
}

/// Diffusion wavelet transform <W_{sigma,q}, Y> = sum_i K_sigma(q, p_i) A-weighted against Y.
inline double wavelet_transform(const EigenBasis& basis, const SparseSymmetric& A, double sigma, Eigen::Index q,
                                const ScalarField& field) {
    detail::check_field_for_basis(basis, field.size());
    return heat_kernel_column(basis, sigma, q).dot(A * field.values);
}

// ---------------------------------------------------------------------------
// Iterated kernel smoothing

/**
 * Repeated one-ring convolution with a normalised truncated Gaussian
 * exp(-d^2 / (4 h)) over the first ring plus the centre vertex, h = sigma / m.
 * Distances are Euclidean edge lengths.
 */
class IteratedKernelSmoother {
public:
    IteratedKernelSmoother(const TriangleMesh& mesh, double sigma, int iterations)
        : iterations_(iterations), mesh_id_(mesh.id()) {
        if (iterations < 1) throw ArgumentError("iterations must be at least 1");
        if (!(sigma > 0.0)) throw ArgumentError("bandwidth must be positive");
        const double h = sigma / iterations;
        const auto n = mesh.num_vertices();
        offsets_.reserve(n + 1);
        offsets_.push_back(0);
        for (std::size_t p = 0; p < n; ++p) {
            const auto ring = mesh.one_ring(static_cast<int>(p));
            if (ring.empty()) throw ValidationError("vertex " + std::to_string(p) + " has no neighbours");
            // Centre first; its weight exp(0) = 1 keeps the normaliser positive.
            std::vector<double> w{1.0};
            double total = 1.0;
            for (int q : ring) {
                const double d2 = (mesh.vertex(q) - mesh.vertex(static_cast<int>(p))).squaredNorm();
                w.push_back(std::exp(-d2 / (4.0 * h)));
                total += w.back();
            }
            index_.push_back(static_cast<int>(p));
            weight_.push_back(w[0] / total);
            for (std::size_t i = 0; i < ring.size(); ++i) {
                index_.push_back(ring[i]);
                weight_.push_back(w[i + 1] / total);
            }
            offsets_.push_back(index_.size());
        }
    }

    /// Smooths every column of Y.
    Eigen::MatrixXd apply(const Eigen::MatrixXd& Y) const {
        if (Y.rows() + 1 != static_cast<Eigen::Index>(offsets_.size()))
            throw ValidationError("field length does not match mesh");
        Eigen::MatrixXd cur = Y, next(Y.rows(), Y.cols());
        for (int it = 0; it < iterations_; ++it) {
            for (Eigen::Index p = 0; p < Y.rows(); ++p) {
                auto row = next.row(p);
                row.setZero();
                for (std::size_t e = offsets_[static_cast<std::size_t>(p)]; e < offsets_[static_cast<std::size_t>(p) + 1]; ++e)
                    row += weight_[e] * cur.row(index_[e]);
            }
            cur.swap(next);
        }
        return cur;
    }

    ScalarField apply(const ScalarField& field) const {
        return ScalarField(Eigen::VectorXd(apply(Eigen::MatrixXd(field.values))), mesh_id_);
    }

private:
    int iterations_;
    MeshId mesh_id_;
    std::vector<std::size_t> offsets_;
    std::vector<int> index_;
    std::vector<double> weight_;
};

inline ScalarField iterated_kernel_smooth(const TriangleMesh& mesh, const ScalarField& field, double sigma,
                                          int iterations) {
    field.check(mesh);
    return IteratedKernelSmoother(mesh, sigma, iterations).apply(field);
}

// ---------------------------------------------------------------------------
// Diffusion smoothing

struct DiffusionOptions {
    bool lump_mass = false;   ///< replace A by its row sums
    bool clamp_step = true;   ///< limit the step to 0.5 / lambda_max of the lumped operator
};

struct DiffusionPlan {
    int steps = 0;
    double step = 0.0;             ///< actual step, sigma / steps
    double requested_step = 0.0;
    double lambda_max = 0.0;       ///< power-iteration estimate on the lumped operator
    bool clamped = false;
};

/// Largest eigenvalue of D^-1 C with D the lumped mass, by power iteration.
inline double estimate_lambda_max(const SparseSymmetric& A, const SparseSymmetric& C, int iterations = 60) {
    const Eigen::VectorXd d = lumped_mass(A);
    if ((d.array() <= 0.0).any()) throw NumericalError("lumped mass has a nonpositive entry");
    const Eigen::VectorXd dis = d.cwiseSqrt().cwiseInverse();
    Eigen::VectorXd v(A.dimension());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = ((i % 2) ? 1.0 : -1.0) + 0.1 * std::cos(0.7 * static_cast<double>(i));
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const Eigen::VectorXd w = dis.cwiseProduct(C * dis.cwiseProduct(v));
        lambda = v.dot(w);
        const double nw = w.norm();
        if (nw == 0.0) return 0.0;
        v = w / nw;
    }
    return lambda;
}

/**
 * Forward Euler for df/dsigma = -A^-1 C f. A is factorised once (sparse Cholesky);
 * each step solves A x = C f.
 */
class DiffusionSmoother {
public:
    DiffusionSmoother(const SparseSymmetric& A, const SparseSymmetric& C, double sigma, double step,
                      DiffusionOptions options = {})
        : C_(C.matrix()), lump_(options.lump_mass) {
        if (A.dimension() != C.dimension()) throw ArgumentError("A and C dimensions differ");
        if (!(sigma >= 0.0)) throw ArgumentError("total diffusion time must be nonnegative");
        if (!(step > 0.0)) throw ArgumentError("diffusion step must be positive");
        if (sigma > 0.0 && step > sigma) throw ArgumentError("diffusion step exceeds the total time");
        plan_.requested_step = step;
        plan_.lambda_max = estimate_lambda_max(A, C);
        double eff = step;
        if (options.clamp_step && plan_.lambda_max > 0.0 && step > 0.5 / plan_.lambda_max) {
            eff = 0.5 / plan_.lambda_max;
            plan_.clamped = true;
        }
        plan_.steps = sigma > 0.0 ? std::max(1, static_cast<int>(std::lround(sigma / eff))) : 0;
        plan_.step = plan_.steps > 0 ? sigma / plan_.steps : 0.0;
        if (lump_) {
            inv_lumped_ = lumped_mass(A).cwiseInverse();
        } else {
            llt_.compute(A.matrix());
            if (llt_.info() != Eigen::Success) throw NumericalError("Cholesky factorisation of A failed");
        }
    }

    const DiffusionPlan& plan() const noexcept { return plan_; }

    Eigen::MatrixXd apply(Eigen::MatrixXd f) const {
        for (int s = 0; s < plan_.steps; ++s) {
            const Eigen::MatrixXd Cf = C_ * f;
            const Eigen::MatrixXd x = lump_ ? Eigen::MatrixXd(inv_lumped_.asDiagonal() * Cf) : Eigen::MatrixXd(llt_.solve(Cf));
            const double before = f.norm();
            f -= plan_.step * x;
            if (before > 0.0 && f.norm() > 10.0 * before)
                throw NumericalError("diffusion diverged at step " + std::to_string(s + 1) + " (step " +
                                     std::to_string(plan_.step) + "); use a smaller step");
            if (!f.allFinite()) throw NumericalError("diffusion produced non-finite values; use a smaller step");
        }
        return f;
    }

    ScalarField apply(const ScalarField& field) const {
        return ScalarField(Eigen::VectorXd(apply(Eigen::MatrixXd(field.values))), field.mesh_id);
    }

private:
    SparseMatrix C_;
    bool lump_;
    DiffusionPlan plan_;
    Eigen::VectorXd inv_lumped_;
    Eigen::SimplicialLLT<SparseMatrix> llt_;
};

inline ScalarField diffusion_smooth(const SparseSymmetric& A, const SparseSymmetric& C, const ScalarField& field,
                                    double sigma, double step, DiffusionOptions options = {},
                                    DiffusionPlan* plan = nullptr) {
    if (field.size() != A.dimension()) throw ValidationError("field length does not match the matrices");
    DiffusionSmoother sm(A, C, sigma, step, options);
    if (plan) *plan = sm.plan();
    return sm.apply(field);
}

// ---------------------------------------------------------------------------
// Coefficient CSV

inline void save_coefficients_csv(const std::filesystem::path& path, const CoefficientVector& c) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "index,beta\n" << std::setprecision(17);
    for (Eigen::Index j = 0; j < c.size(); ++j) out << j << ',' << c.beta[j] << '\n';
}

}  // namespace hk

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "hk/error.hpp"
#include "hk/fem.hpp"
#include "hk/mesh.hpp"

namespace hk {

/// Smallest eigenpairs of C psi = lambda A psi, eigenvectors A-orthonormal.
struct EigenBasis {
    Eigen::VectorXd eigenvalues;      ///< ascending, units mm^-2
    Eigen::MatrixXd eigenvectors;     ///< n x (k+1); column j is psi_j
    Eigen::VectorXd residual_norms;   ///< ||C psi - lambda A psi|| / ||A psi||
    MeshId mesh_id = 0;

    Eigen::Index size() const noexcept { return eigenvalues.size(); }
    Eigen::Index num_vertices() const noexcept { return eigenvectors.rows(); }

    /// First m pairs; keeps the contracts of the full basis.
    EigenBasis truncated(Eigen::Index m) const {
        if (m < 1 || m > size()) throw ArgumentError("truncation size out of range");
        return {eigenvalues.head(m), eigenvectors.leftCols(m), residual_norms.head(m), mesh_id};
    }
};

struct EigenSolverOptions {
    double tol = 1e-8;          ///< relative residual ||C psi - lambda A psi|| / ||A psi||
    int block_size = 8;         ///< Krylov block width; eigenvalue multiplicities up to this are resolved
    int krylov_dim = 0;         ///< 0 = automatic
    std::uint64_t seed = 20150130;
};

struct BasisCheck {
    double orthonormality_defect = 0.0;  ///< max |psi_i' A psi_j - delta_ij|
    double max_residual = 0.0;           ///< max relative residual over pairs
};

inline double relative_residual(const SparseSymmetric& A, const SparseSymmetric& C, const Eigen::VectorXd& x,
                                double lambda) {
    const Eigen::VectorXd Ax = A * x;
    const double denom = Ax.norm();
    return denom > 0.0 ? (C * x - lambda * Ax).norm() / denom : std::numeric_limits<double>::infinity();
}

inline BasisCheck verify_basis(const EigenBasis& basis, const SparseSymmetric& A, const SparseSymmetric& C) {
    if (basis.num_vertices() != A.dimension() || A.dimension() != C.dimension())
        throw ArgumentError("basis and matrix dimensions disagree");
    const Eigen::MatrixXd APsi = A.matrix() * basis.eigenvectors;
    Eigen::MatrixXd gram = basis.eigenvectors.transpose() * APsi;
    gram.diagonal().array() -= 1.0;
    BasisCheck out;
    out.orthonormality_defect = gram.cwiseAbs().maxCoeff();
    const Eigen::MatrixXd CPsi = C.matrix() * basis.eigenvectors;
    for (Eigen::Index j = 0; j < basis.size(); ++j) {
        const double denom = APsi.col(j).norm();
        const double r = (CPsi.col(j) - basis.eigenvalues[j] * APsi.col(j)).norm() / denom;
        out.max_residual = std::max(out.max_residual, r);
    }
    return out;
}

namespace detail {

/// Flip so the entry mean is nonnegative; for near-zero mean, make the largest-magnitude entry positive.
inline void canonical_sign(Eigen::Ref<Eigen::VectorXd> v) {
    const double mean = v.mean();
    bool flip = false;
    if (std::abs(mean) >= 1e-12) {
        flip = mean < 0.0;
    } else {
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        flip = v[imax] < 0.0;
    }
    if (flip) v = -v;
}

/// Connected components of the sparsity graph, as component labels per row.
inline std::vector<int> sparsity_components(const SparseMatrix& M, int& count) {
    const Eigen::Index n = M.rows();
    std::vector<int> label(static_cast<std::size_t>(n), -1);
    std::vector<Eigen::Index> stack;
    count = 0;
    for (Eigen::Index seed = 0; seed < n; ++seed) {
        if (label[static_cast<std::size_t>(seed)] >= 0) continue;
        label[static_cast<std::size_t>(seed)] = count;
        stack.push_back(seed);
        while (!stack.empty()) {
            const Eigen::Index v = stack.back();
            stack.pop_back();
            for (SparseMatrix::InnerIterator it(M, v); it; ++it) {
                auto& l = label[static_cast<std::size_t>(it.row())];
                if (l < 0) {
                    l = count;
                    stack.push_back(it.row());
                }
            }
        }
        ++count;
    }
    return label;
}

/**
 * Block Krylov-Schur iteration for the largest eigenvalues of the A-self-adjoint
 * operator Op = (C - s A)^{-1} A, whose eigenvalues 1/(lambda - s) order the
 * smallest lambda first.
 *
 * C annihilates the indicator of each connected component. Those directions are
 * locked up front and projected out of the iteration, otherwise the eigenvalue
 * 1/|s| of Op would swamp the rest of the spectrum in roundoff.
 *
 * Basis columns are A-orthonormal with full re-orthogonalisation (two passes).
 * H holds the expansion coefficients: Op v_j = sum_i H(i, j) v_i.
 */
class ShiftInvertKrylovSchur {
public:
    ShiftInvertKrylovSchur(const SparseSymmetric& A, const SparseSymmetric& C, int nev, const EigenSolverOptions& opt)
        : A_(A.matrix()), C_(C.matrix()), n_(A.dimension()), opt_(opt), rng_(opt.seed) {
        int ncomp = 0;
        const auto label = sparsity_components(A_, ncomp);
        Z_.setZero(n_, ncomp);
        for (Eigen::Index i = 0; i < n_; ++i) Z_(i, label[static_cast<std::size_t>(i)]) = 1.0;
        for (int c = 0; c < ncomp; ++c) Z_.col(c) /= std::sqrt(Z_.col(c).dot(A_ * Z_.col(c)));
        total_ = nev;
        locked_ = std::min<Eigen::Index>(ncomp, nev);
        nev_ = nev - locked_;
        dim_ = n_ - ncomp;
        b_ = std::max<Eigen::Index>(1, std::min<Eigen::Index>(opt.block_size, dim_));
        Eigen::Index m = opt.krylov_dim > 0 ? opt.krylov_dim
                                            : std::max<Eigen::Index>(2 * nev_ + 2 * b_, nev_ + 40);
        m_ = std::max<Eigen::Index>(1, std::min(dim_, std::max<Eigen::Index>(m, nev_ + b_)));
        shift_ = -1e-8 * C.trace() / static_cast<double>(n_);
        SparseMatrix K = C_ - shift_ * A_;
        factor_.compute(K);
        if (factor_.info() != Eigen::Success)
            throw NumericalError("factorisation of the shifted operator C - sA failed");
        V_.resize(n_, m_ + b_);
        H_.setZero(m_ + b_, m_);
    }

    /// Returns (eigenvalues ascending, A-orthonormal eigenvectors, residuals).
    EigenBasis run() {
        if (nev_ == 0) return extract(Eigen::MatrixXd(0, 0), 0);
        const long budget = 50L * nev_ + static_cast<long>(m_) + 4L * static_cast<long>(b_);
        double inner_tol = std::max(opt_.tol * 1e-3, 1e-14);

        for (Eigen::Index i = 0; i < b_; ++i) append_random();
        Eigen::Index s = 0;
        while (true) {
            while (s < m_ && s < cols_) {
                const Eigen::Index width = std::min({b_, m_ - s, cols_ - s});
                expand(s, width);
                s += width;
            }
            const Eigen::Index mm = s;
            Eigen::MatrixXd T = H_.topLeftCorner(mm, mm);
            T = 0.5 * (T + T.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
            if (es.info() != Eigen::Success) throw NumericalError("projected eigenproblem failed");
            // Descending theta = ascending lambda.
            const Eigen::VectorXd theta = es.eigenvalues().reverse();
            const Eigen::MatrixXd Y = es.eigenvectors().rowwise().reverse();
            const Eigen::Index r = cols_ - mm;
            const Eigen::MatrixXd Rblock = H_.block(mm, 0, r, mm);

            bool converged = true;
            for (Eigen::Index i = 0; i < nev_ && converged; ++i) {
                const double est = r > 0 ? (Rblock * Y.col(i)).norm() : 0.0;
                converged = est <= inner_tol * std::abs(theta[i]);
            }
            if (converged) {
                EigenBasis basis = extract(Y.leftCols(nev_), mm);
                if (basis.residual_norms.maxCoeff() < opt_.tol) return basis;
                last_residual_ = basis.residual_norms.maxCoeff();
                if (inner_tol <= 1e-15 || r == 0)
                    throw NumericalError("eigensolver stalled: achieved max relative residual " +
                                         std::to_string(last_residual_) + " > tol " + std::to_string(opt_.tol));
                inner_tol = std::max(inner_tol * 1e-2, 1e-15);
            }
            if (ops_ > budget) {
                EigenBasis basis = extract(Y.leftCols(nev_), mm);
                throw NumericalError("eigensolver did not converge within " + std::to_string(budget) +
                                     " operator applications; achieved max relative residual " +
                                     std::to_string(basis.residual_norms.maxCoeff()));
            }
            s = restart(theta, Y, Rblock, mm);
        }
    }

    int operator_applications() const noexcept { return static_cast<int>(ops_); }

private:
    Eigen::VectorXd random_vector() {
        std::normal_distribution<double> nd;
        Eigen::VectorXd v(n_);
        for (Eigen::Index i = 0; i < n_; ++i) v[i] = nd(rng_);
        return v;
    }

    /// Orthogonalises w against the first `cols_` columns twice; returns accumulated coefficients.
    Eigen::VectorXd orthogonalise(Eigen::VectorXd& w) const {
        Eigen::VectorXd coef = Eigen::VectorXd::Zero(cols_);
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd Aw = A_ * w;
            w.noalias() -= Z_ * (Z_.transpose() * Aw);
            if (cols_ == 0) continue;
            const Eigen::VectorXd c = V_.leftCols(cols_).transpose() * Aw;
            w.noalias() -= V_.leftCols(cols_) * c;
            coef += c;
        }
        return coef;
    }

    double a_norm(const Eigen::VectorXd& w) const { return std::sqrt(std::max(0.0, w.dot(A_ * w))); }

    /// Adds a random direction A-orthogonal to the basis (no H coefficients).
    void append_random() {
        if (cols_ >= dim_) return;
        for (int attempt = 0; attempt < 5; ++attempt) {
            Eigen::VectorXd w = random_vector();
            const double before = a_norm(w);
            orthogonalise(w);
            const double beta = a_norm(w);
            if (beta > 1e-8 * before) {
                V_.col(cols_++) = w / beta;
                return;
            }
        }
        throw NumericalError("could not extend Krylov basis with a random direction");
    }

    /// Applies Op to source columns [s, s+width) and appends the orthonormalised results.
    void expand(Eigen::Index s, Eigen::Index width) {
        Eigen::MatrixXd W(n_, width);
        for (Eigen::Index i = 0; i < width; ++i) {
            W.col(i) = factor_.solve(A_ * V_.col(s + i));
            ++ops_;
        }
        // Block classical Gram-Schmidt against the existing basis, twice.
        const Eigen::Index base = cols_;
        Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(base, width);
        Eigen::VectorXd before(width);
        for (Eigen::Index i = 0; i < width; ++i) before[i] = a_norm(W.col(i));
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::MatrixXd AW = A_ * W;
            W.noalias() -= Z_ * (Z_.transpose() * AW);
            const Eigen::MatrixXd c = V_.leftCols(base).transpose() * AW;
            W.noalias() -= V_.leftCols(base) * c;
            coef += c;
        }
        H_.block(0, s, base, width) = coef;
        // Within the block, one column at a time.
        for (Eigen::Index i = 0; i < width; ++i) {
            Eigen::VectorXd w = W.col(i);
            const Eigen::Index start = cols_;
            Eigen::VectorXd extra = Eigen::VectorXd::Zero(cols_ - base);
            if (cols_ > base) {
                for (int pass = 0; pass < 2; ++pass) {
                    const Eigen::VectorXd Aw = A_ * w;
                    const Eigen::VectorXd c = V_.middleCols(base, cols_ - base).transpose() * Aw;
                    w.noalias() -= V_.middleCols(base, cols_ - base) * c;
                    extra += c;
                }
                H_.block(base, s + i, cols_ - base, 1) = extra;
            }
            const double beta = a_norm(w);
            if (beta > 1e-10 * std::max(before[i], 1e-300) && cols_ < dim_) {
                // Guard against leakage from the first-stage projection.
                const Eigen::VectorXd fix = orthogonalise(w);
                H_.block(0, s + i, cols_, 1) += fix;
                const double beta2 = a_norm(w);
                V_.col(cols_) = w / beta2;
                H_(cols_, s + i) = beta2;
                ++cols_;
            } else {
                append_random();
            }
            (void)start;
        }
    }

    /// Keeps the leading Ritz vectors and the residual block; returns the next source index.
    Eigen::Index restart(const Eigen::VectorXd& theta, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Rblock,
                         Eigen::Index mm) {
        const Eigen::Index r = cols_ - mm;
        Eigen::Index p = nev_ + (mm - nev_) / 2;
        p = std::min(p, mm - 1);
        p = std::max<Eigen::Index>(p, std::min(nev_, mm - 1));
        const Eigen::MatrixXd kept = V_.leftCols(mm) * Y.leftCols(p);
        const Eigen::MatrixXd resid = V_.middleCols(mm, r);
        V_.leftCols(p) = kept;
        V_.middleCols(p, r) = resid;
        H_.setZero();
        H_.topLeftCorner(p, p).diagonal() = theta.head(p);
        H_.block(p, 0, r, p) = Rblock * Y.leftCols(p);
        cols_ = p + r;
        return p;
    }

    EigenBasis extract(const Eigen::MatrixXd& Y, Eigen::Index mm) const {
        Eigen::MatrixXd X(n_, total_);
        X.leftCols(locked_) = Z_.leftCols(locked_);
        if (nev_ > 0) X.rightCols(nev_) = V_.leftCols(mm) * Y;
        const Eigen::MatrixXd AX = A_ * X;
        const Eigen::MatrixXd CX = C_ * X;
        std::vector<double> lambda(static_cast<std::size_t>(total_));
        for (Eigen::Index j = 0; j < total_; ++j) {
            const double xa = X.col(j).dot(AX.col(j));
            // Locked columns are exact piecewise-constant null vectors of C.
            lambda[static_cast<std::size_t>(j)] = j < locked_ ? 0.0 : X.col(j).dot(CX.col(j)) / xa;
        }
        std::vector<Eigen::Index> order(static_cast<std::size_t>(total_));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](auto a, auto b) { return lambda[static_cast<std::size_t>(a)] < lambda[static_cast<std::size_t>(b)]; });
        EigenBasis out;
        out.eigenvalues.resize(total_);
        out.eigenvectors.resize(n_, total_);
        out.residual_norms.resize(total_);
        for (Eigen::Index j = 0; j < total_; ++j) {
            const auto src = order[static_cast<std::size_t>(j)];
            const double scale = 1.0 / std::sqrt(X.col(src).dot(AX.col(src)));
            out.eigenvectors.col(j) = X.col(src) * scale;
            const double lam = lambda[static_cast<std::size_t>(src)];
            out.eigenvalues[j] = lam;
            const Eigen::VectorXd ax = AX.col(src) * scale;
            out.residual_norms[j] = (CX.col(src) * scale - lam * ax).norm() / ax.norm();
            canonical_sign(out.eigenvectors.col(j));
        }
        return out;
    }

    const SparseMatrix& A_;
    const SparseMatrix& C_;
    Eigen::Index n_;
    Eigen::Index total_ = 0;   // pairs requested
    Eigen::Index locked_ = 0;  // nullspace pairs taken from Z_
    Eigen::Index nev_ = 0;     // pairs computed by the iteration
    Eigen::Index dim_ = 0;     // dimension of the complement of the nullspace
    Eigen::MatrixXd Z_;
    EigenSolverOptions opt_;
    std::mt19937_64 rng_;
    Eigen::Index b_ = 1;
    Eigen::Index m_ = 0;
    double shift_ = 0.0;
    Eigen::SimplicialLDLT<SparseMatrix> factor_;
    Eigen::MatrixXd V_;
    Eigen::MatrixXd H_;
    Eigen::Index cols_ = 0;
    long ops_ = 0;
    double last_residual_ = 0.0;
};

}  // namespace detail

/**
 * The k+1 smallest eigenpairs of C psi = lambda A psi (A SPD, C PSD).
 *
 * Shift-invert block Krylov-Schur on (C - sA)^{-1} A with s = -1e-8 trace(C)/n.
 * Eigenvalues are Rayleigh quotients of the converged Ritz vectors. Within a
 * repeated eigenvalue the individual vectors are an arbitrary basis of the
 * eigenspace.
 */
inline EigenBasis solve_smallest(const SparseSymmetric& A, const SparseSymmetric& C, int k,
                                 const EigenSolverOptions& options = {}, MeshId mesh_id = 0) {
    if (A.dimension() != C.dimension()) throw ArgumentError("A and C dimensions differ");
    if (k < 0) throw ArgumentError("k must be nonnegative");
    if (static_cast<Eigen::Index>(k) + 1 > A.dimension())
        throw ArgumentError("requested " + std::to_string(k + 1) + " eigenpairs from a problem of dimension " +
                            std::to_string(A.dimension()));
    if (!(options.tol > 0.0)) throw ArgumentError("tolerance must be positive");
    detail::ShiftInvertKrylovSchur solver(A, C, k + 1, options);
    EigenBasis basis = solver.run();
    basis.mesh_id = mesh_id;
    return basis;
}

inline EigenBasis solve_smallest(const SparseSymmetric& A, const SparseSymmetric& C, int k, double tol,
                                 MeshId mesh_id = 0) {
    EigenSolverOptions opt;
    opt.tol = tol;
    return solve_smallest(A, C, k, opt, mesh_id);
}

// ---------------------------------------------------------------------------
// CSV export / import

inline void save_eigenvalues_csv(const std::filesystem::path& path, const EigenBasis& basis) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "index,lambda,residual\n" << std::setprecision(17);
    for (Eigen::Index j = 0; j < basis.size(); ++j)
        out << j << ',' << basis.eigenvalues[j] << ',' << basis.residual_norms[j] << '\n';
}

inline void save_eigenvectors_csv(const std::filesystem::path& path, const EigenBasis& basis) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    for (Eigen::Index j = 0; j < basis.size(); ++j) out << (j ? "," : "") << "psi_" << j;
    out << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < basis.num_vertices(); ++i) {
        for (Eigen::Index j = 0; j < basis.size(); ++j) out << (j ? "," : "") << basis.eigenvectors(i, j);
        out << '\n';
    }
}

namespace detail {

inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, std::string& header) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::getline(in, header);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            cell.erase(0, cell.find_first_not_of(" \t\r"));
            cell.erase(cell.find_last_not_of(" \t\r") + 1);
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw FormatError("invalid number '" + cell + "' in " + path.filename().string(), line_no);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

inline EigenBasis load_basis_csv(const std::filesystem::path& eigenvalues_csv,
                                 const std::filesystem::path& eigenvectors_csv, MeshId mesh_id) {
    std::string header;
    const auto vals = detail::read_numeric_csv(eigenvalues_csv, header);
    if (header.rfind("index,lambda", 0) != 0) throw FormatError("unexpected eigenvalue CSV header", 1);
    const auto vecs = detail::read_numeric_csv(eigenvectors_csv, header);
    EigenBasis b;
    const auto m = static_cast<Eigen::Index>(vals.size());
    b.eigenvalues.resize(m);
    b.residual_norms.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const auto& row = vals[static_cast<std::size_t>(j)];
        if (row.size() < 3) throw FormatError("eigenvalue row needs index,lambda,residual", static_cast<int>(j) + 2);
        b.eigenvalues[j] = row[1];
        b.residual_norms[j] = row[2];
    }
    b.eigenvectors.resize(static_cast<Eigen::Index>(vecs.size()), m);
    for (std::size_t i = 0; i < vecs.size(); ++i) {
        if (static_cast<Eigen::Index>(vecs[i].size()) != m)
            throw FormatError("eigenvector row width does not match eigenvalue count", static_cast<int>(i) + 2);
        for (Eigen::Index j = 0; j < m; ++j) b.eigenvectors(static_cast<Eigen::Index>(i), j) = vecs[i][static_cast<std::size_t>(j)];
    }
    b.mesh_id = mesh_id;
    return b;
}

}  // namespace hk

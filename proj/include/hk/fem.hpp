#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "hk/error.hpp"
#include "hk/mesh.hpp"

namespace hk {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Entries with magnitude below this are not stored.
inline constexpr double kExplicitZero = 1e-15;

/**
 * Symmetric sparse matrix.
 *
 * Both triangles are kept in the underlying compressed storage so products are
 * plain sparse mat-vecs; upper_entries() exposes the row <= col half.
 */
class SparseSymmetric {
public:
    struct Entry {
        int row;
        int col;
        double value;
    };

    SparseSymmetric() = default;
    explicit SparseSymmetric(SparseMatrix m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols()) throw ArgumentError("symmetric matrix must be square");
        m_.prune(kExplicitZero, 1.0);
        m_.makeCompressed();
    }

    Eigen::Index dimension() const noexcept { return m_.rows(); }
    const SparseMatrix& matrix() const noexcept { return m_; }
    double coeff(Eigen::Index i, Eigen::Index j) const { return m_.coeff(i, j); }
    double trace() const { return m_.diagonal().sum(); }
    Eigen::VectorXd operator*(const Eigen::VectorXd& x) const { return m_ * x; }

    std::vector<Entry> upper_entries() const {
        std::vector<Entry> out;
        for (Eigen::Index k = 0; k < m_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(m_, k); it; ++it)
                if (it.row() <= it.col())
                    out.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()});
        std::sort(out.begin(), out.end(),
                  [](const Entry& a, const Entry& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
        return out;
    }

private:
    SparseMatrix m_;
};

namespace detail {

inline SparseSymmetric with_row_sum_diagonal(std::vector<Eigen::Triplet<double>>& trip, Eigen::Index n,
                                             double diagonal_sign) {
    SparseMatrix off(n, n);
    off.setFromTriplets(trip.begin(), trip.end());
    off.prune(kExplicitZero, 1.0);
    Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < off.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(off, k); it; ++it) row_sum[it.row()] += it.value();
    for (Eigen::Index i = 0; i < n; ++i) trip.emplace_back(i, i, diagonal_sign * row_sum[i]);
    SparseMatrix full(n, n);
    full.setFromTriplets(trip.begin(), trip.end());
    return SparseSymmetric(std::move(full));
}

}  // namespace detail

/**
 * Mass-like matrix: A_ij = (|T+| + |T-|) / 12 for adjacent i, j, and A_ii the sum of
 * the off-diagonal entries of row i. The sum of all entries equals the surface area.
 */
inline SparseSymmetric assemble_mass(const TriangleMesh& mesh) {
    require_closed_manifold(mesh);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(7 * mesh.num_triangles());
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles()[t];
        const double w = mesh.triangle_areas()[t] / 12.0;
        for (int k = 0; k < 3; ++k) {
            const int i = tri[k], j = tri[(k + 1) % 3];
            trip.emplace_back(i, j, w);
            trip.emplace_back(j, i, w);
        }
    }
    return detail::with_row_sum_diagonal(trip, static_cast<Eigen::Index>(mesh.num_vertices()), 1.0);
}

/**
 * Cotan matrix: C_ij = -(cot theta_ij + cot phi_ij) / 2 over the two angles opposite
 * edge (i, j), C_ii = -sum_j C_ij. Obtuse angles give positive off-diagonals and are kept.
 */
inline SparseSymmetric assemble_cotan(const TriangleMesh& mesh) {
    require_closed_manifold(mesh);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(7 * mesh.num_triangles());
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles()[t];
        for (int k = 0; k < 3; ++k) {
            const int o = tri[k], i = tri[(k + 1) % 3], j = tri[(k + 2) % 3];
            const Vec3 u = mesh.vertex(i) - mesh.vertex(o);
            const Vec3 v = mesh.vertex(j) - mesh.vertex(o);
            const double cross = u.cross(v).norm();
            const double dot = u.dot(v);
            const double angle = std::atan2(cross, dot);
            if (!(angle > 0.0 && angle < M_PI) || cross == 0.0)
                throw ValidationError("cotan assembly: degenerate angle in triangle " + std::to_string(t));
            // cot(atan2(|u x v|, u.v)) == u.v / |u x v|
            const double half_cot = 0.5 * dot / cross;
            trip.emplace_back(i, j, -half_cot);
            trip.emplace_back(j, i, -half_cot);
        }
    }
    return detail::with_row_sum_diagonal(trip, static_cast<Eigen::Index>(mesh.num_vertices()), -1.0);
}

/// Row sums of A as a vector (the lumped mass).
inline Eigen::VectorXd lumped_mass(const SparseSymmetric& A) {
    return A.matrix() * Eigen::VectorXd::Ones(A.dimension());
}

/// Coordinate-format dump: one "row col value" line per stored upper-triangle entry.
inline void write_coordinate(std::ostream& out, const SparseSymmetric& m) {
    out << std::setprecision(17);
    for (const auto& e : m.upper_entries()) out << e.row << ' ' << e.col << ' ' << e.value << '\n';
}

}  // namespace hk

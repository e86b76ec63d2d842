#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <gtest/gtest.h>

#include "hk/fem.hpp"
#include "hk/generators.hpp"

using namespace hk;

namespace {

/// Icosahedron rescaled to unit edge length: every triangle is unit equilateral.
TriangleMesh unit_edge_icosahedron() {
    const auto m = make_icosphere(0);
    const auto& t = m.triangles().front();
    const double edge = (m.vertex(t[0]) - m.vertex(t[1])).norm();
    return transform_vertices(m, Eigen::Matrix3d::Identity(), Vec3::Zero(), 1.0 / edge);
}

Eigen::MatrixXd dense(const SparseSymmetric& m) { return Eigen::MatrixXd(m.matrix()); }

}  // namespace

TEST(MassMatrix, EquilateralOffDiagonal) {
    const auto m = unit_edge_icosahedron();
    const auto A = assemble_mass(m);
    const auto& t = m.triangles().front();
    EXPECT_NEAR(A.coeff(t[0], t[1]), std::sqrt(3.0) / 24.0, 1e-12);
    EXPECT_NEAR(A.coeff(t[0], t[1]), 0.072169, 1e-6);
}

TEST(CotanMatrix, EquilateralOffDiagonal) {
    const auto m = unit_edge_icosahedron();
    const auto C = assemble_cotan(m);
    const auto& t = m.triangles().front();
    EXPECT_NEAR(C.coeff(t[1], t[2]), -1.0 / std::sqrt(3.0), 1e-12);
}

TEST(MassMatrix, EntriesSumToArea) {
    for (const auto& m : {make_icosphere(3), make_t_junction(10, 4, 1), make_grid_torus(12, 9)}) {
        const auto A = assemble_mass(m);
        EXPECT_NEAR(A.matrix().sum(), m.total_area(), 1e-10 * m.total_area());
        EXPECT_NEAR(lumped_mass(A).sum(), m.total_area(), 1e-10 * m.total_area());
    }
}

TEST(MassMatrix, DiagonalIsRowSumOfOffDiagonal) {
    const auto A = dense(assemble_mass(make_icosphere(2)));
    for (Eigen::Index i = 0; i < A.rows(); ++i) EXPECT_NEAR(A(i, i), A.row(i).sum() - A(i, i), 1e-14);
}

TEST(MassMatrix, SymmetricPositiveDefinite) {
    const auto A = assemble_mass(make_t_junction(4, 2, 1));
    EXPECT_TRUE(dense(A).isApprox(dense(A).transpose(), 0.0));
    Eigen::SimplicialLLT<SparseMatrix> llt(A.matrix());
    EXPECT_EQ(llt.info(), Eigen::Success);
}

TEST(CotanMatrix, RightAngleGivesZeroContribution) {
    // Unit cube faces split along diagonals: the diagonal sees two right angles.
    const auto m = make_t_junction(1, 1, 1);
    const auto C = assemble_cotan(m);
    int checked = 0;
    for (const auto& e : m.edges()) {
        const double len = (m.vertex(e.a) - m.vertex(e.b)).norm();
        if (std::abs(len - std::sqrt(2.0)) < 1e-12) {
            EXPECT_EQ(C.coeff(e.a, e.b), 0.0);
            ++checked;
        }
    }
    EXPECT_GT(checked, 0);
}

TEST(CotanMatrix, AnnihilatesConstants) {
    for (const auto& m : {make_icosphere(3), make_t_junction(6, 3, 1), make_grid_torus(10, 10)}) {
        const auto C = assemble_cotan(m);
        const Eigen::VectorXd r = C * Eigen::VectorXd::Ones(C.dimension());
        EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(CotanMatrix, PositiveSemidefinite) {
    const auto C = dense(assemble_cotan(make_icosphere(1)));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-12);
    EXPECT_TRUE(C.isApprox(C.transpose(), 0.0));
}

TEST(CotanMatrix, CoordinateRayleighQuotientOnSphere) {
    const auto m = make_icosphere(4);
    const auto A = assemble_mass(m), C = assemble_cotan(m);
    for (int axis = 0; axis < 3; ++axis) {
        const Eigen::VectorXd z = coordinate_field(m, axis).values;
        const double q = z.dot(C * z) / z.dot(A * z);
        EXPECT_NEAR(q, 2.0, 0.06) << "axis " << axis;
    }
}

TEST(CotanMatrix, TJunctionHasNegativeOffDiagonal) {
    const auto C = assemble_cotan(make_t_junction(10, 4, 1));
    bool negative = false;
    for (const auto& e : C.upper_entries())
        if (e.row != e.col && e.value < 0.0) negative = true;
    EXPECT_TRUE(negative);
}

TEST(CotanMatrix, ObtuseAngleKeepsPositiveEntry) {
    // Flattened tetrahedron: the apex angles opposite the long edge are obtuse.
    const TriangleMesh m({{-2, 0, 0}, {2, 0, 0}, {0, 0.3, 0.2}, {0, -0.3, 0.2}},
                         {{0, 1, 2}, {1, 0, 3}, {0, 2, 3}, {1, 3, 2}});
    const auto C = assemble_cotan(m);
    EXPECT_GT(C.coeff(0, 1), 0.0);
    const Eigen::VectorXd r = C * Eigen::VectorXd::Ones(4);
    EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Operators, PermutationEquivariance) {
    const auto m = make_icosphere(2);
    std::vector<int> perm(m.num_vertices());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937 rng(3);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto p = permute_vertices(m, perm);
    const auto A = dense(assemble_mass(m)), Ap = dense(assemble_mass(p));
    const auto C = dense(assemble_cotan(m)), Cp = dense(assemble_cotan(p));
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            EXPECT_NEAR(Ap(perm[i], perm[j]), A(i, j), 1e-14);
            EXPECT_NEAR(Cp(perm[i], perm[j]), C(i, j), 1e-12);
        }
}

TEST(Operators, SparsityFollowsEdges) {
    const auto m = make_icosphere(1);
    const auto A = assemble_mass(m);
    EXPECT_EQ(A.upper_entries().size(), m.num_vertices() + m.num_edges());
}

TEST(Operators, RejectOpenSurface) {
    const TriangleMesh open({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
    EXPECT_THROW(assemble_mass(open), TopologyError);
    EXPECT_THROW(assemble_cotan(open), TopologyError);
}

TEST(Operators, CoordinateDumpListsUpperTriangle) {
    const auto A = assemble_mass(make_icosphere(0));
    std::ostringstream out;
    write_coordinate(out, A);
    std::istringstream in(out.str());
    int r, c, lines = 0;
    double v;
    while (in >> r >> c >> v) {
        EXPECT_LE(r, c);
        EXPECT_EQ(v, A.coeff(r, c));
        ++lines;
    }
    EXPECT_EQ(lines, 12 + 30);
}

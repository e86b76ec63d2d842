#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hk/generators.hpp"
#include "hk/mesh.hpp"
#include "hk/mesh_io.hpp"

using namespace hk;

namespace {

TriangleMesh tetrahedron() {
    return TriangleMesh({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}}, {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

constexpr const char* kTetraOff = R"(OFF
# regular tetrahedron
4 4 0
1 1 1
1 -1 -1
-1 1 -1
-1 -1 1
3 0 1 2
3 0 3 1
3 0 2 3
3 1 3 2
)";

}  // namespace

TEST(Mesh, TetrahedronCounts) {
    const auto m = tetrahedron();
    EXPECT_EQ(m.num_vertices(), 4u);
    EXPECT_EQ(m.num_triangles(), 4u);
    EXPECT_EQ(m.num_edges(), 6u);
    EXPECT_EQ(euler_characteristic(m), 2);
}

TEST(Mesh, RejectsOutOfRangeIndex) {
    EXPECT_THROW(TriangleMesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 3}}), ValidationError);
}

TEST(Mesh, DegenerateTriangleNamesIndex) {
    try {
        TriangleMesh({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}}, {{0, 1, 3}, {0, 1, 2}});
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("triangle 1"), std::string::npos) << e.what();
    }
}

TEST(Mesh, RejectsNonFiniteVertex) {
    EXPECT_THROW(TriangleMesh({{0, 0, 0}, {1, 0, NAN}, {0, 1, 0}}, {{0, 1, 2}}), ValidationError);
}

TEST(Mesh, OneRingIsSymmetricAndUnique) {
    const auto m = make_t_junction(3, 2, 2);
    for (std::size_t v = 0; v < m.num_vertices(); ++v) {
        const auto ring = m.one_ring(static_cast<int>(v));
        std::vector<int> r(ring.begin(), ring.end());
        std::sort(r.begin(), r.end());
        EXPECT_TRUE(std::adjacent_find(r.begin(), r.end()) == r.end());
        for (int u : r) {
            const auto back = m.one_ring(u);
            EXPECT_NE(std::find(back.begin(), back.end(), static_cast<int>(v)), back.end());
        }
    }
}

TEST(Mesh, AreaInvariantUnderReordering) {
    const auto m = make_icosphere(2);
    std::vector<int> perm(m.num_vertices());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937 rng(7);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto p = permute_vertices(m, perm);
    auto tris = m.triangles();
    std::shuffle(tris.begin(), tris.end(), rng);
    const TriangleMesh q(m.vertices(), tris);
    EXPECT_NEAR(p.total_area(), m.total_area(), 1e-12);
    EXPECT_NEAR(q.total_area(), m.total_area(), 1e-12);
}

TEST(Mesh, ValidateClosedTetrahedron) {
    const auto r = validate_closed(tetrahedron());
    EXPECT_EQ(r.V, 4u);
    EXPECT_EQ(r.E, 6u);
    EXPECT_EQ(r.F, 4u);
    EXPECT_EQ(r.chi, 2);
    EXPECT_TRUE(r.edge_manifold);
    EXPECT_TRUE(r.sphere_condition);
}

TEST(Mesh, OpenTetrahedronIsNotEdgeManifold) {
    const TriangleMesh open({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}}, {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}});
    EXPECT_FALSE(validate_closed(open).edge_manifold);
    EXPECT_THROW(require_closed_manifold(open), TopologyError);
}

TEST(Mesh, FieldBindsToMesh) {
    const auto m = tetrahedron();
    EXPECT_THROW(ScalarField(Eigen::VectorXd::Zero(3), m), ValidationError);
    EXPECT_THROW(ScalarField(Eigen::VectorXd::Constant(4, INFINITY), m), ValidationError);
    const ScalarField f(Eigen::VectorXd::Ones(4), m);
    EXPECT_THROW(f.check(make_icosphere(0)), ValidationError);
}

// --- generators ---------------------------------------------------------

TEST(Icosphere, Icosahedron) {
    const auto m = make_icosphere(0);
    EXPECT_EQ(m.num_vertices(), 12u);
    EXPECT_EQ(m.num_triangles(), 20u);
}

TEST(Icosphere, VertexCountFormula) {
    for (int s = 0; s <= 4; ++s) {
        const auto m = make_icosphere(s);
        EXPECT_EQ(m.num_vertices(), static_cast<std::size_t>(10 * (1 << (2 * s)) + 2));
        EXPECT_EQ(euler_characteristic(m), 2);
        for (const auto& v : m.vertices()) EXPECT_NEAR(v.norm(), 1.0, 1e-14);
    }
    EXPECT_EQ(make_icosphere(4).num_vertices(), 2562u);
}

TEST(Icosphere, AreaApproachesSphere) {
    const double area = make_icosphere(4).total_area();
    EXPECT_LT(std::abs(area - 4 * std::numbers::pi) / (4 * std::numbers::pi), 0.005);
}

TEST(Icosphere, OutwardOrientation) {
    const auto m = make_icosphere(1);
    for (const auto& t : m.triangles()) {
        const Vec3 n = (m.vertex(t[1]) - m.vertex(t[0])).cross(m.vertex(t[2]) - m.vertex(t[0]));
        EXPECT_GT(n.dot(m.vertex(t[0]) + m.vertex(t[1]) + m.vertex(t[2])), 0.0);
    }
}

TEST(Icosphere, SubdivisionGuard) {
    EXPECT_THROW(make_icosphere(9), ArgumentError);
    EXPECT_THROW(make_icosphere(-1), ArgumentError);
}

TEST(Torus, EulerCharacteristicZero) {
    const auto m = make_grid_torus(8, 8);
    EXPECT_EQ(m.num_vertices(), 64u);
    EXPECT_EQ(m.num_edges(), 192u);
    EXPECT_EQ(m.num_triangles(), 128u);
    EXPECT_EQ(euler_characteristic(m), 0);
}

TEST(TJunction, ClosedGenusZero) {
    for (auto [L, w, r] : {std::tuple{10.0, 4.0, 1.0}, {3.0, 1.0, 2.0}, {24.0, 12.0, 0.75}, {1.0, 1.0, 1.0}}) {
        const auto m = make_t_junction(L, w, r);
        const auto rep = validate_closed(m);
        EXPECT_EQ(rep.chi, 2);
        EXPECT_TRUE(rep.edge_manifold);
        EXPECT_EQ(2 * rep.E, 3 * rep.F);
    }
}

TEST(TJunction, PositiveAreasAndDeterminism) {
    const auto a = make_t_junction(10, 4, 1), b = make_t_junction(10, 4, 1);
    for (double area : a.triangle_areas()) EXPECT_GT(area, 0.0);
    EXPECT_EQ(a.id(), b.id());
}

TEST(TJunction, OutwardOrientation) {
    const auto m = make_t_junction(4, 2, 1);
    double vol = 0.0;
    for (const auto& t : m.triangles()) vol += m.vertex(t[0]).dot(m.vertex(t[1]).cross(m.vertex(t[2])));
    vol /= 6.0;
    // Three arms of 4 x 2 x 2 plus the 2 x 2 x 2 centre block.
    EXPECT_NEAR(vol, 3 * 16.0 + 8.0, 1e-9);
}

TEST(TJunction, RejectsNonPositiveDimensions) {
    EXPECT_THROW(make_t_junction(0, 1, 1), ArgumentError);
    EXPECT_THROW(make_t_junction(1, -1, 1), ArgumentError);
}

// --- IO -----------------------------------------------------------------

TEST(MeshIO, ReadsTetrahedronOff) {
    std::istringstream in(kTetraOff);
    const auto m = read_mesh(in, MeshFormat::OFF);
    EXPECT_EQ(euler_characteristic(m), 2);
    EXPECT_EQ(m.num_triangles(), 4u);
}

TEST(MeshIO, PlyQuadRejectedWithLine) {
    std::istringstream in(R"(ply
format ascii 1.0
element vertex 4
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
1 1 0
0 1 0
4 0 1 2 3
)");
    try {
        read_mesh(in, MeshFormat::PlyAscii);
        FAIL() << "expected a format error";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 14);
    }
}

TEST(MeshIO, OffParseErrorCarriesLine) {
    std::istringstream in("OFF\n3 1 0\n0 0 0\n1 0 zero\n0 1 0\n3 0 1 2\n");
    try {
        read_mesh(in, MeshFormat::OFF);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 4);
    }
}

TEST(MeshIO, OffRejectsQuad) {
    std::istringstream in("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
    EXPECT_THROW(read_mesh(in, MeshFormat::OFF), FormatError);
}

TEST(MeshIO, OffCountsOnHeaderLine) {
    std::istringstream in("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
    EXPECT_EQ(read_mesh(in, MeshFormat::OFF).num_triangles(), 1u);
}

TEST(MeshIO, RoundTripBothFormats) {
    const auto m = make_icosphere(2);
    for (auto fmt : {MeshFormat::OFF, MeshFormat::PlyAscii}) {
        std::stringstream s;
        write_mesh(s, m, fmt);
        const auto r = read_mesh(s, fmt);
        ASSERT_EQ(r.num_vertices(), m.num_vertices());
        EXPECT_EQ(r.triangles(), m.triangles());
        for (std::size_t i = 0; i < m.num_vertices(); ++i) EXPECT_EQ(r.vertices()[i], m.vertices()[i]);
        EXPECT_EQ(r.id(), m.id());
    }
}

TEST(MeshIO, PlySkipsExtraElements) {
    std::istringstream in(R"(ply
format ascii 1.0
comment extra properties and elements
element vertex 3
property float x
property float y
property float z
property float confidence
element face 1
property list uchar int vertex_indices
element material 1
property float r
end_header
0 0 0 0.5
1 0 0 0.5
0 1 0 0.5
3 0 1 2
0.1
)");
    EXPECT_EQ(read_mesh(in, MeshFormat::PlyAscii).num_vertices(), 3u);
}

TEST(MeshIO, PlyBinaryRejected) {
    std::istringstream in("ply\nformat binary_little_endian 1.0\nend_header\n");
    EXPECT_THROW(read_mesh(in, MeshFormat::PlyAscii), FormatError);
}

TEST(MeshIO, FormatFromExtension) {
    EXPECT_EQ(format_from_path("a/b.OFF"), MeshFormat::OFF);
    EXPECT_EQ(format_from_path("x.ply"), MeshFormat::PlyAscii);
    EXPECT_THROW(format_from_path("x.obj"), ArgumentError);
}

TEST(FieldCsv, RoundTrip) {
    Eigen::VectorXd v(3);
    v << 1.0 / 3.0, -2e-300, 7.5;
    std::stringstream s;
    write_field_csv(s, v);
    const auto r = read_field_csv(s);
    ASSERT_EQ(r.size(), 3);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(r[i], v[i]);
}

TEST(FieldCsv, HeaderRequired) {
    std::istringstream in("1\n2\n");
    EXPECT_THROW(read_field_csv(in), FormatError);
}

TEST(FieldCsv, BadValueCarriesLine) {
    std::istringstream in("value\n1\nabc\n");
    try {
        read_field_csv(in);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 3);
    }
}

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "hk/error.hpp"

namespace hk {

using Vec3 = Eigen::Vector3d;
using Triangle = std::array<int, 3>;
using MeshId = std::uint64_t;

/// Triangles below this area (mm^2) are rejected as degenerate.
inline constexpr double kDegenerateArea = 1e-12;

/// Undirected edge with the triangles that contain it.
struct EdgeIncidence {
    int a = 0;  ///< smaller vertex index
    int b = 0;  ///< larger vertex index
    std::vector<int> triangles;
};

namespace detail {

inline void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
}

inline double triangle_area(const Vec3& p0, const Vec3& p1, const Vec3& p2) {
    return 0.5 * (p1 - p0).cross(p2 - p0).norm();
}

}  // namespace detail

/**
 * Immutable triangle mesh with precomputed one-ring adjacency and triangle areas.
 *
 * Construction validates indices and rejects degenerate triangles; it does not
 * require the mesh to be closed (see validate_closed / fem assembly for that).
 * Triangles are expected counterclockwise when seen from outside.
 */
class TriangleMesh {
public:
    TriangleMesh() = default;

    TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
        : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
        const int n = static_cast<int>(vertices_.size());
        for (std::size_t v = 0; v < vertices_.size(); ++v) {
            if (!vertices_[v].allFinite())
                throw ValidationError("vertex " + std::to_string(v) + " has a non-finite coordinate");
        }
        areas_.reserve(triangles_.size());
        for (std::size_t t = 0; t < triangles_.size(); ++t) {
            const auto& tri = triangles_[t];
            for (int idx : tri) {
                if (idx < 0 || idx >= n)
                    throw ValidationError("triangle " + std::to_string(t) + " references vertex " +
                                          std::to_string(idx) + " outside [0, " + std::to_string(n) + ")");
            }
            const double area = detail::triangle_area(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
            if (!(area >= kDegenerateArea) || tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
                throw ValidationError("degenerate triangle " + std::to_string(t) + " (area " +
                                      std::to_string(area) + ")");
            areas_.push_back(area);
        }
        build_adjacency();
        compute_id();
    }

    std::size_t num_vertices() const noexcept { return vertices_.size(); }
    std::size_t num_triangles() const noexcept { return triangles_.size(); }

    const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
    const Vec3& vertex(int v) const { return vertices_[static_cast<std::size_t>(v)]; }
    const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
    const Triangle& triangle(int t) const { return triangles_[static_cast<std::size_t>(t)]; }

    /// Sorted, duplicate-free neighbours of v.
    std::span<const int> one_ring(int v) const {
        const auto begin = ring_offsets_[static_cast<std::size_t>(v)];
        const auto end = ring_offsets_[static_cast<std::size_t>(v) + 1];
        return {ring_.data() + begin, end - begin};
    }

    const std::vector<double>& triangle_areas() const noexcept { return areas_; }
    double triangle_area(int t) const { return areas_[static_cast<std::size_t>(t)]; }

    double total_area() const {
        // Sorted summation keeps the total independent of triangle order.
        std::vector<double> a = areas_;
        std::sort(a.begin(), a.end());
        double s = 0.0;
        for (double x : a) s += x;
        return s;
    }

    /// Content hash of geometry and connectivity; binds scalar fields to this mesh.
    MeshId id() const noexcept { return id_; }

    /// Unique undirected edges, sorted by (a, b), each with its incident triangles.
    std::vector<EdgeIncidence> edges() const {
        std::vector<std::array<int, 3>> half;  // (a, b, triangle)
        half.reserve(3 * triangles_.size());
        for (std::size_t t = 0; t < triangles_.size(); ++t) {
            const auto& tri = triangles_[t];
            for (int k = 0; k < 3; ++k) {
                int a = tri[k], b = tri[(k + 1) % 3];
                if (a > b) std::swap(a, b);
                half.push_back({a, b, static_cast<int>(t)});
            }
        }
        std::sort(half.begin(), half.end());
        std::vector<EdgeIncidence> out;
        for (std::size_t i = 0; i < half.size();) {
            EdgeIncidence e{half[i][0], half[i][1], {}};
            std::size_t j = i;
            for (; j < half.size() && half[j][0] == e.a && half[j][1] == e.b; ++j)
                e.triangles.push_back(half[j][2]);
            out.push_back(std::move(e));
            i = j;
        }
        return out;
    }

    std::size_t num_edges() const { return ring_.size() / 2; }

private:
    void build_adjacency() {
        const std::size_t n = vertices_.size();
        std::vector<std::vector<int>> rings(n);
        for (const auto& tri : triangles_) {
            for (int k = 0; k < 3; ++k) {
                const int a = tri[k], b = tri[(k + 1) % 3];
                rings[static_cast<std::size_t>(a)].push_back(b);
                rings[static_cast<std::size_t>(b)].push_back(a);
            }
        }
        ring_offsets_.assign(n + 1, 0);
        for (std::size_t v = 0; v < n; ++v) {
            auto& r = rings[v];
            std::sort(r.begin(), r.end());
            r.erase(std::unique(r.begin(), r.end()), r.end());
            ring_offsets_[v + 1] = ring_offsets_[v] + r.size();
        }
        ring_.reserve(ring_offsets_[n]);
        for (auto& r : rings) ring_.insert(ring_.end(), r.begin(), r.end());
    }

    void compute_id() {
        std::uint64_t h = 1469598103934665603ull;
        const std::uint64_t nv = vertices_.size(), nt = triangles_.size();
        detail::fnv_mix(h, &nv, sizeof nv);
        detail::fnv_mix(h, &nt, sizeof nt);
        for (const auto& v : vertices_) detail::fnv_mix(h, v.data(), 3 * sizeof(double));
        for (const auto& t : triangles_) detail::fnv_mix(h, t.data(), 3 * sizeof(int));
        id_ = h;
    }

    std::vector<Vec3> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<double> areas_;
    std::vector<std::size_t> ring_offsets_;
    std::vector<int> ring_;
    MeshId id_ = 0;
};

/// One real value per vertex of a specific mesh.
struct ScalarField {
    Eigen::VectorXd values;
    MeshId mesh_id = 0;

    ScalarField() = default;
    ScalarField(Eigen::VectorXd v, MeshId id) : values(std::move(v)), mesh_id(id) {
        if (!values.allFinite()) throw ValidationError("scalar field contains non-finite values");
    }
    ScalarField(Eigen::VectorXd v, const TriangleMesh& mesh) : ScalarField(std::move(v), mesh.id()) {
        check(mesh);
    }

    Eigen::Index size() const noexcept { return values.size(); }

    void check(const TriangleMesh& mesh) const {
        if (static_cast<std::size_t>(values.size()) != mesh.num_vertices())
            throw ValidationError("scalar field has " + std::to_string(values.size()) + " values, mesh has " +
                                  std::to_string(mesh.num_vertices()) + " vertices");
        if (mesh_id != mesh.id()) throw ValidationError("scalar field is bound to a different mesh");
    }
};

/// chi = V - E + F with E the number of unique undirected edges.
inline int euler_characteristic(const TriangleMesh& mesh) {
    return static_cast<int>(mesh.num_vertices()) - static_cast<int>(mesh.num_edges()) +
           static_cast<int>(mesh.num_triangles());
}

struct ClosedSurfaceReport {
    std::size_t V = 0, E = 0, F = 0;
    int chi = 0;
    bool edge_manifold = false;  ///< every edge has exactly two incident triangles
    bool sphere_condition = false;  ///< V - F/2 == 2
};

inline ClosedSurfaceReport validate_closed(const TriangleMesh& mesh) {
    ClosedSurfaceReport r;
    r.V = mesh.num_vertices();
    r.F = mesh.num_triangles();
    const auto edges = mesh.edges();
    r.E = edges.size();
    r.chi = static_cast<int>(r.V) - static_cast<int>(r.E) + static_cast<int>(r.F);
    r.edge_manifold = !edges.empty() &&
                      std::all_of(edges.begin(), edges.end(), [](const auto& e) { return e.triangles.size() == 2; });
    r.sphere_condition = (r.F % 2 == 0) && static_cast<long>(r.V) - static_cast<long>(r.F / 2) == 2;
    return r;
}

/// Throws TopologyError unless every edge is shared by exactly two triangles.
inline void require_closed_manifold(const TriangleMesh& mesh) {
    for (const auto& e : mesh.edges()) {
        if (e.triangles.size() != 2)
            throw TopologyError("edge (" + std::to_string(e.a) + ", " + std::to_string(e.b) + ") has " +
                                std::to_string(e.triangles.size()) +
                                " incident triangles; a closed manifold surface is required");
    }
}

/// Mesh with vertex i moved to position perm[i]; triangles relabelled accordingly.
inline TriangleMesh permute_vertices(const TriangleMesh& mesh, std::span<const int> perm) {
    std::vector<Vec3> v(mesh.num_vertices());
    for (std::size_t i = 0; i < v.size(); ++i) v[static_cast<std::size_t>(perm[i])] = mesh.vertices()[i];
    std::vector<Triangle> t = mesh.triangles();
    for (auto& tri : t)
        for (int& idx : tri) idx = perm[static_cast<std::size_t>(idx)];
    return TriangleMesh(std::move(v), std::move(t));
}

/// Applies p -> scale * R p + shift to every vertex.
inline TriangleMesh transform_vertices(const TriangleMesh& mesh, const Eigen::Matrix3d& R, const Vec3& shift,
                                       double scale = 1.0) {
    std::vector<Vec3> v = mesh.vertices();
    for (auto& p : v) p = scale * (R * p) + shift;
    return TriangleMesh(std::move(v), mesh.triangles());
}

/// Vertex coordinate channel (0 = x, 1 = y, 2 = z) as a field.
inline ScalarField coordinate_field(const TriangleMesh& mesh, int axis) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) v[static_cast<Eigen::Index>(i)] = mesh.vertices()[i][axis];
    return ScalarField(std::move(v), mesh);
}

}  // namespace hk

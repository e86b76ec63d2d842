#pragma once

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "hk/error.hpp"
#include "hk/mesh.hpp"

namespace hk {

/// Unit sphere from repeated 4-to-1 subdivision of an icosahedron, re-projected to radius 1.
inline TriangleMesh make_icosphere(int subdivisions) {
    if (subdivisions < 0 || subdivisions > 8) throw ArgumentError("icosphere subdivisions must be in [0, 8]");
    const double t = std::numbers::phi;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::unordered_map<std::uint64_t, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | static_cast<std::uint32_t>(std::max(a, b));
            if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
            v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<Triangle> next;
        next.reserve(4 * f.size());
        for (const auto& tri : f) {
            const int ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        f = std::move(next);
    }
    return TriangleMesh(std::move(v), std::move(f));
}

/// Closed torus triangulated on a u-by-v grid (genus 1, chi = 0).
inline TriangleMesh make_grid_torus(int nu, int nv, double major_radius = 2.0, double minor_radius = 0.75) {
    if (nu < 3 || nv < 3) throw ArgumentError("torus grid needs at least 3x3 cells");
    std::vector<Vec3> v;
    for (int i = 0; i < nu; ++i) {
        const double u = 2.0 * std::numbers::pi * i / nu;
        for (int j = 0; j < nv; ++j) {
            const double w = 2.0 * std::numbers::pi * j / nv;
            const double rho = major_radius + minor_radius * std::cos(w);
            v.emplace_back(rho * std::cos(u), rho * std::sin(u), minor_radius * std::sin(w));
        }
    }
    std::vector<Triangle> f;
    auto id = [&](int i, int j) { return ((i + nu) % nu) * nv + (j + nv) % nv; };
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    return TriangleMesh(std::move(v), std::move(f));
}

/// Dimensions of the T-junction produced by make_t_junction (mm).
struct TJunctionGeometry {
    double arm_length = 0.0;
    double width = 0.0;
    /// Point at the middle of the top face of the left arm (flat zone).
    Vec3 flat_point() const { return {-(width / 2 + arm_length / 2), 0.0, width / 2}; }
    /// Point on the top/front edge of the right arm (convex zone).
    Vec3 convex_point() const { return {width / 2 + arm_length / 2, -width / 2, width / 2}; }
    /// Point on the vertical re-entrant edge where the stem meets the bar (concave zone).
    Vec3 concave_point() const { return {width / 2, -width / 2, 0.0}; }
};

/**
 * Closed T-shaped junction of three square tubes with capped ends.
 *
 * The horizontal bar runs along x over [-(L + w/2), L + w/2] with cross-section
 * [-w/2, w/2]^2 in (y, z); the stem runs along -y from the bar down to
 * y = -(L + w/2). The surface is the boundary of a union of grid cells, each
 * boundary quad split into two triangles. Each arm gets round(L * resolution)
 * cells along its length and the cross-section round(w * resolution) cells per side.
 */
inline TriangleMesh make_t_junction(double arm_length, double width, double resolution) {
    if (!(arm_length > 0.0) || !(width > 0.0) || !(resolution > 0.0))
        throw ArgumentError("t-junction dimensions and resolution must be positive");
    const int a = std::max(1, static_cast<int>(std::lround(arm_length * resolution)));
    const int c = std::max(1, static_cast<int>(std::lround(width * resolution)));
    const double L = arm_length, w = width;

    // Node coordinates along each axis.
    std::array<std::vector<double>, 3> nodes;
    for (int i = 0; i <= a; ++i) nodes[0].push_back(-(L + w / 2) + L * i / a);
    for (int i = 1; i <= c; ++i) nodes[0].push_back(-w / 2 + w * i / c);
    for (int i = 1; i <= a; ++i) nodes[0].push_back(w / 2 + L * i / a);
    for (int i = 0; i <= a; ++i) nodes[1].push_back(-(L + w / 2) + L * i / a);
    for (int i = 1; i <= c; ++i) nodes[1].push_back(-w / 2 + w * i / c);
    for (int i = 0; i <= c; ++i) nodes[2].push_back(-w / 2 + w * i / c);

    const std::array<int, 3> cells = {2 * a + c, a + c, c};
    auto occupied = [&](int i, int j, int k) {
        if (i < 0 || j < 0 || k < 0 || i >= cells[0] || j >= cells[1] || k >= cells[2]) return false;
        const bool bar = j >= a;
        const bool stem = i >= a && i < a + c;
        return bar || stem;
    };

    std::map<std::array<int, 3>, int> node_id;
    std::vector<Vec3> verts;
    auto vertex = [&](std::array<int, 3> g) {
        auto [it, inserted] = node_id.try_emplace(g, static_cast<int>(verts.size()));
        if (inserted)
            verts.emplace_back(nodes[0][static_cast<std::size_t>(g[0])], nodes[1][static_cast<std::size_t>(g[1])],
                               nodes[2][static_cast<std::size_t>(g[2])]);
        return it->second;
    };

    std::vector<Triangle> tris;
    for (int i = 0; i < cells[0]; ++i)
        for (int j = 0; j < cells[1]; ++j)
            for (int k = 0; k < cells[2]; ++k) {
                if (!occupied(i, j, k)) continue;
                const std::array<int, 3> cell = {i, j, k};
                for (int d = 0; d < 3; ++d)
                    for (int s : {-1, 1}) {
                        std::array<int, 3> nb = cell;
                        nb[static_cast<std::size_t>(d)] += s;
                        if (occupied(nb[0], nb[1], nb[2])) continue;
                        const std::size_t u = static_cast<std::size_t>((d + 1) % 3);
                        const std::size_t vv = static_cast<std::size_t>((d + 2) % 3);
                        std::array<int, 3> base = cell;
                        if (s > 0) base[static_cast<std::size_t>(d)] += 1;
                        std::array<int, 3> p1 = base, p2 = base, p3 = base;
                        p1[u] += 1;
                        p2[u] += 1;
                        p2[vv] += 1;
                        p3[vv] += 1;
                        std::array<int, 4> q = {vertex(base), vertex(p1), vertex(p2), vertex(p3)};
                        if (s < 0) std::swap(q[1], q[3]);
                        tris.push_back({q[0], q[1], q[2]});
                        tris.push_back({q[0], q[2], q[3]});
                    }
            }
    return TriangleMesh(std::move(verts), std::move(tris));
}

}  // namespace hk

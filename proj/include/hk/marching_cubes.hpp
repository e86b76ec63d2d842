#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "hk/error.hpp"
#include "hk/mesh.hpp"
#include "hk/volume.hpp"

namespace hk {

namespace detail {

/// Corner c of the unit cube sits at (c & 1, (c >> 1) & 1, (c >> 2) & 1).
inline Vec3 cube_corner(int c) { return {double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)}; }

struct CubeEdge {
    int c0, c1, axis;
};

inline const std::array<CubeEdge, 12>& cube_edges() {
    static const auto edges = [] {
        std::array<CubeEdge, 12> e{};
        int k = 0;
        for (int axis = 0; axis < 3; ++axis)
            for (int c = 0; c < 8; ++c)
                if (!(c & (1 << axis))) e[static_cast<std::size_t>(k++)] = {c, c | (1 << axis), axis};
        return e;
    }();
    return edges;
}

inline int cube_edge_between(int a, int b) {
    const auto& e = cube_edges();
    for (int k = 0; k < 12; ++k)
        if ((e[static_cast<std::size_t>(k)].c0 == a && e[static_cast<std::size_t>(k)].c1 == b) ||
            (e[static_cast<std::size_t>(k)].c0 == b && e[static_cast<std::size_t>(k)].c1 == a))
            return k;
    return -1;
}

inline Vec3 cube_edge_midpoint(int k) {
    const auto& e = cube_edges()[static_cast<std::size_t>(k)];
    return 0.5 * (cube_corner(e.c0) + cube_corner(e.c1));
}

/**
 * Surface loops for each of the 256 corner configurations, as cyclic lists of cube
 * edges. Each cube face is cut on its own: one segment for two crossings, and on
 * the ambiguous diagonal face the two background corners are cut off so the
 * foreground diagonal stays connected. Neighbouring cubes therefore agree on
 * every shared face. Loops wind counter-clockwise seen from the background side.
 */
inline const std::array<std::vector<std::vector<int>>, 256>& cube_loop_table() {
    static const auto table = [] {
        std::array<std::vector<std::vector<int>>, 256> t;
        for (int config = 0; config < 256; ++config) {
            auto in = [&](int c) { return (config >> c) & 1; };
            std::array<int, 12> next;
            next.fill(-1);
            for (int axis = 0; axis < 3; ++axis)
                for (int side = 0; side < 2; ++side) {
                    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
                    auto corner = [&](int iu, int iv) { return (side << axis) | (iu << u) | (iv << v); };
                    const std::array<int, 4> q = {corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)};
                    Vec3 normal = Vec3::Zero();
                    normal[axis] = side ? 1.0 : -1.0;
                    int n_in = 0, any_in = -1;
                    for (int c : q)
                        if (in(c)) {
                            ++n_in;
                            any_in = c;
                        }
                    if (n_in == 0 || n_in == 4) continue;
                    std::vector<std::array<int, 2>> segs;
                    std::array<int, 4> fe{};
                    for (int k = 0; k < 4; ++k) fe[static_cast<std::size_t>(k)] = cube_edge_between(q[static_cast<std::size_t>(k)], q[static_cast<std::size_t>((k + 1) % 4)]);
                    std::vector<int> crossing;
                    for (int k = 0; k < 4; ++k)
                        if (in(q[static_cast<std::size_t>(k)]) != in(q[static_cast<std::size_t>((k + 1) % 4)])) crossing.push_back(fe[static_cast<std::size_t>(k)]);
                    if (crossing.size() == 2) {
                        segs.push_back({crossing[0], crossing[1]});
                    } else {
                        for (int k = 0; k < 4; ++k)
                            if (!in(q[static_cast<std::size_t>(k)])) segs.push_back({fe[static_cast<std::size_t>((k + 3) % 4)], fe[static_cast<std::size_t>(k)]});
                    }
                    const Vec3 f = cube_corner(any_in);
                    for (auto s : segs) {
                        const Vec3 a = cube_edge_midpoint(s[0]), b = cube_edge_midpoint(s[1]);
                        if ((b - a).cross(f - a).dot(normal) < 0.0) std::swap(s[0], s[1]);
                        next[static_cast<std::size_t>(s[0])] = s[1];
                    }
                }
            std::array<bool, 12> used{};
            for (int start = 0; start < 12; ++start) {
                if (next[static_cast<std::size_t>(start)] < 0 || used[static_cast<std::size_t>(start)]) continue;
                std::vector<int> loop;
                for (int e = start; !used[static_cast<std::size_t>(e)]; e = next[static_cast<std::size_t>(e)]) {
                    used[static_cast<std::size_t>(e)] = true;
                    loop.push_back(e);
                }
                std::reverse(loop.begin(), loop.end());
                t[static_cast<std::size_t>(config)].push_back(std::move(loop));
            }
        }
        return t;
    }();
    return table;
}

}  // namespace detail

/**
 * Iso-surface of a binary volume at level 0.5. Vertices sit at the midpoints of
 * voxel edges joining foreground and background, in millimetres (voxel centre
 * (i, j, k) maps to (i sx, j sy, k sz)). Loops of more than three edges are fanned
 * around an added centre vertex. The grid is treated as surrounded by background.
 */
inline TriangleMesh marching_cubes(const BinaryVolume& vol) {
    vol.validate();
    if (vol.count() == 0) throw ValidationError("volume has no foreground voxels");
    const auto& table = detail::cube_loop_table();
    const auto& edges = detail::cube_edges();
    const long px = vol.dims[0] + 2, py = vol.dims[1] + 2;
    std::unordered_map<long, int> edge_vertex;
    std::vector<Vec3> verts;
    std::vector<Triangle> tris;
    const Vec3 spacing(vol.spacing[0], vol.spacing[1], vol.spacing[2]);

    for (int z = -1; z < vol.dims[2]; ++z)
        for (int y = -1; y < vol.dims[1]; ++y)
            for (int x = -1; x < vol.dims[0]; ++x) {
                int config = 0;
                for (int c = 0; c < 8; ++c)
                    if (vol.at(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1))) config |= 1 << c;
                if (config == 0 || config == 255) continue;
                auto vertex_for = [&](int k) {
                    const auto& e = edges[static_cast<std::size_t>(k)];
                    const int gx = x + (e.c0 & 1), gy = y + ((e.c0 >> 1) & 1), gz = z + ((e.c0 >> 2) & 1);
                    const long key = ((gx + 1) + px * ((gy + 1) + py * static_cast<long>(gz + 1))) * 3 + e.axis;
                    auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<int>(verts.size()));
                    if (inserted) {
                        Vec3 p(gx, gy, gz);
                        p[e.axis] += 0.5;
                        verts.push_back(p.cwiseProduct(spacing));
                    }
                    return it->second;
                };
                for (const auto& loop : table[static_cast<std::size_t>(config)]) {
                    std::vector<int> ids;
                    for (int k : loop) ids.push_back(vertex_for(k));
                    if (ids.size() == 3) {
                        tris.push_back({ids[0], ids[1], ids[2]});
                        continue;
                    }
                    Vec3 centre = Vec3::Zero();
                    for (int id : ids) centre += verts[static_cast<std::size_t>(id)];
                    centre /= static_cast<double>(ids.size());
                    const int c = static_cast<int>(verts.size());
                    verts.push_back(centre);
                    for (std::size_t i = 0; i < ids.size(); ++i) tris.push_back({c, ids[i], ids[(i + 1) % ids.size()]});
                }
            }
    return TriangleMesh(std::move(verts), std::move(tris));
}

/// Signed enclosed volume; positive when triangles wind counter-clockwise seen from outside.
inline double signed_volume(const TriangleMesh& mesh) {
    double v = 0.0;
    for (const auto& t : mesh.triangles())
        v += mesh.vertex(t[0]).dot(mesh.vertex(t[1]).cross(mesh.vertex(t[2])));
    return v / 6.0;
}

}  // namespace hk

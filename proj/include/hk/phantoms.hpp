#pragma once

#include <cmath>
#include <random>

#include "hk/volume.hpp"

namespace hk {

/// Solid ball of the given radius (voxels) centred in an n^3 grid.
inline BinaryVolume make_ball_volume(int n, double radius) {
    BinaryVolume v({n, n, n});
    const double c = (n - 1) / 2.0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double d2 = (x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c);
                v.set(x, y, z, d2 <= radius * radius);
            }
    return v;
}

/// Solid torus around the z axis: distance from the centre circle of radius R below r.
inline BinaryVolume make_torus_volume(int n, double major_radius, double minor_radius) {
    BinaryVolume v({n, n, n});
    const double c = (n - 1) / 2.0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double rho = std::hypot(x - c, y - c) - major_radius;
                v.set(x, y, z, rho * rho + (z - c) * (z - c) < minor_radius * minor_radius);
            }
    return v;
}

/**
 * Tooth-cavity phantom: a solid 9^3 cube holding a cross-shaped pocket (centre
 * voxel plus its six face neighbours, inside a 3x3x3 box) that reaches the top
 * face through a one-voxel channel. The grid has a one-voxel empty border.
 */
inline BinaryVolume make_cavity_phantom() {
    BinaryVolume v({11, 11, 11});
    for (int z = 1; z <= 9; ++z)
        for (int y = 1; y <= 9; ++y)
            for (int x = 1; x <= 9; ++x) v.set(x, y, z, 1);
    const int c = 5;
    v.set(c, c, c, 0);
    for (int d : {-1, 1}) {
        v.set(c + d, c, c, 0);
        v.set(c, c + d, c, 0);
        v.set(c, c, c + d, 0);
    }
    for (int z = c + 2; z <= 9; ++z) v.set(c, c, z, 0);
    return v;
}

/// Random union of balls; radii in [1, max_radius] voxels.
inline BinaryVolume make_random_blob(int n, int balls, double max_radius, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(0.2 * n, 0.8 * n), rad(1.0, max_radius);
    BinaryVolume v({n, n, n});
    for (int b = 0; b < balls; ++b) {
        const double cx = pos(rng), cy = pos(rng), cz = pos(rng), r = rad(rng);
        for (int z = 0; z < n; ++z)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz) <= r * r) v.set(x, y, z, 1);
    }
    // Sprinkle isolated voxels so component selection has work to do.
    std::uniform_int_distribution<int> any(0, n - 1);
    for (int k = 0; k < n; ++k) v.set(any(rng), any(rng), any(rng), 1);
    return v;
}

}  // namespace hk

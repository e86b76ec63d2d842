#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hk/error.hpp"

namespace hk {

enum class Axis { X = 0, Y = 1, Z = 2 };

/// Binary voxel grid stored x-fastest: index = x + nx * (y + ny * z).
struct BinaryVolume {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> data;

    BinaryVolume() = default;
    BinaryVolume(std::array<int, 3> d, std::array<double, 3> s = {1.0, 1.0, 1.0}) : dims(d), spacing(s) {
        validate_shape();
        data.assign(size(), 0);
    }

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int x, int y, int z) const noexcept {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
    }
    bool inside(int x, int y, int z) const noexcept {
        return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
    }
    std::uint8_t at(int x, int y, int z) const { return inside(x, y, z) ? data[index(x, y, z)] : 0; }
    void set(int x, int y, int z, std::uint8_t v) { data[index(x, y, z)] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t c = 0;
        for (auto v : data) c += v != 0;
        return c;
    }

    void validate() const {
        validate_shape();
        if (data.size() != size()) throw ValidationError("volume data length does not match dims");
        for (auto v : data)
            if (v > 1) throw ValidationError("binary volume voxels must be 0 or 1");
    }

    friend bool operator==(const BinaryVolume& a, const BinaryVolume& b) {
        return a.dims == b.dims && a.spacing == b.spacing && a.data == b.data;
    }

private:
    void validate_shape() const {
        for (int d : dims)
            if (d <= 0) throw ValidationError("volume dimensions must be positive");
        for (double s : spacing)
            if (!(s > 0.0)) throw ValidationError("voxel spacing must be positive");
    }
};

// ---------------------------------------------------------------------------
// IO: raw little-endian uint8 voxels, x fastest, plus a JSON sidecar.

inline BinaryVolume load_volume(const std::filesystem::path& raw, const std::filesystem::path& sidecar) {
    std::ifstream js(sidecar);
    if (!js) throw FormatError("cannot open sidecar " + sidecar.string());
    nlohmann::json meta;
    try {
        js >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid sidecar JSON: " + std::string(e.what()));
    }
    BinaryVolume v;
    try {
        const auto dims = meta.at("dims").get<std::vector<int>>();
        if (dims.size() != 3) throw FormatError("sidecar dims must have three entries");
        v.dims = {dims[0], dims[1], dims[2]};
        if (meta.contains("spacing")) {
            const auto sp = meta.at("spacing").get<std::vector<double>>();
            if (sp.size() != 3) throw FormatError("sidecar spacing must have three entries");
            v.spacing = {sp[0], sp[1], sp[2]};
        }
        if (meta.contains("order") && meta.at("order").get<std::string>() != "x-fastest")
            throw FormatError("only order \"x-fastest\" is supported");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed sidecar: " + std::string(e.what()));
    }
    for (int d : v.dims)
        if (d <= 0) throw ValidationError("volume dimensions must be positive");
    std::ifstream in(raw, std::ios::binary);
    if (!in) throw FormatError("cannot open volume " + raw.string());
    v.data.resize(v.size());
    in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
    if (static_cast<std::size_t>(in.gcount()) != v.data.size())
        throw FormatError("volume file is shorter than dims imply");
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("volume file is longer than dims imply");
    v.validate();
    return v;
}

inline void save_volume(const BinaryVolume& v, const std::filesystem::path& raw, const std::filesystem::path& sidecar) {
    v.validate();
    std::ofstream out(raw, std::ios::binary);
    if (!out) throw FormatError("cannot write " + raw.string());
    out.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
    nlohmann::json meta = {{"dims", v.dims}, {"spacing", v.spacing}, {"order", "x-fastest"}};
    std::ofstream js(sidecar);
    if (!js) throw FormatError("cannot write " + sidecar.string());
    js << meta.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Connected components

namespace detail {

inline std::vector<std::array<int, 3>> neighbour_offsets(int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw ArgumentError("connectivity must be 6, 18 or 26");
    std::vector<std::array<int, 3>> off;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int l1 = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (l1 == 0) continue;
                if (connectivity == 6 && l1 > 1) continue;
                if (connectivity == 18 && l1 > 2) continue;
                off.push_back({dx, dy, dz});
            }
    return off;
}

}  // namespace detail

/// Component label per voxel (-1 for voxels not matching `value`) and component sizes.
inline std::vector<int> label_components(const BinaryVolume& vol, int connectivity, std::uint8_t value,
                                         std::vector<std::size_t>& sizes) {
    const auto off = detail::neighbour_offsets(connectivity);
    std::vector<int> label(vol.size(), -1);
    sizes.clear();
    std::vector<std::array<int, 3>> stack;
    for (int z = 0; z < vol.dims[2]; ++z)
        for (int y = 0; y < vol.dims[1]; ++y)
            for (int x = 0; x < vol.dims[0]; ++x) {
                const auto i = vol.index(x, y, z);
                if (vol.data[i] != value || label[i] >= 0) continue;
                const int id = static_cast<int>(sizes.size());
                sizes.push_back(0);
                label[i] = id;
                stack.push_back({x, y, z});
                while (!stack.empty()) {
                    const auto p = stack.back();
                    stack.pop_back();
                    ++sizes.back();
                    for (const auto& o : off) {
                        const int qx = p[0] + o[0], qy = p[1] + o[1], qz = p[2] + o[2];
                        if (!vol.inside(qx, qy, qz)) continue;
                        const auto j = vol.index(qx, qy, qz);
                        if (vol.data[j] == value && label[j] < 0) {
                            label[j] = id;
                            stack.push_back({qx, qy, qz});
                        }
                    }
                }
            }
    return label;
}

inline std::size_t count_components(const BinaryVolume& vol, int connectivity, std::uint8_t value = 1) {
    std::vector<std::size_t> sizes;
    label_components(vol, connectivity, value, sizes);
    return sizes.size();
}

/// Keeps only the largest foreground component; ties go to the component met first in linear order.
inline BinaryVolume largest_component(const BinaryVolume& vol, int connectivity = 26) {
    vol.validate();
    std::vector<std::size_t> sizes;
    const auto label = label_components(vol, connectivity, 1, sizes);
    if (sizes.empty()) throw ValidationError("volume has no foreground voxels");
    int best = 0;
    for (std::size_t c = 1; c < sizes.size(); ++c)
        if (sizes[c] > sizes[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    BinaryVolume out = vol;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = label[i] == best ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Morphology

namespace detail {

/// 2D max (dilate) or min (erode) filter with a (2r+1)^2 square, done as two 1D passes.
/// Pixels outside the image count as 0.
inline void square_filter(std::vector<std::uint8_t>& img, int w, int h, int r, bool dilate) {
    std::vector<std::uint8_t> tmp(img.size());
    auto get = [&](const std::vector<std::uint8_t>& a, int x, int y) -> std::uint8_t {
        return (x < 0 || y < 0 || x >= w || y >= h) ? 0 : a[static_cast<std::size_t>(y * w + x)];
    };
    for (int pass = 0; pass < 2; ++pass) {
        const auto& src = pass == 0 ? img : tmp;
        auto& dst = pass == 0 ? tmp : img;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                std::uint8_t v = dilate ? 0 : 1;
                for (int k = -r; k <= r; ++k) {
                    const auto s = pass == 0 ? get(src, x + k, y) : get(src, x, y + k);
                    v = dilate ? (v | s) : (v & s);
                }
                dst[static_cast<std::size_t>(y * w + x)] = v;
            }
    }
}

}  // namespace detail

/**
 * Morphological closing of every slice perpendicular to `axis` with a square of
 * side 2 * radius + 1. Slices are padded by `radius` so the result contains the input.
 */
inline BinaryVolume close_2d_sweep(const BinaryVolume& vol, Axis axis, int radius = 1) {
    vol.validate();
    if (radius < 1) throw ArgumentError("structuring element radius must be at least 1");
    const int a = static_cast<int>(axis);
    const int u = (a + 1) % 3, v = (a + 2) % 3;
    const int nu = vol.dims[static_cast<std::size_t>(u)], nv = vol.dims[static_cast<std::size_t>(v)];
    const int w = nu + 2 * radius, h = nv + 2 * radius;
    BinaryVolume out = vol;
    std::vector<std::uint8_t> img(static_cast<std::size_t>(w * h));
    std::array<int, 3> p{};
    for (int s = 0; s < vol.dims[static_cast<std::size_t>(a)]; ++s) {
        std::fill(img.begin(), img.end(), 0);
        p[static_cast<std::size_t>(a)] = s;
        bool any = false;
        for (int j = 0; j < nv; ++j)
            for (int i = 0; i < nu; ++i) {
                p[static_cast<std::size_t>(u)] = i;
                p[static_cast<std::size_t>(v)] = j;
                const auto val = vol.data[vol.index(p[0], p[1], p[2])];
                img[static_cast<std::size_t>((j + radius) * w + i + radius)] = val;
                any = any || val;
            }
        if (!any) continue;
        detail::square_filter(img, w, h, radius, true);
        detail::square_filter(img, w, h, radius, false);
        for (int j = 0; j < nv; ++j)
            for (int i = 0; i < nu; ++i) {
                p[static_cast<std::size_t>(u)] = i;
                p[static_cast<std::size_t>(v)] = j;
                out.data[vol.index(p[0], p[1], p[2])] = img[static_cast<std::size_t>((j + radius) * w + i + radius)];
            }
    }
    return out;
}

/**
 * 3D closing. connectivity 26 uses the cube of side 2r+1; connectivity 6 uses the
 * L1 ball of radius r (the 6-neighbour cross for r = 1).
 */
inline BinaryVolume close_3d(const BinaryVolume& vol, int radius = 1, int connectivity = 26) {
    vol.validate();
    if (radius < 1) throw ArgumentError("structuring element radius must be at least 1");
    if (connectivity != 6 && connectivity != 26) throw ArgumentError("3D closing supports connectivity 6 or 26");
    std::vector<std::array<int, 3>> se;
    for (int dz = -radius; dz <= radius; ++dz)
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx)
                if (connectivity == 26 || std::abs(dx) + std::abs(dy) + std::abs(dz) <= radius) se.push_back({dx, dy, dz});
    // Pad so dilation never leaves the grid.
    BinaryVolume padded({vol.dims[0] + 2 * radius, vol.dims[1] + 2 * radius, vol.dims[2] + 2 * radius}, vol.spacing);
    for (int z = 0; z < vol.dims[2]; ++z)
        for (int y = 0; y < vol.dims[1]; ++y)
            for (int x = 0; x < vol.dims[0]; ++x)
                padded.data[padded.index(x + radius, y + radius, z + radius)] = vol.data[vol.index(x, y, z)];
    auto morph = [&](const BinaryVolume& in, bool dilate) {
        BinaryVolume res = in;
        for (int z = 0; z < in.dims[2]; ++z)
            for (int y = 0; y < in.dims[1]; ++y)
                for (int x = 0; x < in.dims[0]; ++x) {
                    std::uint8_t v = dilate ? 0 : 1;
                    for (const auto& o : se) {
                        const auto s = in.at(x + o[0], y + o[1], z + o[2]);
                        if (dilate ? s != 0 : s == 0) {
                            v = dilate ? 1 : 0;
                            break;
                        }
                    }
                    res.data[in.index(x, y, z)] = v;
                }
        return res;
    };
    const BinaryVolume closed = morph(morph(padded, true), false);
    BinaryVolume out = vol;
    for (int z = 0; z < vol.dims[2]; ++z)
        for (int y = 0; y < vol.dims[1]; ++y)
            for (int x = 0; x < vol.dims[0]; ++x)
                out.data[vol.index(x, y, z)] = closed.data[closed.index(x + radius, y + radius, z + radius)];
    return out;
}

struct TopoCorrectOptions {
    int radius = 1;
    int connectivity = 26;
};

/// Largest component, then 2D closings in x, y and z slices.
inline BinaryVolume topo_correct(const BinaryVolume& vol, TopoCorrectOptions opt = {}) {
    BinaryVolume v = largest_component(vol, opt.connectivity);
    for (Axis a : {Axis::X, Axis::Y, Axis::Z}) v = close_2d_sweep(v, a, opt.radius);
    return v;
}

}  // namespace hk

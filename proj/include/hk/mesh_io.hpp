#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hk/error.hpp"
#include "hk/mesh.hpp"

namespace hk {

enum class MeshFormat { OFF, PlyAscii };

inline MeshFormat format_from_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".off") return MeshFormat::OFF;
    if (ext == ".ply") return MeshFormat::PlyAscii;
    throw ArgumentError("cannot infer mesh format from extension '" + ext + "' (expected .off or .ply)");
}

namespace detail {

/// Line reader that tracks 1-based line numbers and skips blank and comment lines.
class LineReader {
public:
    LineReader(std::istream& in, char comment) : in_(in), comment_(comment) {}

    bool next(std::vector<std::string>& tokens) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (comment_ != '\0') {
                if (auto pos = line.find(comment_); pos != std::string::npos) line.erase(pos);
            }
            tokens.clear();
            std::istringstream ss(line);
            for (std::string t; ss >> t;) tokens.push_back(t);
            if (!tokens.empty()) return true;
        }
        return false;
    }

    int line() const noexcept { return line_no_; }

private:
    std::istream& in_;
    char comment_;
    int line_no_ = 0;
};

template <class T>
T parse_number(const std::string& s, int line) {
    T value{};
    if constexpr (std::is_floating_point_v<T>) {
        // from_chars for double is available in libstdc++ 11
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("invalid number '" + s + "'", line);
    } else {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("invalid integer '" + s + "'", line);
    }
    return value;
}

inline TriangleMesh read_off(std::istream& in) {
    LineReader reader(in, '#');
    std::vector<std::string> tok;
    if (!reader.next(tok) || (tok[0] != "OFF" && tok[0].rfind("OFF", 0) != 0))
        throw FormatError("missing OFF header", reader.line());
    // Counts may follow the keyword on the same line.
    std::vector<std::string> counts(tok.begin() + 1, tok.end());
    if (counts.empty()) {
        if (!reader.next(tok)) throw FormatError("missing vertex/face counts", reader.line());
        counts = tok;
    }
    if (counts.size() < 2) throw FormatError("expected 'nV nF nE' counts", reader.line());
    const auto nv = parse_number<long>(counts[0], reader.line());
    const auto nf = parse_number<long>(counts[1], reader.line());
    if (nv < 0 || nf < 0) throw FormatError("negative element count", reader.line());

    std::vector<Vec3> verts;
    verts.reserve(static_cast<std::size_t>(nv));
    for (long i = 0; i < nv; ++i) {
        if (!reader.next(tok)) throw FormatError("unexpected end of file in vertex list", reader.line());
        if (tok.size() < 3) throw FormatError("vertex needs 3 coordinates", reader.line());
        verts.emplace_back(parse_number<double>(tok[0], reader.line()), parse_number<double>(tok[1], reader.line()),
                           parse_number<double>(tok[2], reader.line()));
    }
    std::vector<Triangle> tris;
    tris.reserve(static_cast<std::size_t>(nf));
    for (long i = 0; i < nf; ++i) {
        if (!reader.next(tok)) throw FormatError("unexpected end of file in face list", reader.line());
        const auto k = parse_number<int>(tok[0], reader.line());
        if (k != 3) throw FormatError("face with " + std::to_string(k) + " vertices; only triangles are supported",
                                      reader.line());
        if (tok.size() < 4) throw FormatError("triangle needs 3 vertex indices", reader.line());
        tris.push_back({parse_number<int>(tok[1], reader.line()), parse_number<int>(tok[2], reader.line()),
                        parse_number<int>(tok[3], reader.line())});
    }
    return TriangleMesh(std::move(verts), std::move(tris));
}

inline TriangleMesh read_ply_ascii(std::istream& in) {
    LineReader reader(in, '\0');
    std::vector<std::string> tok;
    if (!reader.next(tok) || tok[0] != "ply") throw FormatError("missing 'ply' magic", reader.line());

    struct Element {
        std::string name;
        long count = 0;
        std::vector<std::string> props;  // scalar property names; "list:<name>" for lists
    };
    std::vector<Element> elements;
    bool ascii = false;
    while (true) {
        if (!reader.next(tok)) throw FormatError("unterminated PLY header", reader.line());
        if (tok[0] == "end_header") break;
        if (tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "format") {
            if (tok.size() < 2 || tok[1] != "ascii")
                throw FormatError("only 'format ascii 1.0' PLY files are supported", reader.line());
            ascii = true;
        } else if (tok[0] == "element") {
            if (tok.size() != 3) throw FormatError("malformed element line", reader.line());
            elements.push_back({tok[1], parse_number<long>(tok[2], reader.line()), {}});
        } else if (tok[0] == "property") {
            if (elements.empty()) throw FormatError("property before any element", reader.line());
            if (tok.size() >= 5 && tok[1] == "list")
                elements.back().props.push_back("list:" + tok[4]);
            else if (tok.size() == 3)
                elements.back().props.push_back(tok[2]);
            else
                throw FormatError("malformed property line", reader.line());
        } else {
            throw FormatError("unknown header keyword '" + tok[0] + "'", reader.line());
        }
    }
    if (!ascii) throw FormatError("PLY header has no format line", reader.line());

    std::vector<Vec3> verts;
    std::vector<Triangle> tris;
    for (const auto& el : elements) {
        if (el.name == "vertex") {
            int ix = -1, iy = -1, iz = -1;
            for (std::size_t p = 0; p < el.props.size(); ++p) {
                if (el.props[p] == "x") ix = static_cast<int>(p);
                if (el.props[p] == "y") iy = static_cast<int>(p);
                if (el.props[p] == "z") iz = static_cast<int>(p);
                if (el.props[p].rfind("list:", 0) == 0)
                    throw FormatError("list properties on vertices are not supported", reader.line());
            }
            if (ix < 0 || iy < 0 || iz < 0) throw FormatError("vertex element lacks x/y/z", reader.line());
            for (long i = 0; i < el.count; ++i) {
                if (!reader.next(tok)) throw FormatError("unexpected end of file in vertex list", reader.line());
                if (tok.size() < el.props.size()) throw FormatError("too few vertex properties", reader.line());
                verts.emplace_back(parse_number<double>(tok[static_cast<std::size_t>(ix)], reader.line()),
                                   parse_number<double>(tok[static_cast<std::size_t>(iy)], reader.line()),
                                   parse_number<double>(tok[static_cast<std::size_t>(iz)], reader.line()));
            }
        } else if (el.name == "face") {
            if (el.props.empty() || el.props[0].rfind("list:", 0) != 0)
                throw FormatError("face element must start with a vertex index list", reader.line());
            for (long i = 0; i < el.count; ++i) {
                if (!reader.next(tok)) throw FormatError("unexpected end of file in face list", reader.line());
                const auto k = parse_number<int>(tok[0], reader.line());
                if (k != 3)
                    throw FormatError("face with " + std::to_string(k) +
                                          " vertices; only triangles are supported",
                                      reader.line());
                if (tok.size() < 4) throw FormatError("triangle needs 3 vertex indices", reader.line());
                tris.push_back({parse_number<int>(tok[1], reader.line()), parse_number<int>(tok[2], reader.line()),
                                parse_number<int>(tok[3], reader.line())});
            }
        } else {
            for (long i = 0; i < el.count; ++i)
                if (!reader.next(tok)) throw FormatError("unexpected end of file in element " + el.name, reader.line());
        }
    }
    return TriangleMesh(std::move(verts), std::move(tris));
}

}  // namespace detail

inline TriangleMesh read_mesh(std::istream& in, MeshFormat format) {
    return format == MeshFormat::OFF ? detail::read_off(in) : detail::read_ply_ascii(in);
}

inline TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open mesh file " + path.string());
    return read_mesh(in, format);
}

inline TriangleMesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_path(path)); }

inline void write_mesh(std::ostream& out, const TriangleMesh& mesh, MeshFormat format) {
    out << std::setprecision(17);
    if (format == MeshFormat::OFF) {
        out << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_triangles() << " 0\n";
    } else {
        out << "ply\nformat ascii 1.0\nelement vertex " << mesh.num_vertices()
            << "\nproperty double x\nproperty double y\nproperty double z\nelement face " << mesh.num_triangles()
            << "\nproperty list uchar int vertex_indices\nend_header\n";
    }
    for (const auto& v : mesh.vertices()) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : mesh.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

inline void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh, MeshFormat format) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write mesh file " + path.string());
    write_mesh(out, mesh, format);
}

inline void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh) {
    save_mesh(path, mesh, format_from_path(path));
}

// ---------------------------------------------------------------------------
// Scalar fields: single-column CSV with header `value`, row i = vertex i.

inline void write_field_csv(std::ostream& out, const Eigen::VectorXd& values) {
    out << "value\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < values.size(); ++i) out << values[i] << '\n';
}

inline void save_field_csv(const std::filesystem::path& path, const Eigen::VectorXd& values) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write field file " + path.string());
    write_field_csv(out, values);
}

inline Eigen::VectorXd read_field_csv(std::istream& in) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    }
    auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
    };
    if (trim(line) != "value") throw FormatError("field CSV must start with header 'value'", line_no);
    std::vector<double> vals;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = trim(line);
        if (t.empty()) continue;
        vals.push_back(detail::parse_number<double>(t, line_no));
    }
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

inline ScalarField load_field_csv(const std::filesystem::path& path, const TriangleMesh& mesh) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open field file " + path.string());
    return ScalarField(read_field_csv(in), mesh);
}

}  // namespace hk

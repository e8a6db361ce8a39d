#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "progtex/error.hpp"

namespace progtex {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Triangle mesh with per-corner UVs. Face normals are derived, never read from file.
struct Mesh {
    std::vector<Vec3> positions;
    std::vector<std::array<int, 3>> faces;
    std::vector<std::array<Vec2, 3>> corner_uvs;
    std::vector<Vec3> face_normals;

    std::size_t face_count() const { return faces.size(); }
    std::size_t vertex_count() const { return positions.size(); }

    const Vec3& corner(std::size_t face, int k) const { return positions[faces[face][k]]; }
};

/// Unit normal of the triangle (a, b, c) with counter-clockwise winding.
/// Returns a zero vector for degenerate triangles.
inline Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    if (!(len > 0.0) || !std::isfinite(len)) return Vec3::Zero();
    return n / len;
}

inline void compute_face_normals(Mesh& mesh) {
    mesh.face_normals.resize(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Vec3 n = triangle_normal(mesh.corner(f, 0), mesh.corner(f, 1), mesh.corner(f, 2));
        if (n.isZero()) {
            fail(ErrorCode::DegenerateMesh, "face " + std::to_string(f) + " has zero area");
        }
        mesh.face_normals[f] = n;
    }
}

namespace detail {

inline std::string at_line(std::string_view source, std::size_t line) {
    return std::string(source) + ":" + std::to_string(line);
}

inline double parse_double(std::string_view token, std::string_view source, std::size_t line) {
    double value = 0.0;
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        fail(ErrorCode::ParseError, at_line(source, line) + ": bad number '" + std::string(token) + "'");
    }
    return value;
}

inline long parse_index(std::string_view token, std::string_view source, std::size_t line) {
    long value = 0;
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end || value == 0) {
        fail(ErrorCode::ParseError, at_line(source, line) + ": bad index '" + std::string(token) + "'");
    }
    return value;
}

// OBJ indices are 1-based; negative values count back from the end.
inline int resolve_index(long raw, std::size_t count, std::string_view source, std::size_t line) {
    const long resolved = raw > 0 ? raw - 1 : static_cast<long>(count) + raw;
    if (resolved < 0 || resolved >= static_cast<long>(count)) {
        fail(ErrorCode::ParseError, at_line(source, line) + ": index " + std::to_string(raw) + " out of range");
    }
    return static_cast<int>(resolved);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

} // namespace detail

/// Parse a Wavefront OBJ stream. Accepts `f v/vt` and `f v/vt/vn`; every face must be
/// a triangle and every corner must reference a UV. `source` only decorates messages.
inline Mesh parse_obj(std::istream& in, std::string_view source = "<obj>") {
    constexpr double kUvSlack = 1e-6;
    Mesh mesh;
    std::vector<Vec2> uvs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view(line);
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        const auto tokens = detail::split_ws(view);
        if (tokens.empty()) continue;
        const auto& tag = tokens[0];
        if (tag == "v") {
            if (tokens.size() < 4) fail(ErrorCode::ParseError, detail::at_line(source, line_no) + ": vertex needs 3 coordinates");
            mesh.positions.emplace_back(detail::parse_double(tokens[1], source, line_no),
                                        detail::parse_double(tokens[2], source, line_no),
                                        detail::parse_double(tokens[3], source, line_no));
        } else if (tag == "vt") {
            if (tokens.size() < 3) fail(ErrorCode::ParseError, detail::at_line(source, line_no) + ": texcoord needs 2 components");
            uvs.emplace_back(detail::parse_double(tokens[1], source, line_no),
                             detail::parse_double(tokens[2], source, line_no));
        } else if (tag == "f") {
            const std::size_t face_id = mesh.faces.size();
            const std::string where = detail::at_line(source, line_no) + " (face " + std::to_string(face_id) + ")";
            if (tokens.size() != 4) {
                fail(ErrorCode::NonTriangulated, where + ": has " + std::to_string(tokens.size() - 1) + " corners");
            }
            std::array<int, 3> face{};
            std::array<Vec2, 3> face_uv;
            for (int k = 0; k < 3; ++k) {
                const std::string_view corner = tokens[k + 1];
                const auto slash = corner.find('/');
                if (slash == std::string_view::npos) fail(ErrorCode::MissingUVs, where + ": corner without texcoord");
                const auto rest = corner.substr(slash + 1);
                const auto uv_token = rest.substr(0, rest.find('/'));
                if (uv_token.empty()) fail(ErrorCode::MissingUVs, where + ": corner without texcoord");
                face[k] = detail::resolve_index(detail::parse_index(corner.substr(0, slash), source, line_no),
                                                mesh.positions.size(), source, line_no);
                const int uv_index = detail::resolve_index(detail::parse_index(uv_token, source, line_no), uvs.size(),
                                                           source, line_no);
                Vec2 uv = uvs[uv_index];
                if (uv.x() < -kUvSlack || uv.x() > 1.0 + kUvSlack || uv.y() < -kUvSlack || uv.y() > 1.0 + kUvSlack) {
                    fail(ErrorCode::ParseError, where + ": texcoord outside [0,1]^2");
                }
                face_uv[k] = uv.cwiseMax(0.0).cwiseMin(1.0);
            }
            mesh.faces.push_back(face);
            mesh.corner_uvs.push_back(face_uv);
        }
        // Other statements (vn, o, g, s, usemtl, mtllib, ...) carry nothing we need.
    }
    if (mesh.faces.empty()) fail(ErrorCode::ParseError, std::string(source) + ": no faces");
    compute_face_normals(mesh);
    return mesh;
}

inline Mesh load_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ParseError, "cannot open " + path.string());
    return parse_obj(in, path.string());
}

/// Axis-aligned bounds of the vertex set.
inline Eigen::AlignedBox3d bounding_box(const Mesh& mesh) {
    Eigen::AlignedBox3d box;
    for (const auto& p : mesh.positions) box.extend(p);
    return box;
}

/// Translate and uniformly scale so the bounding box is centred at the origin with
/// max extent 1. Already-normalised meshes are returned unchanged.
inline Mesh normalize_mesh(Mesh mesh) {
    const auto box = bounding_box(mesh);
    if (box.isEmpty()) fail(ErrorCode::DegenerateMesh, "mesh has no vertices");
    const Vec3 extent = box.sizes();
    const double max_extent = extent.maxCoeff();
    if (!(max_extent > 0.0)) fail(ErrorCode::DegenerateMesh, "bounding box has zero extent");
    const Vec3 center = 0.5 * (box.min() + box.max());
    if (center.isZero() && max_extent == 1.0) return mesh;
    const double scale = 1.0 / max_extent;
    for (auto& p : mesh.positions) p = (p - center) * scale;
    // Uniform scaling preserves directions, but recompute to keep normals unit-exact.
    compute_face_normals(mesh);
    return mesh;
}

/// Per-texel surface samples of the UV atlas. Texel (i, j) samples
/// uv = ((i + 0.5) / res, (j + 0.5) / res) and lives at index j * res + i,
/// so row j = 0 is v near 0 (the bottom of the exported image).
struct TexelGeometry {
    int resolution = 0;
    std::vector<Vec3> position;
    std::vector<Vec3> normal;
    std::vector<std::int32_t> face; // -1 when the texel is not covered by any face
    std::size_t overlap_texels = 0; // texels claimed by a later face too (first writer kept)

    std::size_t texel_count() const { return face.size(); }
    bool valid(std::size_t texel) const { return face[texel] >= 0; }
    std::size_t valid_count() const {
        return static_cast<std::size_t>(std::count_if(face.begin(), face.end(), [](auto f) { return f >= 0; }));
    }
    double coverage() const {
        return texel_count() == 0 ? 0.0 : static_cast<double>(valid_count()) / static_cast<double>(texel_count());
    }
    Vec2 texel_uv(std::size_t texel) const {
        const auto i = static_cast<int>(texel % resolution);
        const auto j = static_cast<int>(texel / resolution);
        return {(i + 0.5) / resolution, (j + 0.5) / resolution};
    }
};

/// Barycentric coordinates of p in the 2D triangle (a, b, c). Degenerate
/// triangles yield NaNs, which fail every inside test.
inline Eigen::Vector3d barycentric_2d(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    const double det = (b.y() - c.y()) * (a.x() - c.x()) + (c.x() - b.x()) * (a.y() - c.y());
    const double l0 = ((b.y() - c.y()) * (p.x() - c.x()) + (c.x() - b.x()) * (p.y() - c.y())) / det;
    const double l1 = ((c.y() - a.y()) * (p.x() - c.x()) + (a.x() - c.x()) * (p.y() - c.y())) / det;
    return {l0, l1, 1.0 - l0 - l1};
}

/// Rasterise every face into UV space at the given resolution, storing the
/// interpolated surface point and the face normal at each covered texel centre.
inline TexelGeometry bake_texel_geometry(const Mesh& mesh, int resolution) {
    if (resolution <= 0) fail(ErrorCode::InvalidArgument, "texture resolution must be positive");
    constexpr double kInsideEps = 1e-12;
    constexpr double kStrictEps = 1e-9;
    const auto n = static_cast<std::size_t>(resolution) * resolution;
    TexelGeometry geo;
    geo.resolution = resolution;
    geo.position.assign(n, Vec3::Constant(std::numeric_limits<double>::quiet_NaN()));
    geo.normal.assign(n, Vec3::Zero());
    geo.face.assign(n, -1);

    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto& uv = mesh.corner_uvs[f];
        const double det = (uv[1] - uv[0]).x() * (uv[2] - uv[0]).y() - (uv[1] - uv[0]).y() * (uv[2] - uv[0]).x();
        if (!(std::abs(det) > 0.0)) continue;
        const double umin = std::min({uv[0].x(), uv[1].x(), uv[2].x()});
        const double umax = std::max({uv[0].x(), uv[1].x(), uv[2].x()});
        const double vmin = std::min({uv[0].y(), uv[1].y(), uv[2].y()});
        const double vmax = std::max({uv[0].y(), uv[1].y(), uv[2].y()});
        const int i0 = std::max(0, static_cast<int>(std::floor(umin * resolution - 0.5)));
        const int i1 = std::min(resolution - 1, static_cast<int>(std::ceil(umax * resolution - 0.5)));
        const int j0 = std::max(0, static_cast<int>(std::floor(vmin * resolution - 0.5)));
        const int j1 = std::min(resolution - 1, static_cast<int>(std::ceil(vmax * resolution - 0.5)));
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                const Vec2 p((i + 0.5) / resolution, (j + 0.5) / resolution);
                const auto b = barycentric_2d(uv[0], uv[1], uv[2], p);
                if (!(b.minCoeff() >= -kInsideEps)) continue;
                const auto texel = static_cast<std::size_t>(j) * resolution + i;
                if (geo.face[texel] >= 0) {
                    // Shared edges between neighbouring faces are not overlaps.
                    if (b.minCoeff() > kStrictEps) ++geo.overlap_texels;
                    continue;
                }
                const Vec3& a = mesh.corner(f, 0);
                const Vec3& bb = mesh.corner(f, 1);
                const Vec3& c = mesh.corner(f, 2);
                geo.position[texel] = b[0] * a + b[1] * bb + b[2] * c;
                geo.normal[texel] = mesh.face_normals[f];
                geo.face[texel] = static_cast<std::int32_t>(f);
            }
        }
    }
    if (geo.valid_count() == 0) fail(ErrorCode::ZeroCoverage, "no texel is covered by the UV atlas");
    return geo;
}

} // namespace progtex

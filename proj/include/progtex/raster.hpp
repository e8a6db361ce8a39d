#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "progtex/atlas.hpp"
#include "progtex/camera.hpp"
#include "progtex/error.hpp"
#include "progtex/geometry.hpp"

namespace progtex {

/// How frontally `point` on a surface with unit `normal` is seen from `eye`:
/// max(0, -n.d) with d the unit direction from the eye to the point.
inline double view_similarity(const Vec3& normal, const Vec3& eye, const Vec3& point) {
    const double dx = point.x() - eye.x();
    const double dy = point.y() - eye.y();
    const double dz = point.z() - eye.z();
    const double len = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (!(len > 0.0)) return 0.0;
    const double cosine = -(normal.x() * dx + normal.y() * dy + normal.z() * dz) / len;
    return std::clamp(cosine, 0.0, 1.0);
}

/// Surface point of `face` at barycentrics `b`.
inline Vec3 surface_point(const Mesh& mesh, std::size_t face, const std::array<double, 3>& b) {
    const Vec3& p0 = mesh.corner(face, 0);
    const Vec3& p1 = mesh.corner(face, 1);
    const Vec3& p2 = mesh.corner(face, 2);
    return {b[0] * p0.x() + b[1] * p1.x() + b[2] * p2.x(), b[0] * p0.y() + b[1] * p1.y() + b[2] * p2.y(),
            b[0] * p0.z() + b[1] * p1.z() + b[2] * p2.z()};
}

inline Vec2 surface_uv(const Mesh& mesh, std::size_t face, const std::array<double, 3>& b) {
    const auto& uv = mesh.corner_uvs[face];
    return {b[0] * uv[0].x() + b[1] * uv[1].x() + b[2] * uv[2].x(), b[0] * uv[0].y() + b[1] * uv[1].y() + b[2] * uv[2].y()};
}

/// Per-pixel geometry for one viewpoint. Row 0 is the top of the image.
struct GBuffer {
    int resolution = 0;
    Camera camera;
    std::vector<double> depth;             // normalised linear depth, 1 = background
    std::vector<std::int32_t> face_id;     // -1 = background
    std::vector<std::array<double, 3>> barycentrics;
    std::vector<double> similarity;        // 0 on background

    std::size_t pixel_count() const { return face_id.size(); }
    bool covered(std::size_t pixel) const { return face_id[pixel] >= 0; }
    std::size_t covered_count() const {
        return static_cast<std::size_t>(std::count_if(face_id.begin(), face_id.end(), [](auto f) { return f >= 0; }));
    }
};

struct ViewImage {
    int resolution = 0;
    std::vector<Color> rgb;

    static ViewImage filled(int resolution, const Color& c) {
        return {resolution, std::vector<Color>(static_cast<std::size_t>(resolution) * resolution, c)};
    }
    std::size_t pixel_count() const { return rgb.size(); }
    bool operator==(const ViewImage&) const = default;
};

namespace detail {

// Screen positions are snapped to 1/256 pixel so edge functions are exact integers
// and shared edges are rasterised exactly once.
inline constexpr int kSubpixelBits = 8;
inline constexpr std::int64_t kSubpixelScale = std::int64_t{1} << kSubpixelBits;

struct FixedPoint {
    std::int64_t x;
    std::int64_t y;
};

constexpr std::int64_t edge_function(const FixedPoint& a, const FixedPoint& b, const FixedPoint& p) {
    return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

// Top-left rule for positively oriented triangles in y-down screen space.
constexpr bool is_top_left(const FixedPoint& a, const FixedPoint& b) {
    const std::int64_t dy = b.y - a.y;
    const std::int64_t dx = b.x - a.x;
    return dy < 0 || (dy == 0 && dx > 0);
}

} // namespace detail

/// Nearest-surface rasterisation with back-face culling. Triangles crossing the
/// near plane are skipped (normalised meshes never reach it from default cameras).
inline GBuffer rasterize(const Mesh& mesh, const Camera& camera) {
    using detail::FixedPoint;
    const int res = camera.image_resolution;
    const auto n = static_cast<std::size_t>(res) * res;
    GBuffer g;
    g.resolution = res;
    g.camera = camera;
    g.depth.assign(n, 1.0);
    g.face_id.assign(n, -1);
    g.barycentrics.assign(n, {0.0, 0.0, 0.0});
    g.similarity.assign(n, 0.0);

    const Eigen::Matrix4d mvp = camera.projection * camera.view_transform;
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const Vec3& normal = mesh.face_normals[f];
        if (normal.dot(mesh.corner(f, 0) - camera.eye) >= 0.0) continue;

        std::array<FixedPoint, 3> screen{};
        std::array<double, 3> w{};
        bool behind = false;
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector4d clip = mvp * mesh.corner(f, k).homogeneous();
            w[k] = clip.w();
            if (!(w[k] > camera.depth_range.near)) {
                behind = true;
                break;
            }
            const double sx = (clip.x() / w[k] + 1.0) * 0.5 * res;
            const double sy = (1.0 - clip.y() / w[k]) * 0.5 * res;
            screen[k] = {std::llround(sx * detail::kSubpixelScale), std::llround(sy * detail::kSubpixelScale)};
        }
        if (behind) continue;

        // order[k] maps rasterisation vertex k back to the face corner.
        std::array<int, 3> order{0, 1, 2};
        std::int64_t area = detail::edge_function(screen[0], screen[1], screen[2]);
        if (area == 0) continue;
        if (area < 0) {
            std::swap(screen[1], screen[2]);
            std::swap(order[1], order[2]);
            area = -area;
        }
        const FixedPoint& a = screen[0];
        const FixedPoint& b = screen[1];
        const FixedPoint& c = screen[2];
        const bool tl_bc = detail::is_top_left(b, c);
        const bool tl_ca = detail::is_top_left(c, a);
        const bool tl_ab = detail::is_top_left(a, b);

        const std::int64_t min_x = std::min({a.x, b.x, c.x}), max_x = std::max({a.x, b.x, c.x});
        const std::int64_t min_y = std::min({a.y, b.y, c.y}), max_y = std::max({a.y, b.y, c.y});
        const int x0 = std::max<int>(0, static_cast<int>(min_x / detail::kSubpixelScale) - 1);
        const int x1 = std::min<int>(res - 1, static_cast<int>(max_x / detail::kSubpixelScale) + 1);
        const int y0 = std::max<int>(0, static_cast<int>(min_y / detail::kSubpixelScale) - 1);
        const int y1 = std::min<int>(res - 1, static_cast<int>(max_y / detail::kSubpixelScale) + 1);

        for (int py = y0; py <= y1; ++py) {
            for (int px = x0; px <= x1; ++px) {
                const FixedPoint p{(2 * px + 1) * detail::kSubpixelScale / 2, (2 * py + 1) * detail::kSubpixelScale / 2};
                const std::int64_t e0 = detail::edge_function(b, c, p);
                const std::int64_t e1 = detail::edge_function(c, a, p);
                const std::int64_t e2 = detail::edge_function(a, b, p);
                if (e0 < 0 || e1 < 0 || e2 < 0) continue;
                if ((e0 == 0 && !tl_bc) || (e1 == 0 && !tl_ca) || (e2 == 0 && !tl_ab)) continue;

                // Perspective-correct interpolation: l_k / w_k is affine in screen space.
                const double inv_area = 1.0 / static_cast<double>(area);
                const std::array<double, 3> screen_bary{e0 * inv_area, e1 * inv_area, e2 * inv_area};
                std::array<double, 3> q{};
                double q_sum = 0.0;
                for (int k = 0; k < 3; ++k) {
                    q[k] = screen_bary[k] / w[order[k]];
                    q_sum += q[k];
                }
                const double view_depth = 1.0 / q_sum;
                const double depth = camera.normalized_depth(view_depth);
                if (!(depth >= 0.0 && depth < 1.0)) continue;
                const auto pixel = static_cast<std::size_t>(py) * res + px;
                if (!(depth < g.depth[pixel])) continue;
                std::array<double, 3> bary{};
                for (int k = 0; k < 3; ++k) bary[order[k]] = q[k] / q_sum;
                g.depth[pixel] = depth;
                g.face_id[pixel] = static_cast<std::int32_t>(f);
                g.barycentrics[pixel] = bary;
            }
        }
    }

    for (std::size_t p = 0; p < n; ++p) {
        if (!g.covered(p)) continue;
        const auto f = static_cast<std::size_t>(g.face_id[p]);
        g.similarity[p] = view_similarity(mesh.face_normals[f], camera.eye, surface_point(mesh, f, g.barycentrics[p]));
    }
    return g;
}

/// Nearest-texel lookup index for a UV coordinate.
inline std::size_t nearest_texel(int resolution, const Vec2& uv) {
    const int i = std::clamp(static_cast<int>(std::floor(uv.x() * resolution)), 0, resolution - 1);
    const int j = std::clamp(static_cast<int>(std::floor(uv.y() * resolution)), 0, resolution - 1);
    return static_cast<std::size_t>(j) * resolution + i;
}

/// Texel sampled by a surface point of `face` at `uv`: the nearest texel
/// (by texel-centre distance) baked from that same face, searched in a 5x5
/// window around the containing texel. Empty when the face owns none nearby.
inline std::optional<std::size_t> lookup_texel(const TexelGeometry& geo, std::size_t face, const Vec2& uv) {
    const int res = geo.resolution;
    const auto home = nearest_texel(res, uv);
    if (geo.face[home] == static_cast<std::int32_t>(face)) return home;
    const int hi = static_cast<int>(home % res);
    const int hj = static_cast<int>(home / res);
    std::optional<std::size_t> best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int dj = -2; dj <= 2; ++dj) {
        for (int di = -2; di <= 2; ++di) {
            const int i = hi + di, j = hj + dj;
            if (i < 0 || j < 0 || i >= res || j >= res) continue;
            const auto t = static_cast<std::size_t>(j) * res + i;
            if (geo.face[t] != static_cast<std::int32_t>(face)) continue;
            const double d = (geo.texel_uv(t) - uv).squaredNorm();
            if (d < best_dist) {
                best_dist = d;
                best = t;
            }
        }
    }
    return best;
}

/// Render the current texture from the gbuffer's viewpoint. Background and
/// unpainted texels show `unpainted`.
inline ViewImage render_view(const Mesh& mesh, const TextureAtlas& atlas, const GBuffer& gbuffer,
                             const Color& unpainted = Color::Constant(0.5)) {
    ViewImage img = ViewImage::filled(gbuffer.resolution, unpainted);
    for (std::size_t p = 0; p < gbuffer.pixel_count(); ++p) {
        if (!gbuffer.covered(p)) continue;
        const auto f = static_cast<std::size_t>(gbuffer.face_id[p]);
        const auto texel = nearest_texel(atlas.resolution, surface_uv(mesh, f, gbuffer.barycentrics[p]));
        if (atlas.painted[texel]) img.rgb[p] = atlas.rgb[texel];
    }
    return img;
}

/// As above, but samples through the face-restricted texel lookup so pixels
/// near chart borders never pick up gutter texels.
inline ViewImage render_view(const Mesh& mesh, const TextureAtlas& atlas, const GBuffer& gbuffer,
                             const TexelGeometry& geo, const Color& unpainted = Color::Constant(0.5)) {
    if (geo.resolution != atlas.resolution) fail(ErrorCode::ResolutionMismatch, "atlas and texel geometry differ");
    ViewImage img = ViewImage::filled(gbuffer.resolution, unpainted);
    for (std::size_t p = 0; p < gbuffer.pixel_count(); ++p) {
        if (!gbuffer.covered(p)) continue;
        const auto f = static_cast<std::size_t>(gbuffer.face_id[p]);
        const auto texel = lookup_texel(geo, f, surface_uv(mesh, f, gbuffer.barycentrics[p]));
        if (texel && atlas.painted[*texel]) img.rgb[p] = atlas.rgb[*texel];
    }
    return img;
}

} // namespace progtex

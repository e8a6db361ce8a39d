#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "progtex/atlas.hpp"
#include "progtex/camera.hpp"
#include "progtex/error.hpp"
#include "progtex/geometry.hpp"
#include "progtex/raster.hpp"

namespace progtex {

/// Generation-mask classes. Numeric order doubles as priority (lower wins) when
/// downsampling.
enum class Label : std::uint8_t { New = 0, Update = 1, Keep = 2, Ignore = 3 };

inline constexpr std::array<Label, 4> kAllLabels{Label::New, Label::Update, Label::Keep, Label::Ignore};

struct GenerationMask {
    int resolution = 0;
    std::vector<Label> label;

    static GenerationMask filled(int resolution, Label l) {
        return {resolution, std::vector<Label>(static_cast<std::size_t>(resolution) * resolution, l)};
    }

    std::size_t pixel_count() const { return label.size(); }

    /// Pixel counts indexed by Label value.
    std::array<std::size_t, 4> counts() const {
        std::array<std::size_t, 4> c{};
        for (Label l : label) ++c[static_cast<std::size_t>(l)];
        return c;
    }

    bool operator==(const GenerationMask&) const = default;
};

struct PartitionOptions {
    bool disable_partition = false; // every covered pixel is New
    bool disable_update = false;    // would-be Update pixels become Keep
    double depth_tolerance = 0.01;  // must match BackProjectOptions
};

namespace detail {

/// Pixel a texel projects into when the gbuffer shows that texel's surface
/// there (normalised depths within `tolerance`).
inline std::optional<std::size_t> visible_home_pixel(const GBuffer& gbuffer, const Vec3& position, double tolerance) {
    const Camera& camera = gbuffer.camera;
    const int res = gbuffer.resolution;
    const ProjectedPoint proj = camera.project(position);
    if (!(proj.view_depth > camera.depth_range.near)) return std::nullopt;
    if (!(proj.x >= 0.0 && proj.y >= 0.0 && proj.x < res && proj.y < res)) return std::nullopt;
    const auto pixel = static_cast<std::size_t>(static_cast<int>(proj.y)) * res + static_cast<int>(proj.x);
    if (!gbuffer.covered(pixel)) return std::nullopt;
    if (std::abs(camera.normalized_depth(proj.view_depth) - gbuffer.depth[pixel]) > tolerance) return std::nullopt;
    return pixel;
}

} // namespace detail

/// Split a view into New / Update / Keep / Ignore. A painted texel is Update when
/// this view sees it more frontally than any view that has written it so far.
inline GenerationMask partition_view(const GBuffer& gbuffer, const Mesh& mesh, const TexelGeometry& geo,
                                     const TextureAtlas& atlas, const PartitionOptions& options = {}) {
    if (atlas.resolution != geo.resolution) {
        fail(ErrorCode::ResolutionMismatch, "atlas and texel geometry resolutions differ");
    }
    GenerationMask mask = GenerationMask::filled(gbuffer.resolution, Label::Ignore);
    for (std::size_t p = 0; p < gbuffer.pixel_count(); ++p) {
        if (!gbuffer.covered(p)) continue;
        if (options.disable_partition) {
            mask.label[p] = Label::New;
            continue;
        }
        const auto f = static_cast<std::size_t>(gbuffer.face_id[p]);
        const auto texel = lookup_texel(geo, f, surface_uv(mesh, f, gbuffer.barycentrics[p]));
        if (!texel) {
            mask.label[p] = Label::Keep;
            continue;
        }
        if (!atlas.painted[*texel]) {
            mask.label[p] = Label::New;
            continue;
        }
        const double s = view_similarity(geo.normal[*texel], gbuffer.camera.eye, geo.position[*texel]);
        mask.label[p] = (s > atlas.best_similarity[*texel] && !options.disable_update) ? Label::Update : Label::Keep;
    }
    if (options.disable_partition) return mask;

    // A texel can project into a different pixel than the one whose lookup
    // finds it. Promote that pixel too, so every texel this view would improve
    // sits under a writable label.
    for (std::size_t t = 0; t < geo.texel_count(); ++t) {
        if (!geo.valid(t)) continue;
        const auto pixel = detail::visible_home_pixel(gbuffer, geo.position[t], options.depth_tolerance);
        if (!pixel) continue;
        const double s = view_similarity(geo.normal[t], gbuffer.camera.eye, geo.position[t]);
        if (!(s > atlas.best_similarity[t])) continue;
        Label& l = mask.label[*pixel];
        if (!atlas.painted[t]) {
            l = Label::New;
        } else if (l == Label::Keep && !options.disable_update) {
            l = Label::Update;
        }
    }
    return mask;
}

/// Coarsen by `factor`, keeping the highest-priority label (New > Update > Keep > Ignore).
inline GenerationMask downsample_mask(const GenerationMask& mask, int factor) {
    if (factor <= 0 || mask.resolution % factor != 0) {
        fail(ErrorCode::IndivisibleFactor,
             "factor " + std::to_string(factor) + " does not divide resolution " + std::to_string(mask.resolution));
    }
    const int out_res = mask.resolution / factor;
    GenerationMask out = GenerationMask::filled(out_res, Label::Ignore);
    for (int y = 0; y < mask.resolution; ++y) {
        for (int x = 0; x < mask.resolution; ++x) {
            auto& cell = out.label[static_cast<std::size_t>(y / factor) * out_res + x / factor];
            cell = std::min(cell, mask.label[static_cast<std::size_t>(y) * mask.resolution + x]);
        }
    }
    return out;
}

struct BackProjectOptions {
    double depth_tolerance = 0.01;
    /// When false every visible texel under a New/Update pixel is overwritten,
    /// regardless of how well it was observed before.
    bool gate_on_similarity = true;
};

struct BackProjectResult {
    std::size_t written = 0;
    std::size_t overwritten = 0; // subset of `written` that was already painted
    std::vector<std::size_t> written_texels;
};

namespace detail {

inline Color sample_bilinear(const ViewImage& image, double x, double y) {
    const int res = image.resolution;
    const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(res - 1));
    const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(res - 1));
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const int x1 = std::min(x0 + 1, res - 1);
    const int y1 = std::min(y0 + 1, res - 1);
    const double tx = fx - x0, ty = fy - y0;
    const auto at = [&](int xx, int yy) -> const Color& { return image.rgb[static_cast<std::size_t>(yy) * res + xx]; };
    return (1 - ty) * ((1 - tx) * at(x0, y0) + tx * at(x1, y0)) + ty * ((1 - tx) * at(x0, y1) + tx * at(x1, y1));
}

} // namespace detail

/// Write a synthesised view into the atlas, texel by texel. A texel is written
/// when it is visible (depth within tolerance of the gbuffer), its covering
/// pixel is New or Update, and this view improves its similarity. Pixels whose
/// own texel was not reached that way (silhouettes) are filled from the pixel
/// colour. No texel is written twice per call, and texels landing on Keep pixels
/// are never written.
inline BackProjectResult back_project(const ViewImage& image, const GenerationMask& mask, const Camera& camera,
                                      const GBuffer& gbuffer, const TexelGeometry& geo, const Mesh& mesh,
                                      TextureAtlas& atlas, const BackProjectOptions& options = {}) {
    const int res = gbuffer.resolution;
    if (image.resolution != res || mask.resolution != res || camera.image_resolution != res) {
        fail(ErrorCode::ResolutionMismatch, "image, mask, camera and gbuffer must share one resolution");
    }
    if (atlas.resolution != geo.resolution) {
        fail(ErrorCode::ResolutionMismatch, "atlas and texel geometry resolutions differ");
    }

    BackProjectResult result;
    std::vector<std::uint8_t> touched(geo.texel_count(), 0);
    const auto write = [&](std::size_t texel, const Color& c, double s) {
        touched[texel] = 1;
        ++result.written;
        if (atlas.painted[texel]) ++result.overwritten;
        result.written_texels.push_back(texel);
        atlas.rgb[texel] = c;
        atlas.painted[texel] = 1;
        atlas.best_similarity[texel] = std::max(atlas.best_similarity[texel], s);
    };
    const auto improves = [&](std::size_t texel, double s) {
        return options.gate_on_similarity ? s > atlas.best_similarity[texel] : s > 0.0;
    };
    const auto writable = [](Label l) { return l == Label::New || l == Label::Update; };

    for (std::size_t t = 0; t < geo.texel_count(); ++t) {
        if (!geo.valid(t)) continue;
        const ProjectedPoint proj = camera.project(geo.position[t]);
        if (!(proj.view_depth > camera.depth_range.near)) continue;
        if (!(proj.x >= 0.0 && proj.y >= 0.0 && proj.x < res && proj.y < res)) continue;
        const auto pixel = static_cast<std::size_t>(static_cast<int>(proj.y)) * res + static_cast<int>(proj.x);
        if (!gbuffer.covered(pixel) || !writable(mask.label[pixel])) continue;
        if (std::abs(camera.normalized_depth(proj.view_depth) - gbuffer.depth[pixel]) > options.depth_tolerance) continue;
        const double s = view_similarity(geo.normal[t], camera.eye, geo.position[t]);
        if (!improves(t, s)) continue;
        write(t, detail::sample_bilinear(image, proj.x, proj.y), s);
    }

    // Gap fill for texels that project just off the silhouette: the texel must
    // sit at the looking-up pixel's depth and its own pixel must be background.
    for (std::size_t p = 0; p < gbuffer.pixel_count(); ++p) {
        if (!gbuffer.covered(p) || !writable(mask.label[p])) continue;
        const auto f = static_cast<std::size_t>(gbuffer.face_id[p]);
        const auto texel = lookup_texel(geo, f, surface_uv(mesh, f, gbuffer.barycentrics[p]));
        if (!texel || touched[*texel]) continue;
        const ProjectedPoint proj = camera.project(geo.position[*texel]);
        if (!(proj.view_depth > camera.depth_range.near)) continue;
        if (std::abs(camera.normalized_depth(proj.view_depth) - gbuffer.depth[p]) > options.depth_tolerance) continue;
        if (proj.x >= 0.0 && proj.y >= 0.0 && proj.x < res && proj.y < res) {
            const auto home = static_cast<std::size_t>(static_cast<int>(proj.y)) * res + static_cast<int>(proj.x);
            if (gbuffer.covered(home)) continue;
        }
        const double s = view_similarity(geo.normal[*texel], camera.eye, geo.position[*texel]);
        if (!improves(*texel, s)) continue;
        write(*texel, image.rgb[p], s);
    }
    return result;
}

} // namespace progtex

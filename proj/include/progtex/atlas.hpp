#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "progtex/error.hpp"
#include "progtex/geometry.hpp"

namespace progtex {

using Color = Eigen::Vector3d;

/// Partial texture being painted. Layout matches TexelGeometry (row j = 0 is v near 0).
struct TextureAtlas {
    int resolution = 0;
    std::vector<Color> rgb;
    std::vector<std::uint8_t> painted;
    std::vector<double> best_similarity;

    static TextureAtlas empty(int resolution, const Color& fill = Color::Constant(0.5)) {
        if (resolution <= 0) fail(ErrorCode::InvalidArgument, "atlas resolution must be positive");
        const auto n = static_cast<std::size_t>(resolution) * resolution;
        return {resolution, std::vector<Color>(n, fill), std::vector<std::uint8_t>(n, 0), std::vector<double>(n, 0.0)};
    }

    std::size_t texel_count() const { return painted.size(); }

    std::size_t painted_count() const {
        return static_cast<std::size_t>(std::count(painted.begin(), painted.end(), std::uint8_t{1}));
    }

    bool operator==(const TextureAtlas&) const = default;
};

/// Fraction of the atlas's valid texels that are painted.
inline double painted_coverage(const TextureAtlas& atlas, const TexelGeometry& geo) {
    std::size_t valid = 0, painted = 0;
    for (std::size_t t = 0; t < geo.texel_count(); ++t) {
        if (!geo.valid(t)) continue;
        ++valid;
        painted += atlas.painted[t];
    }
    return valid == 0 ? 0.0 : static_cast<double>(painted) / static_cast<double>(valid);
}

/// Mean best_similarity over valid texels (0 for never-observed texels).
inline double mean_best_similarity(const TextureAtlas& atlas, const TexelGeometry& geo) {
    double sum = 0.0;
    std::size_t valid = 0;
    for (std::size_t t = 0; t < geo.texel_count(); ++t) {
        if (!geo.valid(t)) continue;
        ++valid;
        sum += atlas.best_similarity[t];
    }
    return valid == 0 ? 0.0 : sum / static_cast<double>(valid);
}

} // namespace progtex

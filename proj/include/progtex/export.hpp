#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "progtex/atlas.hpp"
#include "progtex/backend.hpp"
#include "progtex/error.hpp"
#include "progtex/geometry.hpp"
#include "progtex/image_io.hpp"
#include "progtex/raster.hpp"
#include "progtex/texstate.hpp"

namespace progtex {

/// Atlas as an 8-bit RGB PNG, flipped so image row 0 is v = 1. Unpainted texels
/// carry whatever colour the atlas holds for them (the fill colour).
inline std::string encode_texture_png(const TextureAtlas& atlas) {
    const int res = atlas.resolution;
    PngImage png{res, res, 3, 8, false, {}, {}};
    png.samples.resize(png.sample_count());
    for (int j = 0; j < res; ++j) {
        const int row = res - 1 - j;
        for (int i = 0; i < res; ++i) {
            const auto texel = static_cast<std::size_t>(j) * res + i;
            const auto out = (static_cast<std::size_t>(row) * res + i) * 3;
            for (int c = 0; c < 3; ++c) png.samples[out + c] = quantize8(atlas.rgb[texel][c]);
        }
    }
    return encode_png(png);
}

/// Inverse of encode_texture_png. Every texel is marked painted with best_similarity 1.
inline TextureAtlas decode_texture_png(std::string_view bytes) {
    const PngImage png = decode_png(bytes);
    if (png.indexed || png.channels != 3 || png.bit_depth != 8 || png.width != png.height) {
        fail(ErrorCode::ParseError, "texture must be a square 8-bit RGB PNG");
    }
    const int res = png.width;
    TextureAtlas atlas = TextureAtlas::empty(res);
    for (int j = 0; j < res; ++j) {
        const int row = res - 1 - j;
        for (int i = 0; i < res; ++i) {
            const auto texel = static_cast<std::size_t>(j) * res + i;
            const auto in = (static_cast<std::size_t>(row) * res + i) * 3;
            for (int c = 0; c < 3; ++c) atlas.rgb[texel][c] = png.samples[in + c] / 255.0;
            atlas.painted[texel] = 1;
            atlas.best_similarity[texel] = 1.0;
        }
    }
    return atlas;
}

/// Write `<stem>.obj`, `<stem>.mtl` and the texture (named `texture_name`) into `dir`.
inline void export_textured_mesh(const std::filesystem::path& dir, const Mesh& mesh, const TextureAtlas& atlas,
                                 const std::string& stem = "model", const std::string& texture_name = "texture.png") {
    std::filesystem::create_directories(dir);
    write_file(dir / texture_name, encode_texture_png(atlas));

    std::ostringstream mtl;
    mtl << "newmtl textured\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd " << texture_name << "\n";
    write_file(dir / (stem + ".mtl"), mtl.str());

    std::ostringstream obj;
    obj.precision(17);
    obj << "mtllib " << stem << ".mtl\nusemtl textured\n";
    for (const auto& p : mesh.positions) obj << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const auto& uv : mesh.corner_uvs)
        for (const auto& c : uv) obj << "vt " << c.x() << ' ' << c.y() << '\n';
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        obj << 'f';
        for (int k = 0; k < 3; ++k) obj << ' ' << mesh.faces[f][k] + 1 << '/' << 3 * f + k + 1;
        obj << '\n';
    }
    write_file(dir / (stem + ".obj"), obj.str());
}

/// Texture referenced by the first `map_Kd` of the OBJ's material library, or
/// `texture.png` next to the OBJ when there is none.
inline std::filesystem::path find_texture_for(const std::filesystem::path& obj_path) {
    const auto dir = obj_path.parent_path();
    std::ifstream obj(obj_path);
    std::string line;
    while (std::getline(obj, line)) {
        if (line.rfind("mtllib ", 0) != 0) continue;
        std::ifstream mtl(dir / line.substr(7));
        std::string mline;
        while (std::getline(mtl, mline)) {
            if (mline.rfind("map_Kd ", 0) == 0) return dir / mline.substr(7);
        }
    }
    return dir / "texture.png";
}

// Debug renders --------------------------------------------------------------

inline std::string encode_gray16_png(int resolution, const std::vector<double>& values) {
    return encode_depth_png(DepthImage{resolution, values});
}

} // namespace progtex

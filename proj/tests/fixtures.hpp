#pragma once

// Procedural OBJ fixtures shared by the unit and acceptance tests.

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "progtex/geometry.hpp"
#include "progtex/image_io.hpp"

namespace fixtures {

using progtex::Vec2;
using progtex::Vec3;

struct ObjBuilder {
    std::vector<Vec3> positions;
    std::vector<Vec2> uvs;
    std::vector<std::array<int, 6>> faces; // v0 vt0 v1 vt1 v2 vt2, zero-based

    int vertex(const Vec3& p) {
        for (std::size_t i = 0; i < positions.size(); ++i) {
            if (positions[i] == p) return static_cast<int>(i);
        }
        positions.push_back(p);
        return static_cast<int>(positions.size()) - 1;
    }

    int uv(const Vec2& t) {
        uvs.push_back(t);
        return static_cast<int>(uvs.size()) - 1;
    }

    void triangle(const std::array<Vec3, 3>& p, const std::array<Vec2, 3>& t) {
        faces.push_back({vertex(p[0]), uv(t[0]), vertex(p[1]), uv(t[1]), vertex(p[2]), uv(t[2])});
    }

    // Quad a,b,c,d counter-clockwise seen from outside, mapped onto the UV
    // rectangle [u0,u1]x[v0,v1].
    void quad(const std::array<Vec3, 4>& p, double u0, double v0, double u1, double v1) {
        const std::array<Vec2, 4> t{Vec2(u0, v0), Vec2(u1, v0), Vec2(u1, v1), Vec2(u0, v1)};
        triangle({p[0], p[1], p[2]}, {t[0], t[1], t[2]});
        triangle({p[0], p[2], p[3]}, {t[0], t[2], t[3]});
    }

    std::string str() const {
        std::ostringstream out;
        out.precision(17);
        for (const auto& p : positions) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
        for (const auto& t : uvs) out << "vt " << t.x() << ' ' << t.y() << '\n';
        for (const auto& f : faces) {
            out << "f " << f[0] + 1 << '/' << f[1] + 1 << ' ' << f[2] + 1 << '/' << f[3] + 1 << ' ' << f[4] + 1 << '/'
                << f[5] + 1 << '\n';
        }
        return out.str();
    }
};

// Outward axis, then a (u, v) tangent pair with u x v = axis.
inline const std::array<std::array<Vec3, 3>, 6>& box_frames() {
    static const std::array<std::array<Vec3, 3>, 6> frames{{
        {Vec3(1, 0, 0), Vec3(0, 0, -1), Vec3(0, 1, 0)},
        {Vec3(-1, 0, 0), Vec3(0, 0, 1), Vec3(0, 1, 0)},
        {Vec3(0, 1, 0), Vec3(1, 0, 0), Vec3(0, 0, -1)},
        {Vec3(0, -1, 0), Vec3(1, 0, 0), Vec3(0, 0, 1)},
        {Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0, 1, 0)},
        {Vec3(0, 0, -1), Vec3(-1, 0, 0), Vec3(0, 1, 0)},
    }};
    return frames;
}

// Axis-aligned box; face k of the six goes to UV grid cell first_cell + k of a
// grid x grid layout.
inline void add_box(ObjBuilder& obj, const Vec3& center, const Vec3& half, int grid, int first_cell) {
    const double cell = 1.0 / grid;
    for (int k = 0; k < 6; ++k) {
        const auto& [n, u, v] = box_frames()[k];
        const Vec3 c = center + n.cwiseProduct(half);
        const Vec3 hu = u.cwiseProduct(half);
        const Vec3 hv = v.cwiseProduct(half);
        const int id = first_cell + k;
        const double u0 = (id % grid) * cell;
        const double v0 = (id / grid) * cell;
        obj.quad({c - hu - hv, c + hu - hv, c + hu + hv, c - hu + hv}, u0, v0, u0 + cell, v0 + cell);
    }
}

// Unit cube centred at the origin, 12 triangles; UVs use 6 of 16 cells of a
// 4x4 grid so UV coverage is exactly 6/16 at resolutions divisible by 4.
inline std::string cube_obj() {
    ObjBuilder obj;
    add_box(obj, Vec3::Zero(), Vec3::Constant(0.5), 4, 0);
    return obj.str();
}
inline constexpr double kCubeUvCoverage = 6.0 / 16.0;

inline std::string box_obj(const Vec3& lo, const Vec3& hi) {
    ObjBuilder obj;
    add_box(obj, (lo + hi) / 2, (hi - lo) / 2, 4, 0);
    return obj.str();
}

// A small box in front (+Z) of a large one: the large box's front face is
// partly hidden from the front view.
inline std::string two_box_obj() {
    ObjBuilder obj;
    add_box(obj, Vec3(0, 0, -0.2), Vec3(0.5, 0.5, 0.3), 4, 0);
    add_box(obj, Vec3(0, 0, 0.3), Vec3(0.15, 0.15, 0.15), 4, 6);
    return obj.str();
}
inline constexpr int kTwoBoxOccluderFirstFace = 12;

// Icosahedron subdivided twice onto a sphere of radius 0.5 (320 faces), one
// UV triangle per cell of an 18x18 grid.
inline std::string icosphere_obj(int subdivisions = 2) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<std::array<int, 3>> f{{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
                                      {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                      {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
                                      {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoints;
        const auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            const auto it = midpoints.find(key);
            if (it != midpoints.end()) return it->second;
            v.push_back(((v[a] + v[b]) / 2).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoints.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        for (const auto& [a, b, c] : f) {
            const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
            next.push_back({a, ab, ca});
            next.push_back({b, bc, ab});
            next.push_back({c, ca, bc});
            next.push_back({ab, bc, ca});
        }
        f = std::move(next);
    }
    int grid = 1;
    while (grid * grid < static_cast<int>(f.size())) ++grid;
    const double cell = 1.0 / grid;
    const double margin = 0.1 * cell;
    std::ostringstream out;
    out.precision(17);
    for (const auto& p : v) out << "v " << 0.5 * p.x() << ' ' << 0.5 * p.y() << ' ' << 0.5 * p.z() << '\n';
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double u0 = (i % grid) * cell + margin, v0 = (i / grid) * cell + margin;
        const double u1 = u0 + cell - 2 * margin, v1 = v0 + cell - 2 * margin;
        out << "vt " << u0 << ' ' << v0 << "\nvt " << u1 << ' ' << v0 << "\nvt " << u0 << ' ' << v1 << '\n';
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto [a, b, c] = f[i];
        // Keep winding outward.
        if ((v[b] - v[a]).cross(v[c] - v[a]).dot(v[a] + v[b] + v[c]) < 0) std::swap(b, c);
        const std::size_t t0 = 3 * i + 1;
        out << "f " << a + 1 << '/' << t0 << ' ' << b + 1 << '/' << t0 + 1 << ' ' << c + 1 << '/' << t0 + 2 << '\n';
    }
    return out.str();
}

inline std::string quad_face_obj() {
    return "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
           "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
           "f 1/1 2/2 3/3 4/4\n";
}

inline std::string missing_uv_obj() {
    return "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
}

// One triangle covering the lower-left half of the UV square.
inline std::string half_square_triangle_obj() {
    return "v -0.5 -0.5 0\nv 0.5 -0.5 0\nv -0.5 0.5 0\n"
           "vt 0 0\nvt 1 0\nvt 0 1\n"
           "f 1/1 2/2 3/3\n";
}

inline progtex::Mesh parse(const std::string& text, const std::string& name = "fixture") {
    std::istringstream in(text);
    return progtex::parse_obj(in, name);
}

inline progtex::Mesh cube() { return progtex::normalize_mesh(parse(cube_obj(), "cube")); }
inline progtex::Mesh icosphere() { return progtex::normalize_mesh(parse(icosphere_obj(), "icosphere")); }
inline progtex::Mesh two_box() { return progtex::normalize_mesh(parse(two_box_obj(), "two_box")); }

// Writes a fixture to a fresh file under the system temp directory.
inline std::filesystem::path write_temp(const std::string& name, const std::string& text) {
    const auto dir = std::filesystem::temp_directory_path() / "progtex_tests";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    progtex::write_file(path, text);
    return path;
}

} // namespace fixtures

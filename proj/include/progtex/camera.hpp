#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <vector>

#include "progtex/error.hpp"
#include "progtex/geometry.hpp"

namespace progtex {

/// Spherical viewpoint: azimuth theta about +Y measured from +Z, elevation phi
/// above the XZ-plane (both degrees), distance r from the origin.
struct Viewpoint {
    double theta = 0.0;
    double phi = 0.0;
    double r = 1.0;

    /// Wraps theta into [0, 360) and validates the rest.
    static Viewpoint make(double theta, double phi, double r) {
        double wrapped = std::fmod(theta, 360.0);
        if (wrapped < 0.0) wrapped += 360.0;
        if (wrapped >= 360.0) wrapped = 0.0;
        Viewpoint v{wrapped, phi, r};
        v.validate();
        return v;
    }

    void validate() const {
        if (!(r > 0.0) || !std::isfinite(r)) fail(ErrorCode::InvalidArgument, "viewpoint distance must be positive");
        if (!(phi >= -90.0 && phi <= 90.0)) fail(ErrorCode::InvalidArgument, "elevation must lie in [-90, 90]");
        if (!(theta >= 0.0 && theta < 360.0)) fail(ErrorCode::InvalidArgument, "azimuth must lie in [0, 360)");
    }

    friend bool operator==(const Viewpoint&, const Viewpoint&) = default;
};

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

inline Vec3 eye_position(const Viewpoint& v) {
    const double theta = deg_to_rad(v.theta);
    const double phi = deg_to_rad(v.phi);
    return {v.r * std::cos(phi) * std::sin(theta), v.r * std::sin(phi), v.r * std::cos(phi) * std::cos(theta)};
}

struct DepthRange {
    double near = 0.1;
    double far = 4.0;
};

/// Result of projecting a world point: continuous pixel coordinates (pixel
/// (i, j) spans [i, i+1) x [j, j+1), row 0 at the top) and distance along the
/// viewing axis.
struct ProjectedPoint {
    double x = 0.0;
    double y = 0.0;
    double view_depth = 0.0;
};

/// Pinhole camera looking at the origin.
struct Camera {
    Vec3 eye = Vec3::Zero();
    Eigen::Matrix4d view_transform = Eigen::Matrix4d::Identity();
    Eigen::Matrix4d projection = Eigen::Matrix4d::Identity();
    int image_resolution = 0;
    double fov_deg = 50.0;
    DepthRange depth_range;

    ProjectedPoint project(const Vec3& world) const {
        const Eigen::Vector4d clip = projection * (view_transform * world.homogeneous());
        const double w = clip.w();
        return {(clip.x() / w + 1.0) * 0.5 * image_resolution, (1.0 - clip.y() / w) * 0.5 * image_resolution, w};
    }

    /// Linear depth mapped to [0, 1] over [near, far].
    double normalized_depth(double view_depth) const {
        return (view_depth - depth_range.near) / (depth_range.far - depth_range.near);
    }
};

inline Eigen::Matrix4d look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 side = forward.cross(up).normalized();
    const Vec3 true_up = side.cross(forward);
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<1, 3>(0, 0) = side.transpose();
    m.block<1, 3>(1, 0) = true_up.transpose();
    m.block<1, 3>(2, 0) = -forward.transpose();
    m(0, 3) = -side.dot(eye);
    m(1, 3) = -true_up.dot(eye);
    m(2, 3) = forward.dot(eye);
    return m;
}

inline Eigen::Matrix4d perspective(double fov_deg, double aspect, const DepthRange& range) {
    const double f = 1.0 / std::tan(deg_to_rad(fov_deg) / 2.0);
    Eigen::Matrix4d p = Eigen::Matrix4d::Zero();
    p(0, 0) = f / aspect;
    p(1, 1) = f;
    p(2, 2) = (range.far + range.near) / (range.near - range.far);
    p(2, 3) = 2.0 * range.far * range.near / (range.near - range.far);
    p(3, 2) = -1.0;
    return p;
}

inline Camera viewpoint_to_camera(const Viewpoint& v, int resolution, double fov_deg = 50.0, DepthRange range = {}) {
    v.validate();
    if (resolution <= 0) fail(ErrorCode::InvalidArgument, "image resolution must be positive");
    if (!(fov_deg > 10.0 && fov_deg < 120.0)) fail(ErrorCode::InvalidArgument, "fov must lie in (10, 120) degrees");
    Camera cam;
    cam.eye = eye_position(v);
    // At the poles the view direction is parallel to +Y, so switch the up vector.
    const bool at_pole = std::abs(std::cos(deg_to_rad(v.phi))) < 1e-9;
    const Vec3 up = at_pole ? Vec3::UnitZ() : Vec3::UnitY();
    cam.view_transform = look_at(cam.eye, Vec3::Zero(), up);
    cam.projection = perspective(fov_deg, 1.0, range);
    cam.image_resolution = resolution;
    cam.fov_deg = fov_deg;
    cam.depth_range = range;
    return cam;
}

/// Front, back, left, right, top, bottom.
inline std::vector<Viewpoint> preset_generation_views(double r) {
    return {Viewpoint::make(0, 0, r),  Viewpoint::make(180, 0, r), Viewpoint::make(90, 0, r),
            Viewpoint::make(270, 0, r), Viewpoint::make(0, 90, r),  Viewpoint::make(0, -90, r)};
}

/// 3 elevation rings x 12 azimuths on the upper hemisphere, ring-major.
inline std::vector<Viewpoint> candidate_refinement_views(double r) {
    std::vector<Viewpoint> views;
    views.reserve(36);
    for (double phi : {10.0, 40.0, 70.0}) {
        for (int k = 0; k < 12; ++k) views.push_back(Viewpoint::make(30.0 * k, phi, r));
    }
    return views;
}

} // namespace progtex

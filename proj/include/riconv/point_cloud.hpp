#pragma once

#include <optional>
#include <vector>

#include "riconv/core.hpp"

namespace riconv {

using IndexSet = std::vector<std::size_t>;

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // empty, or one unit normal per point
    int label = -1;             // optional class id, -1 when unset

    std::size_t size() const { return points.size(); }
    bool has_normals() const { return !normals.empty(); }

    void validate() const {
        if (points.empty()) throw std::invalid_argument("PointCloud: empty point set");
        if (!normals.empty()) {
            if (normals.size() != points.size())
                throw std::invalid_argument("PointCloud: normals/points length mismatch");
            for (const Vec3& n : normals)
                if (std::abs(norm(n) - 1.0) > 1e-6)
                    throw std::invalid_argument("PointCloud: non-unit normal");
        }
    }
};

struct RigidTransform {
    Mat3 rotation;
    Vec3 translation;

    bool is_valid(double tol = 1e-9) const {
        return orthogonality_defect(rotation) < tol && std::abs(rotation.det() - 1.0) < tol;
    }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    RigidTransform inverse() const {
        Mat3 rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }
};

inline PointCloud apply_rigid_transform(const PointCloud& cloud, const RigidTransform& t) {
    if (!t.is_valid()) throw std::invalid_argument("apply_rigid_transform: transform not rigid");
    PointCloud out;
    out.label = cloud.label;
    out.points.reserve(cloud.size());
    for (const Vec3& p : cloud.points) out.points.push_back(t.apply(p));
    out.normals.reserve(cloud.normals.size());
    for (const Vec3& n : cloud.normals) out.normals.push_back(t.rotation * n);
    return out;
}

enum class RotationMode { none, z, so3 };

inline const char* to_string(RotationMode m) {
    switch (m) {
        case RotationMode::none: return "none";
        case RotationMode::z: return "z";
        case RotationMode::so3: return "so3";
    }
    return "?";
}

inline RotationMode rotation_mode_from_string(const std::string& s) {
    if (s == "none") return RotationMode::none;
    if (s == "z") return RotationMode::z;
    if (s == "so3") return RotationMode::so3;
    throw std::invalid_argument("unknown rotation mode: " + s);
}

inline Mat3 rotation_about_z(double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    Mat3 r;
    r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
    return r;
}

inline Mat3 rotation_from_quaternion(double w, double x, double y, double z) {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n; x /= n; y /= n; z /= n;
    Mat3 r;
    r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
           2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
           2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
    return r;
}

/// Axis-angle rotation (axis need not be unit length).
inline Mat3 rotation_axis_angle(const Vec3& axis, double angle) {
    Vec3 u = normalized(axis);
    double half = 0.5 * angle;
    double s = std::sin(half);
    return rotation_from_quaternion(std::cos(half), u.x * s, u.y * s, u.z * s);
}

/// mode z: rotation about the z axis, angle uniform in [0, 2pi).
/// mode so3: uniform over SO(3) via Shoemake's quaternion construction.
/// mode none: identity. Translation is always zero.
inline RigidTransform random_rotation(RotationMode mode, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x7207));
    RigidTransform t;
    t.translation = {0, 0, 0};
    switch (mode) {
        case RotationMode::none:
            t.rotation = Mat3::identity();
            break;
        case RotationMode::z:
            t.rotation = rotation_about_z(rng.uniform(0.0, 2.0 * kPi));
            break;
        case RotationMode::so3: {
            double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
            double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
            t.rotation = rotation_from_quaternion(a * std::sin(2 * kPi * u2), a * std::cos(2 * kPi * u2),
                                                  b * std::sin(2 * kPi * u3), b * std::cos(2 * kPi * u3));
            break;
        }
    }
    return t;
}

/// Independent N(0, sigma^2) offset per coordinate; normals are left alone.
inline PointCloud add_gaussian_noise(const PointCloud& cloud, double sigma, uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
    PointCloud out = cloud;
    if (sigma == 0.0) return out;
    Rng rng(derive_seed(seed, 0x6e01));
    for (Vec3& p : out.points) p += rng.gaussian_vec3() * sigma;
    return out;
}

/// Largest pairwise extent, computed exactly (O(N^2)); desk-scale clouds only.
inline double cloud_diameter(const PointCloud& cloud) {
    double best = 0.0;
    for (size_t i = 0; i < cloud.size(); ++i)
        for (size_t j = i + 1; j < cloud.size(); ++j)
            best = std::max(best, norm_sq(cloud.points[i] - cloud.points[j]));
    return std::sqrt(best);
}

/// Centroid accumulated in sorted per-axis order so that an input
/// permutation cannot change the result bit-for-bit.
inline Vec3 permutation_invariant_centroid(const std::vector<Vec3>& pts) {
    Vec3 c;
    std::vector<double> axis(pts.size());
    for (int a = 0; a < 3; ++a) {
        for (size_t i = 0; i < pts.size(); ++i) axis[i] = pts[i][a];
        std::sort(axis.begin(), axis.end());
        double s = 0.0;
        for (double v : axis) s += v;
        c[a] = s / double(pts.size());
    }
    return c;
}

/// Center on the centroid and scale so the bounding diameter is 1.
inline PointCloud unit_diameter_normalize(const PointCloud& cloud) {
    PointCloud out = cloud;
    Vec3 c = permutation_invariant_centroid(cloud.points);
    double d = cloud_diameter(cloud);
    double s = (d > 0.0) ? 1.0 / d : 1.0;
    for (Vec3& p : out.points) p = (p - c) * s;
    return out;
}

inline double mean_nn_distance(const PointCloud& cloud) {
    double total = 0.0;
    for (size_t i = 0; i < cloud.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < cloud.size(); ++j) {
            if (j == i) continue;
            best = std::min(best, norm_sq(cloud.points[i] - cloud.points[j]));
        }
        total += std::sqrt(best);
    }
    return total / double(cloud.size());
}

}  // namespace riconv

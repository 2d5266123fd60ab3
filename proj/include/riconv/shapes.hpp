#pragma once

#include <string>

#include "riconv/point_cloud.hpp"

namespace riconv {

enum class ShapeKind { sphere = 0, cube, cylinder, cone, torus, plane };

constexpr int kShapeClassCount = 6;

inline const char* to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::sphere: return "sphere";
        case ShapeKind::cube: return "cube";
        case ShapeKind::cylinder: return "cylinder";
        case ShapeKind::cone: return "cone";
        case ShapeKind::torus: return "torus";
        case ShapeKind::plane: return "plane";
    }
    return "?";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
    for (int i = 0; i < kShapeClassCount; ++i)
        if (s == to_string(ShapeKind(i))) return ShapeKind(i);
    throw std::invalid_argument("unknown shape kind: " + s);
}

/// Surface sampler with analytic unit normals. Every shape is centered at
/// the origin and sized so its exact bounding diameter is 1. `aspect`
/// perturbs the shape's proportions (where it has any) while preserving
/// the unit diameter; 1.0 is the canonical shape.
inline PointCloud synth_shape_ex(ShapeKind kind, size_t n, uint64_t seed, double aspect) {
    if (n < 8) throw std::invalid_argument("synth_shape: need n >= 8");
    if (!(aspect > 0.05 && aspect < 20.0)) throw std::invalid_argument("synth_shape: bad aspect");

    Rng rng(derive_seed(seed, 0x5a9e + uint64_t(kind)));
    PointCloud cloud;
    cloud.label = int(kind);
    cloud.points.reserve(n);
    cloud.normals.reserve(n);

    auto push = [&](const Vec3& p, const Vec3& nrm) {
        cloud.points.push_back(p);
        cloud.normals.push_back(normalized(nrm));
    };

    switch (kind) {
        case ShapeKind::sphere: {
            for (size_t i = 0; i < n; ++i) {
                Vec3 g = rng.gaussian_vec3();
                while (norm_sq(g) < 1e-12) g = rng.gaussian_vec3();
                Vec3 u = normalized(g);
                push(u * 0.5, u);
            }
            break;
        }
        case ShapeKind::cube: {
            const double h = 0.5 / std::sqrt(3.0);  // space diagonal = 1
            for (size_t i = 0; i < n; ++i) {
                int face = int(rng.uniform_index(6));
                int axis = face / 2;
                double sign = (face % 2 == 0) ? 1.0 : -1.0;
                double u = rng.uniform(-h, h), v = rng.uniform(-h, h);
                Vec3 p, nrm;
                p[axis] = sign * h;
                p[(axis + 1) % 3] = u;
                p[(axis + 2) % 3] = v;
                nrm[axis] = sign;
                push(p, nrm);
            }
            break;
        }
        case ShapeKind::cylinder: {
            double r = 0.3 * aspect;
            r = std::min(r, 0.45);
            double hz = 0.5 * std::sqrt(1.0 - 4.0 * r * r);  // (2r)^2 + (2hz)^2 = 1
            double lateral = 2.0 * kPi * r * (2.0 * hz);
            double caps = 2.0 * kPi * r * r;
            for (size_t i = 0; i < n; ++i) {
                if (rng.uniform() * (lateral + caps) < lateral) {
                    double th = rng.uniform(0.0, 2.0 * kPi);
                    double z = rng.uniform(-hz, hz);
                    push({r * std::cos(th), r * std::sin(th), z}, {std::cos(th), std::sin(th), 0.0});
                } else {
                    double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
                    double rr = r * std::sqrt(rng.uniform());
                    double th = rng.uniform(0.0, 2.0 * kPi);
                    push({rr * std::cos(th), rr * std::sin(th), sign * hz}, {0.0, 0.0, sign});
                }
            }
            break;
        }
        case ShapeKind::cone: {
            // slant length fixed at 1 (the apex-to-rim diameter), so
            // r^2 + h^2 = 1 with 2r <= 1.
            double r = std::min(aspect / std::sqrt(5.0), 0.5);
            double h = std::sqrt(1.0 - r * r);
            double lateral = kPi * r;      // pi * r * slant, slant = 1
            double base = kPi * r * r;
            for (size_t i = 0; i < n; ++i) {
                if (rng.uniform() * (lateral + base) < lateral) {
                    double t = std::sqrt(rng.uniform());  // area density grows with distance from apex
                    double th = rng.uniform(0.0, 2.0 * kPi);
                    Vec3 p{t * r * std::cos(th), t * r * std::sin(th), h / 2 - t * h};
                    push(p, {h * std::cos(th), h * std::sin(th), r});
                } else {
                    double rr = r * std::sqrt(rng.uniform());
                    double th = rng.uniform(0.0, 2.0 * kPi);
                    push({rr * std::cos(th), rr * std::sin(th), -h / 2}, {0.0, 0.0, -1.0});
                }
            }
            break;
        }
        case ShapeKind::torus: {
            double rminor = std::clamp(0.15 * aspect, 0.05, 0.22);
            double rmajor = 0.5 - rminor;  // outer diameter 2(R+r) = 1
            for (size_t i = 0; i < n; ++i) {
                double th = rng.uniform(0.0, 2.0 * kPi);
                double ph;
                do {  // rejection on the surface-area density (R + r cos phi)
                    ph = rng.uniform(0.0, 2.0 * kPi);
                } while (rng.uniform() * (rmajor + rminor) > rmajor + rminor * std::cos(ph));
                double ring = rmajor + rminor * std::cos(ph);
                push({ring * std::cos(th), ring * std::sin(th), rminor * std::sin(ph)},
                     {std::cos(ph) * std::cos(th), std::cos(ph) * std::sin(th), std::sin(ph)});
            }
            break;
        }
        case ShapeKind::plane: {
            double psi = std::atan2(0.6, 0.8) * aspect;
            psi = std::clamp(psi, 0.2, kPi / 2 - 0.2);
            double a = std::cos(psi), b = std::sin(psi);  // diagonal = 1
            for (size_t i = 0; i < n; ++i)
                push({rng.uniform(-a / 2, a / 2), rng.uniform(-b / 2, b / 2), 0.0}, {0.0, 0.0, 1.0});
            break;
        }
    }
    return cloud;
}

inline PointCloud synth_shape(ShapeKind kind, size_t n, uint64_t seed) {
    return synth_shape_ex(kind, n, seed, 1.0);
}

inline PointCloud synth_shape(const std::string& kind, size_t n, uint64_t seed) {
    return synth_shape(shape_kind_from_string(kind), n, seed);
}

}  // namespace riconv

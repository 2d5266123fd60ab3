#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "riconv/lra.hpp"
#include "riconv/shapes.hpp"

using namespace riconv;

namespace {

std::vector<Vec3> patch_around(Rng& rng, const Vec3& p, size_t n, double radius) {
    std::vector<Vec3> out(n);
    for (Vec3& x : out)
        x = p + Vec3{rng.uniform(-radius, radius), rng.uniform(-radius, radius),
                     rng.uniform(-radius, radius)};
    return out;
}

SymMat3 random_sym(Rng& rng, double scale = 1.0) {
    SymMat3 s;
    s.xx = rng.uniform(-scale, scale);
    s.yy = rng.uniform(-scale, scale);
    s.zz = rng.uniform(-scale, scale);
    s.xy = rng.uniform(-scale, scale);
    s.xz = rng.uniform(-scale, scale);
    s.yz = rng.uniform(-scale, scale);
    return s;
}

}  // namespace

TEST_CASE("support weights follow the distance rule") {
    Vec3 p{0, 0, 0};

    SECTION("two neighbors at distance 1 and 3") {
        std::vector<Vec3> nb{{1, 0, 0}, {0, 3, 0}};
        SupportWeights w = support_weights(p, nb);
        REQUIRE_FALSE(w.degenerate);
        REQUIRE(w.w[0] == Catch::Approx(1.0).margin(1e-15));
        REQUIRE(w.w[1] == 0.0);
    }

    SECTION("equidistant neighbors fall back to uniform") {
        std::vector<Vec3> nb{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
        SupportWeights w = support_weights(p, nb);
        REQUIRE(w.degenerate);
        for (double wi : w.w) REQUIRE(wi == Catch::Approx(1.0 / 3.0).margin(1e-15));
    }

    SECTION("distances 1,2,4 give 3/5, 2/5, 0") {
        std::vector<Vec3> nb{{0, 0, 1}, {2, 0, 0}, {0, 4, 0}};
        SupportWeights w = support_weights(p, nb);
        // oracle: m = 4, numerators (3, 2, 0), denominator 5
        REQUIRE(w.w[0] == Catch::Approx(3.0 / 5.0).margin(1e-15));
        REQUIRE(w.w[1] == Catch::Approx(2.0 / 5.0).margin(1e-15));
        REQUIRE(w.w[2] == 0.0);
    }

    SECTION("the farthest neighbor always gets zero weight") {
        Rng rng(4);
        for (int trial = 0; trial < 200; ++trial) {
            auto nb = patch_around(rng, p, 8, 0.5);
            SupportWeights w = support_weights(p, nb);
            if (w.degenerate) continue;
            size_t far = 0;
            for (size_t i = 1; i < nb.size(); ++i)
                if (norm(nb[i] - p) > norm(nb[far] - p)) far = i;
            REQUIRE(w.w[far] == 0.0);
            double sum = 0;
            for (double wi : w.w) sum += wi;
            REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("weighted covariance structure") {
    Vec3 p{0.5, -0.25, 1};

    SECTION("a single direction gives rank one") {
        std::vector<Vec3> nb{p + Vec3{0.2, 0, 0}, p - Vec3{0.4, 0, 0}};
        SupportWeights w = support_weights(p, nb);
        SymMat3 s = weighted_covariance(p, nb, w);
        REQUIRE(s.xx > 0);
        REQUIRE(s.yy == 0.0);
        REQUIRE(s.zz == 0.0);
        REQUIRE(s.xy == 0.0);
    }

    SECTION("coplanar neighbors zero the normal row") {
        Rng rng(10);
        std::vector<Vec3> nb;
        for (int i = 0; i < 10; ++i) nb.push_back(p + Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), 0});
        SupportWeights w = support_weights(p, nb);
        SymMat3 s = weighted_covariance(p, nb, w);
        REQUIRE(s.zz == 0.0);
        REQUIRE(s.xz == 0.0);
        REQUIRE(s.yz == 0.0);
    }

    SECTION("matches an independent accumulation") {
        Rng rng(11);
        auto nb = patch_around(rng, p, 50, 0.7);
        SupportWeights w = support_weights(p, nb);
        SymMat3 s = weighted_covariance(p, nb, w);
        // oracle: accumulate the full 3x3 in reverse order
        double acc[3][3] = {};
        for (size_t i = nb.size(); i-- > 0;) {
            Vec3 d = nb[i] - p;
            double v[3] = {d.x, d.y, d.z};
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) acc[r][c] += w.w[i] * v[r] * v[c];
        }
        Mat3 full = s.full();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                REQUIRE(full(r, c) == Catch::Approx(acc[r][c]).margin(1e-12));
    }
}

TEST_CASE("jacobi eigen solver") {
    SECTION("diagonal matrix") {
        SymMat3 s;
        s.xx = 3; s.yy = 2; s.zz = 1;
        Axis a = smallest_eigenvector(s);
        REQUIRE(a.smallest_eigenvalue == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(std::abs(a.direction.z) == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(a.eigengap == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("identity flags ambiguity through a zero eigengap") {
        SymMat3 s;
        s.xx = s.yy = s.zz = 1;
        Axis a = smallest_eigenvector(s);
        REQUIRE(norm(a.direction) == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(a.eigengap < 1e-12);
        REQUIRE(a.is_degenerate());
    }

    SECTION("eigenvalues match the characteristic polynomial") {
        Rng rng(12);
        for (int trial = 0; trial < 2000; ++trial) {
            SymMat3 s = random_sym(rng);
            EigenDecomposition e = jacobi_eigen(s);
            auto want = oracle::sym3_eigenvalues(s.xx, s.yy, s.zz, s.xy, s.xz, s.yz);
            for (int i = 0; i < 3; ++i)
                REQUIRE(e.values[size_t(i)] == Catch::Approx(want[size_t(i)]).margin(1e-9));
        }
    }

    SECTION("residual bound holds") {
        Rng rng(13);
        for (int trial = 0; trial < 2000; ++trial) {
            SymMat3 s = random_sym(rng, trial % 2 ? 1.0 : 1e4);
            EigenDecomposition e = jacobi_eigen(s);
            Mat3 m = s.full();
            for (int i = 0; i < 3; ++i) {
                Vec3 r = m * e.vectors[size_t(i)] - e.vectors[size_t(i)] * e.values[size_t(i)];
                REQUIRE(norm(r) < 1e-9 * (1.0 + s.frobenius()));
            }
        }
    }

    SECTION("non-finite input is rejected") {
        SymMat3 s;
        s.xy = std::numeric_limits<double>::quiet_NaN();
        REQUIRE_THROWS_AS(jacobi_eigen(s), std::invalid_argument);
    }
}

TEST_CASE("sign disambiguation") {
    Vec3 p{0, 0, 0};

    SECTION("mass above pushes the axis below") {
        Rng rng(14);
        std::vector<Vec3> nb;
        for (int i = 0; i < 30; ++i) {
            Vec3 u = oracle::random_unit(rng);
            u.z = std::abs(u.z) + 0.1;
            nb.push_back(normalized(u) * rng.uniform(0.5, 1.0));
        }
        SupportWeights w = support_weights(p, nb);
        Axis up;
        up.direction = {0, 0, 1};
        Axis out = disambiguate_sign(up, p, nb, w);
        REQUIRE(out.direction.z < 0);
    }

    SECTION("exact zero projection keeps the canonical orientation") {
        std::vector<Vec3> nb{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
        SupportWeights w = support_weights(p, nb);
        Axis up;
        up.direction = {0, 0, -1};
        Axis out = disambiguate_sign(up, p, nb, w);
        REQUIRE(out.direction.z == 1.0);
    }

    SECTION("reflecting the neighborhood through p flips the axis") {
        Rng rng(15);
        for (int trial = 0; trial < 100; ++trial) {
            auto nb = patch_around(rng, p, 12, 0.6);
            Axis a = lra_from_neighbors(p, nb);
            std::vector<Vec3> mirrored;
            for (const Vec3& x : nb) mirrored.push_back(p * 2.0 - x);
            Axis b = lra_from_neighbors(p, mirrored);
            REQUIRE(norm(a.direction + b.direction) < 1e-9);
        }
    }
}

TEST_CASE("compute_lra on canonical clouds") {
    SECTION("plane interior points align with the plane normal") {
        PointCloud plane = synth_shape(ShapeKind::plane, 400, 3);
        auto axes = compute_lra(plane, {.support_k = 16});
        for (size_t i = 0; i < plane.size(); ++i) {
            double angle = safe_acos(std::abs(axes[i].direction.z));
            REQUIRE(angle < 1e-6);
        }
    }

    SECTION("sphere axes point radially for most points") {
        PointCloud sphere = synth_shape(ShapeKind::sphere, 2048, 3);
        auto axes = compute_lra(sphere, {.support_k = 16});
        size_t ok = 0;
        for (size_t i = 0; i < sphere.size(); ++i) {
            Vec3 radial = normalized(sphere.points[i]);
            if (deg_from_rad(safe_acos(std::abs(dot(axes[i].direction, radial)))) < 5.0) ++ok;
        }
        REQUIRE(double(ok) / double(sphere.size()) >= 0.95);
    }

    SECTION("normals flag passes the stored normals through") {
        PointCloud sphere = synth_shape(ShapeKind::sphere, 64, 3);
        auto axes = compute_lra(sphere, {.support_k = 16, .use_normals = true});
        for (size_t i = 0; i < sphere.size(); ++i)
            REQUIRE(axes[i].direction == sphere.normals[i]);
    }
}

TEST_CASE("pm axis") {
    Vec3 p{0, 0, 0};

    SECTION("single neighbor") {
        std::vector<Vec3> nb{{2, 0, 0}};
        Axis a = compute_pm_axis(p, nb);
        REQUIRE(norm(a.direction - Vec3{1, 0, 0}) < 1e-15);
    }

    SECTION("centered neighborhood is degenerate") {
        std::vector<Vec3> nb{{1, 0, 0}, {-1, 0, 0}};
        REQUIRE_THROWS_AS(compute_pm_axis(p, nb), std::runtime_error);
    }

    SECTION("matches the direct centroid") {
        Rng rng(16);
        auto nb = patch_around(rng, Vec3{1, 2, 3}, 20, 0.5);
        Axis a = compute_pm_axis(Vec3{1, 2, 3}, nb);
        Vec3 m{0, 0, 0};
        for (const Vec3& x : nb) m += x;
        m = m / 20.0;
        REQUIRE(norm(a.direction - normalized(m - Vec3{1, 2, 3})) < 1e-12);
    }
}

TEST_CASE("local reference frame") {
    Vec3 p{0, 0, 0};
    Rng rng(18);

    auto anisotropic_patch = [&](size_t n) {
        std::vector<Vec3> nb;
        for (size_t i = 0; i < n; ++i)
            nb.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-0.3, 0.3), rng.uniform(-0.02, 0.02)});
        return nb;
    };

    SECTION("planar patch: z along the normal, x along the elongation") {
        auto nb = anisotropic_patch(40);
        Frame f = compute_lrf(p, nb);
        REQUIRE(std::abs(f.z.z) > 0.99);
        REQUIRE(std::abs(f.x.x) > 0.99);
        REQUIRE(f.matrix().det() == Catch::Approx(1.0).margin(1e-9));
    }

    SECTION("frames are right handed and orthonormal") {
        for (int trial = 0; trial < 100; ++trial) {
            auto nb = anisotropic_patch(20);
            Frame f = compute_lrf(p, nb);
            REQUIRE(orthogonality_defect(f.matrix()) < 1e-9);
            REQUIRE(f.matrix().det() == Catch::Approx(1.0).margin(1e-9));
        }
    }

    SECTION("rotating the neighborhood rotates the frame") {
        for (int trial = 0; trial < 50; ++trial) {
            auto nb = anisotropic_patch(25);
            Frame f = compute_lrf(p, nb);
            RigidTransform t = random_rotation(RotationMode::so3, 500 + uint64_t(trial));
            std::vector<Vec3> rotated;
            for (const Vec3& x : nb) rotated.push_back(t.apply(x));
            Frame g = compute_lrf(t.apply(p), rotated);
            Mat3 expected = t.rotation * f.matrix();
            Mat3 got = g.matrix();
            for (int i = 0; i < 9; ++i)
                REQUIRE(got.m[size_t(i)] == Catch::Approx(expected.m[size_t(i)]).margin(1e-6));
        }
    }

    SECTION("collinear support is rejected") {
        std::vector<Vec3> nb{{1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {-1, 0, 0}};
        REQUIRE_THROWS_AS(compute_lrf(p, nb), std::runtime_error);
    }
}

TEST_CASE("axis and frame error metrics") {
    Axis za;
    za.direction = {0, 0, 1};
    Axis zb;
    zb.direction = {0, 0, -1};
    REQUIRE(axis_error(za, za) == 0.0);
    REQUIRE(axis_error(za, zb) == Catch::Approx(0.0).margin(1e-9));

    Frame f;
    REQUIRE(frame_error(f, f) == Catch::Approx(0.0).margin(1e-6));

    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        Vec3 axis = oracle::random_unit(rng);
        Mat3 r = rotation_axis_angle(axis, rad_from_deg(30.0));
        Frame g;
        g.x = r * f.x;
        g.y = r * f.y;
        g.z = r * f.z;
        REQUIRE(frame_error(g, f) == Catch::Approx(30.0).margin(1e-6));
    }
}

TEST_CASE("lra equivariance and invariance properties") {
    Rng rng(20);

    SECTION("rotation equivariance up to sign fold") {
        for (int trial = 0; trial < 100; ++trial) {
            Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            auto nb = patch_around(rng, p, 16, 0.4);
            Axis a = lra_from_neighbors(p, nb);
            if (a.is_degenerate(1e-9)) continue;
            RigidTransform t = random_rotation(RotationMode::so3, 900 + uint64_t(trial));
            t.translation = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
            std::vector<Vec3> moved;
            for (const Vec3& x : nb) moved.push_back(t.apply(x));
            Axis b = lra_from_neighbors(t.apply(p), moved);
            double angle = safe_acos(std::abs(dot(b.direction, t.rotation * a.direction)));
            REQUIRE(angle < 1e-6);
        }
    }

    SECTION("translation leaves the axis untouched") {
        Vec3 p{0.2, 0.1, -0.4};
        auto nb = patch_around(rng, p, 12, 0.5);
        Axis a = lra_from_neighbors(p, nb);
        Vec3 shift{10, -3, 2};
        std::vector<Vec3> moved;
        for (const Vec3& x : nb) moved.push_back(x + shift);
        Axis b = lra_from_neighbors(p + shift, moved);
        REQUIRE(norm(a.direction - b.direction) < 1e-12);
    }

    SECTION("scaling scales the covariance quadratically, direction fixed") {
        Vec3 p{0, 0, 0};
        auto nb = patch_around(rng, p, 14, 0.5);
        SupportWeights w = support_weights(p, nb);
        SymMat3 s1 = weighted_covariance(p, nb, w);
        double scale = 3.7;
        std::vector<Vec3> scaled;
        for (const Vec3& x : nb) scaled.push_back(x * scale);
        SupportWeights w2 = support_weights(p, scaled);
        SymMat3 s2 = weighted_covariance(p, scaled, w2);
        REQUIRE(s2.xx == Catch::Approx(s1.xx * scale * scale).epsilon(1e-12));
        REQUIRE(s2.yz == Catch::Approx(s1.yz * scale * scale).margin(1e-12));
        Axis a1 = smallest_eigenvector(s1);
        Axis a2 = smallest_eigenvector(s2);
        REQUIRE(std::abs(dot(a1.direction, a2.direction)) > 1.0 - 1e-9);
    }
}

#pragma once

#include <span>
#include <vector>

#include "riconv/sampling.hpp"

namespace riconv {

/// Symmetric 3x3 matrix stored as its six independent entries.
struct SymMat3 {
    // [ xx xy xz ]
    // [ xy yy yz ]
    // [ xz yz zz ]
    double xx = 0, yy = 0, zz = 0, xy = 0, xz = 0, yz = 0;

    Mat3 full() const {
        Mat3 m;
        m.m = {xx, xy, xz, xy, yy, yz, xz, yz, zz};
        return m;
    }

    double frobenius() const {
        return std::sqrt(xx * xx + yy * yy + zz * zz + 2 * (xy * xy + xz * xz + yz * yz));
    }

    bool finite() const {
        return std::isfinite(xx) && std::isfinite(yy) && std::isfinite(zz) &&
               std::isfinite(xy) && std::isfinite(xz) && std::isfinite(yz);
    }
};

/// A local reference axis: unit direction plus the spectral data needed to
/// judge how trustworthy it is. eigengap is lambda2 - lambda3 for
/// eigenvalues sorted descending; near zero means the direction is
/// ambiguous.
struct Axis {
    Vec3 direction{0, 0, 1};
    double smallest_eigenvalue = 0.0;
    double eigengap = 0.0;

    bool is_degenerate(double tol = 1e-9) const { return eigengap < tol; }
};

/// Right-handed orthonormal frame (columns x, y, z).
struct Frame {
    Vec3 x{1, 0, 0}, y{0, 1, 0}, z{0, 0, 1};

    Mat3 matrix() const { return Mat3::from_columns(x, y, z); }
};

struct SupportWeights {
    std::vector<double> w;
    bool degenerate = false;  // all-equidistant fallback was taken
};

/// Eq-style distance weights: w_i = (m - d_i) / sum_j (m - d_j) with
/// m the largest neighbor distance, so the farthest neighbor gets exactly
/// zero. If every neighbor is equidistant the denominator vanishes; we
/// fall back to uniform weights and flag the result.
inline SupportWeights support_weights(const Vec3& p, std::span<const Vec3> neighbors) {
    if (neighbors.size() < 2) throw std::invalid_argument("support_weights: need >= 2 neighbors");
    SupportWeights out;
    out.w.resize(neighbors.size());
    double m = 0.0;
    for (size_t i = 0; i < neighbors.size(); ++i) {
        out.w[i] = norm(neighbors[i] - p);
        m = std::max(m, out.w[i]);
    }
    if (m == 0.0) throw std::invalid_argument("support_weights: all neighbors coincide with p");
    double denom = 0.0;
    for (double d : out.w) denom += m - d;
    if (denom <= m * 1e-15) {
        double u = 1.0 / double(neighbors.size());
        for (double& wi : out.w) wi = u;
        out.degenerate = true;
        return out;
    }
    for (double& wi : out.w) wi = (m - wi) / denom;
    return out;
}

inline SymMat3 weighted_covariance(const Vec3& p, std::span<const Vec3> neighbors,
                                   const SupportWeights& w) {
    if (neighbors.size() != w.w.size())
        throw std::invalid_argument("weighted_covariance: weight/neighbor length mismatch");
    SymMat3 s;
    for (size_t i = 0; i < neighbors.size(); ++i) {
        Vec3 d = neighbors[i] - p;
        double wi = w.w[i];
        s.xx += wi * d.x * d.x;
        s.yy += wi * d.y * d.y;
        s.zz += wi * d.z * d.z;
        s.xy += wi * d.x * d.y;
        s.xz += wi * d.x * d.z;
        s.yz += wi * d.y * d.z;
    }
    return s;
}

struct EigenDecomposition {
    // eigenvalues descending; columns of vectors match
    std::array<double, 3> values{};
    std::array<Vec3, 3> vectors{};
};

/// Cyclic Jacobi on a symmetric 3x3. Sweeps the (0,1), (0,2), (1,2)
/// rotations until the off-diagonal norm falls below 1e-12 relative to the
/// matrix scale. Unconditionally stable and deterministic.
inline EigenDecomposition jacobi_eigen(const SymMat3& s) {
    if (!s.finite()) throw std::invalid_argument("jacobi_eigen: non-finite entries");

    double a[3][3] = {{s.xx, s.xy, s.xz}, {s.xy, s.yy, s.yz}, {s.xz, s.yz, s.zz}};
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    const double scale = std::max(1e-300, s.frobenius());
    const double tol = 1e-12 * std::max(1.0, scale);

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = std::sqrt(a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]);
        if (off <= tol || off <= scale * 1e-15) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double sn = t * c;

                double app = a[p][p], aqq = a[q][q], apq = a[p][q];
                a[p][p] = c * c * app - 2 * sn * c * apq + sn * sn * aqq;
                a[q][q] = sn * sn * app + 2 * sn * c * apq + c * c * aqq;
                a[p][q] = a[q][p] = 0.0;
                int r = 3 - p - q;
                double apr = a[p][r], aqr = a[q][r];
                a[p][r] = a[r][p] = c * apr - sn * aqr;
                a[q][r] = a[r][q] = sn * apr + c * aqr;
                for (int i = 0; i < 3; ++i) {
                    double vip = v[i][p], viq = v[i][q];
                    v[i][p] = c * vip - sn * viq;
                    v[i][q] = sn * vip + c * viq;
                }
            }
        }
    }

    int order[3] = {0, 1, 2};
    double d[3] = {a[0][0], a[1][1], a[2][2]};
    std::sort(order, order + 3, [&](int i, int j) { return d[i] > d[j]; });

    EigenDecomposition e;
    for (int k = 0; k < 3; ++k) {
        e.values[size_t(k)] = d[order[k]];
        e.vectors[size_t(k)] = {v[0][order[k]], v[1][order[k]], v[2][order[k]]};
    }
    return e;
}

/// Unit eigenvector of the smallest eigenvalue plus the eigengap between
/// the two smallest eigenvalues.
inline Axis smallest_eigenvector(const SymMat3& s) {
    EigenDecomposition e = jacobi_eigen(s);
    Axis axis;
    axis.direction = normalized(e.vectors[2]);
    axis.smallest_eigenvalue = e.values[2];
    axis.eigengap = e.values[1] - e.values[2];
    if (axis.eigengap < 0) axis.eigengap = 0;
    return axis;
}

/// Orient the direction so its first nonzero component is positive
/// (canonical representative of the sign-folded axis).
inline Vec3 canonical_sign(const Vec3& v) {
    for (int i = 0; i < 3; ++i) {
        if (v[i] > 0) return v;
        if (v[i] < 0) return -v;
    }
    return v;
}

/// Flip the axis so it points away from the weighted neighbor mass:
/// sum_i w_i <x_i - p, direction> <= 0 after disambiguation. An exactly
/// zero projection sum falls back to the first-nonzero-positive rule.
inline Axis disambiguate_sign(const Axis& a, const Vec3& p, std::span<const Vec3> neighbors,
                              const SupportWeights& w) {
    double proj = 0.0;
    for (size_t i = 0; i < neighbors.size(); ++i) proj += w.w[i] * dot(neighbors[i] - p, a.direction);
    Axis out = a;
    if (proj > 0)
        out.direction = -a.direction;
    else if (proj == 0.0)
        out.direction = canonical_sign(a.direction);
    return out;
}

/// Full LRA pipeline for one point with an explicit support set.
inline Axis lra_from_neighbors(const Vec3& p, std::span<const Vec3> neighbors) {
    SupportWeights w = support_weights(p, neighbors);
    SymMat3 cov = weighted_covariance(p, neighbors, w);
    return disambiguate_sign(smallest_eigenvector(cov), p, neighbors, w);
}

struct LraOptions {
    size_t support_k = 16;
    bool use_normals = false;  // Table-style "xyz + nor": stored normals become the axes
};

/// Per-point local reference axes for a whole cloud. The support set is
/// the support_k nearest neighbors excluding the point itself.
inline std::vector<Axis> compute_lra(const PointCloud& cloud, const LraOptions& opt = {}) {
    if (opt.use_normals) {
        if (!cloud.has_normals())
            throw std::invalid_argument("compute_lra: use_normals set but cloud has no normals");
        std::vector<Axis> axes(cloud.size());
        for (size_t i = 0; i < cloud.size(); ++i) {
            axes[i].direction = cloud.normals[i];
            axes[i].eigengap = std::numeric_limits<double>::infinity();
        }
        return axes;
    }
    if (opt.support_k < 3) throw std::invalid_argument("compute_lra: support_k must be >= 3");
    if (cloud.size() < opt.support_k + 1)
        throw std::invalid_argument("compute_lra: cloud smaller than support_k + 1");

    std::vector<Axis> axes(cloud.size());
    std::vector<Vec3> nbr;
    KnnScratch scratch;
    IndexSet ids;
    for (size_t i = 0; i < cloud.size(); ++i) {
        knn_points_into(cloud.points, cloud.points[i], opt.support_k + 1, scratch, ids);
        nbr.clear();
        for (size_t j : ids) {
            if (j == i) continue;
            nbr.push_back(cloud.points[j]);
            if (nbr.size() == opt.support_k) break;
        }
        axes[i] = lra_from_neighbors(cloud.points[i], nbr);
    }
    return axes;
}

/// Axes for a list of points against an explicit reference point set
/// (used when a layer's surviving points need axes from the full cloud).
inline Axis lra_at_point(const std::vector<Vec3>& support_pts, const Vec3& p, size_t support_k) {
    IndexSet ids = knn_points(support_pts, p, std::min(support_k + 1, support_pts.size()));
    std::vector<Vec3> nbr;
    for (size_t j : ids) {
        if (norm_sq(support_pts[j] - p) < 1e-24) continue;
        nbr.push_back(support_pts[j]);
        if (nbr.size() == support_k) break;
    }
    return lra_from_neighbors(p, nbr);
}

/// Unit vector from p toward the neighbor centroid; the legacy reference
/// used by the earlier convolution design and the repeatability baseline.
inline Axis compute_pm_axis(const Vec3& p, std::span<const Vec3> neighbors) {
    if (neighbors.empty()) throw std::invalid_argument("compute_pm_axis: no neighbors");
    Vec3 m{0, 0, 0};
    for (const Vec3& x : neighbors) m += x;
    m = m / double(neighbors.size());
    Vec3 d = m - p;
    if (norm(d) < 1e-12) throw std::runtime_error("compute_pm_axis: degenerate axis (centroid at p)");
    Axis a;
    a.direction = normalized(d);
    a.eigengap = std::numeric_limits<double>::infinity();
    return a;
}

/// SHOT-style local reference frame: z is the disambiguated LRA, x the
/// disambiguated dominant eigenvector, y completes the right-handed frame.
inline Frame compute_lrf(const Vec3& p, std::span<const Vec3> neighbors) {
    if (neighbors.size() < 3) throw std::invalid_argument("compute_lrf: need >= 3 neighbors");
    SupportWeights w = support_weights(p, neighbors);
    SymMat3 cov = weighted_covariance(p, neighbors, w);
    EigenDecomposition e = jacobi_eigen(cov);
    if (!(e.values[1] > 1e-9 * std::max(e.values[0], 1e-300)))
        throw std::runtime_error("compute_lrf: rank-deficient (collinear) support");

    auto oriented = [&](const Vec3& dir) {
        double proj = 0.0;
        for (size_t i = 0; i < neighbors.size(); ++i) proj += w.w[i] * dot(neighbors[i] - p, dir);
        if (proj > 0) return -dir;
        if (proj == 0.0) return canonical_sign(dir);
        return dir;
    };

    Frame f;
    f.z = oriented(normalized(e.vectors[2]));
    f.x = oriented(normalized(e.vectors[0]));
    // re-orthogonalize x against z before completing the frame
    f.x = normalized(f.x - f.z * dot(f.x, f.z));
    f.y = cross(f.z, f.x);
    return f;
}

/// Sign-folded angle between two axes, in degrees.
inline double axis_error(const Axis& a, const Axis& b) {
    double c = std::abs(dot(a.direction, b.direction));
    return deg_from_rad(safe_acos(c));
}

/// Rotation-distance between two frames: arccos((Tr(F G^T) - 1)/2) in
/// degrees.
inline double frame_error(const Frame& f, const Frame& g) {
    Mat3 rel = f.matrix() * g.matrix().transpose();
    return deg_from_rad(safe_acos((rel.trace() - 1.0) / 2.0));
}

}  // namespace riconv

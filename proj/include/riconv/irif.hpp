#pragma once

#include <array>
#include <span>
#include <vector>

#include "riconv/lra.hpp"

namespace riconv {

/// One neighbor of an ordered neighborhood.
struct OrderedNeighbor {
    Vec3 point;
    Axis axis;
    size_t source_index = 0;  // index into the caller's neighbor list
    double distance = 0.0;    // 3D distance to the reference point
    double cw_angle = 0.0;    // clockwise angle on the tangent disk, [0, 2pi)
};

/// A reference point, its axis, and K neighbors sorted clockwise on the
/// tangent disk, starting at the farthest neighbor.
struct OrderedNeighborhood {
    Vec3 reference;
    Axis reference_axis;
    std::vector<OrderedNeighbor> neighbors;
};

/// Clockwise tangent-disk ordering.
///
/// Neighbors coincident with the reference point (within 1e-12) are
/// dropped. The start neighbor x0 is the farthest in 3D (ties to the
/// smaller input index); the in-plane basis is e1 = normalized projection
/// of (x0 - p), e2 = axis x e1, and the clockwise angle as seen from the
/// +axis side is (-atan2(<d,e2>, <d,e1>)) mod 2pi. A neighbor whose
/// projection is shorter than 1e-10 gets angle 0 and is placed after x0,
/// ordered by distance. If x0 itself projects degenerately the
/// next-farthest neighbor takes its place.
inline OrderedNeighborhood clockwise_order(const Vec3& p, const Axis& lra_p,
                                           std::span<const Vec3> neighbors,
                                           std::span<const Axis> axes = {}) {
    if (!axes.empty() && axes.size() != neighbors.size())
        throw std::invalid_argument("clockwise_order: axis count mismatch");

    OrderedNeighborhood hood;
    hood.reference = p;
    hood.reference_axis = lra_p;
    hood.neighbors.reserve(neighbors.size());
    for (size_t i = 0; i < neighbors.size(); ++i) {
        double d = norm(neighbors[i] - p);
        if (d < 1e-12) continue;
        OrderedNeighbor nb;
        nb.point = neighbors[i];
        if (!axes.empty()) nb.axis = axes[i];
        nb.source_index = i;
        nb.distance = d;
        hood.neighbors.push_back(nb);
    }
    if (hood.neighbors.size() < 2)
        throw std::invalid_argument("clockwise_order: need >= 2 distinct neighbors");

    const Vec3 axis = normalized(lra_p.direction);

    // candidate starts, farthest first (distance ties -> smaller index)
    std::vector<size_t> by_dist(hood.neighbors.size());
    for (size_t i = 0; i < by_dist.size(); ++i) by_dist[i] = i;
    std::sort(by_dist.begin(), by_dist.end(), [&](size_t a, size_t b) {
        if (hood.neighbors[a].distance != hood.neighbors[b].distance)
            return hood.neighbors[a].distance > hood.neighbors[b].distance;
        return hood.neighbors[a].source_index < hood.neighbors[b].source_index;
    });

    auto project = [&](const Vec3& x) {
        Vec3 d = x - p;
        return d - axis * dot(d, axis);
    };

    size_t start = size_t(-1);
    Vec3 e1;
    for (size_t cand : by_dist) {
        Vec3 proj = project(hood.neighbors[cand].point);
        if (norm(proj) >= 1e-10) {
            start = cand;
            e1 = normalized(proj);
            break;
        }
    }
    if (start == size_t(-1))
        throw std::runtime_error("clockwise_order: all neighbor projections degenerate");

    const Vec3 e2 = cross(axis, e1);
    const double two_pi = 2.0 * kPi;

    for (OrderedNeighbor& nb : hood.neighbors) {
        Vec3 proj = project(nb.point);
        if (norm(proj) < 1e-10) {
            nb.cw_angle = 0.0;
            continue;
        }
        Vec3 d = nb.point - p;
        double ccw = std::atan2(dot(d, e2), dot(d, e1));
        // counter-clockwise atan2 angle -> clockwise-increasing [0, 2pi)
        double cw = -ccw;
        if (cw < 0) cw += two_pi;
        if (cw >= two_pi) cw -= two_pi;
        nb.cw_angle = cw;
    }
    hood.neighbors[start].cw_angle = 0.0;

    const OrderedNeighbor start_copy = hood.neighbors[start];
    std::sort(hood.neighbors.begin(), hood.neighbors.end(),
              [&](const OrderedNeighbor& a, const OrderedNeighbor& b) {
                  bool a_start = a.source_index == start_copy.source_index;
                  bool b_start = b.source_index == start_copy.source_index;
                  if (a_start != b_start) return a_start;  // x0 leads even among angle-0 entries
                  if (a.cw_angle != b.cw_angle) return a.cw_angle < b.cw_angle;
                  if (a.distance != b.distance) return a.distance < b.distance;
                  return a.source_index < b.source_index;
              });
    return hood;
}

/// Signed-angle direction flags: S_a = +1 iff alpha0 <= alpha1, S_b = +1
/// iff beta0 <= beta1.
inline std::pair<double, double> signed_flags(double alpha0, double alpha1, double beta0,
                                              double beta1) {
    return {alpha0 <= alpha1 ? 1.0 : -1.0, beta0 <= beta1 ? 1.0 : -1.0};
}

/// K rows of [d, phi, a0, a1, a2, b0, b1, b2]; a2 and b2 are signed.
struct IrifMatrix {
    static constexpr size_t kAttributes = 8;
    std::vector<std::array<double, kAttributes>> rows;
    std::vector<char> degenerate_row;  // duplicate-successor rows

    size_t size() const { return rows.size(); }
};

enum IrifColumn { kD = 0, kPhi, kAlpha0, kAlpha1, kAlpha2, kBeta0, kBeta1, kBeta2 };

/// The eight rotation-invariant attributes per neighbor (cyclic successor:
/// the last clockwise neighbor pairs with x0).
inline IrifMatrix compute_irif(const OrderedNeighborhood& hood) {
    const size_t k = hood.neighbors.size();
    if (k < 2) throw std::invalid_argument("compute_irif: need >= 2 neighbors");

    const Vec3 p = hood.reference;
    const Vec3 lra_p = normalized(hood.reference_axis.direction);

    IrifMatrix m;
    m.rows.resize(k);
    m.degenerate_row.assign(k, 0);

    for (size_t i = 0; i < k; ++i) {
        const OrderedNeighbor& cur = hood.neighbors[i];
        const OrderedNeighbor& nxt = hood.neighbors[(i + 1) % k];
        const Vec3 xi = cur.point;
        const Vec3 lra_xi = normalized(cur.axis.direction);
        const Vec3 lra_xn = normalized(nxt.axis.direction);

        const Vec3 to_p = p - xi;             // x_i -> p
        const Vec3 to_p_next = p - nxt.point; // x_{i+1} -> p
        const Vec3 to_next = nxt.point - xi;  // x_i -> x_{i+1}

        double d = norm(to_p);
        double phi = angle_between(to_p_next, to_p);
        double a0 = angle_between(lra_xi, to_p);
        double a1 = angle_between(lra_p, to_p);
        double axes_pi = safe_acos(dot(lra_xi, lra_p));

        double b0, b1, bb;
        bool dup = norm(to_next) < 1e-12;
        if (dup) {
            b0 = b1 = bb = 0.0;
            m.degenerate_row[i] = 1;
        } else {
            b0 = angle_between(lra_xi, to_next);
            b1 = angle_between(lra_xn, to_next);
            bb = safe_acos(dot(lra_xi, lra_xn));
        }

        auto [sa, sb] = signed_flags(a0, a1, b0, b1);
        double a2 = sa * axes_pi;
        double b2 = sb * bb;
        if (a2 == 0.0) a2 = 0.0;  // normalize -0 to +0
        if (b2 == 0.0) b2 = 0.0;

        m.rows[i] = {d, phi, a0, a1, a2, b0, b1, b2};
    }
    return m;
}

/// Legacy 4-attribute features against the reference vector p->m:
/// [d0, d1, alpha0 = angle(pm, px), alpha1 = angle(pm, xm)].
inline std::array<double, 4> compute_rif_legacy(const Vec3& p, const Vec3& m, const Vec3& x) {
    Vec3 pm = m - p;
    if (norm(pm) < 1e-12) throw std::runtime_error("compute_rif_legacy: degenerate pm axis");
    Vec3 px = x - p;
    Vec3 xm = m - x;
    if (norm(px) < 1e-12 || norm(xm) < 1e-12)
        throw std::invalid_argument("compute_rif_legacy: x coincides with p or m");
    return {norm(px), norm(xm), angle_between(pm, px), angle_between(pm, xm)};
}

/// One boolean per IRIF attribute, canonical column order
/// [d, phi, a0, a1, a2, b0, b1, b2].
struct FeatureMask {
    std::array<bool, IrifMatrix::kAttributes> enabled{true, true, true, true, true, true, true, true};

    size_t count() const {
        size_t c = 0;
        for (bool b : enabled) c += b ? 1 : 0;
        return c;
    }

    /// Model A: all eight attributes.
    static FeatureMask model_a() { return {}; }
    /// Model B: angles only (all but d).
    static FeatureMask model_b() {
        FeatureMask m;
        m.enabled[kD] = false;
        return m;
    }
    /// Model C: distances-and-azimuth pair {d, phi}.
    static FeatureMask model_c() {
        FeatureMask m;
        m.enabled = {true, true, false, false, false, false, false, false};
        return m;
    }
    /// Model D: radial relations only {d, a0, a1, a2}.
    static FeatureMask model_d() {
        FeatureMask m;
        m.enabled = {true, false, true, true, true, false, false, false};
        return m;
    }

    static FeatureMask named_model(char model) {
        switch (model) {
            case 'A': case 'a': return model_a();
            case 'B': case 'b': return model_b();
            case 'C': case 'c': return model_c();
            case 'D': case 'd': return model_d();
        }
        throw std::invalid_argument(std::string("unknown feature model: ") + model);
    }

    /// From a string of eight 0/1 flags in canonical column order.
    static FeatureMask from_bits(const std::string& bits) {
        if (bits.size() != IrifMatrix::kAttributes)
            throw std::invalid_argument("feature mask needs exactly 8 bits");
        FeatureMask m;
        for (size_t i = 0; i < bits.size(); ++i) {
            if (bits[i] != '0' && bits[i] != '1')
                throw std::invalid_argument("feature mask bits must be 0 or 1");
            m.enabled[i] = bits[i] == '1';
        }
        if (m.count() == 0) throw std::invalid_argument("feature mask must enable an attribute");
        return m;
    }
};

/// Column subset of an IRIF matrix in canonical order.
inline std::vector<std::vector<double>> apply_feature_mask(const IrifMatrix& f,
                                                           const FeatureMask& mask) {
    if (mask.count() == 0) throw std::invalid_argument("apply_feature_mask: empty mask");
    std::vector<std::vector<double>> out(f.size());
    for (size_t r = 0; r < f.size(); ++r) {
        out[r].reserve(mask.count());
        for (size_t c = 0; c < IrifMatrix::kAttributes; ++c)
            if (mask.enabled[c]) out[r].push_back(f.rows[r][c]);
    }
    return out;
}

}  // namespace riconv

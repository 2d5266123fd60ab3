#pragma once

#include "riconv/shapes.hpp"

namespace riconv {

struct Dataset {
    std::vector<PointCloud> samples;
    size_t class_count = 0;
    std::vector<std::string> class_names;

    size_t size() const { return samples.size(); }
};

struct ToyDatasetOptions {
    size_t per_class = 100;
    size_t points = 512;
    double jitter_sigma = 0.01;   // point noise baked into every sample
    double aspect_jitter = 0.25;  // relative spread of the shape proportions
    uint64_t seed = 1;
    std::vector<ShapeKind> classes = {ShapeKind::sphere,   ShapeKind::cube, ShapeKind::cylinder,
                                      ShapeKind::cone,     ShapeKind::torus, ShapeKind::plane};
};

/// Six-primitive classification set: jittered instance proportions plus a
/// little point noise, unit-diameter normalized, labeled 0..C-1 in class
/// order.
inline Dataset make_toy_dataset(const ToyDatasetOptions& opt) {
    Dataset ds;
    ds.class_count = opt.classes.size();
    for (ShapeKind k : opt.classes) ds.class_names.push_back(to_string(k));
    Rng rng(derive_seed(opt.seed, 0xda7a));
    for (size_t c = 0; c < opt.classes.size(); ++c) {
        for (size_t i = 0; i < opt.per_class; ++i) {
            double aspect = 1.0 + rng.uniform(-opt.aspect_jitter, opt.aspect_jitter);
            uint64_t shape_seed = rng.next_u64();
            PointCloud cloud = synth_shape_ex(opt.classes[c], opt.points, shape_seed, aspect);
            if (opt.jitter_sigma > 0)
                cloud = add_gaussian_noise(cloud, opt.jitter_sigma, rng.next_u64());
            cloud = unit_diameter_normalize(cloud);
            cloud.label = int(c);
            ds.samples.push_back(std::move(cloud));
        }
    }
    return ds;
}

struct SegSample {
    PointCloud cloud;
    std::vector<int> point_labels;
};

/// Two-part toy segmentation set: a spherical cap sitting on a planar
/// base ("mushrooms" with jittered proportions); per-point labels mark
/// the part each point was sampled from.
inline std::vector<SegSample> make_toy_seg_dataset(size_t count, size_t points, uint64_t seed) {
    std::vector<SegSample> out;
    Rng rng(derive_seed(seed, 0x5e6));
    for (size_t s = 0; s < count; ++s) {
        SegSample sample;
        size_t n_cap = points / 2;
        double lift = rng.uniform(0.15, 0.3);
        PointCloud cap = synth_shape_ex(ShapeKind::sphere, n_cap, rng.next_u64(),
                                        1.0);
        PointCloud base = synth_shape_ex(ShapeKind::plane, points - n_cap, rng.next_u64(),
                                         1.0 + rng.uniform(-0.2, 0.2));
        for (size_t i = 0; i < cap.size(); ++i) {
            sample.cloud.points.push_back(cap.points[i] * 0.6 + Vec3{0, 0, lift});
            sample.cloud.normals.push_back(cap.normals[i]);
            sample.point_labels.push_back(1);
        }
        for (size_t i = 0; i < base.size(); ++i) {
            sample.cloud.points.push_back(base.points[i]);
            sample.cloud.normals.push_back(base.normals[i]);
            sample.point_labels.push_back(0);
        }
        sample.cloud = add_gaussian_noise(sample.cloud, 0.005, rng.next_u64());
        sample.cloud = unit_diameter_normalize(sample.cloud);
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace riconv

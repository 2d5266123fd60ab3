#pragma once

#include <optional>

#include "riconv/irif.hpp"
#include "riconv/nn/layers.hpp"

namespace riconv {

/// One RIConv++ layer of the schedule.
struct LayerSpec {
    size_t out_points = 0;
    size_t out_dims = 0;
    size_t neighbors_k = 0;
    size_t kernel_size = 1;
    size_t lift_dims = 0;  // 0 -> out_dims / 2

    void validate() const {
        if (neighbors_k < 2) throw std::invalid_argument("LayerSpec: neighbors_k must be >= 2");
        if (kernel_size != 1 && kernel_size != 3 && kernel_size != 5 && kernel_size != 7)
            throw std::invalid_argument("LayerSpec: kernel_size must be 1, 3, 5, or 7");
        if (out_points == 0 || out_dims == 0) throw std::invalid_argument("LayerSpec: empty layer");
    }
};

enum class AxisSource { lra, normals, pm };
enum class FeatureSource { irif, raw_xyz };
enum class Task { classify, segment };

inline const char* to_string(AxisSource s) {
    switch (s) {
        case AxisSource::lra: return "lra";
        case AxisSource::normals: return "normals";
        case AxisSource::pm: return "pm";
    }
    return "?";
}

inline AxisSource axis_source_from_string(const std::string& s) {
    if (s == "lra") return AxisSource::lra;
    if (s == "normals") return AxisSource::normals;
    if (s == "pm") return AxisSource::pm;
    throw std::invalid_argument("unknown axis source: " + s);
}

struct NetworkConfig {
    Task task = Task::classify;
    size_t input_points = 0;
    size_t class_count = 0;
    std::vector<LayerSpec> layers;          // encoder schedule
    std::vector<LayerSpec> decoder_layers;  // segmentation only
    std::vector<size_t> decoder_mlp_dims;   // per-stage widths after each skip
    FeatureMask mask;
    AxisSource axis_source = AxisSource::lra;
    FeatureSource feature_source = FeatureSource::irif;
    size_t lra_support_k = 16;
    uint64_t seed = 1;

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("NetworkConfig: no layers");
        if (class_count < 2) throw std::invalid_argument("NetworkConfig: need >= 2 classes");
        if (input_points < 8) throw std::invalid_argument("NetworkConfig: too few input points");
        size_t prev = input_points;
        for (const LayerSpec& l : layers) {
            l.validate();
            if (l.out_points > prev)
                throw std::invalid_argument("NetworkConfig: out_points must not grow");
            prev = l.out_points;
        }
        if (task == Task::classify && layers.back().out_points != 1)
            throw std::invalid_argument("NetworkConfig: classification must end at one point");
        if (task == Task::segment) {
            if (decoder_layers.size() != layers.size())
                throw std::invalid_argument("NetworkConfig: decoder/encoder stage mismatch");
            if (decoder_mlp_dims.size() + 1 != decoder_layers.size())
                throw std::invalid_argument("NetworkConfig: need one MLP width per skip stage");
        }
    }
};

/// Table-style classification schedule: five layers with neighborhoods
/// 8/16/32/64/128 and the 32/64/128/256/512 channel ramp, ending in a
/// single point.
inline NetworkConfig paper_classify_config(size_t class_count, size_t input_points = 1024) {
    NetworkConfig cfg;
    cfg.task = Task::classify;
    cfg.input_points = input_points;
    cfg.class_count = class_count;
    cfg.layers = {
        {input_points, 32, 8, 1, 0},
        {input_points / 2, 64, 16, 1, 0},
        {input_points / 4, 128, 32, 1, 0},
        {input_points / 8, 256, 64, 1, 0},
        {1, 512, 128, 1, 0},
    };
    return cfg;
}

/// Desk-scale schedule used by the experiment harness: same structure,
/// thin enough to train a full rotation grid in minutes.
inline NetworkConfig toy_classify_config(size_t class_count, size_t input_points = 512) {
    NetworkConfig cfg;
    cfg.task = Task::classify;
    cfg.input_points = input_points;
    cfg.class_count = class_count;
    cfg.layers = {
        {128, 16, 8, 1, 0},
        {64, 32, 10, 1, 0},
        {32, 64, 12, 1, 0},
        {16, 96, 16, 1, 0},
        {1, 128, 16, 1, 0},
    };
    return cfg;
}

/// Table-style segmentation schedule: four encoder layers, a mirrored
/// decoder with skip connections and per-stage MLPs, final per-point
/// scores.
inline NetworkConfig paper_segment_config(size_t class_count, size_t input_points = 2048) {
    NetworkConfig cfg;
    cfg.task = Task::segment;
    cfg.input_points = input_points;
    cfg.class_count = class_count;
    cfg.layers = {
        {512, 64, 8, 1, 0},
        {256, 128, 16, 1, 0},
        {128, 256, 32, 1, 0},
        {64, 512, 64, 1, 0},
    };
    cfg.decoder_layers = {
        {64, 512, 8, 1, 0},
        {128, 512, 16, 1, 0},
        {256, 256, 32, 1, 0},
        {512, class_count, 32, 1, 0},
    };
    cfg.decoder_mlp_dims = {512, 256, 128};
    return cfg;
}

inline NetworkConfig toy_segment_config(size_t class_count, size_t input_points = 256) {
    NetworkConfig cfg;
    cfg.task = Task::segment;
    cfg.input_points = input_points;
    cfg.class_count = class_count;
    cfg.layers = {
        {128, 16, 8, 1, 0},
        {64, 32, 10, 1, 0},
        {32, 48, 12, 1, 0},
        {16, 64, 12, 1, 0},
    };
    cfg.decoder_layers = {
        {16, 64, 8, 1, 0},
        {32, 64, 8, 1, 0},
        {64, 48, 10, 1, 0},
        {128, class_count, 10, 1, 0},
    };
    cfg.decoder_mlp_dims = {64, 48, 32};
    return cfg;
}

namespace net_detail {

/// Per-cloud, per-layer geometric preprocessing: representative picks,
/// ordered neighbor indices, and the (already masked) input features.
/// Everything here is constant with respect to the network weights.
struct LayerPlan {
    std::vector<size_t> rep_index;   // into the previous layer's point list
    std::vector<size_t> nbr_index;   // [reps * rows], ordered clockwise
    std::vector<double> features;    // [reps * rows * feat_dims]
    size_t rows = 0;
};

struct CloudPlan {
    std::vector<LayerPlan> layers;
    std::vector<std::vector<Vec3>> level_points;  // level 0 = input points
    std::vector<std::vector<Axis>> level_axes;
    bool degenerate = false;
};

inline size_t expected_rows(size_t neighbors_k, size_t prev_count) {
    size_t k = std::min(neighbors_k, prev_count);
    return k < 2 ? 1 : k - 1;  // the representative itself is dropped from its own query
}

}  // namespace net_detail

/// The RIConv++ network: a stack of rotation-invariant convolution layers
/// over FPS-selected representatives, plus a fully connected head
/// (classification) or an interpolating decoder (segmentation).
class RiconvNet {
public:
    explicit RiconvNet(NetworkConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(derive_seed(cfg_.seed, 0x11f7));
        size_t prev_dims = 0;
        size_t prev_count = cfg_.input_points;
        for (size_t l = 0; l < cfg_.layers.size(); ++l) {
            layers_.push_back(build_layer("enc" + std::to_string(l), cfg_.layers[l], prev_dims,
                                          prev_count, rng, true));
            prev_dims = cfg_.layers[l].out_dims;
            prev_count = cfg_.layers[l].out_points;
        }
        if (cfg_.task == Task::classify) {
            const size_t d = prev_dims;
            head_fc_.push_back(make_affine("head.fc0", d, d, rng));
            head_fc_.push_back(make_affine("head.fc1", d, d / 2, rng));
            head_fc_.push_back(make_affine("head.fc2", d / 2, cfg_.class_count, rng));
        } else {
            // decoder stages run coarse-to-fine; the last one emits scores
            size_t cur_dims = prev_dims;
            for (size_t s = 0; s < cfg_.decoder_layers.size(); ++s) {
                const bool last = s + 1 == cfg_.decoder_layers.size();
                dec_layers_.push_back(build_layer("dec" + std::to_string(s), cfg_.decoder_layers[s],
                                                  cur_dims, cfg_.decoder_layers[s].out_points, rng,
                                                  !last));
                size_t up_dims = cfg_.decoder_layers[s].out_dims;
                if (!last) {
                    size_t skip_dims = skip_dims_at(s);
                    dec_mlps_.push_back(make_mlp("dec" + std::to_string(s) + ".mlp",
                                                 up_dims + skip_dims, cfg_.decoder_mlp_dims[s], rng));
                    cur_dims = cfg_.decoder_mlp_dims[s];
                }
            }
        }
    }

    const NetworkConfig& config() const { return cfg_; }
    nn::ParameterStore& params() { return store_; }
    size_t trainable_parameter_count() const { return store_.trainable_count(); }

    /// Forward pass over a batch of equally sized clouds -> logits [B, K].
    /// degenerate_out (optional) reports per-cloud axis-degeneracy flags.
    nn::Tensor forward_classify(const std::vector<const PointCloud*>& batch, bool training,
                                std::vector<char>* degenerate_out = nullptr) {
        if (cfg_.task != Task::classify) throw std::logic_error("not a classification network");
        if (batch.empty()) throw std::invalid_argument("forward_classify: empty batch");
        std::vector<net_detail::CloudPlan> plans;
        plans.reserve(batch.size());
        for (const PointCloud* c : batch) plans.push_back(build_plan(*c));
        if (degenerate_out) {
            degenerate_out->clear();
            for (const auto& p : plans) degenerate_out->push_back(p.degenerate ? 1 : 0);
        }

        nn::Tensor feats;  // [B * P_l, O_l]
        for (size_t l = 0; l < layers_.size(); ++l)
            feats = layer_forward(layers_[l], plans, l, feats, batch.size(), training);

        // the final layer pools to one representative per cloud
        nn::Tensor x = nn::reshape(feats, {batch.size(), cfg_.layers.back().out_dims});
        x = nn::relu(nn::affine(x, leaf(head_fc_[0].w), leaf(head_fc_[0].b)));
        x = nn::relu(nn::affine(x, leaf(head_fc_[1].w), leaf(head_fc_[1].b)));
        return nn::affine(x, leaf(head_fc_[2].w), leaf(head_fc_[2].b));
    }

    /// Forward pass for segmentation -> per-point scores [N, K] for one
    /// cloud (batched internally as rows).
    nn::Tensor forward_segment(const PointCloud& cloud, bool training,
                               bool* degenerate_out = nullptr) {
        if (cfg_.task != Task::segment) throw std::logic_error("not a segmentation network");
        std::vector<net_detail::CloudPlan> plans;
        plans.push_back(build_plan(cloud));
        if (degenerate_out) *degenerate_out = plans[0].degenerate;

        std::vector<nn::Tensor> enc_feats;  // per level, [P_l, O_l]
        nn::Tensor feats;
        for (size_t l = 0; l < layers_.size(); ++l) {
            feats = layer_forward(layers_[l], plans, l, feats, 1, training);
            enc_feats.push_back(feats);
        }

        // decoder: operator at the coarse level, interpolate one level up,
        // concatenate the encoder skip, unify with an MLP
        nn::Tensor x = feats;
        for (size_t s = 0; s < dec_layers_.size(); ++s) {
            const bool last = s + 1 == dec_layers_.size();
            size_t coarse_level = layers_.size() - s;           // point-set level index
            auto plan = decoder_plan(plans[0], coarse_level, cfg_.decoder_layers[s]);
            x = operator_forward(dec_layers_[s], plan, x, training);
            // inverse-distance interpolation to the next finer level
            const auto& coarse_pts = plans[0].level_points[coarse_level];
            const auto& fine_pts = plans[0].level_points[coarse_level - 1];
            x = interpolate_to(x, coarse_pts, fine_pts);
            if (!last) {
                nn::Tensor skip = enc_feats[coarse_level - 2];  // features at the finer level
                x = nn::concat_cols(x, skip);
                x = mlp_forward(dec_mlps_[s], x, training);
            }
        }
        return x;  // [N, K]
    }

    /// Per-layer lift input width (after the feature mask).
    size_t feature_dims() const {
        return cfg_.feature_source == FeatureSource::irif ? cfg_.mask.count() : 3;
    }

private:
    struct Affine {
        nn::Parameter* w;
        nn::Parameter* b;
    };

    struct BatchNorm {
        nn::Parameter *gamma, *beta, *running_mean, *running_var;
    };

    struct Mlp {
        Affine fc;
        BatchNorm bn;
    };

    struct Layer {
        LayerSpec spec;
        size_t prev_dims;   // previous-layer feature width (0 for the first layer)
        size_t lift_dims;
        size_t conv_mid;
        Affine lift;
        BatchNorm lift_bn;
        nn::Parameter* scale_w;
        nn::Parameter* conv_k;
        nn::Parameter* conv_b;
        Affine mix;
        BatchNorm post_bn;
        bool post_activation = true;
    };

    NetworkConfig cfg_;
    nn::ParameterStore store_;
    std::vector<Layer> layers_;
    std::vector<Layer> dec_layers_;
    std::vector<Mlp> dec_mlps_;
    std::vector<Affine> head_fc_;

    static nn::Tensor leaf(nn::Parameter* p) { return nn::Tensor::leaf(*p); }

    Affine make_affine(const std::string& name, size_t in, size_t out, Rng& rng) {
        Affine a;
        a.w = &store_.create(name + ".w", {in, out});
        a.b = &store_.create(name + ".b", {out});
        nn::init_uniform_fanin(*a.w, in, rng);
        nn::init_uniform_fanin(*a.b, in, rng);
        return a;
    }

    BatchNorm make_bn(const std::string& name, size_t c) {
        BatchNorm bn;
        bn.gamma = &store_.create(name + ".gamma", {c});
        bn.beta = &store_.create(name + ".beta", {c});
        bn.running_mean = &store_.create(name + ".running_mean", {c}, false);
        bn.running_var = &store_.create(name + ".running_var", {c}, false);
        std::fill(bn.gamma->value.begin(), bn.gamma->value.end(), 1.0);
        std::fill(bn.running_var->value.begin(), bn.running_var->value.end(), 1.0);
        return bn;
    }

    Mlp make_mlp(const std::string& name, size_t in, size_t out, Rng& rng) {
        Mlp m;
        m.fc = make_affine(name, in, out, rng);
        m.bn = make_bn(name + ".bn", out);
        return m;
    }

    Layer build_layer(const std::string& name, const LayerSpec& spec, size_t prev_dims,
                      size_t /*prev_count*/, Rng& rng, bool post_activation) {
        Layer layer;
        layer.spec = spec;
        layer.prev_dims = prev_dims;
        layer.lift_dims = spec.lift_dims ? spec.lift_dims : std::max<size_t>(spec.out_dims / 2, 4);
        layer.conv_mid = std::max<size_t>(spec.out_dims / 4, 4);
        layer.post_activation = post_activation;

        const size_t f = feature_dims();
        const size_t c = layer.lift_dims + prev_dims;
        layer.lift = make_affine(name + ".lift", f, layer.lift_dims, rng);
        layer.lift_bn = make_bn(name + ".lift.bn", layer.lift_dims);
        layer.scale_w = &store_.create(name + ".scale.w", {c});
        std::fill(layer.scale_w->value.begin(), layer.scale_w->value.end(), 1.0);
        layer.conv_k = &store_.create(name + ".conv.k", {layer.conv_mid, c, spec.kernel_size});
        layer.conv_b = &store_.create(name + ".conv.b", {layer.conv_mid});
        nn::init_uniform_fanin(*layer.conv_k, c * spec.kernel_size, rng);
        nn::init_uniform_fanin(*layer.conv_b, c * spec.kernel_size, rng);
        layer.mix = make_affine(name + ".mix", layer.conv_mid, spec.out_dims, rng);
        layer.post_bn = make_bn(name + ".bn", spec.out_dims);
        return layer;
    }

    size_t skip_dims_at(size_t stage) const {
        // stage s interpolates to encoder level (L-1-s); its skip carries
        // that level's output features
        size_t enc_index = cfg_.layers.size() - 2 - stage;
        return cfg_.layers[enc_index].out_dims;
    }

    std::vector<Axis> axes_for(const PointCloud& cloud) const {
        switch (cfg_.axis_source) {
            case AxisSource::lra:
                return compute_lra(cloud, {.support_k = cfg_.lra_support_k});
            case AxisSource::normals:
                return compute_lra(cloud, {.support_k = cfg_.lra_support_k, .use_normals = true});
            case AxisSource::pm: {
                std::vector<Axis> axes(cloud.size());
                std::vector<Vec3> nbr;
                for (size_t i = 0; i < cloud.size(); ++i) {
                    IndexSet ids = knn(cloud, i, std::min(cfg_.lra_support_k + 1, cloud.size()));
                    nbr.clear();
                    for (size_t j : ids)
                        if (j != i) nbr.push_back(cloud.points[j]);
                    try {
                        axes[i] = compute_pm_axis(cloud.points[i], nbr);
                    } catch (const std::runtime_error&) {
                        axes[i].direction = normalized(nbr[0] - cloud.points[i]);
                        axes[i].eigengap = 0.0;  // flag as untrustworthy
                    }
                }
                return axes;
            }
        }
        throw std::logic_error("axes_for: bad axis source");
    }

    void fill_features(const OrderedNeighborhood& hood, const Vec3& p, double* out) const {
        if (cfg_.feature_source == FeatureSource::irif) {
            IrifMatrix m = compute_irif(hood);
            size_t col = 0;
            for (size_t r = 0; r < m.size(); ++r)
                for (size_t c = 0; c < IrifMatrix::kAttributes; ++c)
                    if (cfg_.mask.enabled[c]) out[col++] = m.rows[r][c];
        } else {
            // rotation-variant baseline: raw neighbor offsets in global
            // coordinates, same clockwise ordering
            size_t col = 0;
            for (const OrderedNeighbor& nb : hood.neighbors) {
                Vec3 d = nb.point - p;
                out[col++] = d.x;
                out[col++] = d.y;
                out[col++] = d.z;
            }
        }
    }

    net_detail::CloudPlan build_plan(const PointCloud& cloud) const {
        if (cloud.size() != cfg_.input_points)
            throw std::invalid_argument("forward: cloud has " + std::to_string(cloud.size()) +
                                        " points, config expects " +
                                        std::to_string(cfg_.input_points));
        net_detail::CloudPlan plan;
        plan.level_points.push_back(cloud.points);
        plan.level_axes.push_back(axes_for(cloud));
        std::vector<Vec3> pts = cloud.points;
        std::vector<Axis> axes = plan.level_axes[0];

        for (const LayerSpec& spec : cfg_.layers) {
            if (spec.neighbors_k > pts.size())
                throw std::invalid_argument("layer neighbors_k exceeds the surviving point count");
            net_detail::LayerPlan lp = plan_operator(pts, axes, spec, plan.degenerate,
                                                     /*reps_from_fps=*/spec.out_points < pts.size());
            // next level keeps the representative subset
            std::vector<Vec3> next_pts(lp.rep_index.size());
            std::vector<Axis> next_axes(lp.rep_index.size());
            for (size_t i = 0; i < lp.rep_index.size(); ++i) {
                next_pts[i] = pts[lp.rep_index[i]];
                next_axes[i] = axes[lp.rep_index[i]];
            }
            plan.layers.push_back(std::move(lp));
            pts = std::move(next_pts);
            axes = std::move(next_axes);
            plan.level_points.push_back(pts);
            plan.level_axes.push_back(axes);
        }
        return plan;
    }

    /// Representative picks + ordered neighborhoods + features for one
    /// operator application over the point set `pts`.
    net_detail::LayerPlan plan_operator(const std::vector<Vec3>& pts, const std::vector<Axis>& axes,
                                        const LayerSpec& spec, bool& degenerate_flag,
                                        bool reps_from_fps) const {
        net_detail::LayerPlan lp;
        if (reps_from_fps) {
            PointCloud wrap;
            wrap.points = pts;
            lp.rep_index = farthest_point_sample(wrap, spec.out_points);
        } else {
            lp.rep_index.resize(std::min(spec.out_points, pts.size()));
            std::iota(lp.rep_index.begin(), lp.rep_index.end(), 0);
        }
        lp.rows = net_detail::expected_rows(spec.neighbors_k, pts.size());
        const size_t f = feature_dims();
        lp.nbr_index.assign(lp.rep_index.size() * lp.rows, 0);
        lp.features.assign(lp.rep_index.size() * lp.rows * f, 0.0);

        std::vector<Vec3> nbr_pts;
        std::vector<Axis> nbr_axes;
        KnnScratch scratch;
        IndexSet ids;
        for (size_t ri = 0; ri < lp.rep_index.size(); ++ri) {
            const size_t rep = lp.rep_index[ri];
            const Vec3 p = pts[rep];
            knn_points_into(pts, p, std::min(spec.neighbors_k, pts.size()), scratch, ids);
            nbr_pts.clear();
            nbr_axes.clear();
            for (size_t j : ids) {
                nbr_pts.push_back(pts[j]);
                nbr_axes.push_back(axes[j]);
            }
            OrderedNeighborhood hood = clockwise_order(p, axes[rep], nbr_pts, nbr_axes);
            if (axes[rep].is_degenerate()) degenerate_flag = true;
            for (const OrderedNeighbor& nb : hood.neighbors)
                if (nb.axis.is_degenerate()) degenerate_flag = true;

            // uniform row count: pad by repeating the last entry (its
            // duplicate successor is handled by the degenerate-row rule)
            while (hood.neighbors.size() < lp.rows) hood.neighbors.push_back(hood.neighbors.back());
            if (hood.neighbors.size() > lp.rows) hood.neighbors.resize(lp.rows);

            for (size_t i = 0; i < lp.rows; ++i)
                lp.nbr_index[ri * lp.rows + i] = ids[hood.neighbors[i].source_index];
            fill_features(hood, p, lp.features.data() + ri * lp.rows * f);
        }
        return lp;
    }

    /// Decoder operator plan: every current point is a representative,
    /// with the level's retained axes.
    net_detail::LayerPlan decoder_plan(const net_detail::CloudPlan& plan, size_t level,
                                       const LayerSpec& spec) const {
        const std::vector<Vec3>& pts = plan.level_points[level];
        bool degenerate = false;
        return plan_operator(pts, plan.level_axes[level], with_out_points(spec, pts.size()),
                             degenerate, false);
    }

    static LayerSpec with_out_points(LayerSpec spec, size_t n) {
        spec.out_points = n;
        return spec;
    }

    /// Shared operator body: lift + concat + scale + conv + mix + pool.
    /// The plan may cover one cloud or a whole merged batch; rep_index
    /// already enumerates every group.
    nn::Tensor operator_forward(Layer& layer, const net_detail::LayerPlan& lp,
                                const nn::Tensor& f_prev, bool training) {
        const size_t groups = lp.rep_index.size();
        const size_t rows = lp.rows;
        const size_t f = feature_dims();

        nn::Tensor x = nn::Tensor::constant({groups * rows, f}, lp.features);
        x = nn::relu(nn::batch_norm(nn::affine(x, leaf(layer.lift.w), leaf(layer.lift.b)),
                                    leaf(layer.lift_bn.gamma), leaf(layer.lift_bn.beta),
                                    *layer.lift_bn.running_mean, *layer.lift_bn.running_var,
                                    training));
        if (layer.prev_dims > 0) {
            if (!f_prev.valid()) throw std::logic_error("operator_forward: missing f_prev");
            x = nn::concat_cols(x, nn::gather_rows(f_prev, std::vector<size_t>(lp.nbr_index.begin(),
                                                                               lp.nbr_index.end())));
        }
        x = nn::elementwise_scale(x, leaf(layer.scale_w));
        const size_t c = layer.lift_dims + layer.prev_dims;
        x = nn::reshape(x, {groups, rows, c});
        x = nn::relu(nn::conv1d(x, leaf(layer.conv_k), leaf(layer.conv_b)));
        const size_t lo = rows - layer.spec.kernel_size + 1;
        x = nn::reshape(x, {groups * lo, layer.conv_mid});
        x = nn::affine(x, leaf(layer.mix.w), leaf(layer.mix.b));
        x = nn::reshape(x, {groups, lo, layer.spec.out_dims});
        x = nn::maxpool_set(x);  // [groups, out_dims]
        x = nn::batch_norm(x, leaf(layer.post_bn.gamma), leaf(layer.post_bn.beta),
                           *layer.post_bn.running_mean, *layer.post_bn.running_var, training);
        if (layer.post_activation) x = nn::relu(x);
        return x;
    }

    nn::Tensor mlp_forward(Mlp& m, const nn::Tensor& x, bool training) {
        return nn::relu(nn::batch_norm(nn::affine(x, leaf(m.fc.w), leaf(m.fc.b)), leaf(m.bn.gamma),
                                       leaf(m.bn.beta), *m.bn.running_mean, *m.bn.running_var,
                                       training));
    }

    /// Encoder layer over a batch of plans; gathers f_prev rows with
    /// per-cloud offsets.
    nn::Tensor layer_forward(Layer& layer, const std::vector<net_detail::CloudPlan>& plans,
                             size_t l, const nn::Tensor& f_prev, size_t batch, bool training) {
        // merge the per-cloud plans into one batched plan
        net_detail::LayerPlan merged;
        const net_detail::LayerPlan& first = plans[0].layers[l];
        merged.rows = first.rows;
        const size_t reps = first.rep_index.size();
        const size_t prev_count = plans[0].level_points[l].size();
        merged.rep_index.resize(batch * reps);
        merged.nbr_index.resize(batch * reps * merged.rows);
        merged.features.resize(batch * first.features.size());
        for (size_t b = 0; b < batch; ++b) {
            const net_detail::LayerPlan& lp = plans[b].layers[l];
            if (lp.rep_index.size() != reps || lp.rows != merged.rows)
                throw std::logic_error("layer_forward: ragged batch");
            for (size_t i = 0; i < reps; ++i) merged.rep_index[b * reps + i] = lp.rep_index[i];
            for (size_t i = 0; i < lp.nbr_index.size(); ++i)
                merged.nbr_index[b * reps * merged.rows + i] = b * prev_count + lp.nbr_index[i];
            std::copy(lp.features.begin(), lp.features.end(),
                      merged.features.begin() + std::ptrdiff_t(b * first.features.size()));
        }
        return operator_forward(layer, merged, f_prev, training);
    }

    /// Inverse-distance-weighted 3-nearest interpolation from coarse
    /// points to fine points.
    nn::Tensor interpolate_to(const nn::Tensor& coarse_feats, const std::vector<Vec3>& coarse_pts,
                              const std::vector<Vec3>& fine_pts) {
        std::vector<std::vector<size_t>> idx(fine_pts.size());
        std::vector<std::vector<double>> w(fine_pts.size());
        const size_t k = std::min<size_t>(3, coarse_pts.size());
        for (size_t i = 0; i < fine_pts.size(); ++i) {
            IndexSet nn3 = knn_points(coarse_pts, fine_pts[i], k);
            double total = 0.0;
            for (size_t j : nn3) {
                double d = norm(coarse_pts[j] - fine_pts[i]);
                double wi = 1.0 / (d + 1e-8);
                idx[i].push_back(j);
                w[i].push_back(wi);
                total += wi;
            }
            for (double& wi : w[i]) wi /= total;
        }
        return nn::interpolate_rows(coarse_feats, std::move(idx), std::move(w));
    }
};

/// Freestanding inverse-distance feature interpolation (decoder building
/// block, exposed for tests and the harness).
inline std::vector<std::vector<double>> feature_interpolate(
    const std::vector<Vec3>& coarse_pts, const std::vector<std::vector<double>>& coarse_feats,
    const std::vector<Vec3>& fine_pts) {
    if (coarse_pts.size() != coarse_feats.size())
        throw std::invalid_argument("feature_interpolate: point/feature mismatch");
    if (coarse_pts.empty()) throw std::invalid_argument("feature_interpolate: empty coarse set");
    const size_t c = coarse_feats[0].size();
    const size_t k = std::min<size_t>(3, coarse_pts.size());
    std::vector<std::vector<double>> out(fine_pts.size(), std::vector<double>(c, 0.0));
    for (size_t i = 0; i < fine_pts.size(); ++i) {
        IndexSet nn3 = knn_points(coarse_pts, fine_pts[i], k);
        double total = 0.0;
        std::vector<double> wi(nn3.size());
        for (size_t j = 0; j < nn3.size(); ++j) {
            wi[j] = 1.0 / (norm(coarse_pts[nn3[j]] - fine_pts[i]) + 1e-8);
            total += wi[j];
        }
        for (size_t j = 0; j < nn3.size(); ++j)
            for (size_t ch = 0; ch < c; ++ch) out[i][ch] += wi[j] / total * coarse_feats[nn3[j]][ch];
    }
    return out;
}

}  // namespace riconv

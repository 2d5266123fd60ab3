#pragma once

#include "riconv/dataset.hpp"
#include "riconv/network.hpp"

namespace riconv {

struct TrainOptions {
    size_t epochs = 60;
    size_t batch = 16;
    double lr = 1e-3;
    RotationMode augment = RotationMode::none;
    uint64_t seed = 1;
    bool verbose = false;
};

struct EpochRecord {
    size_t epoch = 0;
    double train_loss = 0.0;
    double heldout_accuracy = -1.0;  // -1 when no held-out split was given
};

struct EvalOptions {
    RotationMode mode = RotationMode::none;
    size_t trials = 1;
    uint64_t seed = 1;
    double noise_sigma = 0.0;  // test-time noise, applied after rotation
};

struct EvalResult {
    double metric = 0.0;             // accuracy (classification) / mIoU (segmentation)
    std::vector<double> per_class;   // per-class recall or IoU
    size_t degenerate_samples = 0;
    size_t evaluated = 0;
};

namespace train_detail {

inline uint64_t sample_seed(uint64_t base, uint64_t pass, uint64_t index, uint64_t stream) {
    return derive_seed(derive_seed(derive_seed(base, stream), pass), index);
}

inline PointCloud perturbed_sample(const PointCloud& cloud, RotationMode mode, double noise_sigma,
                                   uint64_t base, uint64_t pass, uint64_t index) {
    PointCloud out = cloud;
    if (mode != RotationMode::none) {
        RigidTransform rot = random_rotation(mode, sample_seed(base, pass, index, 0x21));
        out = apply_rigid_transform(out, rot);
    }
    if (noise_sigma > 0)
        out = add_gaussian_noise(out, noise_sigma, sample_seed(base, pass, index, 0x22));
    return out;
}

}  // namespace train_detail

inline EvalResult evaluate_classifier(RiconvNet& net, const Dataset& data, const EvalOptions& opt) {
    if (data.samples.empty()) throw std::invalid_argument("evaluate_classifier: empty dataset");
    const size_t k = net.config().class_count;
    std::vector<size_t> correct_per_class(k, 0), total_per_class(k, 0);
    size_t correct = 0, total = 0, degenerate = 0;

    const size_t chunk = 32;
    for (size_t trial = 0; trial < opt.trials; ++trial) {
        for (size_t start = 0; start < data.samples.size(); start += chunk) {
            size_t end = std::min(start + chunk, data.samples.size());
            std::vector<PointCloud> rotated;
            std::vector<const PointCloud*> batch;
            std::vector<int> labels;
            for (size_t i = start; i < end; ++i) {
                rotated.push_back(train_detail::perturbed_sample(data.samples[i], opt.mode,
                                                                 opt.noise_sigma, opt.seed, trial, i));
                labels.push_back(data.samples[i].label);
            }
            for (const PointCloud& c : rotated) batch.push_back(&c);
            std::vector<char> degenerate_flags;
            nn::Tensor logits = net.forward_classify(batch, false, &degenerate_flags);
            for (size_t b = 0; b < batch.size(); ++b) {
                const double* row = logits.values().data() + b * k;
                size_t arg = 0;
                for (size_t j = 1; j < k; ++j)
                    if (row[j] > row[arg]) arg = j;
                size_t label = size_t(labels[b]);
                if (label >= k) throw std::out_of_range("evaluate_classifier: label out of range");
                total += 1;
                total_per_class[label] += 1;
                if (arg == label) {
                    correct += 1;
                    correct_per_class[label] += 1;
                }
                if (degenerate_flags[b]) degenerate += 1;
            }
        }
    }

    EvalResult r;
    r.metric = double(correct) / double(total);
    r.per_class.resize(k, 0.0);
    for (size_t c = 0; c < k; ++c)
        r.per_class[c] = total_per_class[c] ? double(correct_per_class[c]) / double(total_per_class[c]) : 0.0;
    r.degenerate_samples = degenerate;
    r.evaluated = total;
    return r;
}

inline std::vector<EpochRecord> train_classifier(RiconvNet& net, const Dataset& train,
                                                 const Dataset* heldout, const TrainOptions& opt) {
    if (train.samples.empty()) throw std::invalid_argument("train_classifier: empty dataset");
    if (opt.batch > train.samples.size())
        throw std::invalid_argument("train_classifier: batch larger than dataset");
    for (const PointCloud& c : train.samples)
        if (c.label < 0 || size_t(c.label) >= net.config().class_count)
            throw std::out_of_range("train_classifier: label outside the class count");

    auto params = net.params().trainable();
    Rng shuffle_rng(derive_seed(opt.seed, 0x5f1e));
    std::vector<EpochRecord> records;

    for (size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        std::vector<size_t> order(train.samples.size());
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start + 2 <= order.size(); start += opt.batch) {
            size_t end = std::min(start + opt.batch, order.size());
            if (end - start < 2) break;  // batch norm needs two rows
            std::vector<PointCloud> rotated;
            std::vector<const PointCloud*> batch;
            std::vector<int> labels;
            for (size_t i = start; i < end; ++i) {
                size_t idx = order[i];
                rotated.push_back(train_detail::perturbed_sample(train.samples[idx], opt.augment,
                                                                 0.0, opt.seed, epoch, idx));
                labels.push_back(train.samples[idx].label);
            }
            for (const PointCloud& c : rotated) batch.push_back(&c);

            net.params().zero_grad();
            nn::Tensor logits = net.forward_classify(batch, true);
            nn::Tensor loss = nn::softmax_cross_entropy(logits, labels);
            if (!std::isfinite(loss.values()[0]))
                throw std::runtime_error("train_classifier: non-finite loss");
            loss.backward();
            nn::adam_step(params, opt.lr);
            loss_sum += loss.values()[0];
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = batches ? loss_sum / double(batches) : 0.0;
        if (heldout) {
            EvalOptions ev;
            ev.mode = opt.augment;
            ev.trials = 1;
            ev.seed = derive_seed(opt.seed, 0xacc0 + epoch);
            rec.heldout_accuracy = evaluate_classifier(net, *heldout, ev).metric;
        }
        if (opt.verbose)
            std::fprintf(stderr, "epoch %zu loss %.4f heldout %.4f\n", epoch, rec.train_loss,
                         rec.heldout_accuracy);
        records.push_back(rec);
    }
    return records;
}

inline EvalResult evaluate_segmenter(RiconvNet& net, const std::vector<SegSample>& data,
                                     const EvalOptions& opt) {
    if (data.empty()) throw std::invalid_argument("evaluate_segmenter: empty dataset");
    const size_t k = net.config().class_count;
    std::vector<size_t> tp(k, 0), fp(k, 0), fn(k, 0);
    size_t degenerate = 0;

    for (size_t trial = 0; trial < opt.trials; ++trial) {
        for (size_t i = 0; i < data.size(); ++i) {
            PointCloud cloud = train_detail::perturbed_sample(data[i].cloud, opt.mode,
                                                              opt.noise_sigma, opt.seed, trial, i);
            bool flag = false;
            nn::Tensor scores = net.forward_segment(cloud, false, &flag);
            if (flag) ++degenerate;
            const size_t n = cloud.size();
            for (size_t p = 0; p < n; ++p) {
                const double* row = scores.values().data() + p * k;
                size_t arg = 0;
                for (size_t j = 1; j < k; ++j)
                    if (row[j] > row[arg]) arg = j;
                size_t label = size_t(data[i].point_labels[p]);
                if (arg == label) {
                    tp[label] += 1;
                } else {
                    fp[arg] += 1;
                    fn[label] += 1;
                }
            }
        }
    }

    EvalResult r;
    r.per_class.resize(k, 0.0);
    double iou_sum = 0.0;
    size_t classes_present = 0;
    for (size_t c = 0; c < k; ++c) {
        size_t uni = tp[c] + fp[c] + fn[c];
        if (uni == 0) continue;
        r.per_class[c] = double(tp[c]) / double(uni);
        iou_sum += r.per_class[c];
        ++classes_present;
    }
    r.metric = classes_present ? iou_sum / double(classes_present) : 0.0;
    r.degenerate_samples = degenerate;
    r.evaluated = data.size() * opt.trials;
    return r;
}

inline std::vector<EpochRecord> train_segmenter(RiconvNet& net, const std::vector<SegSample>& train,
                                                const std::vector<SegSample>* heldout,
                                                const TrainOptions& opt) {
    if (train.empty()) throw std::invalid_argument("train_segmenter: empty dataset");
    auto params = net.params().trainable();
    Rng shuffle_rng(derive_seed(opt.seed, 0x5e65));
    std::vector<EpochRecord> records;

    for (size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        std::vector<size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t seen = 0;
        net.params().zero_grad();
        size_t in_batch = 0;
        for (size_t i = 0; i < order.size(); ++i) {
            size_t idx = order[i];
            PointCloud cloud = train_detail::perturbed_sample(train[idx].cloud, opt.augment, 0.0,
                                                              opt.seed, epoch, idx);
            nn::Tensor scores = net.forward_segment(cloud, true);
            nn::Tensor loss = nn::softmax_cross_entropy(scores, train[idx].point_labels);
            if (!std::isfinite(loss.values()[0]))
                throw std::runtime_error("train_segmenter: non-finite loss");
            loss.backward();
            loss_sum += loss.values()[0];
            ++seen;
            if (++in_batch == opt.batch || i + 1 == order.size()) {
                nn::adam_step(params, opt.lr);
                net.params().zero_grad();
                in_batch = 0;
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = seen ? loss_sum / double(seen) : 0.0;
        if (heldout) {
            EvalOptions ev;
            ev.mode = opt.augment;
            ev.seed = derive_seed(opt.seed, 0xacc1 + epoch);
            rec.heldout_accuracy = evaluate_segmenter(net, *heldout, ev).metric;
        }
        records.push_back(rec);
    }
    return records;
}

}  // namespace riconv

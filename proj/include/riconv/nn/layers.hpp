#pragma once

#include <cstring>
#include <fstream>
#include <map>

#include "riconv/nn/tensor.hpp"

namespace riconv::nn {

/// Owns the named parameters of a network. Addresses are stable for the
/// lifetime of the store; iteration order is the name order, which keeps
/// optimizer updates and checkpoints deterministic.
class ParameterStore {
public:
    Parameter& create(const std::string& name, Shape shape, bool trainable = true) {
        if (params_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
        auto p = std::make_unique<Parameter>();
        p->name = name;
        p->shape = std::move(shape);
        size_t n = shape_product(p->shape);
        p->value.assign(n, 0.0);
        p->grad.assign(n, 0.0);
        p->trainable = trainable;
        if (trainable) {
            p->moment1.assign(n, 0.0);
            p->moment2.assign(n, 0.0);
        }
        Parameter& ref = *p;
        params_.emplace(name, std::move(p));
        return ref;
    }

    Parameter& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
        return *it->second;
    }

    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    std::vector<Parameter*> trainable() {
        std::vector<Parameter*> out;
        for (auto& [name, p] : params_)
            if (p->trainable) out.push_back(p.get());
        return out;
    }

    std::vector<Parameter*> all() {
        std::vector<Parameter*> out;
        for (auto& [name, p] : params_) out.push_back(p.get());
        return out;
    }

    size_t trainable_count() const {
        size_t n = 0;
        for (const auto& [name, p] : params_)
            if (p->trainable) n += p->size();
        return n;
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p->zero_grad();
    }

    double grad_norm() const {
        double s = 0.0;
        for (const auto& [name, p] : params_)
            if (p->trainable)
                for (double g : p->grad) s += g * g;
        return std::sqrt(s);
    }

    size_t count() const { return params_.size(); }

private:
    std::map<std::string, std::unique_ptr<Parameter>> params_;
};

/// Kernel/weight init: uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)).
inline void init_uniform_fanin(Parameter& p, size_t fan_in, Rng& rng) {
    double bound = std::sqrt(1.0 / double(std::max<size_t>(fan_in, 1)));
    for (double& v : p.value) v = rng.uniform(-bound, bound);
}

/// Batch normalization over every leading axis, per trailing channel.
/// Training mode uses batch statistics (biased variance) and folds them
/// into the running estimates with momentum 0.9; eval mode uses the
/// running estimates. Training needs at least two rows.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         Parameter& running_mean, Parameter& running_var, bool training,
                         double momentum = 0.9, double eps = 1e-5) {
    if (x.shape().empty()) throw ShapeError("batch_norm: scalar input");
    const size_t c = x.shape().back();
    if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c)
        throw ShapeError("batch_norm: channel mismatch");
    const size_t rows = x.size() / c;

    auto n = detail::make_node(x.shape(), {x.handle(), gamma.handle(), beta.handle()});
    auto mean = std::make_shared<std::vector<double>>(c, 0.0);
    auto var = std::make_shared<std::vector<double>>(c, 0.0);

    if (training) {
        if (rows < 2) throw std::invalid_argument("batch_norm: training needs a batch of >= 2");
        for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < c; ++j) (*mean)[j] += x.values()[r * c + j];
        for (size_t j = 0; j < c; ++j) (*mean)[j] /= double(rows);
        for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < c; ++j) {
                double d = x.values()[r * c + j] - (*mean)[j];
                (*var)[j] += d * d;
            }
        for (size_t j = 0; j < c; ++j) (*var)[j] /= double(rows);
        for (size_t j = 0; j < c; ++j) {
            running_mean.value[j] = momentum * running_mean.value[j] + (1 - momentum) * (*mean)[j];
            running_var.value[j] = momentum * running_var.value[j] + (1 - momentum) * (*var)[j];
        }
    } else {
        *mean = running_mean.value;
        *var = running_var.value;
    }

    auto xhat = std::make_shared<std::vector<double>>(x.size());
    for (size_t r = 0; r < rows; ++r)
        for (size_t j = 0; j < c; ++j) {
            double inv = 1.0 / std::sqrt((*var)[j] + eps);
            (*xhat)[r * c + j] = (x.values()[r * c + j] - (*mean)[j]) * inv;
            n->value[r * c + j] = gamma.values()[j] * (*xhat)[r * c + j] + beta.values()[j];
        }

    if (n->needs_grad) {
        n->backward = [rows, c, training, eps, mean, var, xhat](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            detail::Node& gn = *self.parents[1];
            detail::Node& bn = *self.parents[2];
            // channel-wise reductions of the upstream gradient
            std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < c; ++j) {
                    double dy = self.grad[r * c + j];
                    sum_dy[j] += dy;
                    sum_dy_xhat[j] += dy * (*xhat)[r * c + j];
                }
            if (gn.needs_grad)
                for (size_t j = 0; j < c; ++j) gn.grad[j] += sum_dy_xhat[j];
            if (bn.needs_grad)
                for (size_t j = 0; j < c; ++j) bn.grad[j] += sum_dy[j];
            if (!xn.needs_grad) return;
            for (size_t j = 0; j < c; ++j) {
                double inv = 1.0 / std::sqrt((*var)[j] + eps);
                double g = gn.value[j];
                if (training) {
                    // d/dx of the batch-statistics normalization
                    for (size_t r = 0; r < rows; ++r) {
                        double dy = self.grad[r * c + j];
                        double xh = (*xhat)[r * c + j];
                        xn.grad[r * c + j] += g * inv *
                            (dy - sum_dy[j] / double(rows) - xh * sum_dy_xhat[j] / double(rows));
                    }
                } else {
                    for (size_t r = 0; r < rows; ++r)
                        xn.grad[r * c + j] += self.grad[r * c + j] * g * inv;
                }
            }
        };
    }
    return Tensor(std::move(n));
}

/// One Adam update over the given parameters; gradients are left in place
/// (call ParameterStore::zero_grad before the next accumulation).
inline void adam_step(const std::vector<Parameter*>& params, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        p->step += 1;
        double bc1 = 1.0 - std::pow(beta1, double(p->step));
        double bc2 = 1.0 - std::pow(beta2, double(p->step));
        for (size_t i = 0; i < p->size(); ++i) {
            double g = p->grad[i];
            p->moment1[i] = beta1 * p->moment1[i] + (1 - beta1) * g;
            p->moment2[i] = beta2 * p->moment2[i] + (1 - beta2) * g * g;
            double mhat = p->moment1[i] / bc1;
            double vhat = p->moment2[i] / bc2;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// ---- checkpoint io ----------------------------------------------------
// magic "RCKP", version u32 = 1, count u32, then per parameter in name
// order: name(u32 + bytes), trainable u8, ndim u32, dims u64[], values
// f64[], and for trainable entries the Adam moments and step. All
// little-endian, values round-trip bit exact.

namespace ckpt_detail {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

inline void put_doubles(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 8));
}

inline void get_doubles(std::istream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 8));
}

}  // namespace ckpt_detail

inline void save_checkpoint(ParameterStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write("RCKP", 4);
    ckpt_detail::put<uint32_t>(out, 1);
    auto params = store.all();
    ckpt_detail::put<uint32_t>(out, uint32_t(params.size()));
    for (Parameter* p : params) {
        ckpt_detail::put<uint32_t>(out, uint32_t(p->name.size()));
        out.write(p->name.data(), std::streamsize(p->name.size()));
        ckpt_detail::put<uint8_t>(out, p->trainable ? 1 : 0);
        ckpt_detail::put<uint32_t>(out, uint32_t(p->shape.size()));
        for (size_t d : p->shape) ckpt_detail::put<uint64_t>(out, d);
        ckpt_detail::put_doubles(out, p->value);
        if (p->trainable) {
            ckpt_detail::put_doubles(out, p->moment1);
            ckpt_detail::put_doubles(out, p->moment2);
            ckpt_detail::put<uint64_t>(out, p->step);
        }
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

/// Load values (and moments) into an existing store; every checkpoint
/// entry must match a parameter with the same name and shape.
inline void load_checkpoint(ParameterStore& store, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RCKP", 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    uint32_t version = ckpt_detail::get<uint32_t>(in);
    if (version != 1) throw std::runtime_error("load_checkpoint: unsupported version");
    uint32_t count = ckpt_detail::get<uint32_t>(in);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t len = ckpt_detail::get<uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        uint8_t trainable = ckpt_detail::get<uint8_t>(in);
        uint32_t ndim = ckpt_detail::get<uint32_t>(in);
        Shape shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = size_t(ckpt_detail::get<uint64_t>(in));
        Parameter& p = store.at(name);
        if (p.shape != shape || (p.trainable != (trainable != 0)))
            throw std::runtime_error("load_checkpoint: mismatched entry " + name);
        ckpt_detail::get_doubles(in, p.value);
        if (trainable) {
            ckpt_detail::get_doubles(in, p.moment1);
            ckpt_detail::get_doubles(in, p.moment2);
            p.step = size_t(ckpt_detail::get<uint64_t>(in));
        }
        if (!in) throw std::runtime_error("load_checkpoint: truncated at " + name);
    }
}

}  // namespace riconv::nn

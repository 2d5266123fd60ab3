#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "riconv/core.hpp"

namespace riconv::nn {

using Shape = std::vector<size_t>;

inline size_t shape_product(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_string(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A named dense array with persistent gradient and Adam state. Networks
/// own Parameters through a ParameterStore; tensors reference them.
struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> moment1, moment2;
    size_t step = 0;
    bool trainable = true;

    size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    Parameter* param = nullptr;
    bool needs_grad = false;

    size_t size() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

/// Value-semantic handle to a node of the reverse-mode tape.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> values) {
        auto n = std::make_shared<detail::Node>();
        if (shape_product(shape) != values.size())
            throw ShapeError("constant: shape/value mismatch " + shape_string(shape));
        n->shape = std::move(shape);
        n->value = std::move(values);
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape) {
        size_t total = shape_product(shape);
        return constant(std::move(shape), std::vector<double>(total, 0.0));
    }

    /// Leaf bound to a parameter; backward accumulates into param.grad.
    static Tensor leaf(Parameter& p) {
        auto n = std::make_shared<detail::Node>();
        n->shape = p.shape;
        n->value = p.value;
        n->param = &p;
        n->needs_grad = p.trainable;
        if (p.trainable) {
            n->backward = [](detail::Node& self) {
                for (size_t i = 0; i < self.size(); ++i) self.param->grad[i] += self.grad[i];
            };
        }
        return Tensor(std::move(n));
    }

    bool valid() const { return bool(node_); }
    const Shape& shape() const { return node_->shape; }
    const std::vector<double>& values() const { return node_->value; }
    size_t size() const { return node_->size(); }
    bool needs_grad() const { return node_->needs_grad; }
    const std::vector<double>& grad() const { return node_->grad; }

    /// Run reverse-mode accumulation from this (scalar or any-shape) node,
    /// seeding with d(self)/d(self) = 1.
    void backward() const {
        std::vector<detail::Node*> order;
        std::unordered_set<detail::Node*> seen;
        std::vector<std::pair<detail::Node*, size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                detail::Node* p = n->parents[next++].get();
                if (p->needs_grad && seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        for (detail::Node* n : order) n->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), 1.0);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward) (*it)->backward(**it);
    }

    detail::Node* node() const { return node_.get(); }
    std::shared_ptr<detail::Node> handle() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline std::shared_ptr<Node> make_node(Shape shape, std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.resize(shape_product(n->shape));
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->needs_grad) n->needs_grad = true;
    return n;
}

}  // namespace detail

inline bool all_finite(const Tensor& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

/// y = x W + b over the trailing axis: x [..., in], W [in, out], b [out].
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape().empty() || w.shape().size() != 2 || b.shape().size() != 1)
        throw ShapeError("affine: bad ranks");
    const size_t in = w.shape()[0], out = w.shape()[1];
    if (x.shape().back() != in || b.shape()[0] != out)
        throw ShapeError("affine: dimension mismatch x" + shape_string(x.shape()) + " w" +
                         shape_string(w.shape()));
    const size_t rows = x.size() / in;

    Shape out_shape = x.shape();
    out_shape.back() = out;
    auto n = detail::make_node(out_shape, {x.handle(), w.handle(), b.handle()});

    const double* xv = x.values().data();
    const double* wv = w.values().data();
    const double* bv = b.values().data();
    double* yv = n->value.data();
    for (size_t r = 0; r < rows; ++r) {
        double* yr = yv + r * out;
        for (size_t o = 0; o < out; ++o) yr[o] = bv[o];
        const double* xr = xv + r * in;
        for (size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            if (xi == 0.0) continue;
            const double* wi = wv + i * out;
            for (size_t o = 0; o < out; ++o) yr[o] += xi * wi[o];
        }
    }

    if (n->needs_grad) {
        n->backward = [rows, in, out](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            detail::Node& wn = *self.parents[1];
            detail::Node& bn = *self.parents[2];
            const double* g = self.grad.data();
            if (xn.needs_grad) {
                double* gx = xn.grad.data();
                const double* wv2 = wn.value.data();
                for (size_t r = 0; r < rows; ++r)
                    for (size_t i = 0; i < in; ++i) {
                        const double* wi = wv2 + i * out;
                        const double* gr = g + r * out;
                        double acc = 0.0;
                        for (size_t o = 0; o < out; ++o) acc += gr[o] * wi[o];
                        gx[r * in + i] += acc;
                    }
            }
            if (wn.needs_grad) {
                double* gw = wn.grad.data();
                const double* xv2 = xn.value.data();
                for (size_t r = 0; r < rows; ++r) {
                    const double* xr = xv2 + r * in;
                    const double* gr = g + r * out;
                    for (size_t i = 0; i < in; ++i) {
                        const double xi = xr[i];
                        if (xi == 0.0) continue;
                        double* gwi = gw + i * out;
                        for (size_t o = 0; o < out; ++o) gwi[o] += xi * gr[o];
                    }
                }
            }
            if (bn.needs_grad) {
                double* gb = bn.grad.data();
                for (size_t r = 0; r < rows; ++r) {
                    const double* gr = g + r * out;
                    for (size_t o = 0; o < out; ++o) gb[o] += gr[o];
                }
            }
        };
    }
    return Tensor(std::move(n));
}

inline Tensor relu(const Tensor& x) {
    auto n = detail::make_node(x.shape(), {x.handle()});
    for (size_t i = 0; i < x.size(); ++i) n->value[i] = x.values()[i] > 0 ? x.values()[i] : 0.0;
    if (n->needs_grad) {
        n->backward = [](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            if (!xn.needs_grad) return;
            for (size_t i = 0; i < self.size(); ++i)
                if (xn.value[i] > 0) xn.grad[i] += self.grad[i];
        };
    }
    return Tensor(std::move(n));
}

/// y = x .* w with w broadcast over the leading axes of x; w's shape must
/// equal the trailing axes of x.
inline Tensor elementwise_scale(const Tensor& x, const Tensor& w) {
    const size_t wn = w.size();
    if (wn == 0 || x.size() % wn != 0)
        throw ShapeError("elementwise_scale: w does not tile x");
    const size_t k = w.shape().size();
    if (x.shape().size() < k ||
        !std::equal(w.shape().begin(), w.shape().end(), x.shape().end() - std::ptrdiff_t(k)))
        throw ShapeError("elementwise_scale: w must match the trailing axes of x");

    auto n = detail::make_node(x.shape(), {x.handle(), w.handle()});
    const size_t rows = x.size() / wn;
    for (size_t r = 0; r < rows; ++r)
        for (size_t i = 0; i < wn; ++i)
            n->value[r * wn + i] = x.values()[r * wn + i] * w.values()[i];

    if (n->needs_grad) {
        n->backward = [rows, wn](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            detail::Node& wnd = *self.parents[1];
            if (xn.needs_grad)
                for (size_t r = 0; r < rows; ++r)
                    for (size_t i = 0; i < wn; ++i)
                        xn.grad[r * wn + i] += self.grad[r * wn + i] * wnd.value[i];
            if (wnd.needs_grad)
                for (size_t r = 0; r < rows; ++r)
                    for (size_t i = 0; i < wn; ++i)
                        wnd.grad[i] += self.grad[r * wn + i] * xn.value[r * wn + i];
        };
    }
    return Tensor(std::move(n));
}

/// Valid cross-correlation along the middle (ordered) axis.
/// x [G, L, C], kernel [M, C, k], bias [M] -> [G, L - k + 1, M].
inline Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    if (x.shape().size() != 3 || kernel.shape().size() != 3 || bias.shape().size() != 1)
        throw ShapeError("conv1d: bad ranks");
    const size_t g = x.shape()[0], len = x.shape()[1], c = x.shape()[2];
    const size_t m = kernel.shape()[0], kc = kernel.shape()[1], k = kernel.shape()[2];
    if (kc != c || bias.shape()[0] != m) throw ShapeError("conv1d: channel mismatch");
    if (k != 1 && k != 3 && k != 5 && k != 7) throw ShapeError("conv1d: kernel size must be 1,3,5, or 7");
    if (len < k) throw ShapeError("conv1d: sequence shorter than the kernel");
    const size_t lo = len - k + 1;

    auto n = detail::make_node({g, lo, m}, {x.handle(), kernel.handle(), bias.handle()});
    const double* xv = x.values().data();
    const double* kv = kernel.values().data();
    const double* bv = bias.values().data();
    double* yv = n->value.data();
    for (size_t gi = 0; gi < g; ++gi)
        for (size_t l = 0; l < lo; ++l) {
            double* yr = yv + (gi * lo + l) * m;
            for (size_t o = 0; o < m; ++o) yr[o] = bv[o];
            for (size_t t = 0; t < k; ++t) {
                const double* xr = xv + (gi * len + l + t) * c;
                for (size_t ci = 0; ci < c; ++ci) {
                    const double xval = xr[ci];
                    if (xval == 0.0) continue;
                    for (size_t o = 0; o < m; ++o) yr[o] += xval * kv[(o * c + ci) * k + t];
                }
            }
        }

    if (n->needs_grad) {
        n->backward = [g, len, c, m, k, lo](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            detail::Node& kn = *self.parents[1];
            detail::Node& bn = *self.parents[2];
            const double* gv = self.grad.data();
            for (size_t gi = 0; gi < g; ++gi)
                for (size_t l = 0; l < lo; ++l) {
                    const double* gr = gv + (gi * lo + l) * m;
                    if (bn.needs_grad)
                        for (size_t o = 0; o < m; ++o) bn.grad[o] += gr[o];
                    for (size_t t = 0; t < k; ++t) {
                        const size_t xoff = (gi * len + l + t) * c;
                        for (size_t ci = 0; ci < c; ++ci) {
                            double gx_acc = 0.0;
                            for (size_t o = 0; o < m; ++o) {
                                const double kvv = kn.value[(o * c + ci) * k + t];
                                gx_acc += gr[o] * kvv;
                                if (kn.needs_grad)
                                    kn.grad[(o * c + ci) * k + t] += gr[o] * xn.value[xoff + ci];
                            }
                            if (xn.needs_grad) xn.grad[xoff + ci] += gx_acc;
                        }
                    }
                }
        };
    }
    return Tensor(std::move(n));
}

/// Per-channel max over the middle (set) axis: [G, L, C] -> [G, C].
/// Gradient routes to the first argmax along L.
inline Tensor maxpool_set(const Tensor& x) {
    if (x.shape().size() != 3) throw ShapeError("maxpool_set: expected [G, L, C]");
    const size_t g = x.shape()[0], len = x.shape()[1], c = x.shape()[2];
    if (len < 1) throw ShapeError("maxpool_set: empty set axis");

    auto n = detail::make_node({g, c}, {x.handle()});
    auto argmax = std::make_shared<std::vector<size_t>>(g * c);
    const double* xv = x.values().data();
    for (size_t gi = 0; gi < g; ++gi)
        for (size_t ci = 0; ci < c; ++ci) {
            size_t best = 0;
            double bv = xv[(gi * len) * c + ci];
            for (size_t l = 1; l < len; ++l) {
                double v = xv[(gi * len + l) * c + ci];
                if (v > bv) {
                    bv = v;
                    best = l;
                }
            }
            n->value[gi * c + ci] = bv;
            (*argmax)[gi * c + ci] = best;
        }

    if (n->needs_grad) {
        n->backward = [g, len, c, argmax](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            if (!xn.needs_grad) return;
            for (size_t gi = 0; gi < g; ++gi)
                for (size_t ci = 0; ci < c; ++ci) {
                    size_t l = (*argmax)[gi * c + ci];
                    xn.grad[(gi * len + l) * c + ci] += self.grad[gi * c + ci];
                }
        };
    }
    return Tensor(std::move(n));
}

/// Concatenate along the trailing axis: [N, C1] ++ [N, C2] -> [N, C1+C2].
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[0] != b.shape()[0])
        throw ShapeError("concat_cols: row mismatch");
    const size_t rows = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    auto n = detail::make_node({rows, ca + cb}, {a.handle(), b.handle()});
    for (size_t r = 0; r < rows; ++r) {
        std::copy_n(a.values().data() + r * ca, ca, n->value.data() + r * (ca + cb));
        std::copy_n(b.values().data() + r * cb, cb, n->value.data() + r * (ca + cb) + ca);
    }
    if (n->needs_grad) {
        n->backward = [rows, ca, cb](detail::Node& self) {
            detail::Node& an = *self.parents[0];
            detail::Node& bn = *self.parents[1];
            for (size_t r = 0; r < rows; ++r) {
                const double* gr = self.grad.data() + r * (ca + cb);
                if (an.needs_grad)
                    for (size_t i = 0; i < ca; ++i) an.grad[r * ca + i] += gr[i];
                if (bn.needs_grad)
                    for (size_t i = 0; i < cb; ++i) bn.grad[r * cb + i] += gr[ca + i];
            }
        };
    }
    return Tensor(std::move(n));
}

/// Row gather: x [R, C], idx values in [0, R) -> [idx.size(), C].
inline Tensor gather_rows(const Tensor& x, std::vector<size_t> idx) {
    if (x.shape().size() != 2) throw ShapeError("gather_rows: expected [R, C]");
    const size_t r = x.shape()[0], c = x.shape()[1];
    for (size_t i : idx)
        if (i >= r) throw std::out_of_range("gather_rows: index out of range");
    auto indices = std::make_shared<std::vector<size_t>>(std::move(idx));
    auto n = detail::make_node({indices->size(), c}, {x.handle()});
    for (size_t i = 0; i < indices->size(); ++i)
        std::copy_n(x.values().data() + (*indices)[i] * c, c, n->value.data() + i * c);
    if (n->needs_grad) {
        n->backward = [c, indices](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            if (!xn.needs_grad) return;
            for (size_t i = 0; i < indices->size(); ++i)
                for (size_t j = 0; j < c; ++j)
                    xn.grad[(*indices)[i] * c + j] += self.grad[i * c + j];
        };
    }
    return Tensor(std::move(n));
}

/// Convex row blend: out[i] = sum_j w[i][j] * x[idx[i][j]].
inline Tensor interpolate_rows(const Tensor& x, std::vector<std::vector<size_t>> idx,
                               std::vector<std::vector<double>> w) {
    if (x.shape().size() != 2) throw ShapeError("interpolate_rows: expected [R, C]");
    if (idx.size() != w.size()) throw ShapeError("interpolate_rows: idx/w mismatch");
    const size_t c = x.shape()[1];
    auto sidx = std::make_shared<std::vector<std::vector<size_t>>>(std::move(idx));
    auto sw = std::make_shared<std::vector<std::vector<double>>>(std::move(w));
    auto n = detail::make_node({sidx->size(), c}, {x.handle()});
    for (size_t i = 0; i < sidx->size(); ++i) {
        double* out = n->value.data() + i * c;
        for (size_t j = 0; j < (*sidx)[i].size(); ++j) {
            const double* src = x.values().data() + (*sidx)[i][j] * c;
            const double wij = (*sw)[i][j];
            for (size_t k = 0; k < c; ++k) out[k] += wij * src[k];
        }
    }
    if (n->needs_grad) {
        n->backward = [c, sidx, sw](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            if (!xn.needs_grad) return;
            for (size_t i = 0; i < sidx->size(); ++i)
                for (size_t j = 0; j < (*sidx)[i].size(); ++j) {
                    double* dst = xn.grad.data() + (*sidx)[i][j] * c;
                    const double wij = (*sw)[i][j];
                    for (size_t k = 0; k < c; ++k) dst[k] += wij * self.grad[i * c + k];
                }
        };
    }
    return Tensor(std::move(n));
}

/// Copying reshape (same element count).
inline Tensor reshape(const Tensor& x, Shape s) {
    if (shape_product(s) != x.size())
        throw ShapeError("reshape: element count mismatch " + shape_string(s));
    auto n = detail::make_node(std::move(s), {x.handle()});
    n->value = x.values();
    if (n->needs_grad) {
        n->backward = [](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            if (!xn.needs_grad) return;
            for (size_t i = 0; i < self.size(); ++i) xn.grad[i] += self.grad[i];
        };
    }
    return Tensor(std::move(n));
}

/// Scalar contraction sum_i c_i x_i (c fixed, not differentiated).
inline Tensor weighted_sum(const Tensor& x, std::vector<double> coeffs) {
    if (coeffs.size() != x.size()) throw ShapeError("weighted_sum: coefficient count mismatch");
    auto sc = std::make_shared<std::vector<double>>(std::move(coeffs));
    auto n = detail::make_node({1}, {x.handle()});
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) acc += (*sc)[i] * x.values()[i];
    n->value[0] = acc;
    if (n->needs_grad) {
        n->backward = [sc](detail::Node& self) {
            detail::Node& xn = *self.parents[0];
            if (!xn.needs_grad) return;
            for (size_t i = 0; i < xn.size(); ++i) xn.grad[i] += self.grad[0] * (*sc)[i];
        };
    }
    return Tensor(std::move(n));
}

/// Mean softmax cross entropy over the batch. logits [B, K].
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape().size() != 2) throw ShapeError("softmax_cross_entropy: expected [B, K]");
    const size_t b = logits.shape()[0], k = logits.shape()[1];
    if (labels.size() != b) throw ShapeError("softmax_cross_entropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || size_t(y) >= k)
            throw std::out_of_range("softmax_cross_entropy: label out of range");

    auto probs = std::make_shared<std::vector<double>>(b * k);
    auto ylab = std::make_shared<std::vector<int>>(labels);
    double loss = 0.0;
    for (size_t i = 0; i < b; ++i) {
        const double* row = logits.values().data() + i * k;
        double mx = row[0];
        for (size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        double logdenom = std::log(denom);
        for (size_t j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - mx) / denom;
        loss += logdenom - (row[size_t(labels[i])] - mx);
    }
    loss /= double(b);

    auto n = detail::make_node({1}, {logits.handle()});
    n->value[0] = loss;
    if (n->needs_grad) {
        n->backward = [b, k, probs, ylab](detail::Node& self) {
            detail::Node& ln = *self.parents[0];
            if (!ln.needs_grad) return;
            const double g = self.grad[0] / double(b);
            for (size_t i = 0; i < b; ++i)
                for (size_t j = 0; j < k; ++j) {
                    double delta = (size_t((*ylab)[i]) == j) ? 1.0 : 0.0;
                    ln.grad[i * k + j] += g * ((*probs)[i * k + j] - delta);
                }
        };
    }
    return Tensor(std::move(n));
}

}  // namespace riconv::nn

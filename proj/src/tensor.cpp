#include "auxcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "auxcl/errors.hpp"

namespace auxcl {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
}

Variable::Variable(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Variable Variable::from_op(Tensor value, std::vector<Variable> inputs,
                           std::function<void(Node&)> backward_fn) {
    Variable out(std::move(value), false);
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Variable& v) { return v.requires_grad(); });
    if (any) {
        out.node_->requires_grad = true;
        for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
        out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
}

void Variable::backward() {
    if (node_->value.size() != 1)
        throw DimensionError("backward() needs a single-element output, got " +
                             shape_str(node_->value.shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order of the tape. The
    // order owns its nodes so releasing inputs below cannot free them early.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{node_, 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first->inputs.size()) {
            std::shared_ptr<Node> child = top.first->inputs[top.second++];
            if (child->requires_grad && seen.insert(child.get()).second)
                stack.emplace_back(std::move(child), 0);
        } else {
            order.push_back(std::move(top.first));
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& n = **it;
        if (n.backward_fn) {
            n.backward_fn(n);
            n.backward_fn = nullptr;
            n.inputs.clear();
        }
    }
}

Parameter::Parameter(Tensor value, bool learnable) : var_(std::move(value), learnable) {}

Parameter::Parameter(const Parameter& other)
    : var_(other.value(), other.learnable()) {}

Parameter& Parameter::operator=(const Parameter& other) {
    if (this != &other) var_ = Variable(other.value(), other.learnable());
    return *this;
}

void Parameter::set_learnable(bool on) { var_.node()->requires_grad = on; }

void Parameter::zero_grad() {
    if (has_grad()) var_.node()->grad.fill(0.0);
}

namespace ops {
namespace {

void require(bool cond, const std::string& what) {
    if (!cond) throw DimensionError(what);
}

// Accumulate into an input's gradient only if it participates in the tape.
Tensor* grad_of(Node& n, std::size_t i) {
    Node& in = *n.inputs[i];
    return in.requires_grad ? &in.grad_buffer() : nullptr;
}

}  // namespace

Variable matmul(const Variable& a, const Variable& b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(0),
            "matmul: incompatible shapes " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor out({m, n}, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = &out[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = &B[p * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return Variable::from_op(std::move(out), {a, b}, [m, k, n](Node& self) {
        const Tensor& G = self.grad;
        const Tensor& A = self.inputs[0]->value;
        const Tensor& B = self.inputs[1]->value;
        if (Tensor* gA = grad_of(self, 0)) {
            // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    const double* grow = &G[i * n];
                    const double* brow = &B[p * n];
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    (*gA)[i * k + p] += s;
                }
        }
        if (Tensor* gB = grad_of(self, 1)) {
            // dB = A^T * G
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = &G[i * n];
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A[i * k + p];
                    if (av == 0.0) continue;
                    double* gbrow = &(*gB)[p * n];
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

Variable add(const Variable& a, const Variable& b) {
    require(a.shape() == b.shape(),
            "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return Variable::from_op(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k)
            if (Tensor* g = grad_of(self, k))
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    });
}

Variable mul(const Variable& a, const Variable& b) {
    require(a.shape() == b.shape(),
            "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return Variable::from_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& A = self.inputs[0]->value;
        const Tensor& B = self.inputs[1]->value;
        if (Tensor* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * B[i];
        if (Tensor* g = grad_of(self, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * A[i];
    });
}

Variable scale(const Variable& x, double factor) {
    Tensor out = x.value();
    for (auto& v : out.data()) v *= factor;
    return Variable::from_op(std::move(out), {x}, [factor](Node& self) {
        if (Tensor* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += factor * self.grad[i];
    });
}

Variable add_row_bias(const Variable& x, const Variable& bias) {
    const Tensor& X = x.value();
    require(X.rank() == 2 && bias.value().rank() == 1 && bias.value().dim(0) == X.dim(1),
            "add_row_bias: " + shape_str(X.shape()) + " + " + shape_str(bias.shape()));
    const std::size_t rows = X.dim(0), cols = X.dim(1);
    Tensor out = X;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias.value()[c];
    return Variable::from_op(std::move(out), {x, bias}, [rows, cols](Node& self) {
        if (Tensor* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (Tensor* g = grad_of(self, 1))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) (*g)[c] += self.grad[r * cols + c];
    });
}

Variable add_channel_bias(const Variable& x, const Variable& bias) {
    const Tensor& X = x.value();
    require(X.rank() == 4 && bias.value().rank() == 1 && bias.value().dim(0) == X.dim(1),
            "add_channel_bias: " + shape_str(X.shape()) + " + " + shape_str(bias.shape()));
    const std::size_t batch = X.dim(0), ch = X.dim(1), plane = X.dim(2) * X.dim(3);
    Tensor out = X;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
            double* p = &out[(b * ch + c) * plane];
            for (std::size_t i = 0; i < plane; ++i) p[i] += bias.value()[c];
        }
    return Variable::from_op(std::move(out), {x, bias}, [batch, ch, plane](Node& self) {
        if (Tensor* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (Tensor* g = grad_of(self, 1))
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t c = 0; c < ch; ++c) {
                    const double* p = &self.grad[(b * ch + c) * plane];
                    double s = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) s += p[i];
                    (*g)[c] += s;
                }
    });
}

Variable relu(const Variable& x) {
    Tensor out = x.value();
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return Variable::from_op(std::move(out), {x}, [](Node& self) {
        if (Tensor* g = grad_of(self, 0)) {
            const Tensor& X = self.inputs[0]->value;
            for (std::size_t i = 0; i < g->size(); ++i)
                if (X[i] > 0.0) (*g)[i] += self.grad[i];
        }
    });
}

Variable reshape(const Variable& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return Variable::from_op(std::move(out), {x}, [](Node& self) {
        if (Tensor* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    });
}

Variable flatten(const Variable& x) {
    require(x.value().rank() >= 1, "flatten: scalar input");
    const std::size_t batch = x.value().dim(0);
    return reshape(x, {batch, batch ? x.value().size() / batch : 0});
}

Variable sum(const Variable& x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    return Variable::from_op(Tensor({1}, {s}), {x}, [](Node& self) {
        if (Tensor* g = grad_of(self, 0))
            for (auto& v : g->data()) v += self.grad[0];
    });
}

Variable conv2d(const Variable& x, const Variable& kernel, std::size_t stride,
                std::size_t padding) {
    const Tensor& X = x.value();
    const Tensor& K = kernel.value();
    require(X.rank() == 4 && K.rank() == 4,
            "conv2d: expects [B,C,H,W] input and [O,C,KH,KW] kernel, got " + shape_str(X.shape()) +
                " and " + shape_str(K.shape()));
    require(X.dim(1) == K.dim(1), "conv2d: channel mismatch " + shape_str(X.shape()) + " vs " +
                                      shape_str(K.shape()));
    require(stride > 0, "conv2d: stride must be positive");
    const std::size_t B = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    const std::size_t O = K.dim(0), KH = K.dim(2), KW = K.dim(3);
    require(H + 2 * padding >= KH && W + 2 * padding >= KW,
            "conv2d: kernel larger than padded input");
    const std::size_t OH = (H + 2 * padding - KH) / stride + 1;
    const std::size_t OW = (W + 2 * padding - KW) / stride + 1;
    require(OH > 0 && OW > 0, "conv2d: empty output");

    Tensor out({B, O, OH, OW}, 0.0);
    const auto ipad = static_cast<std::ptrdiff_t>(padding);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o) {
            double* op = &out[(b * O + o) * OH * OW];
            for (std::size_t c = 0; c < C; ++c) {
                const double* xp = &X[(b * C + c) * H * W];
                const double* kp = &K[(o * C + c) * KH * KW];
                for (std::size_t kh = 0; kh < KH; ++kh)
                    for (std::size_t kw = 0; kw < KW; ++kw) {
                        const double kv = kp[kh * KW + kw];
                        for (std::size_t oh = 0; oh < OH; ++oh) {
                            auto ih = static_cast<std::ptrdiff_t>(oh * stride + kh) - ipad;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t ow = 0; ow < OW; ++ow) {
                                auto iw = static_cast<std::ptrdiff_t>(ow * stride + kw) - ipad;
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                                op[oh * OW + ow] += kv * xp[ih * W + iw];
                            }
                        }
                    }
            }
        }

    return Variable::from_op(
        std::move(out), {x, kernel},
        [=](Node& self) {
            const Tensor& X = self.inputs[0]->value;
            const Tensor& K = self.inputs[1]->value;
            Tensor* gX = grad_of(self, 0);
            Tensor* gK = grad_of(self, 1);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < O; ++o) {
                    const double* gp = &self.grad[(b * O + o) * OH * OW];
                    for (std::size_t c = 0; c < C; ++c) {
                        const std::size_t xoff = (b * C + c) * H * W;
                        const std::size_t koff = (o * C + c) * KH * KW;
                        for (std::size_t kh = 0; kh < KH; ++kh)
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                const double kv = K[koff + kh * KW + kw];
                                double kacc = 0.0;
                                for (std::size_t oh = 0; oh < OH; ++oh) {
                                    auto ih = static_cast<std::ptrdiff_t>(oh * stride + kh) - ipad;
                                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                                    for (std::size_t ow = 0; ow < OW; ++ow) {
                                        auto iw =
                                            static_cast<std::ptrdiff_t>(ow * stride + kw) - ipad;
                                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W))
                                            continue;
                                        const double g = gp[oh * OW + ow];
                                        const std::size_t xi = xoff + ih * W + iw;
                                        kacc += g * X[xi];
                                        if (gX) (*gX)[xi] += g * kv;
                                    }
                                }
                                if (gK) (*gK)[koff + kh * KW + kw] += kacc;
                            }
                    }
                }
        });
}

Variable conv2d(const Variable& x, const Parameter& kernel, std::size_t stride,
                std::size_t padding) {
    return conv2d(x, kernel.var(), stride, padding);
}

Variable max_pool2d(const Variable& x, std::size_t window) {
    const Tensor& X = x.value();
    require(X.rank() == 4, "max_pool2d: expects [B,C,H,W], got " + shape_str(X.shape()));
    require(window > 0 && X.dim(2) >= window && X.dim(3) >= window,
            "max_pool2d: window larger than input");
    const std::size_t B = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    const std::size_t OH = H / window, OW = W / window;
    Tensor out({B, C, OH, OW}, 0.0);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t bc = 0; bc < B * C; ++bc)
        for (std::size_t oh = 0; oh < OH; ++oh)
            for (std::size_t ow = 0; ow < OW; ++ow) {
                std::size_t best = bc * H * W + (oh * window) * W + ow * window;
                for (std::size_t i = 0; i < window; ++i)
                    for (std::size_t j = 0; j < window; ++j) {
                        std::size_t idx = bc * H * W + (oh * window + i) * W + ow * window + j;
                        if (X[idx] > X[best]) best = idx;
                    }
                const std::size_t o = (bc * OH + oh) * OW + ow;
                out[o] = X[best];
                (*argmax)[o] = best;
            }
    return Variable::from_op(std::move(out), {x}, [argmax](Node& self) {
        if (Tensor* g = grad_of(self, 0))
            for (std::size_t o = 0; o < argmax->size(); ++o) (*g)[(*argmax)[o]] += self.grad[o];
    });
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) throw DimensionError("softmax: expects [B,N]");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    Tensor out = logits;
    for (std::size_t r = 0; r < rows; ++r) {
        double* p = &out[r * cols];
        const double mx = *std::max_element(p, p + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            p[c] = std::exp(p[c] - mx);
            z += p[c];
        }
        for (std::size_t c = 0; c < cols; ++c) p[c] /= z;
    }
    return out;
}

Variable softmax_cross_entropy(const Variable& logits, std::span<const int> labels) {
    const Tensor& L = logits.value();
    require(L.rank() == 2, "softmax_cross_entropy: logits must be [B,N], got " + shape_str(L.shape()));
    const std::size_t rows = L.dim(0), cols = L.dim(1);
    require(labels.size() == rows, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                       " labels for " + std::to_string(rows) + " rows");
    require(rows > 0, "softmax_cross_entropy: empty batch");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= cols)
            throw IndexError("softmax_cross_entropy: label " + std::to_string(y) +
                             " outside [0, " + std::to_string(cols) + ")");

    Tensor probs = softmax(L);
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* p = &L[r * cols];
        const double mx = *std::max_element(p, p + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += std::exp(p[c] - mx);
        loss += -(p[labels[r]] - mx - std::log(z));
    }
    loss /= static_cast<double>(rows);

    std::vector<int> ys(labels.begin(), labels.end());
    return Variable::from_op(
        Tensor({1}, {loss}), {logits},
        [probs = std::move(probs), ys = std::move(ys), rows, cols](Node& self) {
            if (Tensor* g = grad_of(self, 0)) {
                const double s = self.grad[0] / static_cast<double>(rows);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) {
                        double d = probs[r * cols + c] - (static_cast<int>(c) == ys[r] ? 1.0 : 0.0);
                        (*g)[r * cols + c] += s * d;
                    }
            }
        });
}

Variable mse(const Variable& a, const Variable& b) {
    require(a.shape() == b.shape(),
            "mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t n = a.value().size();
    require(n > 0, "mse: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    s /= static_cast<double>(n);
    return Variable::from_op(Tensor({1}, {s}), {a, b}, [n](Node& self) {
        const Tensor& A = self.inputs[0]->value;
        const Tensor& B = self.inputs[1]->value;
        const double f = 2.0 * self.grad[0] / static_cast<double>(n);
        if (Tensor* g = grad_of(self, 0))
            for (std::size_t i = 0; i < n; ++i) (*g)[i] += f * (A[i] - B[i]);
        if (Tensor* g = grad_of(self, 1))
            for (std::size_t i = 0; i < n; ++i) (*g)[i] -= f * (A[i] - B[i]);
    });
}

}  // namespace ops

void sgd_step(std::span<Parameter* const> params, double lr) {
    for (Parameter* p : params)
        if (p->learnable() && !p->has_grad())
            throw StateError("sgd_step: learnable parameter has no gradient; run backward() first");
    for (Parameter* p : params) {
        if (!p->learnable()) continue;
        Tensor& v = p->mutable_value();
        const Tensor& g = p->grad();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
        p->zero_grad();
    }
}

}  // namespace auxcl

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace auxcl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. Plain value type; gradients live on the
// autodiff nodes, not here.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }

    // 2-D accessor for [rows, cols] tensors.
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    Tensor reshaped(Shape shape) const;
    void fill(double v);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// One vertex of the dynamic tape. Non-leaf nodes keep their inputs and a
// backward closure until backward() runs, after which both are released.
struct Node {
    Tensor value;
    Tensor grad;  // empty until something accumulates into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer();  // allocates a zero gradient on first use
};

class Variable {
public:
    Variable() = default;
    explicit Variable(Tensor value, bool requires_grad = false);

    static Variable from_op(Tensor value, std::vector<Variable> inputs,
                            std::function<void(Node&)> backward_fn);

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const Tensor& grad() const { return node_->grad; }
    const std::shared_ptr<Node>& node() const { return node_; }

    // Reverse pass from a single-element variable, seeded with 1.
    void backward();

private:
    std::shared_ptr<Node> node_;
};

// Learnable leaf. A frozen parameter does not record gradients and is never
// touched by the optimizer.
class Parameter {
public:
    Parameter() = default;
    explicit Parameter(Tensor value, bool learnable = true);
    // Copies are deep: the copy gets its own tape leaf and no gradient.
    Parameter(const Parameter& other);
    Parameter& operator=(const Parameter& other);
    Parameter(Parameter&&) noexcept = default;
    Parameter& operator=(Parameter&&) noexcept = default;

    const Variable& var() const { return var_; }
    const Tensor& value() const { return var_.value(); }
    Tensor& mutable_value() { return var_.node()->value; }
    bool learnable() const { return var_.node()->requires_grad; }
    void set_learnable(bool on);
    bool has_grad() const { return var_.has_grad(); }
    const Tensor& grad() const { return var_.grad(); }
    void zero_grad();
    void clear_grad() { var_.node()->grad = Tensor(); }

private:
    Variable var_;
};

namespace ops {

// [M,K] x [K,N] -> [M,N]
Variable matmul(const Variable& a, const Variable& b);
Variable add(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& x, double factor);
// [B,N] + bias[N] broadcast over rows.
Variable add_row_bias(const Variable& x, const Variable& bias);
// [B,C,H,W] + bias[C] broadcast over batch and space.
Variable add_channel_bias(const Variable& x, const Variable& bias);
Variable relu(const Variable& x);
Variable reshape(const Variable& x, Shape shape);
Variable flatten(const Variable& x);  // [B,...] -> [B, prod(...)]
Variable sum(const Variable& x);      // -> scalar [1]

// Cross-correlation of x [B,Cin,H,W] with kernel [Cout,Cin,KH,KW], zero
// padding on all sides.
Variable conv2d(const Variable& x, const Variable& kernel, std::size_t stride,
                std::size_t padding);
Variable conv2d(const Variable& x, const Parameter& kernel, std::size_t stride,
                std::size_t padding);
// Non-overlapping window max pooling; ties go to the first element.
Variable max_pool2d(const Variable& x, std::size_t window);

// Mean over the batch of -log softmax(logits)[label].
Variable softmax_cross_entropy(const Variable& logits, std::span<const int> labels);
// Mean of squared elementwise differences.
Variable mse(const Variable& a, const Variable& b);

// Row-wise softmax of a [B,N] tensor (values only).
Tensor softmax(const Tensor& logits);

}  // namespace ops

// p <- p - lr * grad for every learnable parameter, then zero the gradients.
void sgd_step(std::span<Parameter* const> params, double lr);

}  // namespace auxcl

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gaitml {

using shape_t = std::vector<std::size_t>;

std::string shape_str(const shape_t& shape);
std::size_t shape_numel(const shape_t& shape);

namespace detail {

struct node {
    shape_t shape;
    std::vector<double> value;
    std::vector<double> grad; // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<node>> parents;
    std::function<void(node&)> backward_fn;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

} // namespace detail

// Dense row-major float64 tensor taking part in reverse-mode differentiation.
// Copies are cheap handles onto the same storage; operations never mutate
// their inputs, only the grad buffers during backward().
class tensor {
public:
    tensor();

    static tensor zeros(shape_t shape, bool requires_grad = false);
    static tensor full(shape_t shape, double value, bool requires_grad = false);
    static tensor from(shape_t shape, std::vector<double> values, bool requires_grad = false);
    static tensor scalar(double value, bool requires_grad = false);

    const shape_t& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->value.size(); }

    std::span<const double> data() const { return node_->value; }
    // Direct parameter access for optimizers and initializers. Must not be
    // used on tensors that already feed a recorded graph.
    std::span<double> mutable_data() { return node_->value; }

    double item() const;
    double operator()(std::size_t i, std::size_t j) const { return node_->value[i * node_->shape[1] + j]; }
    double operator[](std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    bool has_grad() const { return !node_->grad.empty(); }
    // Gradient buffer; zeros when nothing has been accumulated yet.
    std::vector<double> grad() const;
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.clear(); }

    // Accumulates d(this)/d(leaf) into every reachable leaf with
    // requires_grad. Only valid on single-element tensors.
    void backward() const;

    // Same values, cut from the graph.
    tensor detach() const;

    const char* op_name() const { return node_->op; }
    bool same_storage(const tensor& other) const { return node_ == other.node_; }

    // Internal: builds an op result and wires its backward closure.
    static tensor make_result(const char* op, shape_t shape, std::vector<double> values,
                              std::vector<tensor> parents, std::function<void(detail::node&)> backward_fn);
    detail::node& node() const { return *node_; }

private:
    explicit tensor(std::shared_ptr<detail::node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::node> node_;
};

// -- differentiable operations -------------------------------------------

tensor matmul(const tensor& a, const tensor& b);
// Elementwise sum; b may also be a row vector [n] or [1, n] broadcast over rows of a [m, n].
tensor add(const tensor& a, const tensor& b);
tensor sub(const tensor& a, const tensor& b);
tensor mul(const tensor& a, const tensor& b);
tensor scale(const tensor& a, double factor);
tensor softmax(const tensor& x, std::size_t axis);
tensor layer_norm(const tensor& x, const tensor& gamma, const tensor& beta, double eps = 1e-5);
tensor gelu(const tensor& x);
tensor reshape(const tensor& x, shape_t shape);
tensor transpose(const tensor& x);
tensor slice_rows(const tensor& x, std::size_t begin, std::size_t end);
tensor slice_cols(const tensor& x, std::size_t begin, std::size_t end);
tensor concat_rows(const std::vector<tensor>& parts);
tensor concat_cols(const std::vector<tensor>& parts);
// Column means of a matrix, shape [1, n].
tensor mean_rows(const tensor& x);
tensor sum(const tensor& x);
tensor embedding(const tensor& table, std::span<const std::size_t> indices);
// Weighted mean of per-row softmax cross-entropy: sum_i w_i CE_i / sum_i w_i.
tensor cross_entropy(const tensor& logits, std::span<const std::size_t> targets,
                     std::span<const double> weights = {});
// Rotary position embedding over [N, d] rows split into heads of width
// d / n_heads; coordinate pairs (2i, 2i+1) of each head rotate by
// position * base^(-2i / head_dim).
tensor rope(const tensor& x, std::span<const double> positions, std::size_t n_heads, double base);

// Rotation angle applied to pair `pair` of a head of width `head_dim`.
double rope_angle(double position, std::size_t pair, std::size_t head_dim, double base);

inline tensor linear(const tensor& x, const tensor& weight, const tensor& bias) {
    return add(matmul(x, weight), bias);
}

} // namespace gaitml

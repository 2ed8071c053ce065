#pragma once

#include "gaitml/checkpoint.hpp"
#include "gaitml/rng.hpp"
#include "gaitml/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace gaitml::nn {

// Ordered, named parameter registry. Registration order fixes the
// checkpoint layout and the initialisation draw order.
class param_store {
public:
    explicit param_store(std::uint64_t seed) : rng_(seed) {}

    tensor normal(const std::string& name, shape_t shape, double stddev);
    tensor constant(const std::string& name, shape_t shape, double value);

    tensor& get(const std::string& name);
    const tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    const named_tensors& all() const { return params_; }
    std::size_t parameter_count() const;
    void zero_grad();
    // Copies values from a checkpoint; names and shapes must match exactly.
    void load(const named_tensors& values);

private:
    tensor add(const std::string& name, tensor t);
    rng rng_;
    named_tensors params_;
};

struct linear_layer {
    tensor weight; // [in, out]
    tensor bias;   // [out]

    static linear_layer make(param_store& ps, const std::string& name, std::size_t in, std::size_t out, double stddev);
    tensor operator()(const tensor& x) const { return linear(x, weight, bias); }
};

struct norm_layer {
    tensor gamma;
    tensor beta;

    static norm_layer make(param_store& ps, const std::string& name, std::size_t width);
    tensor operator()(const tensor& x) const { return layer_norm(x, gamma, beta, 1e-5); }
};

// Scaled dot-product attention split into heads by column blocks.
// q [Nq, d], k/v [Nk, d] -> [Nq, d]. When `probs` is non-null it receives one
// [Nq, Nk] row-stochastic matrix per head.
tensor multi_head_attention(const tensor& q, const tensor& k, const tensor& v, std::size_t n_heads,
                            std::vector<tensor>* probs = nullptr);

} // namespace gaitml::nn

#include "gaitml/nn.hpp"

#include "gaitml/errors.hpp"

#include <cmath>

namespace gaitml::nn {

tensor param_store::add(const std::string& name, tensor t) {
    if (contains(name)) throw validation_error("duplicate parameter name " + name);
    params_.emplace_back(name, t);
    return t;
}

tensor param_store::normal(const std::string& name, shape_t shape, double stddev) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng_.normal(0.0, stddev);
    return add(name, tensor::from(std::move(shape), std::move(v), true));
}

tensor param_store::constant(const std::string& name, shape_t shape, double value) {
    return add(name, tensor::full(std::move(shape), value, true));
}

tensor& param_store::get(const std::string& name) {
    for (auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw validation_error("unknown parameter " + name);
}

const tensor& param_store::get(const std::string& name) const {
    for (const auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw validation_error("unknown parameter " + name);
}

bool param_store::contains(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.first == name) return true;
    }
    return false;
}

std::size_t param_store::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.second.size();
    return n;
}

void param_store::zero_grad() {
    for (auto& p : params_) p.second.zero_grad();
}

void param_store::load(const named_tensors& values) {
    if (values.size() != params_.size()) {
        throw validation_error("checkpoint has " + std::to_string(values.size()) + " tensors, model expects " +
                               std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto& [name, src] = values[i];
        auto& [dst_name, dst] = params_[i];
        if (name != dst_name || src.shape() != dst.shape()) {
            throw validation_error("checkpoint tensor " + name + " " + shape_str(src.shape()) +
                                   " does not match model parameter " + dst_name + " " + shape_str(dst.shape()));
        }
        auto out = dst.mutable_data();
        std::copy(src.data().begin(), src.data().end(), out.begin());
    }
}

linear_layer linear_layer::make(param_store& ps, const std::string& name, std::size_t in, std::size_t out,
                                 double stddev) {
    return {ps.normal(name + ".weight", {in, out}, stddev), ps.constant(name + ".bias", {out}, 0.0)};
}

norm_layer norm_layer::make(param_store& ps, const std::string& name, std::size_t width) {
    return {ps.constant(name + ".gamma", {width}, 1.0), ps.constant(name + ".beta", {width}, 0.0)};
}

tensor multi_head_attention(const tensor& q, const tensor& k, const tensor& v, std::size_t n_heads,
                            std::vector<tensor>* probs) {
    const std::size_t d = q.dim(1);
    if (k.dim(1) != d || v.dim(1) != d || k.dim(0) != v.dim(0)) {
        throw dimension_error("attention shapes disagree: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                              ", v " + shape_str(v.shape()));
    }
    if (n_heads == 0 || d % n_heads != 0) throw validation_error("attention width not divisible by head count");
    const std::size_t hd = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<tensor> heads;
    heads.reserve(n_heads);
    if (probs) probs->clear();
    for (std::size_t h = 0; h < n_heads; ++h) {
        const tensor qh = n_heads == 1 ? q : slice_cols(q, h * hd, (h + 1) * hd);
        const tensor kh = n_heads == 1 ? k : slice_cols(k, h * hd, (h + 1) * hd);
        const tensor vh = n_heads == 1 ? v : slice_cols(v, h * hd, (h + 1) * hd);
        const tensor p = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
        if (probs) probs->push_back(p);
        heads.push_back(matmul(p, vh));
    }
    return n_heads == 1 ? heads.front() : concat_cols(heads);
}

} // namespace gaitml::nn

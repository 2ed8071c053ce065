#include "gaitml/tensor.hpp"

#include "gaitml/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace gaitml {

std::string shape_str(const shape_t& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const shape_t& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

namespace {

void check_shape(const shape_t& shape) {
    for (auto d : shape) {
        if (d == 0) throw dimension_error("tensor dimensions must be positive, got " + shape_str(shape));
    }
}

void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) throw numeric_error(std::string("non-finite value produced by ") + op);
    }
}

void require_rank2(const char* op, const tensor& t) {
    if (t.rank() != 2) {
        throw dimension_error(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
    }
}

} // namespace

tensor::tensor() : node_(std::make_shared<detail::node>()) {
    node_->shape = {1};
    node_->value = {0.0};
}

tensor tensor::zeros(shape_t shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

tensor tensor::full(shape_t shape, double value, bool requires_grad) {
    check_shape(shape);
    auto n = std::make_shared<detail::node>();
    n->value.assign(shape_numel(shape), value);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return tensor(std::move(n));
}

tensor tensor::from(shape_t shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (shape_numel(shape) != values.size()) {
        throw dimension_error("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                              " values");
    }
    check_finite("tensor construction", values);
    auto n = std::make_shared<detail::node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return tensor(std::move(n));
}

tensor tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double tensor::item() const {
    if (size() != 1) throw dimension_error("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

std::vector<double> tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
    return node_->grad;
}

tensor tensor::detach() const { return from(shape(), node_->value, false); }

tensor tensor::make_result(const char* op, shape_t shape, std::vector<double> values, std::vector<tensor> parents,
                           std::function<void(detail::node&)> backward_fn) {
    check_finite(op, values);
    auto n = std::make_shared<detail::node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->op = op;
    const bool any = std::any_of(parents.begin(), parents.end(), [](const tensor& p) { return p.requires_grad(); });
    if (any) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_);
        n->backward_fn = std::move(backward_fn);
    }
    return tensor(std::move(n));
}

void tensor::backward() const {
    if (size() != 1) {
        throw validation_error("backward() requires a scalar loss, got shape " + shape_str(shape()));
    }
    // Iterative post-order DFS gives a topological order (inputs first).
    std::vector<detail::node*> order;
    std::unordered_set<detail::node*> seen;
    std::vector<std::pair<detail::node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    // Interior grads are per-pass scratch; only leaves accumulate across calls.
    for (auto* n : order) {
        if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// -- ops -------------------------------------------------------------------

tensor matmul(const tensor& a, const tensor& b) {
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw dimension_error("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
    return tensor::make_result("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](detail::node& self) {
        const double* G = self.grad.data();
        if (a.requires_grad()) {
            auto& ga = a.node().grad_buffer();
            const double* B = b.data().data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = B + p * n;
                    const double* grow = G + i * n;
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ga[i * k + p] += s;
                }
            }
        }
        if (b.requires_grad()) {
            auto& gb = b.node().grad_buffer();
            const double* A = a.data().data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = G + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    if (aip == 0.0) continue;
                    double* gbrow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

namespace {

// Row-broadcast compatibility: b is [n] or [1, n] and a is [m, n].
bool row_broadcast(const tensor& a, const tensor& b) {
    if (a.rank() != 2) return false;
    const std::size_t n = a.dim(1);
    if (b.rank() == 1) return b.dim(0) == n && a.shape() != b.shape();
    if (b.rank() == 2) return b.dim(0) == 1 && b.dim(1) == n && a.dim(0) != 1;
    return false;
}

tensor add_impl(const tensor& a, const tensor& b, double sign, const char* op) {
    if (a.shape() == b.shape()) {
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + sign * b[i];
        return tensor::make_result(op, a.shape(), std::move(out), {a, b}, [a, b, sign](detail::node& self) {
            if (a.requires_grad()) {
                auto& g = a.node().grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (b.requires_grad()) {
                auto& g = b.node().grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
            }
        });
    }
    if (!row_broadcast(a, b)) {
        throw dimension_error(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " and " +
                              shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + sign * b[j];
    }
    return tensor::make_result(op, a.shape(), std::move(out), {a, b}, [a, b, m, n, sign](detail::node& self) {
        if (a.requires_grad()) {
            auto& g = a.node().grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (b.requires_grad()) {
            auto& g = b.node().grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) g[j] += sign * self.grad[i * n + j];
            }
        }
    });
}

} // namespace

tensor add(const tensor& a, const tensor& b) { return add_impl(a, b, 1.0, "add"); }
tensor sub(const tensor& a, const tensor& b) { return add_impl(a, b, -1.0, "sub"); }

tensor mul(const tensor& a, const tensor& b) {
    if (a.shape() != b.shape()) {
        throw dimension_error("mul shape mismatch: " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return tensor::make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](detail::node& self) {
        if (a.requires_grad()) {
            auto& g = a.node().grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b[i];
        }
        if (b.requires_grad()) {
            auto& g = b.node().grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a[i];
        }
    });
}

tensor scale(const tensor& a, double factor) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
    return tensor::make_result("scale", a.shape(), std::move(out), {a}, [a, factor](detail::node& self) {
        auto& g = a.node().grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

tensor softmax(const tensor& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw dimension_error("softmax axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
    }
    const auto& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    std::vector<double> out(x.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = -INFINITY;
            for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, x[base + t * inner]);
            double z = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                const double e = std::exp(x[base + t * inner] - mx);
                out[base + t * inner] = e;
                z += e;
            }
            for (std::size_t t = 0; t < len; ++t) out[base + t * inner] /= z;
        }
    }
    auto result = tensor::make_result("softmax", s, std::move(out), {x}, {});
    if (result.requires_grad()) {
        // dx = y * (dy - <dy, y>) along the axis
        result.node().backward_fn = [x, outer, inner, len](detail::node& self) {
            auto& g = x.node().grad_buffer();
            const auto& y = self.value;
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * len * inner + in;
                    double dot = 0.0;
                    for (std::size_t t = 0; t < len; ++t) dot += self.grad[base + t * inner] * y[base + t * inner];
                    for (std::size_t t = 0; t < len; ++t) {
                        const std::size_t idx = base + t * inner;
                        g[idx] += y[idx] * (self.grad[idx] - dot);
                    }
                }
            }
        };
    }
    return result;
}

tensor layer_norm(const tensor& x, const tensor& gamma, const tensor& beta, double eps) {
    const std::size_t width = x.shape().back();
    if (gamma.size() != width || beta.size() != width) {
        throw dimension_error("layer_norm affine parameters " + shape_str(gamma.shape()) + "/" +
                              shape_str(beta.shape()) + " do not match width of " + shape_str(x.shape()));
    }
    const std::size_t rows = x.size() / width;
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(rows);
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x.data().data() + r * width;
        double mean = 0.0;
        for (std::size_t j = 0; j < width; ++j) mean += row[j];
        mean /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t j = 0; j < width; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(width);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < width; ++j) {
            const std::size_t idx = r * width + j;
            xhat[idx] = (row[j] - mean) * inv_std[r];
            out[idx] = xhat[idx] * gamma[j] + beta[j];
        }
    }
    return tensor::make_result(
        "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
        [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, width](detail::node& self) {
            const auto& G = self.grad;
            if (gamma.requires_grad() || beta.requires_grad()) {
                auto& gg = gamma.node().grad_buffer();
                auto& gb = beta.node().grad_buffer();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < width; ++j) {
                        gg[j] += G[r * width + j] * xhat[r * width + j];
                        gb[j] += G[r * width + j];
                    }
                }
            }
            if (x.requires_grad()) {
                auto& gx = x.node().grad_buffer();
                const double w = static_cast<double>(width);
                for (std::size_t r = 0; r < rows; ++r) {
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::size_t j = 0; j < width; ++j) {
                        const double d = G[r * width + j] * gamma[j];
                        sum_d += d;
                        sum_dx += d * xhat[r * width + j];
                    }
                    for (std::size_t j = 0; j < width; ++j) {
                        const std::size_t idx = r * width + j;
                        const double d = G[idx] * gamma[j];
                        gx[idx] += inv_std[r] * (d - sum_d / w - xhat[idx] * sum_dx / w);
                    }
                }
            }
        });
}

tensor gelu(const tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    }
    return tensor::make_result("gelu", x.shape(), std::move(out), {x}, [x](detail::node& self) {
        auto& g = x.node().grad_buffer();
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = x[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            g[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

tensor reshape(const tensor& x, shape_t shape) {
    if (shape_numel(shape) != x.size()) {
        throw dimension_error("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return tensor::make_result("reshape", std::move(shape), std::move(out), {x}, [x](detail::node& self) {
        auto& g = x.node().grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

tensor transpose(const tensor& x) {
    require_rank2("transpose", x);
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
    }
    return tensor::make_result("transpose", {n, m}, std::move(out), {x}, [x, m, n](detail::node& self) {
        auto& g = x.node().grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
        }
    });
}

tensor slice_rows(const tensor& x, std::size_t begin, std::size_t end) {
    require_rank2("slice_rows", x);
    if (begin >= end || end > x.dim(0)) {
        throw dimension_error("row slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                              shape_str(x.shape()));
    }
    const std::size_t n = x.dim(1);
    std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                            x.data().begin() + static_cast<std::ptrdiff_t>(end * n));
    return tensor::make_result("slice_rows", {end - begin, n}, std::move(out), {x}, [x, begin, n](detail::node& self) {
        auto& g = x.node().grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
    });
}

tensor slice_cols(const tensor& x, std::size_t begin, std::size_t end) {
    require_rank2("slice_cols", x);
    if (begin >= end || end > x.dim(1)) {
        throw dimension_error("column slice [" + std::to_string(begin) + "," + std::to_string(end) +
                              ") out of range for " + shape_str(x.shape()));
    }
    const std::size_t m = x.dim(0), n = x.dim(1), w = end - begin;
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * n + begin + j];
    }
    return tensor::make_result("slice_cols", {m, w}, std::move(out), {x}, [x, begin, m, n, w](detail::node& self) {
        auto& g = x.node().grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
        }
    });
}

tensor concat_rows(const std::vector<tensor>& parts) {
    if (parts.empty()) throw dimension_error("concat_rows of zero tensors");
    const std::size_t n = parts.front().shape().back();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require_rank2("concat_rows", p);
        if (p.dim(1) != n) {
            throw dimension_error("concat_rows width mismatch: " + shape_str(parts.front().shape()) + " and " +
                                  shape_str(p.shape()));
        }
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(rows * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return tensor::make_result("concat_rows", {rows, n}, std::move(out), parts, [parts](detail::node& self) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            if (p.requires_grad()) {
                auto& g = p.node().grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
            }
            offset += p.size();
        }
    });
}

tensor concat_cols(const std::vector<tensor>& parts) {
    if (parts.empty()) throw dimension_error("concat_cols of zero tensors");
    const std::size_t m = parts.front().dim(0);
    std::size_t cols = 0;
    for (const auto& p : parts) {
        require_rank2("concat_cols", p);
        if (p.dim(0) != m) {
            throw dimension_error("concat_cols height mismatch: " + shape_str(parts.front().shape()) + " and " +
                                  shape_str(p.shape()));
        }
        cols += p.dim(1);
    }
    std::vector<double> out(m * cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) out[i * cols + offset + j] = p[i * w + j];
        }
        offset += w;
    }
    return tensor::make_result("concat_cols", {m, cols}, std::move(out), parts, [parts, m, cols](detail::node& self) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            const std::size_t w = p.dim(1);
            if (p.requires_grad()) {
                auto& g = p.node().grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * cols + offset + j];
                }
            }
            offset += w;
        }
    });
}

tensor mean_rows(const tensor& x) {
    require_rank2("mean_rows", x);
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
    }
    for (auto& v : out) v /= static_cast<double>(m);
    return tensor::make_result("mean_rows", {1, n}, std::move(out), {x}, [x, m, n](detail::node& self) {
        auto& g = x.node().grad_buffer();
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] * inv;
        }
    });
}

tensor sum(const tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return tensor::make_result("sum", {1}, {s}, {x}, [x](detail::node& self) {
        auto& g = x.node().grad_buffer();
        for (auto& v : g) v += self.grad[0];
    });
}

tensor embedding(const tensor& table, std::span<const std::size_t> indices) {
    require_rank2("embedding", table);
    if (indices.empty()) throw dimension_error("embedding lookup with no indices");
    const std::size_t vocab = table.dim(0), n = table.dim(1);
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    std::vector<double> out;
    out.reserve(idx.size() * n);
    for (auto i : idx) {
        if (i >= vocab) {
            throw dimension_error("embedding index " + std::to_string(i) + " out of range for " +
                                  shape_str(table.shape()));
        }
        out.insert(out.end(), table.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                   table.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    }
    return tensor::make_result("embedding", {idx.size(), n}, std::move(out), {table},
                               [table, idx, n](detail::node& self) {
                                   auto& g = table.node().grad_buffer();
                                   for (std::size_t r = 0; r < idx.size(); ++r) {
                                       for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
                                   }
                               });
}

tensor cross_entropy(const tensor& logits, std::span<const std::size_t> targets, std::span<const double> weights) {
    require_rank2("cross_entropy", logits);
    const std::size_t b = logits.dim(0), c = logits.dim(1);
    if (targets.size() != b) {
        throw dimension_error("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                              shape_str(logits.shape()));
    }
    if (!weights.empty() && weights.size() != b) {
        throw dimension_error("cross_entropy: weight count does not match batch");
    }
    std::vector<double> w(b, 1.0);
    if (!weights.empty()) w.assign(weights.begin(), weights.end());
    double wsum = 0.0;
    for (double v : w) wsum += v;
    if (!(wsum > 0.0)) throw validation_error("cross_entropy: weights must sum to a positive value");
    std::vector<double> probs(b * c);
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        if (tgt[i] >= c) throw dimension_error("cross_entropy: target class out of range");
        double mx = -INFINITY;
        for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(logits[i * c + j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(logits[i * c + j] - lse);
        loss += w[i] * (lse - logits[i * c + tgt[i]]);
    }
    loss /= wsum;
    return tensor::make_result("cross_entropy", {1}, {loss}, {logits},
                               [logits, probs = std::move(probs), tgt = std::move(tgt), w = std::move(w), wsum, b,
                                c](detail::node& self) {
                                   auto& g = logits.node().grad_buffer();
                                   for (std::size_t i = 0; i < b; ++i) {
                                       const double f = self.grad[0] * w[i] / wsum;
                                       for (std::size_t j = 0; j < c; ++j) {
                                           const double onehot = (j == tgt[i]) ? 1.0 : 0.0;
                                           g[i * c + j] += f * (probs[i * c + j] - onehot);
                                       }
                                   }
                               });
}

double rope_angle(double position, std::size_t pair, std::size_t head_dim, double base) {
    return position * std::pow(base, -2.0 * static_cast<double>(pair) / static_cast<double>(head_dim));
}

tensor rope(const tensor& x, std::span<const double> positions, std::size_t n_heads, double base) {
    require_rank2("rope", x);
    const std::size_t rows = x.dim(0), d = x.dim(1);
    if (positions.size() != rows) {
        throw dimension_error("rope: " + std::to_string(positions.size()) + " positions for " + shape_str(x.shape()));
    }
    if (n_heads == 0 || d % n_heads != 0) throw validation_error("rope: width not divisible by head count");
    const std::size_t head_dim = d / n_heads;
    if (head_dim % 2 != 0) throw validation_error("rope: head_dim must be even, got " + std::to_string(head_dim));
    const std::size_t pairs = head_dim / 2;
    std::vector<double> cosv(rows * pairs), sinv(rows * pairs);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < pairs; ++i) {
            const double theta = rope_angle(positions[r], i, head_dim, base);
            cosv[r * pairs + i] = std::cos(theta);
            sinv[r * pairs + i] = std::sin(theta);
        }
    }
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t i = 0; i < pairs; ++i) {
                const std::size_t idx = r * d + h * head_dim + 2 * i;
                const double c = cosv[r * pairs + i], s = sinv[r * pairs + i];
                const double x0 = x[idx], x1 = x[idx + 1];
                out[idx] = x0 * c - x1 * s;
                out[idx + 1] = x0 * s + x1 * c;
            }
        }
    }
    return tensor::make_result("rope", x.shape(), std::move(out), {x},
                               [x, cosv = std::move(cosv), sinv = std::move(sinv), rows, d, n_heads, head_dim,
                                pairs](detail::node& self) {
                                   auto& g = x.node().grad_buffer();
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       for (std::size_t h = 0; h < n_heads; ++h) {
                                           for (std::size_t i = 0; i < pairs; ++i) {
                                               const std::size_t idx = r * d + h * head_dim + 2 * i;
                                               const double c = cosv[r * pairs + i], s = sinv[r * pairs + i];
                                               const double g0 = self.grad[idx], g1 = self.grad[idx + 1];
                                               g[idx] += g0 * c + g1 * s;
                                               g[idx + 1] += -g0 * s + g1 * c;
                                           }
                                       }
                                   }
                               });
}

} // namespace gaitml

#include "ssg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "ssg/errors.hpp"

namespace ssg {

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily; persistent on leaves
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_rule;

    bool is_leaf() const { return parents.empty(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

}  // namespace detail

using detail::TensorNode;

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static std::size_t shape_product(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

// --- construction -----------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->values.assign(shape_product(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_product(shape) != values.size()) {
        throw DimensionError("tensor: shape " + shape_string(shape) + " expects " +
                             std::to_string(shape_product(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = zeros({n, n});
    auto v = t.mutable_values();
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return t;
}

// --- accessors ----------------------------------------------------------------

static const TensorNode& deref(const std::shared_ptr<TensorNode>& node) {
    if (!node) throw ContractError("tensor: use of default-constructed tensor");
    return *node;
}

const Shape& Tensor::shape() const { return deref(node_).shape; }
std::size_t Tensor::size() const { return deref(node_).values.size(); }
std::size_t Tensor::rank() const { return deref(node_).shape.size(); }

std::size_t Tensor::rows() const {
    const auto& n = deref(node_);
    if (n.shape.size() != 2) throw DimensionError("tensor: rows() on shape " + shape_string(n.shape));
    return n.shape[0];
}

std::size_t Tensor::cols() const {
    const auto& n = deref(node_);
    if (n.shape.size() != 2) throw DimensionError("tensor: cols() on shape " + shape_string(n.shape));
    return n.shape[1];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }
bool Tensor::is_leaf() const { return deref(node_).is_leaf(); }

std::span<const double> Tensor::values() const { return deref(node_).values; }

double Tensor::value_at(std::size_t flat_index) const {
    const auto& n = deref(node_);
    if (flat_index >= n.values.size()) throw IndexError("tensor: flat index out of range");
    return n.values[flat_index];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    const auto& n = deref(node_);
    if (n.shape.size() != 2 || row >= n.shape[0] || col >= n.shape[1]) {
        throw IndexError("tensor: index (" + std::to_string(row) + "," + std::to_string(col) +
                         ") out of range for " + shape_string(n.shape));
    }
    return n.values[row * n.shape[1] + col];
}

double Tensor::scalar_value() const {
    const auto& n = deref(node_);
    if (n.values.size() != 1) {
        throw ContractError("tensor: scalar_value() on shape " + shape_string(n.shape));
    }
    return n.values[0];
}

std::span<double> Tensor::mutable_values() {
    auto& n = const_cast<TensorNode&>(deref(node_));
    if (!n.is_leaf()) throw ContractError("tensor: mutation of non-leaf tensor");
    return n.values;
}

void Tensor::set_requires_grad(bool requires_grad) {
    auto& n = const_cast<TensorNode&>(deref(node_));
    if (!n.is_leaf()) throw ContractError("tensor: set_requires_grad on non-leaf tensor");
    n.requires_grad = requires_grad;
}

std::span<const double> Tensor::grad() const {
    auto& n = const_cast<TensorNode&>(deref(node_));
    n.ensure_grad();
    return n.grad;
}

void Tensor::zero_grad() {
    auto& n = const_cast<TensorNode&>(deref(node_));
    n.grad.assign(n.values.size(), 0.0);
}

// --- op plumbing ----------------------------------------------------------

Tensor make_op_node(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                    std::function<void(TensorNode&)> backward_rule) {
    Tensor out = Tensor::from_values(std::move(shape), std::move(values));
    TensorNode& n = *out.node_;
    for (const Tensor& p : parents) {
        if (p.requires_grad()) n.requires_grad = true;
    }
    if (n.requires_grad) {
        for (Tensor& p : parents) n.parents.push_back(p.node_);
        n.backward_rule = std::move(backward_rule);
    }
    return out;
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
    }
}

static std::vector<double>& grad_of(TensorNode& node, std::size_t parent) {
    TensorNode& p = *node.parents[parent];
    p.ensure_grad();
    return p.grad;
}

static bool parent_needs_grad(const TensorNode& node, std::size_t parent) {
    return node.parents[parent]->requires_grad;
}

// --- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
    std::vector<double> out(m * p, 0.0);
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = av[i * k + l];
            if (ail == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j) {
                out[i * p + j] += ail * bv[l * p + j];
            }
        }
    }
    return make_op_node({m, p}, std::move(out), {a, b}, [m, k, p](TensorNode& node) {
        const auto& g = node.grad;
        const auto& av = node.parents[0]->values;
        const auto& bv = node.parents[1]->values;
        if (parent_needs_grad(node, 0)) {
            auto& ga = grad_of(node, 0);  // ga += g . b^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t l = 0; l < k; ++l) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < p; ++j) acc += g[i * p + j] * bv[l * p + j];
                    ga[i * k + l] += acc;
                }
            }
        }
        if (parent_needs_grad(node, 1)) {
            auto& gb = grad_of(node, 1);  // gb += a^T . g
            for (std::size_t l = 0; l < k; ++l) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double ail = av[i * k + l];
                    if (ail == 0.0) continue;
                    for (std::size_t j = 0; j < p; ++j) gb[l * p + j] += ail * g[i * p + j];
                }
            }
        }
    });
}

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_op_node(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!parent_needs_grad(node, p)) continue;
            auto& gp = grad_of(node, p);
            for (std::size_t i = 0; i < node.grad.size(); ++i) gp[i] += node.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_op_node(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        if (parent_needs_grad(node, 0)) {
            auto& ga = grad_of(node, 0);
            for (std::size_t i = 0; i < node.grad.size(); ++i) ga[i] += node.grad[i];
        }
        if (parent_needs_grad(node, 1)) {
            auto& gb = grad_of(node, 1);
            for (std::size_t i = 0; i < node.grad.size(); ++i) gb[i] -= node.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_op_node(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        const auto& av = node.parents[0]->values;
        const auto& bv = node.parents[1]->values;
        if (parent_needs_grad(node, 0)) {
            auto& ga = grad_of(node, 0);
            for (std::size_t i = 0; i < node.grad.size(); ++i) ga[i] += node.grad[i] * bv[i];
        }
        if (parent_needs_grad(node, 1)) {
            auto& gb = grad_of(node, 1);
            for (std::size_t i = 0; i < node.grad.size(); ++i) gb[i] += node.grad[i] * av[i];
        }
    });
}

Tensor exp(const Tensor& t) {
    std::vector<double> out(t.size());
    auto tv = t.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(tv[i]);
        if (!std::isfinite(out[i])) {
            throw DomainValueError("exp: non-finite result at index " + std::to_string(i));
        }
    }
    return make_op_node(t.shape(), std::move(out), {t}, [](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < node.grad.size(); ++i) g[i] += node.grad[i] * node.values[i];
    });
}

Tensor log(const Tensor& t) {
    std::vector<double> out(t.size());
    auto tv = t.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (tv[i] < 0.0) {
            throw DomainValueError("log: negative input " + std::to_string(tv[i]) +
                                   " at index " + std::to_string(i));
        }
        // [0, 1e-12) clamps so an underflowed softmax probability stays usable
        out[i] = std::log(std::max(tv[i], kLogClamp));
    }
    return make_op_node(t.shape(), std::move(out), {t}, [](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        const auto& tv = node.parents[0]->values;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            if (tv[i] >= kLogClamp) g[i] += node.grad[i] / tv[i];
            // below the clamp the output is constant, gradient 0
        }
    });
}

Tensor relu(const Tensor& t) {
    std::vector<double> out(t.size());
    auto tv = t.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = tv[i] > 0.0 ? tv[i] : 0.0;
    return make_op_node(t.shape(), std::move(out), {t}, [](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        const auto& tv = node.parents[0]->values;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            if (tv[i] > 0.0) g[i] += node.grad[i];
        }
    });
}

Tensor scale(const Tensor& t, double factor) {
    std::vector<double> out(t.size());
    auto tv = t.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = tv[i] * factor;
    return make_op_node(t.shape(), std::move(out), {t}, [factor](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < node.grad.size(); ++i) g[i] += node.grad[i] * factor;
    });
}

Tensor clamp_min(const Tensor& t, double lo) {
    std::vector<double> out(t.size());
    auto tv = t.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(tv[i], lo);
    return make_op_node(t.shape(), std::move(out), {t}, [lo](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        const auto& tv = node.parents[0]->values;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            if (tv[i] >= lo) g[i] += node.grad[i];
        }
    });
}

// --- softmax ------------------------------------------------------------------

static void softmax_into(std::span<const double> logits, std::span<double> probs) {
    double max_logit = logits[0];
    for (double v : logits) max_logit = std::max(max_logit, v);
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - max_logit);
        denom += probs[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) probs[i] /= denom;
}

static void softmax_backward_row(std::span<const double> probs, std::span<const double> g_out,
                                 std::span<double> g_in) {
    double dot = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) dot += g_out[i] * probs[i];
    for (std::size_t i = 0; i < probs.size(); ++i) g_in[i] += probs[i] * (g_out[i] - dot);
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.size() == 0) {
        throw DimensionError("softmax: expected non-empty rank-1 tensor, got " +
                             shape_string(logits.shape()));
    }
    std::vector<double> out(logits.size());
    softmax_into(logits.values(), out);
    return make_op_node(logits.shape(), std::move(out), {logits}, [](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        auto& g = grad_of(node, 0);
        softmax_backward_row(node.values, node.grad, g);
    });
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2 || logits.cols() == 0) {
        throw DimensionError("softmax_rows: expected rank-2 tensor with columns, got " +
                             shape_string(logits.shape()));
    }
    const std::size_t m = logits.rows(), k = logits.cols();
    std::vector<double> out(m * k);
    auto lv = logits.values();
    for (std::size_t i = 0; i < m; ++i) {
        softmax_into(lv.subspan(i * k, k), std::span<double>(out).subspan(i * k, k));
    }
    return make_op_node({m, k}, std::move(out), {logits}, [m, k](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < m; ++i) {
            softmax_backward_row(std::span<const double>(node.values).subspan(i * k, k),
                                 std::span<const double>(node.grad).subspan(i * k, k),
                                 std::span<double>(g).subspan(i * k, k));
        }
    });
}

// --- reductions and reshapes -----------------------------------------------

Tensor sum(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.values()) acc += v;
    return make_op_node({1}, {acc}, {t}, [](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        auto& g = grad_of(node, 0);
        for (double& gi : g) gi += node.grad[0];
    });
}

Tensor transpose(const Tensor& t) {
    const std::size_t m = t.rows(), k = t.cols();
    std::vector<double> out(m * k);
    auto tv = t.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) out[j * m + i] = tv[i * k + j];
    }
    return make_op_node({k, m}, std::move(out), {t}, [m, k](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        auto& g = grad_of(node, 0);
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t i = 0; i < m; ++i) g[i * k + j] += node.grad[j * m + i];
        }
    });
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
    if (top.rank() != 2 || bottom.rank() != 2 || top.cols() != bottom.cols()) {
        throw DimensionError("concat_rows: incompatible shapes " + shape_string(top.shape()) +
                             " vs " + shape_string(bottom.shape()));
    }
    const std::size_t k = top.cols(), rt = top.rows(), rb = bottom.rows();
    std::vector<double> out;
    out.reserve((rt + rb) * k);
    out.insert(out.end(), top.values().begin(), top.values().end());
    out.insert(out.end(), bottom.values().begin(), bottom.values().end());
    return make_op_node({rt + rb, k}, std::move(out), {top, bottom}, [rt, k](TensorNode& node) {
        if (parent_needs_grad(node, 0)) {
            auto& g = grad_of(node, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
        }
        if (parent_needs_grad(node, 1)) {
            auto& g = grad_of(node, 1);
            const std::size_t offset = rt * k;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[offset + i];
        }
    });
}

Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& row_indices) {
    const std::size_t k = t.cols();
    for (std::size_t r : row_indices) {
        if (r >= t.rows()) {
            throw IndexError("gather_rows: row " + std::to_string(r) + " out of range for " +
                             shape_string(t.shape()));
        }
    }
    std::vector<double> out(row_indices.size() * k);
    auto tv = t.values();
    for (std::size_t i = 0; i < row_indices.size(); ++i) {
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(row_indices[i] * k), k,
                    out.begin() + static_cast<std::ptrdiff_t>(i * k));
    }
    return make_op_node({row_indices.size(), k}, std::move(out), {t},
                        [k, row_indices](TensorNode& node) {
                            if (!parent_needs_grad(node, 0)) return;
                            auto& g = grad_of(node, 0);
                            for (std::size_t i = 0; i < row_indices.size(); ++i) {
                                for (std::size_t j = 0; j < k; ++j) {
                                    g[row_indices[i] * k + j] += node.grad[i * k + j];
                                }
                            }
                        });
}

Tensor slice_cols(const Tensor& t, std::size_t col_begin, std::size_t col_end) {
    if (col_begin >= col_end || col_end > t.cols()) {
        throw DimensionError("slice_cols: range [" + std::to_string(col_begin) + "," +
                             std::to_string(col_end) + ") invalid for " + shape_string(t.shape()));
    }
    const std::size_t m = t.rows(), k = t.cols(), w = col_end - col_begin;
    std::vector<double> out(m * w);
    auto tv = t.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = tv[i * k + col_begin + j];
    }
    return make_op_node({m, w}, std::move(out), {t}, [m, k, w, col_begin](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) g[i * k + col_begin + j] += node.grad[i * w + j];
        }
    });
}

Tensor add_row_vector(const Tensor& t, const Tensor& v) {
    if (t.rank() != 2 || v.rank() != 1 || v.size() != t.cols()) {
        throw DimensionError("add_row_vector: incompatible shapes " + shape_string(t.shape()) +
                             " vs " + shape_string(v.shape()));
    }
    const std::size_t m = t.rows(), k = t.cols();
    std::vector<double> out(m * k);
    auto tv = t.values(), vv = v.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = tv[i * k + j] + vv[j];
    }
    return make_op_node({m, k}, std::move(out), {t, v}, [m, k](TensorNode& node) {
        if (parent_needs_grad(node, 0)) {
            auto& g = grad_of(node, 0);
            for (std::size_t i = 0; i < node.grad.size(); ++i) g[i] += node.grad[i];
        }
        if (parent_needs_grad(node, 1)) {
            auto& g = grad_of(node, 1);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < k; ++j) g[j] += node.grad[i * k + j];
            }
        }
    });
}

Tensor row_sums(const Tensor& t) {
    const std::size_t m = t.rows(), k = t.cols();
    std::vector<double> out(m, 0.0);
    auto tv = t.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) out[i] += tv[i * k + j];
    }
    return make_op_node({m}, std::move(out), {t}, [m, k](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) g[i * k + j] += node.grad[i];
        }
    });
}

Tensor rsqrt(const Tensor& t) {
    std::vector<double> out(t.size());
    auto tv = t.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(tv[i] > 0.0)) {
            throw DomainValueError("rsqrt: non-positive input " + std::to_string(tv[i]) +
                                   " at index " + std::to_string(i));
        }
        out[i] = 1.0 / std::sqrt(tv[i]);
    }
    return make_op_node(t.shape(), std::move(out), {t}, [](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        const auto& tv = node.parents[0]->values;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            g[i] += node.grad[i] * (-0.5) * node.values[i] / tv[i];  // -1/2 x^(-3/2)
        }
    });
}

Tensor sym_scale(const Tensor& a, const Tensor& s) {
    if (a.rank() != 2 || a.rows() != a.cols() || s.rank() != 1 || s.size() != a.rows()) {
        throw DimensionError("sym_scale: incompatible shapes " + shape_string(a.shape()) + " vs " +
                             shape_string(s.shape()));
    }
    const std::size_t n = a.rows();
    std::vector<double> out(n * n);
    auto av = a.values(), sv = s.values();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] * sv[i] * sv[j];
    }
    return make_op_node({n, n}, std::move(out), {a, s}, [n](TensorNode& node) {
        const auto& av = node.parents[0]->values;
        const auto& sv = node.parents[1]->values;
        if (parent_needs_grad(node, 0)) {
            auto& ga = grad_of(node, 0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    ga[i * n + j] += node.grad[i * n + j] * sv[i] * sv[j];
                }
            }
        }
        if (parent_needs_grad(node, 1)) {
            auto& gs = grad_of(node, 1);
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    acc += node.grad[i * n + j] * av[i * n + j] * sv[j];
                    acc += node.grad[j * n + i] * av[j * n + i] * sv[j];
                }
                gs[i] += acc;
            }
        }
    });
}

Tensor pairwise_sqdist(const Tensor& z) {
    if (z.rank() != 2) {
        throw DimensionError("pairwise_sqdist: expected rank-2 tensor, got " +
                             shape_string(z.shape()));
    }
    const std::size_t n = z.rows(), d = z.cols();
    std::vector<double> out(n * n, 0.0);
    auto zv = z.values();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = zv[i * d + k] - zv[j * d + k];
                acc += diff * diff;
            }
            out[i * n + j] = acc;
            out[j * n + i] = acc;
        }
    }
    return make_op_node({n, n}, std::move(out), {z}, [n, d](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        const auto& zv = node.parents[0]->values;
        auto& g = grad_of(node, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double w = 2.0 * (node.grad[i * n + j] + node.grad[j * n + i]);
                if (w == 0.0) continue;
                for (std::size_t k = 0; k < d; ++k) {
                    g[i * d + k] += w * (zv[i * d + k] - zv[j * d + k]);
                }
            }
        }
    });
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.cols() == 0) {
        throw DimensionError("cross_entropy_rows: expected rank-2 logits, got " +
                             shape_string(logits.shape()));
    }
    const std::size_t m = logits.rows(), k = logits.cols();
    if (labels.size() != m) {
        throw DimensionError("cross_entropy_rows: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(m) + " rows");
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
            throw LabelError("cross_entropy_rows: label " + std::to_string(labels[i]) +
                             " out of range [0," + std::to_string(k) + ") at row " +
                             std::to_string(i));
        }
    }
    auto lv = logits.values();
    auto probs = std::make_shared<std::vector<double>>(m * k);
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        auto row = lv.subspan(i * k, k);
        auto prow = std::span<double>(*probs).subspan(i * k, k);
        softmax_into(row, prow);
        double max_logit = row[0];
        for (double v : row) max_logit = std::max(max_logit, v);
        double denom = 0.0;
        for (double v : row) denom += std::exp(v - max_logit);
        const double lse = max_logit + std::log(denom);
        loss += lse - row[static_cast<std::size_t>(labels[i])];
    }
    loss /= static_cast<double>(m);
    return make_op_node({1}, {loss}, {logits}, [m, k, labels, probs](TensorNode& node) {
        if (!parent_needs_grad(node, 0)) return;
        auto& g = grad_of(node, 0);
        const double gscale = node.grad[0] / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                double delta = (*probs)[i * k + j];
                if (j == static_cast<std::size_t>(labels[i])) delta -= 1.0;
                g[i * k + j] += gscale * delta;
            }
        }
    });
}

// --- backward ---------------------------------------------------------------

static void topo_sort(TensorNode* root, std::vector<TensorNode*>& order) {
    // iterative post-order DFS
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            TensorNode* parent = node->parents[next_child++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    TensorNode* root = loss.node();
    if (!root->requires_grad) return;  // nothing reachable to differentiate

    std::vector<TensorNode*> order;
    topo_sort(root, order);

    // Non-leaf gradients are scratch space for this sweep; leaf gradients are
    // persistent accumulators owned by the caller.
    for (TensorNode* node : order) {
        node->ensure_grad();
        if (!node->is_leaf()) std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }
    root->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backward_rule) node->backward_rule(*node);
    }
}

// --- parameters -----------------------------------------------------------

Parameter::Parameter(std::string name, Tensor value) : name_(std::move(name)), value_(std::move(value)) {
    value_.set_requires_grad(true);
    value_.zero_grad();
}

void sgd_step(std::span<Parameter> params, double lr) {
    for (Parameter& p : params) {
        auto g = p.grad();
        for (double gi : g) {
            if (!std::isfinite(gi)) {
                throw TrainingError("sgd_step: non-finite gradient in parameter '" + p.name() +
                                    "'");
            }
        }
        auto v = p.values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
}

void zero_grads(std::span<Parameter> params) {
    for (Parameter& p : params) p.zero_grad();
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::span<Parameter> params,
                                  double h) {
    if (!(h > 0.0)) throw ContractError("finite_diff_check: h must be positive");

    zero_grads(params);
    Tensor loss = f();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Parameter& p : params) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
    }

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = params[pi];
        auto v = p.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double saved = v[i];
            v[i] = saved + h;
            const double f_plus = f().scalar_value();
            v[i] = saved - h;
            const double f_minus = f().scalar_value();
            v[i] = saved;

            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[pi][i];
            ++report.coordinates_checked;
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                report.all_finite = false;
                report.max_rel_error = std::numeric_limits<double>::infinity();
                report.worst_parameter = p.name();
                report.worst_index = i;
                report.note = "non-finite comparison at " + p.name() + "[" + std::to_string(i) +
                              "]";
                return report;
            }
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_parameter = p.name();
                report.worst_index = i;
            }
        }
    }
    return report;
}

}  // namespace ssg

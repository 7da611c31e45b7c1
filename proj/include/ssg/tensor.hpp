#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ssg {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

namespace detail {
struct TensorNode;
}

// Dense row-major f64 tensor participating in dynamically recorded
// differentiable computation. Tensor is a cheap shared handle: copies alias
// the same storage. Each op records its inputs and a local backward rule on
// the output node; backward() replays the record in reverse.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor identity(std::size_t n);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const;
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;  // rank-2 only
    bool requires_grad() const;
    bool is_leaf() const;

    std::span<const double> values() const;
    double value_at(std::size_t flat_index) const;
    double at(std::size_t row, std::size_t col) const;
    double scalar_value() const;  // requires size() == 1

    // Leaf-only mutation: used by the optimizer and data plumbing. Graphs are
    // rebuilt every step, so mutating a leaf never invalidates a live record.
    std::span<double> mutable_values();
    void set_requires_grad(bool requires_grad);

    std::span<const double> grad() const;  // zero until backward touches it
    void zero_grad();

    detail::TensorNode* node() const { return node_.get(); }

  private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op_node(Shape shape, std::vector<double> values,
                               std::vector<Tensor> parents,
                               std::function<void(detail::TensorNode&)> backward_rule);
};

// --- differentiable operations ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);  // input must be > 0; clamped at 1e-12 for stability
Tensor relu(const Tensor& t);
Tensor scale(const Tensor& t, double factor);

Tensor softmax(const Tensor& logits);       // rank 1
Tensor softmax_rows(const Tensor& logits);  // rank 2, softmax per row

Tensor sum(const Tensor& t);  // -> scalar
Tensor transpose(const Tensor& t);
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& row_indices);
Tensor slice_cols(const Tensor& t, std::size_t col_begin, std::size_t col_end);
Tensor add_row_vector(const Tensor& t, const Tensor& v);  // [m,k] + [k]
Tensor row_sums(const Tensor& t);                         // [m,k] -> [m]
Tensor rsqrt(const Tensor& t);                            // input must be > 0
Tensor sym_scale(const Tensor& a, const Tensor& s);       // out_ij = a_ij * s_i * s_j
Tensor pairwise_sqdist(const Tensor& z);                  // [n,d] -> [n,n]
Tensor clamp_min(const Tensor& t, double lo);

// Mean over rows of -log softmax(row)[label], computed with a stable
// log-sum-exp. Labels must lie in [0, cols).
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels);

constexpr double kLogClamp = 1e-12;

// Accumulates d(loss)/d(leaf) into every reachable leaf gradient. Non-leaf
// gradients are transient per call, so repeated backward on the same graph
// adds the same leaf gradients again; zeroing between steps is the caller's
// job.
void backward(const Tensor& loss);

// --- parameters and optimization ------------------------------------------

// Named trainable leaf tensor with a persistent, zero-initialized gradient
// buffer of identical shape.
class Parameter {
  public:
    Parameter() = default;
    Parameter(std::string name, Tensor value);

    const std::string& name() const { return name_; }
    Tensor& tensor() { return value_; }
    const Tensor& tensor() const { return value_; }
    const Shape& shape() const { return value_.shape(); }
    std::size_t size() const { return value_.size(); }
    std::span<double> values() { return value_.mutable_values(); }
    std::span<const double> values() const { return value_.values(); }
    std::span<const double> grad() const { return value_.grad(); }
    void zero_grad() { value_.zero_grad(); }

  private:
    std::string name_;
    Tensor value_;
};

// value <- value - lr * gradient; gradients are left untouched.
void sgd_step(std::span<Parameter> params, double lr);
void zero_grads(std::span<Parameter> params);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t coordinates_checked = 0;
    bool all_finite = true;
    std::string note;
};

// Compares analytic gradients of f (a deterministic closure over the current
// parameter values, returning the scalar loss tensor) against central finite
// differences with step h. Relative error per coordinate is
// |analytic - numeric| / max(1, |analytic|).
GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::span<Parameter> params,
                                  double h);

}  // namespace ssg

#pragma once

// Dense 64-bit tensors and a reverse-mode tape covering the operations the
// HFGN forward pass needs. Nothing here is a general autodiff framework: the
// op set is closed and shapes are checked eagerly.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hfgn::nk {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major matrix of doubles. A vector is a matrix with one column.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor column(std::vector<double> values);
    static Tensor row(std::vector<double> values);
    static Tensor identity(std::size_t n);
    static Tensor scalar(double v) { return Tensor(1, 1, v); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    void fill(double v);
    bool all_finite() const;
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// A named trainable array. Gradients live on the tape, not here.
struct Parameter {
    std::string name;
    Tensor value;
};

class Tape;

/// Handle to a node recorded on a tape.
class Var {
public:
    Var() = default;
    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records forward operations and replays them in reverse. One tape per
/// forward pass; not shareable across threads.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Leaf bound to a whole parameter.
    Var param(const Parameter& p);
    /// Leaf gathering rows of a parameter (embedding lookup).
    Var param_rows(const Parameter& p, std::span<const std::size_t> rows);

    /// Sum of squared entries over everything the forward pass read from
    /// parameters: whole parameters bound with param(), and the distinct rows
    /// gathered with param_rows().
    Var touched_sq_norm();

    /// Reverse sweep from a 1x1 node. Throws if called twice without reset().
    void backward(Var loss);

    /// Accumulated gradient for p; zeros of p's shape if p was never touched.
    Tensor gradient(const Parameter& p) const;
    bool touched(const Parameter& p) const;

    void reset();
    std::size_t node_count() const { return nodes_.size(); }

    // Used by op implementations.
    Var record(Tensor value, Backward back);
    const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
    /// Gradient buffer of a node; allocated on first access.
    Tensor& grad_of(std::size_t id);
    bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward back;
    };
    struct ParamSlot {
        const Parameter* param;
        Tensor grad;
        std::vector<std::size_t> rows; // rows read through param_rows, sorted unique
        bool whole = false;
        std::size_t whole_node = 0;
    };

    ParamSlot& slot_for(const Parameter& p);
    const ParamSlot* find_slot(const Parameter& p) const;

    std::vector<Node> nodes_;
    std::vector<ParamSlot> slots_;
    bool backward_done_ = false;
};

// Differentiable operations. All operands must live on the same tape.

Var matmul(Var a, Var b);     // a·b
Var matmul_nt(Var a, Var b);  // a·bᵀ
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1×n row to every row of a (m×n).
Var add_row(Var a, Var bias);
Var leaky_relu(Var a, double slope);
Var softmax_rows(Var a);
/// Softmax down each column within each row segment [offsets[k], offsets[k+1]).
Var segment_softmax(Var a, std::span<const std::size_t> offsets);
/// Sums the rows of each segment, giving one row per segment.
Var segment_sum(Var a, std::span<const std::size_t> offsets);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var scatter_add_rows(Var a, std::span<const std::size_t> rows, std::size_t out_rows);
Var scale_rows(Var a, std::span<const double> weights);
Var row_sum(Var a);
Var sum(Var a);
Var log_sigmoid(Var a);

double sigmoid(double x);
double log_sigmoid(double x);

/// Central-difference gradient check. `loss` re-evaluates the scalar objective
/// from the current parameter values; `analytic` holds one gradient per
/// parameter in the same order. Parameters are restored on return.
struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<std::pair<std::string, double>> per_parameter;
};

GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::span<Parameter* const> params,
                                  std::span<const Tensor> analytic, double eps);

} // namespace hfgn::nk

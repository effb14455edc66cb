#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "tabsight/random.hpp"

namespace tabsight::nn {

/// Dense row-major matrix of doubles. Every row of a product is computed with
/// the same loop order, so a row's result never depends on its position.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}
    static Matrix row(std::vector<double> values);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c)]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c)]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double* rowPtr(int r) { return data_.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_); }
    const double* rowPtr(int r) const { return data_.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_); }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void setZero() { std::fill(data_.begin(), data_.end(), 0.0); }
    void addInPlace(const Matrix& o);
    bool sameShape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool operator==(const Matrix&) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

struct Param {
    std::string name;
    Matrix value;
};

/// Named parameter tensors. Indices are stable once registered.
class ParamSet {
public:
    int add(std::string name, Matrix init);
    int size() const { return static_cast<int>(params_.size()); }
    Param& at(int i) { return params_.at(static_cast<std::size_t>(i)); }
    const Param& at(int i) const { return params_.at(static_cast<std::size_t>(i)); }
    int find(const std::string& name) const;
    std::size_t scalarCount() const;
    /// FNV-1a over names, shapes and raw bytes.
    std::uint64_t hash() const;
    bool operator==(const ParamSet& o) const;

private:
    std::vector<Param> params_;
};

/// Gradient buffers aligned with a ParamSet.
class Grads {
public:
    Grads() = default;
    explicit Grads(const ParamSet& params);
    int size() const { return static_cast<int>(g_.size()); }
    Matrix& at(int i) { return g_.at(static_cast<std::size_t>(i)); }
    const Matrix& at(int i) const { return g_.at(static_cast<std::size_t>(i)); }
    void setZero();
    void addInPlace(const Grads& o);
    void scale(double s);
    double norm() const;
    /// Rescales to `maxNorm` when the global norm exceeds it; returns the pre-clip norm.
    double clip(double maxNorm);
    bool finite() const;

private:
    std::vector<Matrix> g_;
};

Matrix uniform_init(int rows, int cols, double limit, Rng& rng);
/// Glorot-uniform initialization for a fan_in x fan_out weight.
Matrix glorot(int fanIn, int fanOut, Rng& rng);

class Adam {
public:
    Adam() = default;
    Adam(const ParamSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    /// Updates only the parameters whose index is listed (all when empty).
    void step(ParamSet& params, const Grads& grads, const std::vector<int>& only = {});
    double lr = 2e-4;
    long t = 0;
    std::vector<Matrix> m, v;

private:
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

// Reverse-mode tape -----------------------------------------------------------

struct Var {
    int id = -1;
};

class Tape {
public:
    explicit Tape(const ParamSet* params = nullptr) : params_(params) {}

    Var constant(Matrix value);
    Var param(int index);

    const Matrix& value(Var v) const;
    Matrix& grad(Var v);
    bool needsGrad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needsGrad; }
    int size() const { return static_cast<int>(nodes_.size()); }

    /// Seeds d(out)/d(out) = 1 for a 1x1 output and runs all backward closures.
    void backward(Var out);
    /// Adds parameter gradients into `grads` (parameter nodes only).
    void accumulate(Grads& grads) const;

    /// Appends an op node; `bw` reads this node's grad and pushes into inputs.
    Var push(Matrix value, bool needsGrad, std::function<void()> bw);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needsGrad = false;
        int paramIndex = -1;
        std::function<void()> backward;
    };
    const ParamSet* params_;
    std::vector<Node> nodes_;
};

// Ops -------------------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
/// a (n x m) + bias (1 x m) broadcast over rows.
Var add_bias(Tape& t, Var a, Var bias);
Var scale(Tape& t, Var a, double s);
Var relu(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var slice_cols(Tape& t, Var a, int begin, int end);
Var slice_rows(Tape& t, Var a, int begin, int end);
/// Rows of `a` picked by index (repeats allowed).
Var gather_rows(Tape& t, Var a, const std::vector<int>& rows);
/// Column-wise mean over rows. Rows are summed in lexicographic order of their
/// contents so the result does not depend on row order.
Var mean_rows_sorted(Tape& t, Var a);
Var sum_all(Tape& t, Var a);
Var mean_all(Tape& t, Var a);
Var square(Tape& t, Var a);
/// Sum of squared differences, 1x1.
Var squared_distance(Tape& t, Var a, Var b);

struct GraphEdge {
    int a = 0;
    int b = 0;
    int cls = 0;
};

/// out_i = h_i + sum over undirected neighbours j of gate[cls] * h_j. Each
/// node's neighbour terms are summed in lexicographic order of their values.
Var graph_aggregate(Tape& t, Var h, Var gate, const std::vector<GraphEdge>& edges);

/// Fused LSTM cell pointwise stage. gates: B x 4H in (i, f, g, o) order,
/// cPrev: B x H. Returns B x 2H holding [h | c].
Var lstm_pointwise(Tape& t, Var gates, Var cPrev);

/// Whole LSTM pass as one node. At step s the batch input is the rows of `x`
/// listed in steps[s]; state starts at zero. Returns the final h (B x H).
/// Gradients match the unrolled composition of matmul, add_bias and
/// lstm_pointwise.
Var lstm_sequence(Tape& t, Var x, Var wx, Var wh, Var bias, const std::vector<std::vector<int>>& steps);

/// Log-softmax of a 1 x K row restricted to `mask`; masked entries are -inf
/// and receive no gradient. Throws when the mask is empty.
Var masked_log_softmax(Tape& t, Var logits, const std::vector<bool>& mask);
/// Entropy -sum p log p over the legal entries of a masked log-softmax row.
Var masked_entropy(Tape& t, Var logp, const std::vector<bool>& mask);
/// Element (r, c) as a 1x1.
Var pick(Tape& t, Var a, int r, int c);
/// Clipped surrogate loss -min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv)
/// for a 1x1 new log-probability.
Var ppo_clip_loss(Tape& t, Var newLogp, double oldLogp, double advantage, double eps);

// Modules ---------------------------------------------------------------------

struct Linear {
    int weight = -1;  // in x out
    int bias = -1;    // 1 x out
    int in = 0;
    int out = 0;

    static Linear create(ParamSet& ps, const std::string& name, int in, int out, Rng& rng);
    Var operator()(Tape& t, Var x) const;
};

}  // namespace tabsight::nn

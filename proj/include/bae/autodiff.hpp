#pragma once

#include <cstddef>
#include <limits>
#include <string_view>
#include <vector>

#include "bae/matrix.hpp"
#include "bae/param_store.hpp"

// Tape-based reverse-mode differentiation over dense matrices.
namespace bae::ad {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  /// Adjoint d(loss)/d(node) after Graph::backward; zeros if unreached.
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

enum class Op {
  kConstant,
  kParam,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kScale,
  kAddScalar,
  kTanh,
  kRelu,
  kExp,
  kLog,
  kAbs,
  kSum,
  kSumRows,
  kBroadcastRows,
  kBroadcastCols,
  kClamp,
  kMinimum,
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var constant(double value) { return constant(Matrix::scalar(value)); }
  /// Leaf bound to a store slot; backward() accumulates into store.grad(name).
  Var param(ParamStore& store, std::string_view name);
  /// Non-differentiable leaf referencing an external matrix without copying.
  /// The matrix must outlive the graph.
  Var view(const Matrix& value);

  /// Reverse sweep from a 1x1 loss. Throws ContractError for non-scalar loss.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(std::size_t id) const;
  const Matrix& adjoint(std::size_t id) const;

  // Construction primitive used by the op functions below.
  Var push(Op op, Matrix value, std::size_t a = kNone, std::size_t b = kNone, double s0 = 0.0,
           double s1 = 0.0);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

 private:
  struct Node {
    Op op = Op::kConstant;
    std::size_t a = kNone;
    std::size_t b = kNone;
    double s0 = 0.0;
    double s1 = 0.0;
    Matrix value;
    const Matrix* external = nullptr;
    Matrix* grad_sink = nullptr;
    bool requires_grad = false;
  };

  const Matrix& node_value(const Node& n) const { return n.external ? *n.external : n.value; }
  Matrix& adj(std::size_t id);
  void backprop_node(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<Matrix> adjoints_;
  std::vector<bool> has_adjoint_;
  Matrix empty_;
};

Var matmul(Var a, Var b);
/// Elementwise with scalar (1x1) broadcast on either side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
/// Throws DomainError on any nonpositive entry.
Var log(Var a);
Var abs(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
/// N x M -> N x 1
Var sum_rows(Var a);
/// 1 x M -> n x M
Var broadcast_rows(Var row, std::size_t n);
/// N x 1 -> N x n
Var broadcast_cols(Var col, std::size_t n);
/// Gradient passes only where lo < x < hi.
Var clamp(Var a, double lo, double hi);
/// Gradient flows to the selected operand (first on ties).
Var minimum(Var a, Var b);
/// x·W + b with b broadcast over rows.
Var affine(Var x, Var w, Var b);
/// Row-wise log-softmax composed from explicit broadcast, exp, log and sum.
Var log_softmax_rows(Var logits);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace bae::ad

#include "bae/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "bae/errors.hpp"

namespace bae {

// ---------------------------------------------------------------- ParamStore

void ParamStore::add(std::string name, Matrix init) {
  if (index_.count(name)) throw ContractError("ParamStore: duplicate parameter " + name);
  Matrix g(init.rows(), init.cols(), 0.0);
  index_.emplace(name, slots_.size());
  slots_.push_back(Slot{std::move(name), std::move(init), std::move(g)});
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("ParamStore: unknown parameter " + std::string(name));
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& s : slots_) s.grad.fill(0.0);
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.value.size();
  return n;
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& s : slots_)
    for (double g : s.grad.data()) sq += g * g;
  return std::sqrt(sq);
}

void ParamStore::scale_grads(double factor) {
  for (auto& s : slots_)
    for (double& g : s.grad.data()) g *= factor;
}

bool ParamStore::all_finite() const {
  return std::all_of(slots_.begin(), slots_.end(),
                     [](const Slot& s) { return s.value.all_finite() && s.grad.all_finite(); });
}

bool ParamStore::values_equal(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (name(i) != other.name(i) || !(value(i) == other.value(i))) return false;
  }
  return true;
}

namespace ad {

namespace {

void require_same_graph(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.graph() != b.graph())
    throw ContractError("autodiff: operands belong to different graphs");
}

enum class Bcast { kNone, kLeftScalar, kRightScalar };

Bcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.same_shape(b)) return Bcast::kNone;
  if (a.is_scalar()) return Bcast::kLeftScalar;
  if (b.is_scalar()) return Bcast::kRightScalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                       b.shape_str());
}

template <typename F>
Matrix binary_map(const Matrix& a, const Matrix& b, Bcast kind, F f) {
  if (kind == Bcast::kNone) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  if (kind == Bcast::kLeftScalar) {
    Matrix out(b.rows(), b.cols());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = f(a[0], b[i]);
    return out;
  }
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[0]);
  return out;
}

template <typename F>
Matrix unary_map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Adds `src` into `dst`, summing when dst is the scalar side of a broadcast.
void accumulate(Matrix& dst, const Matrix& src) {
  if (dst.same_shape(src)) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  } else {
    double s = 0.0;
    for (double v : src.data()) s += v;
    dst[0] += s;
  }
}

}  // namespace

const Matrix& Var::value() const { return graph_->value(id_); }
const Matrix& Var::grad() const { return graph_->adjoint(id_); }

Var Graph::push(Op op, Matrix value, std::size_t a, std::size_t b, double s0, double s1) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.s0 = s0;
  n.s1 = s1;
  n.value = std::move(value);
  n.requires_grad = (a != kNone && nodes_[a].requires_grad) || (b != kNone && nodes_[b].requires_grad);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Matrix value) { return push(Op::kConstant, std::move(value)); }

Var Graph::param(ParamStore& store, std::string_view name) {
  const std::size_t idx = store.index_of(name);
  Node n;
  n.op = Op::kParam;
  n.external = &store.value(idx);
  n.grad_sink = &store.grad(idx);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::view(const Matrix& value) {
  Node n;
  n.op = Op::kConstant;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Matrix& Graph::value(std::size_t id) const { return node_value(nodes_.at(id)); }

const Matrix& Graph::adjoint(std::size_t id) const {
  if (id < has_adjoint_.size() && has_adjoint_[id]) return adjoints_[id];
  return empty_;
}

Matrix& Graph::adj(std::size_t id) {
  if (!has_adjoint_[id]) {
    const Matrix& v = node_value(nodes_[id]);
    adjoints_[id] = Matrix(v.rows(), v.cols(), 0.0);
    has_adjoint_[id] = true;
  }
  return adjoints_[id];
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw ContractError("backward: loss belongs to another graph");
  const Matrix& lv = value(loss.id());
  if (!lv.is_scalar())
    throw ContractError("backward: loss must be 1x1, got " + lv.shape_str());
  adjoints_.assign(nodes_.size(), Matrix());
  has_adjoint_.assign(nodes_.size(), false);
  adj(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (!has_adjoint_[id] || !nodes_[id].requires_grad) continue;
    backprop_node(id);
  }
  // Unreached nodes report zero adjoints of the right shape.
  for (std::size_t id = 0; id < nodes_.size(); ++id) adj(id);
}

void Graph::backprop_node(std::size_t id) {
  const Node& n = nodes_[id];
  const Matrix& g = adjoints_[id];
  const Matrix& out = node_value(n);
  auto wants = [&](std::size_t in) { return in != kNone && nodes_[in].requires_grad; };

  switch (n.op) {
    case Op::kConstant:
      break;
    case Op::kParam: {
      Matrix& sink = *n.grad_sink;
      for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i];
      break;
    }
    case Op::kMatMul: {
      const Matrix& a = value(n.a);
      const Matrix& b = value(n.b);
      if (wants(n.a)) matmul_accumulate(g, b, adj(n.a), false, true);
      if (wants(n.b)) matmul_accumulate(a, g, adj(n.b), true, false);
      break;
    }
    case Op::kAdd:
      if (wants(n.a)) accumulate(adj(n.a), g);
      if (wants(n.b)) accumulate(adj(n.b), g);
      break;
    case Op::kSub:
      if (wants(n.a)) accumulate(adj(n.a), g);
      if (wants(n.b)) {
        Matrix ng = unary_map(g, [](double v) { return -v; });
        accumulate(adj(n.b), ng);
      }
      break;
    case Op::kMul: {
      const Matrix& a = value(n.a);
      const Matrix& b = value(n.b);
      const Bcast kind = broadcast_kind(a, b, "mul");
      if (wants(n.a)) {
        Matrix da(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i)
          da[i] = g[i] * (kind == Bcast::kRightScalar ? b[0] : b[i]);
        accumulate(adj(n.a), da);
      }
      if (wants(n.b)) {
        Matrix db(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i)
          db[i] = g[i] * (kind == Bcast::kLeftScalar ? a[0] : a[i]);
        accumulate(adj(n.b), db);
      }
      break;
    }
    case Op::kNeg: {
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] -= g[i];
      break;
    }
    case Op::kScale: {
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += n.s0 * g[i];
      break;
    }
    case Op::kAddScalar: {
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      break;
    }
    case Op::kTanh: {
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - out[i] * out[i]);
      break;
    }
    case Op::kRelu: {
      const Matrix& a = value(n.a);
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += a[i] > 0.0 ? g[i] : 0.0;
      break;
    }
    case Op::kExp: {
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * out[i];
      break;
    }
    case Op::kLog: {
      const Matrix& a = value(n.a);
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / a[i];
      break;
    }
    case Op::kAbs: {
      const Matrix& a = value(n.a);
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < g.size(); ++i)
        da[i] += a[i] > 0.0 ? g[i] : (a[i] < 0.0 ? -g[i] : 0.0);
      break;
    }
    case Op::kSum: {
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0];
      break;
    }
    case Op::kSumRows: {
      Matrix& da = adj(n.a);
      for (std::size_t r = 0; r < da.rows(); ++r)
        for (std::size_t c = 0; c < da.cols(); ++c) da(r, c) += g(r, 0);
      break;
    }
    case Op::kBroadcastRows: {
      Matrix& da = adj(n.a);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) da(0, c) += g(r, c);
      break;
    }
    case Op::kBroadcastCols: {
      Matrix& da = adj(n.a);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) da(r, 0) += g(r, c);
      break;
    }
    case Op::kClamp: {
      const Matrix& a = value(n.a);
      Matrix& da = adj(n.a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] > n.s0 && a[i] < n.s1) da[i] += g[i];
      break;
    }
    case Op::kMinimum: {
      const Matrix& a = value(n.a);
      const Matrix& b = value(n.b);
      if (wants(n.a)) {
        Matrix& da = adj(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (a[i] <= b[i]) da[i] += g[i];
      }
      if (wants(n.b)) {
        Matrix& db = adj(n.b);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (a[i] > b[i]) db[i] += g[i];
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  Matrix v = bae::matmul(a.value(), b.value());
  return a.graph()->push(Op::kMatMul, std::move(v), a.id(), b.id());
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  const auto kind = broadcast_kind(a.value(), b.value(), "add");
  return a.graph()->push(Op::kAdd,
                         binary_map(a.value(), b.value(), kind, [](double x, double y) { return x + y; }),
                         a.id(), b.id());
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  const auto kind = broadcast_kind(a.value(), b.value(), "sub");
  return a.graph()->push(Op::kSub,
                         binary_map(a.value(), b.value(), kind, [](double x, double y) { return x - y; }),
                         a.id(), b.id());
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  const auto kind = broadcast_kind(a.value(), b.value(), "mul");
  return a.graph()->push(Op::kMul,
                         binary_map(a.value(), b.value(), kind, [](double x, double y) { return x * y; }),
                         a.id(), b.id());
}

Var neg(Var a) {
  return a.graph()->push(Op::kNeg, unary_map(a.value(), [](double x) { return -x; }), a.id());
}

Var scale(Var a, double s) {
  return a.graph()->push(Op::kScale, unary_map(a.value(), [s](double x) { return s * x; }), a.id(),
                         Graph::kNone, s);
}

Var add_scalar(Var a, double s) {
  return a.graph()->push(Op::kAddScalar, unary_map(a.value(), [s](double x) { return x + s; }),
                         a.id(), Graph::kNone, s);
}

Var tanh(Var a) {
  return a.graph()->push(Op::kTanh, unary_map(a.value(), [](double x) { return std::tanh(x); }),
                         a.id());
}

Var relu(Var a) {
  return a.graph()->push(Op::kRelu, unary_map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }),
                         a.id());
}

Var exp(Var a) {
  return a.graph()->push(Op::kExp, unary_map(a.value(), [](double x) { return std::exp(x); }), a.id());
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw DomainError("log: nonpositive entry " + std::to_string(v));
  }
  return a.graph()->push(Op::kLog, unary_map(a.value(), [](double x) { return std::log(x); }), a.id());
}

Var abs(Var a) {
  return a.graph()->push(Op::kAbs, unary_map(a.value(), [](double x) { return std::fabs(x); }), a.id());
}

Var square(Var a) { return mul(a, a); }

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph()->push(Op::kSum, Matrix::scalar(s), a.id());
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractError("mean: empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_rows(Var a) {
  const Matrix& v = a.value();
  Matrix out(v.rows(), 1, 0.0);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double s = 0.0;
    for (double x : v.row_span(r)) s += x;
    out(r, 0) = s;
  }
  return a.graph()->push(Op::kSumRows, std::move(out), a.id());
}

Var broadcast_rows(Var row, std::size_t n) {
  const Matrix& v = row.value();
  if (v.rows() != 1) throw DimensionError("broadcast_rows: expected 1xM, got " + v.shape_str());
  Matrix out(n, v.cols());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) = v(0, c);
  return row.graph()->push(Op::kBroadcastRows, std::move(out), row.id());
}

Var broadcast_cols(Var col, std::size_t n) {
  const Matrix& v = col.value();
  if (v.cols() != 1) throw DimensionError("broadcast_cols: expected Nx1, got " + v.shape_str());
  Matrix out(v.rows(), n);
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = v(r, 0);
  return col.graph()->push(Op::kBroadcastCols, std::move(out), col.id());
}

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return a.graph()->push(Op::kClamp,
                         unary_map(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); }),
                         a.id(), Graph::kNone, lo, hi);
}

Var minimum(Var a, Var b) {
  require_same_graph(a, b);
  if (!a.value().same_shape(b.value()))
    throw DimensionError("minimum: incompatible shapes " + a.value().shape_str() + " and " +
                         b.value().shape_str());
  return a.graph()->push(Op::kMinimum,
                         binary_map(a.value(), b.value(), Bcast::kNone,
                                    [](double x, double y) { return std::min(x, y); }),
                         a.id(), b.id());
}

Var affine(Var x, Var w, Var b) { return add(matmul(x, w), broadcast_rows(b, x.rows())); }

Var log_softmax_rows(Var logits) {
  const Matrix& v = logits.value();
  Matrix row_max(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto row = v.row_span(r);
    row_max(r, 0) = *std::max_element(row.begin(), row.end());
  }
  // The max shift cancels analytically, so it enters as a constant.
  Graph& g = *logits.graph();
  Var shifted = sub(logits, broadcast_cols(g.constant(std::move(row_max)), v.cols()));
  Var lse = log(sum_rows(exp(shifted)));
  return sub(shifted, broadcast_cols(lse, v.cols()));
}

}  // namespace ad
}  // namespace bae

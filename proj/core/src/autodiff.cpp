#include "pnshape/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pnshape/error.hpp"

namespace pnshape::ad {

namespace {

using Node = Tape::Node;

Tape& tape_of(Var x) {
  if (x.tape == nullptr) throw Error(ErrorCode::kTapeMismatch, "variable is not on a tape");
  return *x.tape;
}

Tape& tape_of(Var x, Var y) {
  if (x.tape == nullptr || x.tape != y.tape)
    throw Error(ErrorCode::kTapeMismatch, "operands live on different tapes");
  return *x.tape;
}

Node unary(Op op, Var x) {
  Node n;
  n.op = op;
  n.parent[0] = x.id;
  n.n_parents = 1;
  return n;
}

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F>
Var map_unary(Op op, Var x, F f) {
  Tape& t = tape_of(x);
  Node n = unary(op, x);
  const auto v = t.value(x);
  n.value.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) n.value[i] = f(v[i]);
  return t.push(std::move(n));
}

template <typename F>
Var map_binary(Op op, Var x, Var y, F f) {
  Tape& t = tape_of(x, y);
  const auto a = t.value(x);
  const auto b = t.value(y);
  const std::size_t na = a.size(), nb = b.size();
  if (na != nb && na != 1 && nb != 1)
    throw Error(ErrorCode::kSizeMismatch, "elementwise operands differ in length");
  const std::size_t n = std::max(na, nb);
  Node node;
  node.op = op;
  node.parent[0] = x.id;
  node.parent[1] = y.id;
  node.n_parents = 2;
  node.value.resize(n);
  for (std::size_t i = 0; i < n; ++i) node.value[i] = f(a[na == 1 ? 0 : i], b[nb == 1 ? 0 : i]);
  return t.push(std::move(node));
}

// Accumulates an output-shaped gradient into a parent that may be broadcast.
void accumulate(std::vector<double>& dst, std::size_t i, double v) {
  dst[dst.size() == 1 ? 0 : i] += v;
}

}  // namespace

const std::vector<double>& Gradient::wrt(Var leaf) const {
  for (std::size_t i = 0; i < leaf_ids_.size(); ++i)
    if (leaf_ids_[i] == leaf.id) return grads_[i];
  throw Error(ErrorCode::kTapeMismatch, "variable is not a leaf of this gradient's tape");
}

Var Tape::leaf(std::vector<double> value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  Var v = push(std::move(n));
  leaves_.push_back(v.id);
  return v;
}

Var Tape::constant(std::vector<double> value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::push(Node node) {
  for (int p = 0; p < node.n_parents; ++p)
    if (node.parent[p] >= nodes_.size())
      throw Error(ErrorCode::kTapeMismatch, "parent node does not precede child");
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id >= nodes_.size())
    throw Error(ErrorCode::kTapeMismatch, "variable does not belong to this tape");
}

const Node& Tape::node(Var v) const {
  check(v);
  return nodes_[v.id];
}

std::span<const double> Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const auto& val = node(v).value;
  if (val.size() != 1) throw Error(ErrorCode::kNonScalarLoss, "node is not a scalar");
  return val[0];
}

std::size_t Tape::size(Var v) const { return node(v).value.size(); }

Op Tape::op(Var v) const { return node(v).op; }

Gradient Tape::backward(Var loss) {
  check(loss);
  if (nodes_[loss.id].value.size() != 1)
    throw Error(ErrorCode::kNonScalarLoss, "backward needs a scalar loss");
  if (backward_done_) throw Error(ErrorCode::kTapeReused, "backward already ran on this tape");
  backward_done_ = true;

  std::vector<std::vector<double>> grad(loss.id + 1);
  grad[loss.id] = {1.0};
  auto grad_of = [&](std::size_t id) -> std::vector<double>& {
    if (grad[id].empty()) grad[id].assign(nodes_[id].value.size(), 0.0);
    return grad[id];
  };

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (grad[id].empty()) continue;
    const Node& n = nodes_[id];
    const std::vector<double>& g = grad[id];
    const std::size_t out = n.value.size();
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kAdd:
      case Op::kSub: {
        auto& gx = grad_of(n.parent[0]);
        for (std::size_t i = 0; i < out; ++i) accumulate(gx, i, g[i]);
        auto& gy = grad_of(n.parent[1]);
        const double s = n.op == Op::kAdd ? 1.0 : -1.0;
        for (std::size_t i = 0; i < out; ++i) accumulate(gy, i, s * g[i]);
        break;
      }
      case Op::kMul: {
        const auto& x = nodes_[n.parent[0]].value;
        const auto& y = nodes_[n.parent[1]].value;
        auto& gx = grad_of(n.parent[0]);
        for (std::size_t i = 0; i < out; ++i) accumulate(gx, i, g[i] * y[y.size() == 1 ? 0 : i]);
        auto& gy = grad_of(n.parent[1]);
        for (std::size_t i = 0; i < out; ++i) accumulate(gy, i, g[i] * x[x.size() == 1 ? 0 : i]);
        break;
      }
      case Op::kScale: {
        auto& gx = grad_of(n.parent[0]);
        for (std::size_t i = 0; i < out; ++i) gx[i] += n.a * g[i];
        break;
      }
      case Op::kAddConst: {
        auto& gx = grad_of(n.parent[0]);
        for (std::size_t i = 0; i < out; ++i) gx[i] += g[i];
        break;
      }
      case Op::kMulConst:
      case Op::kExp:
      case Op::kLog:
      case Op::kSqrt:
      case Op::kReciprocal:
      case Op::kSquare:
      case Op::kRelu:
      case Op::kSoftplus:
      case Op::kClamp: {
        // Local partials were cached in aux during the forward pass.
        auto& gx = grad_of(n.parent[0]);
        for (std::size_t i = 0; i < out; ++i) gx[i] += g[i] * n.aux[i];
        break;
      }
      case Op::kSum: {
        auto& gx = grad_of(n.parent[0]);
        for (double& v : gx) v += g[0];
        break;
      }
      case Op::kMean: {
        auto& gx = grad_of(n.parent[0]);
        const double s = g[0] / static_cast<double>(gx.size());
        for (double& v : gx) v += s;
        break;
      }
      case Op::kLogSumExpRows: {
        const auto& x = nodes_[n.parent[0]].value;
        auto& gx = grad_of(n.parent[0]);
        const std::size_t w = n.width;
        for (std::size_t r = 0; r < out; ++r)
          for (std::size_t j = 0; j < w; ++j)
            gx[r * w + j] += g[r] * std::exp(x[r * w + j] - n.value[r]);
        break;
      }
      case Op::kConvolve: {
        auto& gx = grad_of(n.parent[0]);
        const std::size_t taps = n.aux.size();
        for (std::size_t i = 0; i < gx.size(); ++i) {
          const double* gy = g.data() + i;
          double acc = 0.0;
          for (std::size_t j = 0; j < taps; ++j) acc += gy[j] * n.aux[j];
          gx[i] += acc;
        }
        break;
      }
      case Op::kGather: {
        auto& gx = grad_of(n.parent[0]);
        for (std::size_t i = 0; i < out; ++i) gx[n.index[i]] += g[i];
        break;
      }
      case Op::kScatter: {
        auto& gx = grad_of(n.parent[0]);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[n.index[i]];
        break;
      }
    }
  }

  Gradient result;
  result.leaf_ids_ = leaves_;
  for (std::size_t id : leaves_) {
    if (id < grad.size() && !grad[id].empty())
      result.grads_.push_back(std::move(grad[id]));
    else
      result.grads_.emplace_back(nodes_[id].value.size(), 0.0);
  }
  return result;
}

Var add(Var x, Var y) { return map_binary(Op::kAdd, x, y, [](double a, double b) { return a + b; }); }
Var sub(Var x, Var y) { return map_binary(Op::kSub, x, y, [](double a, double b) { return a - b; }); }
Var mul(Var x, Var y) { return map_binary(Op::kMul, x, y, [](double a, double b) { return a * b; }); }
Var neg(Var x) { return scale(x, -1.0); }

Var scale(Var x, double c) {
  Tape& t = tape_of(x);
  Node n = unary(Op::kScale, x);
  n.a = c;
  const auto v = t.value(x);
  n.value.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) n.value[i] = c * v[i];
  return t.push(std::move(n));
}

Var add_const(Var x, std::vector<double> c) {
  Tape& t = tape_of(x);
  const auto v = t.value(x);
  if (c.size() != v.size()) throw Error(ErrorCode::kSizeMismatch, "constant length mismatch");
  Node n = unary(Op::kAddConst, x);
  n.value = std::move(c);
  for (std::size_t i = 0; i < v.size(); ++i) n.value[i] += v[i];
  return t.push(std::move(n));
}

Var add_const(Var x, double c) {
  return add_const(x, std::vector<double>(tape_of(x).size(x), c));
}

Var mul_const(Var x, std::vector<double> c) {
  Tape& t = tape_of(x);
  const auto v = t.value(x);
  if (c.size() != v.size()) throw Error(ErrorCode::kSizeMismatch, "constant length mismatch");
  Node n = unary(Op::kMulConst, x);
  n.value.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) n.value[i] = c[i] * v[i];
  n.aux = std::move(c);
  return t.push(std::move(n));
}

namespace {

// Unary op whose local partial is a function of (input, output).
template <typename F, typename D>
Var cached_unary(Op op, Var x, F f, D d) {
  Tape& t = tape_of(x);
  Node n = unary(op, x);
  const auto v = t.value(x);
  n.value.resize(v.size());
  n.aux.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    n.value[i] = f(v[i]);
    n.aux[i] = d(v[i], n.value[i]);
  }
  return t.push(std::move(n));
}

}  // namespace

Var exp(Var x) {
  return cached_unary(Op::kExp, x, [](double a) { return std::exp(a); },
                      [](double, double y) { return y; });
}

Var log(Var x) {
  return cached_unary(Op::kLog, x, [](double a) { return std::log(a); },
                      [](double a, double) { return 1.0 / a; });
}

Var sqrt(Var x) {
  return cached_unary(Op::kSqrt, x, [](double a) { return std::sqrt(a); },
                      [](double, double y) { return 0.5 / y; });
}

Var reciprocal(Var x) {
  return cached_unary(Op::kReciprocal, x, [](double a) { return 1.0 / a; },
                      [](double, double y) { return -y * y; });
}

Var square(Var x) {
  return cached_unary(Op::kSquare, x, [](double a) { return a * a; },
                      [](double a, double) { return 2.0 * a; });
}

Var relu(Var x) {
  return cached_unary(Op::kRelu, x, [](double a) { return a > 0.0 ? a : 0.0; },
                      [](double a, double) { return a > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var x) {
  return cached_unary(Op::kSoftplus, x, softplus_value,
                      [](double a, double) { return sigmoid(a); });
}

Var clamp(Var x, double lo, double hi) {
  return cached_unary(Op::kClamp, x, [=](double a) { return std::clamp(a, lo, hi); },
                      [=](double a, double) { return (a > lo && a < hi) ? 1.0 : 0.0; });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  Node n = unary(Op::kSum, x);
  double s = 0.0;
  for (double v : t.value(x)) s += v;
  n.value = {s};
  return t.push(std::move(n));
}

Var mean(Var x) {
  Tape& t = tape_of(x);
  const auto v = t.value(x);
  if (v.empty()) throw Error(ErrorCode::kEmptyInput, "mean of empty vector");
  Node n = unary(Op::kMean, x);
  double s = 0.0;
  for (double e : v) s += e;
  n.value = {s / static_cast<double>(v.size())};
  return t.push(std::move(n));
}

Var logsumexp_rows(Var x, std::size_t width) {
  Tape& t = tape_of(x);
  const auto v = t.value(x);
  if (width == 0 || v.size() % width != 0)
    throw Error(ErrorCode::kSizeMismatch, "length is not a multiple of the row width");
  Node n = unary(Op::kLogSumExpRows, x);
  n.width = width;
  const std::size_t rows = v.size() / width;
  n.value.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) s += std::exp(row[j] - mx);
    n.value[r] = mx + std::log(s);
  }
  return t.push(std::move(n));
}

Var convolve(Var x, std::span<const double> taps) {
  Tape& t = tape_of(x);
  const auto v = t.value(x);
  if (v.empty() || taps.empty()) throw Error(ErrorCode::kEmptyInput, "empty convolution operand");
  Node n = unary(Op::kConvolve, x);
  n.aux.assign(taps.begin(), taps.end());
  n.value.assign(v.size() + taps.size() - 1, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double xi = v[i];
    if (xi == 0.0) continue;
    double* y = n.value.data() + i;
    for (std::size_t j = 0; j < taps.size(); ++j) y[j] += xi * taps[j];
  }
  return t.push(std::move(n));
}

Var gather(Var x, std::vector<std::size_t> index) {
  Tape& t = tape_of(x);
  const auto v = t.value(x);
  Node n = unary(Op::kGather, x);
  n.value.resize(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= v.size()) throw Error(ErrorCode::kSizeMismatch, "gather index out of range");
    n.value[i] = v[index[i]];
  }
  n.index = std::move(index);
  return t.push(std::move(n));
}

Var scatter(Var x, std::vector<std::size_t> index, std::size_t length) {
  Tape& t = tape_of(x);
  const auto v = t.value(x);
  if (index.size() != v.size()) throw Error(ErrorCode::kSizeMismatch, "scatter index length");
  Node n = unary(Op::kScatter, x);
  n.value.assign(length, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= length) throw Error(ErrorCode::kSizeMismatch, "scatter index out of range");
    n.value[index[i]] += v[i];
  }
  n.index = std::move(index);
  return t.push(std::move(n));
}

Var slice(Var x, std::size_t start, std::size_t length) {
  std::vector<std::size_t> idx(length);
  for (std::size_t i = 0; i < length; ++i) idx[i] = start + i;
  return gather(x, std::move(idx));
}

CVar constant(Tape& tape, std::span<const cplx> values) {
  std::vector<double> re(values.size()), im(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    re[i] = values[i].real();
    im[i] = values[i].imag();
  }
  return {tape.constant(std::move(re)), tape.constant(std::move(im))};
}

std::vector<cplx> value(const CVar& z) {
  const auto re = tape_of(z.re).value(z.re);
  const auto im = tape_of(z.im).value(z.im);
  std::vector<cplx> out(re.size());
  for (std::size_t i = 0; i < re.size(); ++i) out[i] = cplx(re[i], im[i]);
  return out;
}

CVar add(const CVar& x, const CVar& y) { return {add(x.re, y.re), add(x.im, y.im)}; }
CVar sub(const CVar& x, const CVar& y) { return {sub(x.re, y.re), sub(x.im, y.im)}; }

CVar mul_const(const CVar& x, std::span<const cplx> c) {
  std::vector<double> cr(c.size()), ci(c.size()), nci(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    cr[i] = c[i].real();
    ci[i] = c[i].imag();
    nci[i] = -ci[i];
  }
  // [re']   [cr -ci] [re]
  // [im'] = [ci  cr] [im]
  Var re = add(mul_const(x.re, cr), mul_const(x.im, nci));
  Var im = add(mul_const(x.re, ci), mul_const(x.im, std::move(cr)));
  return {re, im};
}

Var abs2(const CVar& x) { return add(square(x.re), square(x.im)); }

CVar gather(const CVar& x, const std::vector<std::size_t>& index) {
  return {gather(x.re, index), gather(x.im, index)};
}

CVar scatter(const CVar& x, const std::vector<std::size_t>& index, std::size_t n) {
  return {scatter(x.re, index, n), scatter(x.im, index, n)};
}

CVar slice(const CVar& x, std::size_t start, std::size_t length) {
  return {slice(x.re, start, length), slice(x.im, start, length)};
}

CVar convolve(const CVar& x, std::span<const double> taps) {
  return {convolve(x.re, taps), convolve(x.im, taps)};
}

GradcheckResult gradcheck(const TapeFunction& f, std::span<const double> point, double h,
                          double abs_floor) {
  GradcheckResult res;
  {
    Tape tape;
    Var leaf = tape.leaf(std::vector<double>(point.begin(), point.end()));
    Var loss = f(tape, leaf);
    res.analytic = tape.backward(loss).wrt(leaf);
  }
  auto eval = [&](const std::vector<double>& p) {
    Tape tape;
    Var leaf = tape.leaf(p);
    return tape.scalar(f(tape, leaf));
  };
  std::vector<double> p(point.begin(), point.end());
  res.numeric.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = eval(p);
    p[i] = orig - h;
    const double down = eval(p);
    p[i] = orig;
    res.numeric[i] = (up - down) / (2.0 * h);
    const double a = res.analytic[i], n = res.numeric[i];
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), abs_floor});
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = i;
    }
  }
  return res;
}

}  // namespace pnshape::ad

#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace pnshape::ad {

class Tape;

/// Handle to a vector-valued node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

/// Complex vector carried as two real nodes.
struct CVar {
  Var re;
  Var im;
};

enum class Op {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddConst,
  kMulConst,
  kExp,
  kLog,
  kSqrt,
  kReciprocal,
  kSquare,
  kRelu,
  kSoftplus,
  kClamp,
  kSum,
  kMean,
  kLogSumExpRows,
  kConvolve,
  kGather,
  kScatter,
};

/// Gradients of one backward pass, one vector per leaf.
class Gradient {
 public:
  const std::vector<double>& wrt(Var leaf) const;
  std::size_t leaf_count() const noexcept { return leaf_ids_.size(); }

 private:
  friend class Tape;
  std::vector<std::size_t> leaf_ids_;
  std::vector<std::vector<double>> grads_;
};

/// Append-only record of a forward computation. Nodes are stored in creation
/// order, which is a topological order because parents must already exist.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(std::vector<double> value);
  Var constant(std::vector<double> value);
  Var constant(double value) { return constant(std::vector<double>{value}); }

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t size(Var v) const;
  std::size_t node_count() const noexcept { return nodes_.size(); }
  Op op(Var v) const;

  /// Reverse accumulation from a scalar node. Allowed once per tape.
  Gradient backward(Var loss);

  struct Node {
    Op op = Op::kConstant;
    std::size_t parent[2] = {0, 0};
    int n_parents = 0;
    std::vector<double> value;
    std::vector<double> aux;          // constants or cached local partials
    std::vector<std::size_t> index;   // gather/scatter maps
    double a = 0.0, b = 0.0;          // scalar parameters
    std::size_t width = 0;            // row width / input length
  };

  Var push(Node node);
  const Node& node(Var v) const;

 private:
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> leaves_;
  bool backward_done_ = false;
};

// Elementwise binary ops broadcast an operand of size 1.
Var add(Var x, Var y);
Var sub(Var x, Var y);
Var mul(Var x, Var y);
Var neg(Var x);
Var scale(Var x, double c);
Var add_const(Var x, std::vector<double> c);
Var add_const(Var x, double c);
Var mul_const(Var x, std::vector<double> c);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var reciprocal(Var x);
Var square(Var x);
/// max(x, 0); the subgradient at 0 is taken as 0.
Var relu(Var x);
/// log(1 + e^x), evaluated stably.
Var softplus(Var x);
/// Clamped values pass no gradient.
Var clamp(Var x, double lo, double hi);
Var sum(Var x);
Var mean(Var x);
/// Row-wise log-sum-exp of x viewed as rows of `width` values.
Var logsumexp_rows(Var x, std::size_t width);
/// Full linear convolution with constant taps.
Var convolve(Var x, std::span<const double> taps);
/// y[i] = x[index[i]].
Var gather(Var x, std::vector<std::size_t> index);
/// y has length n, y[index[i]] += x[i].
Var scatter(Var x, std::vector<std::size_t> index, std::size_t n);
Var slice(Var x, std::size_t start, std::size_t length);

using cplx = std::complex<double>;

CVar constant(Tape& tape, std::span<const cplx> values);
std::vector<cplx> value(const CVar& z);
CVar add(const CVar& x, const CVar& y);
CVar sub(const CVar& x, const CVar& y);
/// Elementwise product with constant complex factors (2x2 real form).
CVar mul_const(const CVar& x, std::span<const cplx> c);
Var abs2(const CVar& x);
CVar gather(const CVar& x, const std::vector<std::size_t>& index);
CVar scatter(const CVar& x, const std::vector<std::size_t>& index, std::size_t n);
CVar slice(const CVar& x, std::size_t start, std::size_t length);
CVar convolve(const CVar& x, std::span<const double> taps);

/// Scalar function of a single leaf vector, recorded on the given tape.
using TapeFunction = std::function<Var(Tape&, Var)>;

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Compares backward() against central differences with step h. The relative
/// error of component i is |a - n| / max(|a|, |n|, abs_floor).
GradcheckResult gradcheck(const TapeFunction& f, std::span<const double> point, double h,
                          double abs_floor = 1e-8);

}  // namespace pnshape::ad

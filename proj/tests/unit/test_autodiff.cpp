#include <doctest.h>

#include <cmath>
#include <random>

#include "pnshape/autodiff.hpp"
#include "pnshape/error.hpp"

using namespace pnshape;
using cplx = std::complex<double>;
namespace ad = pnshape::ad;

namespace {

std::vector<double> random_point(std::size_t n, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST_CASE("elementary derivatives") {
  ad::Tape t;
  const ad::Var x = t.leaf({2.0});
  const ad::Var y = t.leaf({3.0});
  const auto g = t.backward(ad::mul(x, y));
  CHECK(g.wrt(x)[0] == 3.0);
  CHECK(g.wrt(y)[0] == 2.0);

  ad::Tape t2;
  const ad::Var v = t2.leaf({1.0, -2.0, 0.5});
  const auto g2 = t2.backward(ad::sum(ad::square(v)));
  CHECK(g2.wrt(v) == std::vector<double>{2.0, -4.0, 1.0});

  ad::Tape t3;
  const ad::Var h = t3.leaf({1.5, 0.5});
  const ad::Var unused = t3.leaf({7.0});
  const auto g3 = t3.backward(ad::sum(ad::relu(ad::add_const(h, -1.0))));
  CHECK(g3.wrt(h) == std::vector<double>{1.0, 0.0});
  CHECK(g3.wrt(unused) == std::vector<double>{0.0});
}

TEST_CASE("hinge subgradient at the kink is zero") {
  ad::Tape t;
  const ad::Var x = t.leaf({1.0});
  const auto g = t.backward(ad::sum(ad::relu(ad::add_const(x, -1.0))));
  CHECK(g.wrt(x)[0] == 0.0);
}

TEST_CASE("logsumexp gradient is the softmax") {
  ad::Tape t;
  const std::vector<double> v{0.3, -1.2, 2.0, 0.1};
  const ad::Var x = t.leaf(v);
  const auto g = t.backward(ad::sum(ad::logsumexp_rows(x, 4)));
  double z = 0.0;
  for (double e : v) z += std::exp(e);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(g.wrt(x)[i] == doctest::Approx(std::exp(v[i]) / z));
}

TEST_CASE("errors: non-scalar loss, second backward, foreign tape") {
  ad::Tape t;
  const ad::Var x = t.leaf({1.0, 2.0});
  CHECK_THROWS_AS(t.backward(x), Error);
  const ad::Var s = ad::sum(x);
  CHECK_NOTHROW(t.backward(s));
  CHECK_THROWS_AS(t.backward(s), Error);
  ad::Tape other;
  const ad::Var y = other.leaf({1.0, 2.0});
  CHECK_THROWS_AS(ad::add(x, y), Error);
}

TEST_CASE("gradcheck of each primitive") {
  const auto p = random_point(12, 1);
  const std::vector<double> taps{0.2, -0.5, 1.0, 0.3};
  struct Case {
    const char* name;
    ad::TapeFunction f;
    double tol;
  };
  const std::vector<Case> cases{
      {"quadratic", [](ad::Tape&, ad::Var x) { return ad::sum(ad::mul(x, ad::scale(x, 0.5))); }, 1e-8},
      {"exp-log", [](ad::Tape&, ad::Var x) { return ad::sum(ad::log(ad::add_const(ad::exp(x), 1.0))); }, 1e-7},
      {"sqrt-reciprocal",
       [](ad::Tape&, ad::Var x) { return ad::sum(ad::reciprocal(ad::sqrt(ad::add_const(ad::square(x), 1.0)))); },
       1e-7},
      {"softplus-mean", [](ad::Tape&, ad::Var x) { return ad::mean(ad::softplus(x)); }, 1e-7},
      {"logsumexp", [](ad::Tape&, ad::Var x) { return ad::sum(ad::logsumexp_rows(x, 4)); }, 1e-7},
      {"convolve",
       [&](ad::Tape&, ad::Var x) { return ad::sum(ad::square(ad::convolve(x, taps))); }, 1e-7},
      {"gather-scatter",
       [](ad::Tape&, ad::Var x) {
         auto gth = ad::gather(x, {3, 3, 0, 11, 5});
         auto sc = ad::scatter(gth, {0, 2, 4, 6, 8}, 9);
         return ad::sum(ad::mul(sc, ad::add_const(sc, 2.0)));
       },
       1e-7},
      {"broadcast-sub", [](ad::Tape& t, ad::Var x) {
         auto m = ad::mean(x);
         return ad::sum(ad::square(ad::sub(x, ad::mul(m, t.constant(3.0)))));
       }, 1e-7},
      {"complex",
       [](ad::Tape& t, ad::Var x) {
         ad::CVar z{ad::slice(x, 0, 6), ad::slice(x, 6, 6)};
         const std::vector<cplx> c{cplx(0.5, -1), cplx(2, 0.1), cplx(-1, 1), cplx(0, 1), cplx(1, 0), cplx(0.3, 0.3)};
         auto prod = ad::mul_const(z, c);
         auto shifted = ad::sub(prod, ad::constant(t, c));
         return ad::sum(ad::abs2(ad::convolve(shifted, std::vector<double>{1.0, -0.5})));
       },
       1e-7},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const auto r = ad::gradcheck(c.f, p, 1e-5);
    CHECK(r.max_rel_error < c.tol);
  }
}

TEST_CASE("clamp passes gradient only inside the range") {
  ad::Tape t;
  const ad::Var x = t.leaf({-50.0, 3.0, 60.0});
  const auto g = t.backward(ad::sum(ad::clamp(x, -40.0, 40.0)));
  CHECK(g.wrt(x) == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("backward is linear in the loss") {
  const auto p = random_point(6, 4);
  auto grad = [&](int which) {
    ad::Tape t;
    const ad::Var x = t.leaf(p);
    const ad::Var a = ad::sum(ad::exp(x));
    const ad::Var b = ad::sum(ad::square(x));
    const ad::Var loss = which == 0 ? a : which == 1 ? b : ad::add(a, b);
    return t.backward(loss).wrt(x);
  };
  const auto ga = grad(0), gb = grad(1), gab = grad(2);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(gab[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-15));
}

#include <doctest.h>

#include <random>

#include "support/oracles.hpp"
#include "urcl/autograd.hpp"
#include "urcl/tensor.hpp"

using namespace urcl;
using V = ad::Var<double>;

namespace {

Mat<double> random_mat(Index rows, Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// Reduces an arbitrary-shape output to a scalar with fixed random weights so every
/// output entry contributes a distinct gradient.
V weighted_sum(const V& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::hadamard(out, V::constant(random_mat(out.rows(), out.cols(), rng))));
}

}  // namespace

TEST_CASE("Tensor4 rows follow (sample, step, node) order") {
  Tensor4<double> x(2, 3, 4, 2);
  x(1, 2, 3, 1) = 7.0;
  CHECK(x.data()(((1 * 3) + 2) * 4 + 3, 1) == 7.0);
  CHECK(x.frame(1, 2)(3, 1) == 7.0);
  CHECK(x.sample(1)(2 * 4 + 3, 1) == 7.0);
  CHECK(x.shape_string() == "2x3x4x2");
  CHECK_THROWS_AS(Tensor4<double>(SeqLayout{2, 3, 4}, Mat<double>::Zero(5, 2)), ContractError);
}

TEST_CASE("elementwise and product ops match finite differences") {
  std::mt19937_64 rng(3);
  const V a = V::parameter(random_mat(3, 4, rng));
  const V b = V::parameter(random_mat(3, 4, rng));
  const V w = V::parameter(random_mat(4, 2, rng));
  const V bias = V::parameter(random_mat(1, 2, rng));
  const V square = V::parameter(random_mat(3, 3, rng));

  const std::vector<std::pair<const char*, std::function<V()>>> cases{
      {"matmul", [&] { return weighted_sum(ad::matmul(a, w), 1); }},
      {"matmul_nt", [&] { return weighted_sum(ad::matmul_nt(a, b), 2); }},
      {"add/sub", [&] { return weighted_sum(ad::sub(ad::add(a, b), ad::scale(b, 0.3)), 3); }},
      {"hadamard", [&] { return weighted_sum(ad::hadamard(a, b), 4); }},
      {"affine", [&] { return weighted_sum(ad::affine(a, w, bias), 5); }},
      {"tanh", [&] { return weighted_sum(ad::tanh(a), 6); }},
      {"sigmoid", [&] { return weighted_sum(ad::sigmoid(a), 7); }},
      {"relu", [&] { return weighted_sum(ad::relu(a), 8); }},
      {"softmax", [&] { return weighted_sum(ad::softmax_rows(square), 9); }},
      {"mean", [&] { return ad::mean(ad::hadamard(a, a)); }},
      {"hcat", [&] { return weighted_sum(ad::hcat(a, b), 10); }},
      {"normalize_rows", [&] { return weighted_sum(ad::normalize_rows(a), 11); }},
      {"mean_abs_error", [&] { return ad::mean_abs_error(a, b); }},
  };
  for (const auto& [name, loss] : cases) {
    CAPTURE(name);
    for (const V& p : {a, b, w, bias, square}) CHECK(oracle::gradient_check(p, loss, 12, 42) < 1e-6);
  }
}

TEST_CASE("sequence ops match finite differences") {
  std::mt19937_64 rng(5);
  const SeqLayout layout{2, 4, 3};
  const V x = V::parameter(random_mat(layout.rows(), 2, rng));
  const V op = V::parameter(random_mat(3, 3, rng));
  CHECK(oracle::gradient_check(x, [&] { return weighted_sum(ad::time_shift(x, layout, 2), 1); }, 24, 1) < 1e-6);
  CHECK(oracle::gradient_check(x, [&] { return weighted_sum(ad::select_step(x, layout, 1), 2); }, 24, 1) < 1e-6);
  CHECK(oracle::gradient_check(x, [&] { return weighted_sum(ad::node_mix(op, x), 3); }, 24, 1) < 1e-6);
  CHECK(oracle::gradient_check(op, [&] { return weighted_sum(ad::node_mix(op, x), 3); }, 9, 1) < 1e-6);
  CHECK(oracle::gradient_check(x, [&] { return weighted_sum(ad::mean_over_nodes(x, 3), 4); }, 24, 1) < 1e-6);
}

TEST_CASE("time_shift delays within each sample and zero-pads the start") {
  const SeqLayout layout{2, 3, 2};
  Mat<double> values(layout.rows(), 1);
  for (Index r = 0; r < values.rows(); ++r) values(r, 0) = static_cast<double>(r + 1);
  const Mat<double> shifted = ad::time_shift(V::constant(values), layout, 1).value();
  for (Index b = 0; b < 2; ++b) {
    for (Index v = 0; v < 2; ++v) {
      CHECK(shifted(layout.row(b, 0, v), 0) == 0.0);
      CHECK(shifted(layout.row(b, 1, v), 0) == values(layout.row(b, 0, v), 0));
      CHECK(shifted(layout.row(b, 2, v), 0) == values(layout.row(b, 1, v), 0));
    }
  }
  CHECK(ad::select_step(V::constant(values), layout, -1).value().isZero());
}

TEST_CASE("node_mix applies the operator to every block") {
  std::mt19937_64 rng(8);
  const Mat<double> op = random_mat(4, 4, rng);
  const Mat<double> x = random_mat(12, 3, rng);
  const Mat<double> mixed = ad::node_mix(V::constant(op), V::constant(x)).value();
  for (Index k = 0; k < 3; ++k) {
    const Mat<double> expected = op * x.middleRows(k * 4, 4);
    CHECK((mixed.middleRows(k * 4, 4) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mean_abs_error takes a zero subgradient at exact matches") {
  const V pred = V::parameter(Mat<double>{{1.0, 2.0}});
  const V target = V::constant(Mat<double>{{1.0, 4.0}});
  const V loss = ad::mean_abs_error(pred, target);
  CHECK(loss.item() == doctest::Approx(1.0));
  ad::backward(loss);
  CHECK(pred.grad()(0, 0) == 0.0);
  CHECK(pred.grad()(0, 1) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(ad::mean_abs_error(pred, V::constant(Mat<double>::Zero(2, 1))), ContractError);
}

TEST_CASE("normalize_rows leaves zero rows at zero with zero gradient") {
  const V x = V::parameter(Mat<double>{{0.0, 0.0}, {3.0, 4.0}});
  const V out = ad::normalize_rows(x);
  CHECK(out.value()(0, 0) == 0.0);
  CHECK(out.value()(1, 0) == doctest::Approx(0.6));
  ad::backward(ad::sum(out));
  CHECK(x.grad().row(0).isZero());
}

TEST_CASE("no-grad mode records nothing and gradients accumulate across uses") {
  const V p = V::parameter(Mat<double>::Constant(1, 1, 2.0));
  {
    ad::NoGradGuard guard;
    const V y = ad::hadamard(p, p);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(ad::grad_enabled());
  ad::backward(ad::add(ad::hadamard(p, p), p));
  CHECK(p.grad()(0, 0) == doctest::Approx(5.0));
  CHECK_THROWS_AS(ad::backward(V::parameter(Mat<double>::Zero(2, 1))), ContractError);
}

TEST_CASE("detach blocks gradient flow") {
  const V p = V::parameter(Mat<double>::Constant(1, 1, 3.0));
  ad::backward(ad::add(ad::hadamard(p, ad::detach(p)), p));
  CHECK(p.grad()(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("ParameterSet deep copies are independent") {
  ad::ParameterSet<double> ps;
  ps.add("a", Mat<double>::Ones(2, 2));
  CHECK_THROWS_AS(ps.add("a", Mat<double>::Ones(1, 1)), ContractError);
  auto copy = ps.deep_copy();
  copy.entries()[0].second.mutable_value()(0, 0) = 5.0;
  CHECK(ps.at("a").value()(0, 0) == 1.0);
  CHECK(ps.scalar_count() == 4);
  CHECK_THROWS_AS(ps.at("missing"), ContractError);
}

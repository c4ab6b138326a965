#pragma once

#include <cmath>
#include <limits>

#include "urcl/autograd.hpp"
#include "urcl/errors.hpp"
#include "urcl/log.hpp"
#include "urcl/tensor.hpp"

namespace urcl {

/// (p / |p|) . (z / |z|), with z treated as a constant. Returns 0 when either norm is zero.
template <typename Scalar>
Scalar cosine_similarity_stopgrad(const Vec<Scalar>& p, const Vec<Scalar>& z) {
  if (p.size() != z.size()) throw ContractError("cosine_similarity: length mismatch");
  const Scalar np = p.norm(), nz = z.norm();
  if (np == Scalar(0) || nz == Scalar(0)) {
    logger().warn("cosine similarity of a zero-norm vector; returning 0");
    return Scalar(0);
  }
  return p.dot(z) / (np * nz);
}

/// Contrastive loss from a batch similarity matrix S (S[s][s'] between sample s and s'):
/// mean_s of -log( exp(S_ss / tau) / sum_{s' != s} exp(S_ss' / tau) ).
/// The positive pair is left out of the denominator.
template <typename Scalar>
ad::Var<Scalar> contrastive_nll(const ad::Var<Scalar>& similarity, Scalar tau) {
  const Index n = similarity.rows();
  if (similarity.cols() != n) throw ContractError("contrastive_nll: similarity must be square");
  if (n < 2) throw ContractError("contrastive loss needs a batch of at least 2 pairs");
  if (!(tau > Scalar(0))) throw ContractError("contrastive loss temperature must be positive");

  const Mat<Scalar> logits = similarity.value() / tau;
  // Softmax over the off-diagonal entries of each row.
  Mat<Scalar> weights = Mat<Scalar>::Zero(n, n);
  Scalar total = 0;
  for (Index s = 0; s < n; ++s) {
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (j != s) peak = std::max(peak, logits(s, j));
    }
    Scalar denom = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == s) continue;
      weights(s, j) = std::exp(logits(s, j) - peak);
      denom += weights(s, j);
    }
    weights.row(s) /= denom;
    total += -logits(s, s) + peak + std::log(denom);
  }
  Mat<Scalar> out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(n);
  return ad::make_op<Scalar>(std::move(out), {similarity}, [weights, tau, n](ad::Node<Scalar>& self) {
    const Scalar scale = self.grad(0, 0) / (tau * static_cast<Scalar>(n));
    Mat<Scalar> g = weights * scale;
    g.diagonal().setConstant(-scale);
    self.parent(0).accumulate(g);
  });
}

/// Symmetric contrastive loss over S view pairs. Row s of p1/z1 and p2/z2 holds the
/// projected and encoded vectors of the two augmented views of sample s. The z
/// arguments are detached: no gradient reaches them or whatever produced them.
template <typename Scalar>
ad::Var<Scalar> graphcl_batch_loss(const ad::Var<Scalar>& p1, const ad::Var<Scalar>& p2, const ad::Var<Scalar>& z1,
                                   const ad::Var<Scalar>& z2, Scalar tau) {
  if (p1.rows() != p2.rows() || z1.rows() != p1.rows() || z2.rows() != p1.rows() || p1.cols() != z2.cols() ||
      p2.cols() != z1.cols()) {
    throw ContractError("graphcl_batch_loss: embedding shapes differ");
  }
  const ad::Var<Scalar> c12 = ad::matmul_nt(ad::normalize_rows(p1), ad::normalize_rows(ad::detach(z2)));
  const ad::Var<Scalar> c21 = ad::matmul_nt(ad::normalize_rows(p2), ad::normalize_rows(ad::detach(z1)));
  return contrastive_nll(ad::scale(ad::add(c12, c21), Scalar(0.5)), tau);
}

template <typename Scalar>
Scalar graphcl_batch_loss(const Mat<Scalar>& p1, const Mat<Scalar>& p2, const Mat<Scalar>& z1, const Mat<Scalar>& z2,
                          Scalar tau) {
  using V = ad::Var<Scalar>;
  ad::NoGradGuard guard;
  return graphcl_batch_loss(V::constant(p1), V::constant(p2), V::constant(z1), V::constant(z2), tau).item();
}

template <typename Scalar>
ad::Var<Scalar> task_loss_mae(const ad::Var<Scalar>& prediction, const ad::Var<Scalar>& target) {
  return ad::mean_abs_error(prediction, target);
}

struct LossBreakdown {
  double task = 0.0;
  double ssl = 0.0;
  double total = 0.0;
};

inline LossBreakdown total_loss(double task, double ssl) {
  if (!std::isfinite(task) || !std::isfinite(ssl)) throw NumericalError("non-finite loss component");
  return {task, ssl, task + ssl};
}

}  // namespace urcl

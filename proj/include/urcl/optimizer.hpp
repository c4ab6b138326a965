#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "urcl/autograd.hpp"
#include "urcl/errors.hpp"

namespace urcl {

/// Scales all gradients in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before scaling. Parameters without a gradient are skipped.
template <typename Scalar>
double clip_grad_norm(std::vector<ad::Var<Scalar>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.has_grad()) sq += p.node()->grad.template cast<double>().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Scalar factor = static_cast<Scalar>(max_norm / norm);
    for (auto& p : params) {
      if (p.has_grad()) p.node()->grad *= factor;
    }
  }
  return norm;
}

template <typename Scalar>
class Optimizer {
 public:
  explicit Optimizer(std::vector<ad::Var<Scalar>> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;

  /// Applies one update from the current gradients, then clears them.
  virtual void step() = 0;
  /// Forgets any accumulated state.
  virtual void reset() {}

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::vector<ad::Var<Scalar>>& parameters() { return params_; }

 protected:
  std::vector<ad::Var<Scalar>> params_;
  double lr_ = 1e-3;
};

template <typename Scalar>
class Sgd final : public Optimizer<Scalar> {
 public:
  Sgd(std::vector<ad::Var<Scalar>> params, double lr) : Optimizer<Scalar>(std::move(params)) { this->lr_ = lr; }

  void step() override {
    const Scalar lr = static_cast<Scalar>(this->lr_);
    for (auto& p : this->params_) {
      if (!p.has_grad()) continue;
      p.mutable_value() -= lr * p.node()->grad;
      p.zero_grad();
    }
  }
};

/// Adaptive moment estimation with bias correction.
template <typename Scalar>
class Adam final : public Optimizer<Scalar> {
 public:
  Adam(std::vector<ad::Var<Scalar>> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : Optimizer<Scalar>(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    this->lr_ = lr;
    reset();
  }

  void reset() override {
    first_.clear();
    second_.clear();
    for (const auto& p : this->params_) {
      first_.push_back(Mat<Scalar>::Zero(p.rows(), p.cols()));
      second_.push_back(Mat<Scalar>::Zero(p.rows(), p.cols()));
    }
    steps_ = 0;
  }

  void step() override {
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    const Scalar step_size = static_cast<Scalar>(this->lr_ * std::sqrt(c2) / c1);
    const Scalar eps = static_cast<Scalar>(eps_ * std::sqrt(c2));
    const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
    for (std::size_t i = 0; i < this->params_.size(); ++i) {
      auto& p = this->params_[i];
      if (!p.has_grad()) continue;
      const auto& g = p.node()->grad.array();
      first_[i].array() = b1 * first_[i].array() + (Scalar(1) - b1) * g;
      second_[i].array() = b2 * second_[i].array() + (Scalar(1) - b2) * g.square();
      p.mutable_value().array() -= step_size * first_[i].array() / (second_[i].array().sqrt() + eps);
      p.zero_grad();
    }
  }

  long steps() const { return steps_; }

 private:
  double beta1_, beta2_, eps_;
  std::vector<Mat<Scalar>> first_;
  std::vector<Mat<Scalar>> second_;
  long steps_ = 0;
};

template <typename Scalar>
std::unique_ptr<Optimizer<Scalar>> make_optimizer(const std::string& name, std::vector<ad::Var<Scalar>> params,
                                                  double lr) {
  if (name == "adam") return std::make_unique<Adam<Scalar>>(std::move(params), lr);
  if (name == "sgd") return std::make_unique<Sgd<Scalar>>(std::move(params), lr);
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

}  // namespace urcl

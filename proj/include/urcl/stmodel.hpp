#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "urcl/autograd.hpp"
#include "urcl/errors.hpp"
#include "urcl/stream_data.hpp"
#include "urcl/tensor.hpp"

namespace urcl {

struct ModelConfig {
  Index nodes = 0;
  Index input_channels = 1;
  Index input_steps = 12;
  Index output_steps = 1;
  Index output_channels = 1;
  std::vector<Index> hidden_widths{32, 32, 32, 32, 256};
  std::vector<Index> dilations{1, 2, 1, 2, 4};
  Index diffusion_steps = 2;
  Index embedding_dim = 10;
  Index decoder_hidden = 512;
  Index projector_hidden = 256;
  bool directed = true;

  Index representation_width() const { return hidden_widths.back(); }

  void validate() const {
    if (nodes < 1 || input_channels < 1 || input_steps < 1 || output_steps < 1 || output_channels < 1) {
      throw ConfigError("model: node, channel and step counts must be positive");
    }
    if (hidden_widths.empty() || hidden_widths.size() != dilations.size()) {
      throw ConfigError("model: need one dilation per encoder layer");
    }
    for (Index w : hidden_widths) {
      if (w < 1) throw ConfigError("model: hidden widths must be positive");
    }
    for (Index d : dilations) {
      if (d < 1) throw ConfigError("model: dilations must be positive");
    }
    if (diffusion_steps < 0 || embedding_dim < 1 || decoder_hidden < 1 || projector_hidden < 1) {
      throw ConfigError("model: invalid diffusion steps or head widths");
    }
  }
};

/// softmax(relu(E1 E2^T)) row-wise.
template <typename Scalar>
ad::Var<Scalar> adaptive_adjacency(const ad::Var<Scalar>& e1, const ad::Var<Scalar>& e2) {
  if (e1.rows() != e2.rows() || e1.cols() != e2.cols()) throw ContractError("adaptive_adjacency: E1/E2 shapes differ");
  return ad::softmax_rows(ad::relu(ad::matmul_nt(e1, e2)));
}

template <typename Scalar>
Mat<Scalar> adaptive_adjacency(const Mat<Scalar>& e1, const Mat<Scalar>& e2) {
  ad::NoGradGuard guard;
  return adaptive_adjacency(ad::Var<Scalar>::constant(e1), ad::Var<Scalar>::constant(e2)).value();
}

/// Forward and backward random-walk transition matrices of A + I.
template <typename Scalar>
struct TransitionMatrices {
  Mat<Scalar> forward;
  Mat<Scalar> backward;
  // Sparse copies used for propagation; sensor graphs have few neighbours per node.
  Eigen::SparseMatrix<Scalar, Eigen::RowMajor> forward_sparse;
  Eigen::SparseMatrix<Scalar, Eigen::RowMajor> backward_sparse;
};

template <typename Scalar>
TransitionMatrices<Scalar> transition_matrices(const Mat<Scalar>& adjacency) {
  const Index n = adjacency.rows();
  if (adjacency.cols() != n) throw ContractError("transition_matrices: adjacency must be square");
  const Mat<Scalar> looped = adjacency + Mat<Scalar>::Identity(n, n);
  const Vec<Scalar> out_sum = looped.rowwise().sum();
  const Vec<Scalar> in_sum = looped.colwise().sum().transpose();
  if ((out_sum.array() == Scalar(0)).any() || (in_sum.array() == Scalar(0)).any()) {
    throw ContractError("transition_matrices: zero row sum");
  }
  TransitionMatrices<Scalar> p;
  p.forward = out_sum.cwiseInverse().asDiagonal() * looped;
  p.backward = in_sum.cwiseInverse().asDiagonal() * looped.transpose();
  p.forward_sparse = p.forward.sparseView();
  p.backward_sparse = p.backward.sparseView();
  return p;
}

/// Per-step weights of the diffusion convolution. `backward` is empty for
/// undirected graphs, where the forward transition matrix is used alone.
template <typename Scalar>
struct DiffusionWeights {
  std::vector<ad::Var<Scalar>> forward;
  std::vector<ad::Var<Scalar>> backward;
  std::vector<ad::Var<Scalar>> adaptive;
};

/// relu( sum_k P^f_k X W_k1 + P^b_k X W_k2 + Aadp_k X W_k3 ) with P_k the k-th matrix power.
/// Rows of x are consecutive |V|-row blocks, one per (sample, step).
template <typename Scalar>
ad::Var<Scalar> diffusion_gconv(const ad::Var<Scalar>& x, const TransitionMatrices<Scalar>& transitions,
                                const ad::Var<Scalar>& adaptive, const DiffusionWeights<Scalar>& w,
                                bool rectify = true) {
  using V = ad::Var<Scalar>;
  const std::size_t terms = w.forward.size();
  if (terms == 0 || w.adaptive.size() != terms || (!w.backward.empty() && w.backward.size() != terms)) {
    throw ContractError("diffusion_gconv: inconsistent weight counts");
  }
  V xf = x, xb = x, xa = x;
  V out;
  auto accumulate = [&out](V term) { out = out.defined() ? ad::add(out, term) : term; };
  for (std::size_t k = 0; k < terms; ++k) {
    if (k > 0) {
      xf = ad::node_mix(transitions.forward_sparse, xf);
      if (!w.backward.empty()) xb = ad::node_mix(transitions.backward_sparse, xb);
      xa = ad::node_mix(adaptive, xa);
    }
    accumulate(ad::matmul(xf, w.forward[k]));
    if (!w.backward.empty()) accumulate(ad::matmul(xb, w.backward[k]));
    accumulate(ad::matmul(xa, w.adaptive[k]));
  }
  return rectify ? ad::relu(out) : out;
}

/// Kernel-2 gate pair. `filter` and `gate` stack the delayed tap on top of the current tap.
template <typename Scalar>
struct GatedTcnWeights {
  ad::Var<Scalar> filter;
  ad::Var<Scalar> filter_bias;
  ad::Var<Scalar> gate;
  ad::Var<Scalar> gate_bias;
};

namespace detail {
template <typename Scalar>
ad::Var<Scalar> gate_taps(const ad::Var<Scalar>& taps, const GatedTcnWeights<Scalar>& w) {
  return ad::hadamard(ad::tanh(ad::affine(taps, w.filter, w.filter_bias)),
                      ad::sigmoid(ad::affine(taps, w.gate, w.gate_bias)));
}
}  // namespace detail

/// tanh(F * x) (.) sigmoid(G * x) where * is a causal convolution of length 2 and
/// dilation d: step j reads steps j - d and j, with zeros before the first step.
template <typename Scalar>
ad::Var<Scalar> gated_tcn(const ad::Var<Scalar>& x, SeqLayout layout, Index dilation,
                          const GatedTcnWeights<Scalar>& w) {
  return detail::gate_taps(ad::hcat(ad::time_shift(x, layout, dilation), x), w);
}

/// The final step of gated_tcn only: rows (b, v).
template <typename Scalar>
ad::Var<Scalar> gated_tcn_last_step(const ad::Var<Scalar>& x, SeqLayout layout, Index dilation,
                                    const GatedTcnWeights<Scalar>& w) {
  const Index last = layout.steps - 1;
  return detail::gate_taps(ad::hcat(ad::select_step(x, layout, last - dilation), ad::select_step(x, layout, last)),
                           w);
}

template <typename Scalar>
struct Encoding {
  /// (B*|V|) x width, final-step features per node.
  ad::Var<Scalar> per_node;
  /// B x width, mean over nodes.
  ad::Var<Scalar> pooled;
};

/// Encoder/decoder pair the training loop depends on. Alternate backbones
/// implement this without touching replay, augmentation or loss code.
template <typename Scalar>
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual Encoding<Scalar> encode(const Tensor4<Scalar>& inputs, const Mat<Scalar>& adjacency) const = 0;
  /// (B*|V|) x (N*C_out), rows (b, v) and columns (step, channel).
  virtual ad::Var<Scalar> decode(const ad::Var<Scalar>& per_node) const = 0;

  virtual ad::ParameterSet<Scalar>& parameters() = 0;
  virtual const ad::ParameterSet<Scalar>& parameters() const = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;
};

namespace detail {
template <typename Scalar>
Mat<Scalar> glorot(Index fan_in, Index fan_out, Index rows, Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

template <typename Scalar>
Mat<Scalar> glorot(Index rows, Index cols, std::mt19937_64& rng) {
  return glorot<Scalar>(rows, cols, rows, cols, rng);
}

template <typename Scalar>
void add_dense(ad::ParameterSet<Scalar>& ps, const std::string& prefix, Index in, Index out, std::mt19937_64& rng) {
  ps.add(prefix + ".weight", glorot<Scalar>(in, out, rng));
  ps.add(prefix + ".bias", Mat<Scalar>::Zero(1, out));
}

template <typename Scalar>
ad::Var<Scalar> dense(const ad::ParameterSet<Scalar>& ps, const std::string& prefix, const ad::Var<Scalar>& x) {
  return ad::affine(x, ps.at(prefix + ".weight"), ps.at(prefix + ".bias"));
}
}  // namespace detail

/// Gated dilated causal convolutions interleaved with diffusion graph
/// convolutions over the sensor graph and a learned adaptive adjacency,
/// followed by a two-layer per-node feed-forward decoder.
template <typename Scalar>
class GraphWaveNetBackbone final : public Backbone<Scalar> {
 public:
  GraphWaveNetBackbone(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    auto& ps = params_;
    const Index steps = config_.diffusion_steps + 1;
    const Index terms = (config_.directed ? 3 : 2) * steps;
    const Index first = config_.hidden_widths.front();

    detail::add_dense(ps, "encoder.lift", config_.input_channels, first, rng);
    Index in = first;
    for (std::size_t i = 0; i < config_.hidden_widths.size(); ++i) {
      const Index w = config_.hidden_widths[i];
      const std::string p = layer_prefix(i);
      detail::add_dense(ps, p + ".entry", in, w, rng);
      ps.add(p + ".tcn.filter", detail::glorot<Scalar>(2 * w, w, 2 * w, w, rng));
      ps.add(p + ".tcn.filter_bias", Mat<Scalar>::Zero(1, w));
      ps.add(p + ".tcn.gate", detail::glorot<Scalar>(2 * w, w, 2 * w, w, rng));
      ps.add(p + ".tcn.gate_bias", Mat<Scalar>::Zero(1, w));
      for (Index k = 0; k < steps; ++k) {
        const std::string ks = std::to_string(k);
        ps.add(p + ".gcn.forward" + ks, detail::glorot<Scalar>(w * terms, w, w, w, rng));
        if (config_.directed) ps.add(p + ".gcn.backward" + ks, detail::glorot<Scalar>(w * terms, w, w, w, rng));
        ps.add(p + ".gcn.adaptive" + ks, detail::glorot<Scalar>(w * terms, w, w, w, rng));
      }
      if (w != in) detail::add_dense(ps, p + ".shortcut", in, w, rng);
      in = w;
    }
    ps.add("adaptive.E1", detail::glorot<Scalar>(config_.nodes, config_.embedding_dim, rng));
    ps.add("adaptive.E2", detail::glorot<Scalar>(config_.nodes, config_.embedding_dim, rng));
    detail::add_dense(ps, "decoder.fc1", in, config_.decoder_hidden, rng);
    detail::add_dense(ps, "decoder.fc2", config_.decoder_hidden, config_.output_steps * config_.output_channels, rng);
  }

  const ModelConfig& config() const { return config_; }

  Encoding<Scalar> encode(const Tensor4<Scalar>& inputs, const Mat<Scalar>& adjacency) const override {
    using V = ad::Var<Scalar>;
    if (inputs.nodes() != config_.nodes || inputs.channels() != config_.input_channels || inputs.batch() < 1 ||
        inputs.steps() < 1) {
      throw ContractError("encode: input " + inputs.shape_string() + " does not match the model");
    }
    if (adjacency.rows() != config_.nodes || adjacency.cols() != config_.nodes) {
      throw ContractError("encode: adjacency shape does not match the model");
    }
    const auto& ps = params_;
    const SeqLayout layout = inputs.layout();
    const TransitionMatrices<Scalar> transitions = transition_matrices(adjacency);
    const V adaptive = adaptive_adjacency(ps.at("adaptive.E1"), ps.at("adaptive.E2"));

    V h = detail::dense(ps, "encoder.lift", V::constant(inputs.data()));
    const std::size_t layers = config_.hidden_widths.size();
    for (std::size_t i = 0; i < layers; ++i) {
      const std::string p = layer_prefix(i);
      const Index dilation = config_.dilations[i];
      const GatedTcnWeights<Scalar> tcn{ps.at(p + ".tcn.filter"), ps.at(p + ".tcn.filter_bias"),
                                        ps.at(p + ".tcn.gate"), ps.at(p + ".tcn.gate_bias")};
      V gated, residual;
      if (i + 1 < layers) {
        gated = gated_tcn(detail::dense(ps, p + ".entry", h), layout, dilation, tcn);
        residual = h;
      } else {
        // Only the final step of the last layer is consumed, so it alone is computed.
        const Index last = layout.steps - 1;
        const V current = ad::select_step(h, layout, last);
        const V entry_now = detail::dense(ps, p + ".entry", current);
        const V entry_prev =
            last - dilation >= 0
                ? detail::dense(ps, p + ".entry", ad::select_step(h, layout, last - dilation))
                : V::constant(Mat<Scalar>::Zero(entry_now.rows(), entry_now.cols()));
        gated = detail::gate_taps(ad::hcat(entry_prev, entry_now), tcn);
        residual = current;
      }
      if (ps.find(p + ".shortcut.weight") != nullptr) residual = detail::dense(ps, p + ".shortcut", residual);
      h = ad::add(diffusion_gconv(gated, transitions, adaptive, diffusion_weights(i)), residual);
      if (!h.value().allFinite()) {
        throw NumericalError("encoder layer " + std::to_string(i + 1) + " produced a non-finite activation");
      }
    }
    return {h, ad::mean_over_nodes(h, config_.nodes)};
  }

  ad::Var<Scalar> decode(const ad::Var<Scalar>& per_node) const override {
    return detail::dense(params_, "decoder.fc2", ad::relu(detail::dense(params_, "decoder.fc1", per_node)));
  }

  DiffusionWeights<Scalar> diffusion_weights(std::size_t layer) const {
    DiffusionWeights<Scalar> w;
    const std::string p = layer_prefix(layer);
    for (Index k = 0; k <= config_.diffusion_steps; ++k) {
      const std::string ks = std::to_string(k);
      w.forward.push_back(params_.at(p + ".gcn.forward" + ks));
      if (config_.directed) w.backward.push_back(params_.at(p + ".gcn.backward" + ks));
      w.adaptive.push_back(params_.at(p + ".gcn.adaptive" + ks));
    }
    return w;
  }

  ad::ParameterSet<Scalar>& parameters() override { return params_; }
  const ad::ParameterSet<Scalar>& parameters() const override { return params_; }

  std::unique_ptr<Backbone<Scalar>> clone() const override {
    return std::unique_ptr<Backbone<Scalar>>(new GraphWaveNetBackbone(config_, params_.deep_copy()));
  }

  static std::string layer_prefix(std::size_t i) { return "encoder.layer" + std::to_string(i + 1); }

 private:
  GraphWaveNetBackbone(ModelConfig config, ad::ParameterSet<Scalar> params)
      : config_(std::move(config)), params_(std::move(params)) {}

  ModelConfig config_;
  ad::ParameterSet<Scalar> params_;
};

/// Backbone plus the contrastive projection head and the sensor graph it forecasts on.
template <typename Scalar>
class STModel {
 public:
  STModel(const ModelConfig& config, Mat<Scalar> adjacency, std::uint64_t seed)
      : config_(config),
        backbone_(std::make_unique<GraphWaveNetBackbone<Scalar>>(config, seed)),
        adjacency_(std::move(adjacency)) {
    if (adjacency_.rows() != config.nodes || adjacency_.cols() != config.nodes) {
      throw ContractError("STModel: adjacency does not match node count");
    }
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const Index width = config.representation_width();
    detail::add_dense(projector_, "projector.fc1", width, config.projector_hidden, rng);
    detail::add_dense(projector_, "projector.fc2", config.projector_hidden, width, rng);
  }

  STModel(const STModel& other)
      : config_(other.config_),
        backbone_(other.backbone_->clone()),
        projector_(other.projector_.deep_copy()),
        adjacency_(other.adjacency_) {}
  STModel& operator=(const STModel& other) {
    if (this != &other) *this = STModel(other);
    return *this;
  }
  STModel(STModel&&) noexcept = default;
  STModel& operator=(STModel&&) noexcept = default;

  STModel clone() const { return STModel(*this); }

  const ModelConfig& config() const { return config_; }
  const Mat<Scalar>& adjacency() const { return adjacency_; }
  Backbone<Scalar>& backbone() { return *backbone_; }
  const Backbone<Scalar>& backbone() const { return *backbone_; }

  Encoding<Scalar> encode(const Tensor4<Scalar>& inputs, const Mat<Scalar>& adjacency) const {
    return backbone_->encode(inputs, adjacency);
  }
  Encoding<Scalar> encode(const Tensor4<Scalar>& inputs) const { return encode(inputs, adjacency_); }
  ad::Var<Scalar> decode(const ad::Var<Scalar>& per_node) const { return backbone_->decode(per_node); }

  /// Two affine layers with a rectifier between.
  ad::Var<Scalar> project(const ad::Var<Scalar>& z) const {
    return detail::dense(projector_, "projector.fc2", ad::relu(detail::dense(projector_, "projector.fc1", z)));
  }

  /// Predictions for a batch, laid out like to_node_rows(targets).
  ad::Var<Scalar> forecast(const Tensor4<Scalar>& inputs) const { return decode(encode(inputs).per_node); }

  /// Mean absolute error of the forecast against the batch targets.
  ad::Var<Scalar> sampling_loss(const WindowBatch<Scalar>& batch) const {
    return ad::mean_abs_error(forecast(batch.inputs), ad::Var<Scalar>::constant(to_node_rows(batch.targets)));
  }

  /// Per-window MAE without recording a graph.
  std::vector<Scalar> item_losses(const WindowBatch<Scalar>& batch) const {
    ad::NoGradGuard guard;
    const Mat<Scalar> pred = forecast(batch.inputs).value();
    const Mat<Scalar> target = to_node_rows(batch.targets);
    const Index nodes = config_.nodes;
    std::vector<Scalar> out;
    for (Index b = 0; b < batch.size(); ++b) {
      out.push_back((pred.middleRows(b * nodes, nodes) - target.middleRows(b * nodes, nodes)).cwiseAbs().mean());
    }
    return out;
  }

  ad::ParameterSet<Scalar>& projector_parameters() { return projector_; }
  const ad::ParameterSet<Scalar>& projector_parameters() const { return projector_; }

  /// Every parameter, backbone first, in a stable order.
  std::vector<std::pair<std::string, ad::Var<Scalar>>> named_parameters() const {
    auto out = backbone_->parameters().entries();
    for (const auto& e : projector_.entries()) out.push_back(e);
    return out;
  }

  std::vector<ad::Var<Scalar>> parameter_vars() const {
    std::vector<ad::Var<Scalar>> out;
    for (const auto& e : named_parameters()) out.push_back(e.second);
    return out;
  }

  void zero_grad() {
    backbone_->parameters().zero_grad();
    projector_.zero_grad();
  }

 private:
  ModelConfig config_;
  std::unique_ptr<Backbone<Scalar>> backbone_;
  ad::ParameterSet<Scalar> projector_;
  Mat<Scalar> adjacency_;
};

}  // namespace urcl

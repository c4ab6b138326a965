#pragma once

#include <Eigen/Dense>

#include <string>

#include "urcl/errors.hpp"

namespace urcl {

using Index = Eigen::Index;

/// Row-major dense matrix; every activation in the library is stored as one.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Row ordering of a sequence tensor flattened to a matrix: row = (b * steps + t) * nodes + v.
struct SeqLayout {
  Index batch = 0;
  Index steps = 0;
  Index nodes = 0;

  Index rows() const { return batch * steps * nodes; }
  Index row(Index b, Index t, Index v) const { return (b * steps + t) * nodes + v; }
  bool operator==(const SeqLayout&) const = default;
};

/// B x T x |V| x C array. Channels are the matrix columns, (b, t, v) the rows.
template <typename Scalar>
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(Index batch, Index steps, Index nodes, Index channels)
      : layout_{batch, steps, nodes}, data_(Mat<Scalar>::Zero(batch * steps * nodes, channels)) {}
  Tensor4(SeqLayout layout, Mat<Scalar> data) : layout_(layout), data_(std::move(data)) {
    if (data_.rows() != layout_.rows()) {
      throw ContractError("Tensor4: data has " + std::to_string(data_.rows()) + " rows, layout needs " +
                          std::to_string(layout_.rows()));
    }
  }

  Index batch() const { return layout_.batch; }
  Index steps() const { return layout_.steps; }
  Index nodes() const { return layout_.nodes; }
  Index channels() const { return data_.cols(); }
  const SeqLayout& layout() const { return layout_; }

  Scalar& operator()(Index b, Index t, Index v, Index c) { return data_(layout_.row(b, t, v), c); }
  Scalar operator()(Index b, Index t, Index v, Index c) const { return data_(layout_.row(b, t, v), c); }

  /// The |V| x C slab of sample b at step t.
  auto frame(Index b, Index t) { return data_.middleRows(layout_.row(b, t, 0), layout_.nodes); }
  auto frame(Index b, Index t) const { return data_.middleRows(layout_.row(b, t, 0), layout_.nodes); }

  /// The T*|V| x C block of sample b.
  auto sample(Index b) { return data_.middleRows(layout_.row(b, 0, 0), layout_.steps * layout_.nodes); }
  auto sample(Index b) const { return data_.middleRows(layout_.row(b, 0, 0), layout_.steps * layout_.nodes); }

  Mat<Scalar>& data() { return data_; }
  const Mat<Scalar>& data() const { return data_; }

  bool same_shape(const Tensor4& other) const {
    return layout_ == other.layout_ && channels() == other.channels();
  }

  std::string shape_string() const {
    return std::to_string(batch()) + "x" + std::to_string(steps()) + "x" + std::to_string(nodes()) + "x" +
           std::to_string(channels());
  }

  template <typename Other>
  Tensor4<Other> cast() const {
    return Tensor4<Other>(layout_, data_.template cast<Other>());
  }

 private:
  SeqLayout layout_{};
  Mat<Scalar> data_;
};

}  // namespace urcl

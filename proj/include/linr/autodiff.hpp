#pragma once

// Minimal reverse-mode differentiation over per-point feature matrices.
//
// A Tape records one forward pass as a list of nodes. Every op reads its
// inputs by node id, so a node's value is immutable once created. Parameters
// live outside the tape in a ParameterSet; ops that use them accumulate into
// the parameter's gradient during backward().
//
// All reductions run in a fixed order (offset order, then row order, then
// channel order) so identical inputs give bit-identical outputs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "linr/voxel.hpp"

namespace linr::nn {

template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T* row(std::size_t r) { return data_.data() + r * cols_; }
  const T* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  // Glorot fan sizes used by the initializer.
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

/// Owns every learned tensor of a model. Ids are creation order; the
/// canonical flattening order is lexicographic by name.
template <typename T>
class ParameterSet {
 public:
  int add(std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in,
          std::size_t fan_out);

  std::size_t tensors() const { return params_.size(); }
  std::size_t count() const;

  Parameter<T>& operator[](int id) { return params_[static_cast<std::size_t>(id)]; }
  const Parameter<T>& operator[](int id) const { return params_[static_cast<std::size_t>(id)]; }
  int find(const std::string& name) const;

  /// Tensor ids sorted by name.
  const std::vector<int>& canonical_order() const { return order_; }

  std::vector<T> flatten() const;
  /// Throws CountMismatch when `values` has the wrong length.
  void unflatten(std::span<const T> values);
  std::vector<T> flatten_grad() const;

  void zero_grad();
  /// Sum of squared parameter values, accumulated in canonical order.
  double squared_norm() const;

 private:
  std::vector<Parameter<T>> params_;
  std::vector<int> order_;
};

using Var = int;

enum class Op : std::uint8_t {
  Input,
  Linear,
  SparseConv,
  Relu,
  Sigmoid,
  Add,
  Concat,
  EmbedRow,
  BceBits,
  Sum,
};

inline constexpr double kProbabilityEpsilon = 1.0 / (1 << 20);

template <typename T>
class Tape {
 public:
  /// With `record` false the tape only evaluates; backward() then throws.
  explicit Tape(ParameterSet<T>& params, bool record = true);

  Var input(Matrix<T> value);

  /// x (n x cin) * W (cin x cout) + b, per row.
  Var linear(Var x, int weight, int bias);
  /// Submanifold convolution over a 3^3 neighborhood. `weight` stacks the
  /// 27 (cin x cout) tap matrices in kernel_offset order.
  Var sparse_conv(Var x, const NeighborTable& nb, int weight, int bias);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var concat(Var a, Var b);
  /// Row `row` of parameter `table`, repeated for `n` points.
  Var embed_row(int table, std::size_t row, std::size_t n);
  /// Binary cross-entropy in bits, summed over rows; `probs` is n x 1 and is
  /// clamped to [eps, 1-eps] before the log.
  Var bce_bits(Var probs, std::span<const std::uint8_t> targets);
  /// Sum of 1 x 1 nodes.
  Var sum(std::span<const Var> scalars);

  const Matrix<T>& value(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
  const Matrix<T>& grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].grad; }
  T scalar(Var v) const { return value(v)(0, 0); }

  /// Seeds d(root)/d(root) = 1 and propagates into node and parameter grads.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

 private:
  struct Node {
    Op op = Op::Input;
    Var a = -1;
    Var b = -1;
    int weight = -1;
    int bias = -1;
    std::size_t row = 0;
    const NeighborTable* nb = nullptr;
    std::vector<std::uint8_t> targets;
    std::vector<Var> inputs;
    Matrix<T> value;
    Matrix<T> grad;
  };

  Var push(Node node);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v)]; }
  void accumulate(Var v, const Matrix<T>& g);
  void backward_node(Node& n);

  ParameterSet<T>* params_;
  bool record_;
  std::vector<Node> nodes_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace linr::nn

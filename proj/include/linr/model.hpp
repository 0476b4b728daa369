#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "linr/autodiff.hpp"
#include "linr/voxel.hpp"

namespace linr {

inline constexpr int kStages = 8;

struct ModelConfig {
  // Number of scale transitions N; one SCE MLP and one embedding row each.
  int scales = 1;
  int mlp_channels = 24;
  int conv_channels = 8;
  int embed_channels = 8;
  int irn_blocks = 1;
  int bit_depth = kDefaultBitDepth;

  void validate() const;
};

/// Geometry of one coarse level as seen by the network.
struct LevelContext {
  LevelContext() = default;
  explicit LevelContext(const SparseVoxelSet& coarse);

  std::size_t points = 0;
  NeighborTable neighbors;
  std::vector<std::uint8_t> neighbor_occ;  // points x 7
};

/// Everything needed to train on or encode one frame: the pyramid with a
/// fixed number of scales, per-level network context and ground truth.
/// Index i of `levels`/`occupancy` is the transition predicting pyramid
/// level i from level i+1.
struct FrameContext {
  FrameContext(const SparseVoxelSet& frame, int scales);

  ScalePyramid pyramid;
  std::vector<LevelContext> levels;
  std::vector<ChildOccupancy> occupancy;

  int scales() const { return pyramid.scales(); }
  std::size_t points() const { return pyramid.levels.front().size(); }
};

/// Bit `stage` of every mask, in parent order.
std::vector<std::uint8_t> slot_bits(const ChildOccupancy& occ, int stage);

/// Channel-concatenated child bits of slots 0..stage-1 (points x stage).
template <typename T>
nn::Matrix<T> cumulative_slots(const ChildOccupancy& occ, int stage);

template <typename T>
class LinrModel {
 public:
  LinrModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  int scales() const { return cfg_.scales; }

  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  std::vector<T> flatten() const { return params_.flatten(); }
  void unflatten(std::span<const T> v) { params_.unflatten(v); }

  /// Re-draws every weight uniformly in +-sqrt(6 / (fan_in + fan_out));
  /// biases start at zero.
  void initialize(std::uint64_t seed);

  /// Zeroes all weights and biases of GDFE, LDFE and the stage heads, which
  /// pins every stage probability at exactly 0.5.
  void zero_heads();

  template <typename U>
  LinrModel<U> cast() const {
    LinrModel<U> out(cfg_, 0);
    const auto v = flatten();
    std::vector<U> conv(v.begin(), v.end());
    out.unflatten(conv);
    return out;
  }

  /// Scale context l = MLP_i(concat(neighbor occupancy, SEMB(i))).
  nn::Var sce(nn::Tape<T>& tape, const LevelContext& level, int scale) const;

  /// Global deep features, computed once per scale.
  nn::Var global_features(nn::Tape<T>& tape, const LevelContext& level, nn::Var context) const;

  /// Occupancy probability of child slot `stage` for every parent (n x 1).
  /// `x_cum` holds the already known bits of slots 0..stage-1.
  nn::Var predict_stage(nn::Tape<T>& tape, const LevelContext& level, nn::Var global, int stage,
                        const nn::Matrix<T>& x_cum) const;

 private:
  struct Layer {
    int weight = -1;
    int bias = -1;
  };
  struct Irn {
    Layer reduce;   // 1^3, C -> C/2
    Layer spread;   // 3^3, C/2 -> C/2
    Layer direct;   // 3^3, C -> C/2
    Layer merge;    // 1^3, C -> C
  };

  Layer dense(const std::string& name, std::size_t cin, std::size_t cout);
  Layer conv(const std::string& name, std::size_t cin, std::size_t cout);
  nn::Var irn(nn::Tape<T>& tape, const LevelContext& level, const Irn& block, nn::Var x) const;

  ModelConfig cfg_;
  nn::ParameterSet<T> params_;
  int embedding_ = -1;
  std::vector<std::array<Layer, 2>> sce_mlp_;
  Layer gdfe_in_;
  std::vector<Irn> gdfe_irn_;
  Layer gdfe_out_;
  std::array<Layer, kStages> ldfe_lift_;  // index j-1 for j context channels
  std::array<Layer, kStages> ldfe_conv_;
  std::array<Layer, kStages> head_conv_;
  std::array<Layer, kStages> head_fc0_;
  std::array<Layer, kStages> head_fc1_;
};

template <typename T>
struct CnpOutput {
  std::array<nn::Var, kStages> probs{};
  // Sum of per-stage BCE bits; set when ground truth was given.
  std::optional<nn::Var> loss;
  std::array<nn::Var, kStages> stage_loss{};
};

/// Runs all eight stages for one scale. With `truth` the local context is
/// the ground-truth bits and the loss is returned; without it only stage 0
/// is evaluated, and `require_loss` raises MissingGroundTruth.
template <typename T>
CnpOutput<T> cnp_forward(const LinrModel<T>& model, nn::Tape<T>& tape, const LevelContext& level,
                         nn::Var context, const ChildOccupancy* truth, bool require_loss = true);

struct FrameLoss {
  double bits = 0.0;       // sum of BCE over scales and stages
  double l2 = 0.0;         // lambda * ||theta||^2
  double total() const { return bits + l2; }
  std::vector<std::array<double, kStages>> stage_bits;  // [scale][stage]
};

/// Loss of one frame. With `backward` the parameter gradients are zeroed
/// and then filled with d(bits)/d(theta); the L2 gradient is left to the
/// optimizer's weight decay.
template <typename T>
FrameLoss sequence_loss(LinrModel<T>& model, const FrameContext& frame, double lambda,
                        bool backward = false);

extern template class LinrModel<float>;
extern template class LinrModel<double>;

}  // namespace linr

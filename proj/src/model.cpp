#include "linr/model.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "linr/errors.hpp"

namespace linr {

using nn::Matrix;
using nn::Tape;
using nn::Var;

void ModelConfig::validate() const {
  if (scales < 1) throw std::invalid_argument("model needs at least one scale transition");
  if (mlp_channels < 1 || conv_channels < 2 || embed_channels < 1 || irn_blocks < 0) {
    throw std::invalid_argument("invalid channel configuration");
  }
  if (bit_depth < 1 || bit_depth > kMaxBitDepth) throw std::invalid_argument("invalid bit depth");
}

LevelContext::LevelContext(const SparseVoxelSet& coarse)
    : points(coarse.size()), neighbors(coarse), neighbor_occ(neighbor_occupancy(coarse)) {}

FrameContext::FrameContext(const SparseVoxelSet& frame, int scales)
    : pyramid(build_pyramid(frame, kDefaultStopAt, scales)) {
  for (int i = 0; i < scales; ++i) {
    const auto& fine = pyramid.levels[static_cast<std::size_t>(i)];
    const auto& coarse = pyramid.levels[static_cast<std::size_t>(i) + 1];
    levels.emplace_back(coarse);
    occupancy.push_back(child_occupancy(fine, coarse));
  }
}

std::vector<std::uint8_t> slot_bits(const ChildOccupancy& occ, int stage) {
  std::vector<std::uint8_t> bits(occ.masks.size());
  for (std::size_t p = 0; p < bits.size(); ++p) bits[p] = (occ.masks[p] >> stage) & 1u;
  return bits;
}

template <typename T>
Matrix<T> cumulative_slots(const ChildOccupancy& occ, int stage) {
  Matrix<T> out(occ.masks.size(), static_cast<std::size_t>(stage));
  for (std::size_t p = 0; p < occ.masks.size(); ++p) {
    for (int j = 0; j < stage; ++j) out(p, static_cast<std::size_t>(j)) = T((occ.masks[p] >> j) & 1u);
  }
  return out;
}

template Matrix<float> cumulative_slots<float>(const ChildOccupancy&, int);
template Matrix<double> cumulative_slots<double>(const ChildOccupancy&, int);

namespace {

std::string indexed(const char* prefix, int i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s.%02d.%s", prefix, i, suffix);
  return buf;
}

// Uniform in [0, 1) from the top 53 bits; identical on every platform.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

template <typename T>
typename LinrModel<T>::Layer LinrModel<T>::dense(const std::string& name, std::size_t cin,
                                                 std::size_t cout) {
  return {params_.add(name + ".weight", cin, cout, cin, cout),
          params_.add(name + ".bias", 1, cout, 0, 0)};
}

template <typename T>
typename LinrModel<T>::Layer LinrModel<T>::conv(const std::string& name, std::size_t cin,
                                                std::size_t cout) {
  return {params_.add(name + ".weight", cin * kKernelVolume, cout, cin * kKernelVolume,
                      cout * kKernelVolume),
          params_.add(name + ".bias", 1, cout, 0, 0)};
}

template <typename T>
LinrModel<T>::LinrModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const auto n = static_cast<std::size_t>(cfg_.scales);
  const auto emb = static_cast<std::size_t>(cfg_.embed_channels);
  const auto mlp = static_cast<std::size_t>(cfg_.mlp_channels);
  const auto c = static_cast<std::size_t>(cfg_.conv_channels);
  const auto half = c / 2;

  embedding_ = params_.add("sce.embedding", n, emb, n, emb);
  for (int i = 0; i < cfg_.scales; ++i) {
    sce_mlp_.push_back({dense(indexed("sce.mlp", i, "fc0"), kNeighborChannels + emb, mlp),
                        dense(indexed("sce.mlp", i, "fc1"), mlp, mlp)});
  }

  gdfe_in_ = conv("gdfe.conv_in", mlp, c);
  for (int b = 0; b < cfg_.irn_blocks; ++b) {
    Irn block;
    block.reduce = dense(indexed("gdfe.irn", b, "reduce"), c, half);
    block.spread = conv(indexed("gdfe.irn", b, "spread"), half, half);
    block.direct = conv(indexed("gdfe.irn", b, "direct"), c, c - half);
    block.merge = dense(indexed("gdfe.irn", b, "merge"), c, c);
    gdfe_irn_.push_back(block);
  }
  gdfe_out_ = conv("gdfe.conv_out", c, c);

  for (int j = 1; j < kStages; ++j) {
    ldfe_lift_[static_cast<std::size_t>(j)] = dense(indexed("ldfe", j, "lift"), static_cast<std::size_t>(j), c);
    ldfe_conv_[static_cast<std::size_t>(j)] = conv(indexed("ldfe", j, "conv"), c, c);
  }
  for (int j = 0; j < kStages; ++j) {
    const auto s = static_cast<std::size_t>(j);
    head_conv_[s] = conv(indexed("head", j, "conv"), c, c);
    head_fc0_[s] = dense(indexed("head", j, "fc0"), c, mlp);
    head_fc1_[s] = dense(indexed("head", j, "fc1"), mlp, 1);
  }
  initialize(seed);
}

template <typename T>
void LinrModel<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int id : params_.canonical_order()) {
    auto& p = params_[id];
    if (p.fan_in + p.fan_out == 0) {
      p.value.fill(T(0));
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(p.fan_in + p.fan_out));
    for (auto& v : p.value.data()) v = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * bound);
  }
}

template <typename T>
void LinrModel<T>::zero_heads() {
  for (std::size_t i = 0; i < params_.tensors(); ++i) {
    auto& p = params_[static_cast<int>(i)];
    if (p.name.rfind("gdfe.", 0) == 0 || p.name.rfind("ldfe.", 0) == 0 ||
        p.name.rfind("head.", 0) == 0) {
      p.value.fill(T(0));
    }
  }
}

template <typename T>
Var LinrModel<T>::sce(Tape<T>& tape, const LevelContext& level, int scale) const {
  if (scale < 0 || scale >= cfg_.scales) {
    throw IndexError("scale index " + std::to_string(scale) + " outside [0, " +
                     std::to_string(cfg_.scales) + ")");
  }
  Matrix<T> occ(level.points, kNeighborChannels);
  for (std::size_t i = 0; i < occ.size(); ++i) occ.data()[i] = T(level.neighbor_occ[i]);
  const Var nb = tape.input(std::move(occ));
  const Var emb = tape.embed_row(embedding_, static_cast<std::size_t>(scale), level.points);
  const auto& mlp = sce_mlp_[static_cast<std::size_t>(scale)];
  Var h = tape.linear(tape.concat(nb, emb), mlp[0].weight, mlp[0].bias);
  h = tape.relu(h);
  return tape.linear(h, mlp[1].weight, mlp[1].bias);
}

template <typename T>
Var LinrModel<T>::irn(Tape<T>& tape, const LevelContext& level, const Irn& block, Var x) const {
  Var a = tape.relu(tape.linear(x, block.reduce.weight, block.reduce.bias));
  a = tape.sparse_conv(a, level.neighbors, block.spread.weight, block.spread.bias);
  const Var b = tape.sparse_conv(x, level.neighbors, block.direct.weight, block.direct.bias);
  const Var mixed = tape.relu(tape.concat(a, b));
  return tape.add(x, tape.linear(mixed, block.merge.weight, block.merge.bias));
}

template <typename T>
Var LinrModel<T>::global_features(Tape<T>& tape, const LevelContext& level, Var context) const {
  Var h = tape.relu(tape.sparse_conv(context, level.neighbors, gdfe_in_.weight, gdfe_in_.bias));
  for (const auto& block : gdfe_irn_) h = irn(tape, level, block, h);
  return tape.sparse_conv(h, level.neighbors, gdfe_out_.weight, gdfe_out_.bias);
}

template <typename T>
Var LinrModel<T>::predict_stage(Tape<T>& tape, const LevelContext& level, Var global, int stage,
                                const Matrix<T>& x_cum) const {
  if (stage < 0 || stage >= kStages) throw IndexError("stage index out of range");
  const auto s = static_cast<std::size_t>(stage);
  Var merged = global;
  if (stage > 0) {
    if (x_cum.cols() != s || x_cum.rows() != level.points) {
      throw ShapeError("stage " + std::to_string(stage) + " expects " + std::to_string(stage) +
                       " context channels, got " + std::to_string(x_cum.cols()));
    }
    Var local = tape.input(x_cum);
    local = tape.relu(tape.linear(local, ldfe_lift_[s].weight, ldfe_lift_[s].bias));
    local = tape.sparse_conv(local, level.neighbors, ldfe_conv_[s].weight, ldfe_conv_[s].bias);
    merged = tape.add(global, local);
  }
  Var h = tape.relu(tape.sparse_conv(merged, level.neighbors, head_conv_[s].weight, head_conv_[s].bias));
  h = tape.relu(tape.linear(h, head_fc0_[s].weight, head_fc0_[s].bias));
  h = tape.linear(h, head_fc1_[s].weight, head_fc1_[s].bias);
  return tape.sigmoid(h);
}

template <typename T>
CnpOutput<T> cnp_forward(const LinrModel<T>& model, Tape<T>& tape, const LevelContext& level,
                         Var context, const ChildOccupancy* truth, bool require_loss) {
  if (tape.value(context).rows() != level.points) {
    throw ShapeError("scale context rows do not match the coarse level");
  }
  if (!truth && require_loss) throw MissingGroundTruth("training pass needs child occupancy");
  if (truth && truth->masks.size() != level.points) {
    throw ShapeError("ground-truth mask count does not match the coarse level");
  }
  CnpOutput<T> out;
  out.probs.fill(-1);
  const Var global = model.global_features(tape, level, context);
  if (!truth) {
    out.probs[0] = model.predict_stage(tape, level, global, 0, Matrix<T>(level.points, 0));
    return out;
  }
  for (int j = 0; j < kStages; ++j) {
    const auto s = static_cast<std::size_t>(j);
    out.probs[s] = model.predict_stage(tape, level, global, j, cumulative_slots<T>(*truth, j));
    const auto bits = slot_bits(*truth, j);
    out.stage_loss[s] = tape.bce_bits(out.probs[s], bits);
  }
  out.loss = tape.sum(out.stage_loss);
  return out;
}

template CnpOutput<float> cnp_forward(const LinrModel<float>&, Tape<float>&, const LevelContext&,
                                      Var, const ChildOccupancy*, bool);
template CnpOutput<double> cnp_forward(const LinrModel<double>&, Tape<double>&, const LevelContext&,
                                       Var, const ChildOccupancy*, bool);

template <typename T>
FrameLoss sequence_loss(LinrModel<T>& model, const FrameContext& frame, double lambda,
                        bool backward) {
  if (frame.scales() != model.scales()) {
    throw ScaleMismatch("frame pyramid has " + std::to_string(frame.scales()) +
                        " scales, model has " + std::to_string(model.scales()));
  }
  Tape<T> tape(model.params(), backward);
  FrameLoss result;
  std::vector<Var> losses;
  for (int i = 0; i < frame.scales(); ++i) {
    const auto& level = frame.levels[static_cast<std::size_t>(i)];
    const Var l = model.sce(tape, level, i);
    auto cnp = cnp_forward(model, tape, level, l, &frame.occupancy[static_cast<std::size_t>(i)]);
    std::array<double, kStages> stages{};
    for (int j = 0; j < kStages; ++j) {
      stages[static_cast<std::size_t>(j)] = static_cast<double>(tape.scalar(cnp.stage_loss[static_cast<std::size_t>(j)]));
    }
    result.stage_bits.push_back(stages);
    losses.push_back(*cnp.loss);
  }
  const Var total = tape.sum(losses);
  result.bits = static_cast<double>(tape.scalar(total));
  result.l2 = lambda * model.params().squared_norm();
  if (backward) {
    model.params().zero_grad();
    tape.backward(total);
  }
  return result;
}

template FrameLoss sequence_loss(LinrModel<float>&, const FrameContext&, double, bool);
template FrameLoss sequence_loss(LinrModel<double>&, const FrameContext&, double, bool);

template class LinrModel<float>;
template class LinrModel<double>;

}  // namespace linr

#pragma once

// GoP orchestration: training, parameter transmission, occupancy coding and
// the inverse decode path.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "linr/adam.hpp"
#include "linr/container.hpp"
#include "linr/model.hpp"
#include "linr/param_codec.hpp"
#include "linr/voxel.hpp"

namespace linr {

enum class WarmStart { Random, PreviousGop, ExternalCheckpoint };

std::string to_string(WarmStart w);
/// Accepts "random", "previous_gop" and "external_checkpoint".
WarmStart parse_warm_start(std::string_view s);

struct GopConfig {
  std::size_t gop_size = 32;
  int epochs_first = 6;
  int epochs_rest = 1;
  // Round-robin passes over the GoP per epoch; each visit is one Adam step.
  int steps_per_frame = 24;
  int bits = kDefaultQuantBits;
  std::uint64_t seed = 0;
  WarmStart warm_start = WarmStart::PreviousGop;
  // Initial parameters of the first GoP under ExternalCheckpoint.
  std::vector<float> checkpoint;
  std::size_t stop_at = kDefaultStopAt;
  int bit_depth = kDefaultBitDepth;
  // weight_decay doubles as the L2 coefficient lambda of the loss.
  nn::AdamConfig adam;

  void validate() const;
};

/// Architecture fixed by the container version for a given pyramid depth.
ModelConfig format_model_config(int scales, int bit_depth);

struct TrainOptions {
  int epochs = 1;
  // When set, the mean GoP loss is evaluated before training and after every
  // step, and the first step count reaching it is recorded.
  std::optional<double> target_loss;
};

struct TrainStats {
  std::int64_t steps = 0;
  std::optional<std::int64_t> steps_to_target;
  std::vector<double> epoch_loss;  // mean training loss per frame visit
  double seconds = 0.0;
};

/// Mean of sequence_loss(...).total() over the frames.
double mean_loss(LinrModel<float>& model, std::span<const FrameContext> frames, double lambda);

/// Trains `model` in place with a fresh optimizer. Frames are visited in
/// container order. Zero epochs leave the model untouched.
TrainStats train_gop(LinrModel<float>& model, std::span<const FrameContext> frames,
                     const GopConfig& cfg, const TrainOptions& opt);

/// One coded stage of one scale, seen identically by encoder and decoder.
struct StageEvent {
  std::size_t frame = 0;
  int scale = 0;  // pyramid index of the predicted level
  int stage = 0;
  const SparseVoxelSet* parents = nullptr;
  std::span<const float> probs;
  std::span<const std::uint8_t> bits;
  std::size_t payload_bytes = 0;
};
using StageObserver = std::function<void(const StageEvent&)>;

/// Codes one frame with a model holding the transmitted parameters.
/// `model` may be null only when `ctx` has no scales.
FramePayload encode_frame(LinrModel<float>* model, const FrameContext& ctx, std::size_t frame_index = 0,
                          const StageObserver& observer = {});

/// Inverse of encode_frame. Throws DecodeError or InvalidOccupancy on a
/// corrupt payload.
SparseVoxelSet decode_frame(LinrModel<float>* model, const FramePayload& payload, int scales,
                            int bit_depth, std::size_t frame_index = 0,
                            const StageObserver& observer = {});

/// Rebuilds the coding model from a parameter block; null when scales == 0.
std::optional<LinrModel<float>> model_from_block(const ParamBlock& block, int scales, int bit_depth);

std::vector<SparseVoxelSet> decode_gop(const GopPayload& gop, const ContainerHeader& header,
                                       std::size_t first_frame = 0,
                                       const StageObserver& observer = {});
std::vector<SparseVoxelSet> decode_container(const Container& c, const StageObserver& observer = {});

struct StageStat {
  std::size_t symbols = 0;
  std::uint64_t payload_bits = 0;
  double estimated_bits = 0.0;  // BCE of the float probabilities
};

struct FrameStats {
  std::size_t points = 0;
  std::size_t gop = 0;
  std::vector<std::array<StageStat, kStages>> stages;  // [scale index]
};

struct GopStats {
  std::size_t first_frame = 0;
  std::size_t frames = 0;
  int epochs = 0;
  std::int64_t steps = 0;
  double final_loss = 0.0;  // mean GoP loss of the trained float model
  std::vector<double> epoch_loss;
  std::size_t parameters = 0;
  double train_seconds = 0.0;
  double quantize_seconds = 0.0;
  double code_seconds = 0.0;
};

struct Allocation {
  double header = 0.0;
  double params = 0.0;
  double base = 0.0;
  std::vector<double> scales;  // scale index 0 = finest

  double sum() const;
};

struct EncodeReport {
  int scales = 0;
  std::vector<GopStats> gops;
  std::vector<FrameStats> frames;
  ByteAccounting bytes;
  double total_seconds = 0.0;

  std::size_t total_bytes() const { return bytes.total(); }
  /// Frame's share of the file: its own sections, 1/frames of its GoP's
  /// parameter block and 1/frame_count of the header. Sums to the file size.
  double frame_bits(std::size_t f) const;
  double frame_bpp(std::size_t f) const;
  double frame_param_bpp(std::size_t f) const;
  double mean_bpp() const;
  /// Fractions of the file size per section.
  Allocation allocation() const;
  double train_seconds() const;
  double quantize_seconds() const;
  double code_seconds() const;
};

struct EncodeResult {
  Container container;
  EncodeReport report;
  // Pre-quantization parameters of every GoP.
  std::vector<std::vector<float>> trained;
};

/// Encodes frames in ceil(M / T) GoPs. Throws std::invalid_argument on an
/// empty sequence, EmptyCloud on an empty frame and DepthError if a frame
/// exceeds the configured bit depth.
EncodeResult encode_sequence(std::span<const SparseVoxelSet> frames, const GopConfig& cfg,
                             const StageObserver& observer = {});

struct VerifyResult {
  bool ok = false;
  std::string summary;
  std::optional<std::size_t> first_mismatch;
};

/// Never throws on bad input; decode failures come back as ok = false.
VerifyResult verify(const Container& c, std::span<const SparseVoxelSet> originals);
VerifyResult verify(std::span<const std::uint8_t> bytes, std::span<const SparseVoxelSet> originals);

}  // namespace linr

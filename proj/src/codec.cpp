#include "linr/codec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "linr/range_coder.hpp"

namespace linr {

using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double bce_estimate(std::span<const float> probs, std::span<const std::uint8_t> bits) {
  double sum = 0.0;
  for (std::size_t p = 0; p < probs.size(); ++p) {
    const double q = std::clamp(static_cast<double>(probs[p]), nn::kProbabilityEpsilon,
                                1.0 - nn::kProbabilityEpsilon);
    sum -= std::log2(bits[p] ? q : 1.0 - q);
  }
  return sum;
}

// Shared per-scale driver: runs SCE and GDFE once, then the eight stages.
// `code_stage` receives the stage probabilities and returns that stage's bits.
template <typename StageFn>
void run_scale(LinrModel<float>& model, const LevelContext& level, int scale, StageFn&& code_stage) {
  Tape<float> tape(model.params(), false);
  const Var context = model.sce(tape, level, scale);
  const Var global = model.global_features(tape, level, context);
  Matrix<float> x_cum(level.points, 0);
  for (int j = 0; j < kStages; ++j) {
    const Var pv = model.predict_stage(tape, level, global, j, x_cum);
    const auto& probs = tape.value(pv).data();
    for (float p : probs) {
      if (!std::isfinite(p)) throw NumericError("non-finite occupancy probability");
    }
    const std::vector<std::uint8_t> bits = code_stage(j, std::span<const float>(probs));
    Matrix<float> next(level.points, static_cast<std::size_t>(j) + 1);
    for (std::size_t p = 0; p < level.points; ++p) {
      for (int c = 0; c < j; ++c) next(p, static_cast<std::size_t>(c)) = x_cum(p, static_cast<std::size_t>(c));
      next(p, static_cast<std::size_t>(j)) = static_cast<float>(bits[p]);
    }
    x_cum = std::move(next);
  }
}

}  // namespace

std::string to_string(WarmStart w) {
  switch (w) {
    case WarmStart::Random: return "random";
    case WarmStart::PreviousGop: return "previous_gop";
    case WarmStart::ExternalCheckpoint: return "external_checkpoint";
  }
  return "?";
}

WarmStart parse_warm_start(std::string_view s) {
  if (s == "random") return WarmStart::Random;
  if (s == "previous_gop") return WarmStart::PreviousGop;
  if (s == "external_checkpoint") return WarmStart::ExternalCheckpoint;
  throw std::invalid_argument("unknown warm-start policy '" + std::string(s) + "'");
}

void GopConfig::validate() const {
  if (gop_size < 1 || gop_size > 0xFFFF) throw std::invalid_argument("GoP size must be in [1, 65535]");
  if (epochs_first < 0 || epochs_rest < 0) throw std::invalid_argument("epochs must be non-negative");
  if (steps_per_frame < 1) throw std::invalid_argument("steps per frame must be at least 1");
  if (bits < 1 || bits > 16) throw std::invalid_argument("quantization bits outside [1, 16]");
  if (bit_depth < 1 || bit_depth > kMaxBitDepth) throw std::invalid_argument("bit depth outside [1, 16]");
  if (stop_at < 1) throw std::invalid_argument("stop_at must be at least 1");
  if (warm_start == WarmStart::ExternalCheckpoint && checkpoint.empty()) {
    throw std::invalid_argument("external_checkpoint warm start needs a checkpoint");
  }
}

ModelConfig format_model_config(int scales, int bit_depth) {
  ModelConfig cfg;
  cfg.scales = scales;
  cfg.bit_depth = bit_depth;
  return cfg;
}

double mean_loss(LinrModel<float>& model, std::span<const FrameContext> frames, double lambda) {
  if (frames.empty()) throw std::invalid_argument("mean loss over no frames");
  double sum = 0.0;
  for (const auto& f : frames) sum += sequence_loss(model, f, lambda, false).total();
  return sum / static_cast<double>(frames.size());
}

TrainStats train_gop(LinrModel<float>& model, std::span<const FrameContext> frames,
                     const GopConfig& cfg, const TrainOptions& opt) {
  const auto t0 = Clock::now();
  TrainStats stats;
  if (frames.empty()) throw std::invalid_argument("cannot train on an empty GoP");
  const double lambda = cfg.adam.weight_decay;
  if (opt.target_loss && mean_loss(model, frames, lambda) <= *opt.target_loss) stats.steps_to_target = 0;

  nn::Adam<float> adam(cfg.adam);
  for (int e = 0; e < opt.epochs; ++e) {
    double acc = 0.0;
    std::size_t visits = 0;
    for (int k = 0; k < cfg.steps_per_frame; ++k) {
      for (const auto& f : frames) {
        const FrameLoss loss = sequence_loss(model, f, lambda, true);
        if (!std::isfinite(loss.total())) throw NumericError("training loss diverged");
        adam.step(model.params());
        ++stats.steps;
        acc += loss.total();
        ++visits;
        if (opt.target_loss && !stats.steps_to_target &&
            mean_loss(model, frames, lambda) <= *opt.target_loss) {
          stats.steps_to_target = stats.steps;
        }
      }
    }
    stats.epoch_loss.push_back(acc / static_cast<double>(visits));
  }
  stats.seconds = seconds_since(t0);
  return stats;
}

FramePayload encode_frame(LinrModel<float>* model, const FrameContext& ctx, std::size_t frame_index,
                          const StageObserver& observer) {
  FramePayload out;
  out.base = ctx.pyramid.coarsest().coords();
  const int n = ctx.scales();
  if (n > 0 && !model) throw std::invalid_argument("encoding scales without a model");
  out.scales.resize(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    const int i = n - 1 - s;
    const auto& level = ctx.levels[static_cast<std::size_t>(i)];
    const auto& occ = ctx.occupancy[static_cast<std::size_t>(i)];
    auto& payloads = out.scales[static_cast<std::size_t>(s)];
    run_scale(*model, level, i, [&](int j, std::span<const float> probs) {
      auto bits = slot_bits(occ, j);
      RangeEncoder enc;
      for (std::size_t p = 0; p < bits.size(); ++p) {
        enc.encode_bit(quantize_probability(static_cast<double>(probs[p])), bits[p]);
      }
      payloads[static_cast<std::size_t>(j)] = enc.finish();
      if (observer) {
        observer(StageEvent{frame_index, i, j, &ctx.pyramid.levels[static_cast<std::size_t>(i) + 1], probs,
                            bits, payloads[static_cast<std::size_t>(j)].size()});
      }
      return bits;
    });
  }
  return out;
}

SparseVoxelSet decode_frame(LinrModel<float>* model, const FramePayload& payload, int scales,
                            int bit_depth, std::size_t frame_index, const StageObserver& observer) {
  if (payload.scales.size() != static_cast<std::size_t>(scales)) {
    throw DecodeError("frame carries " + std::to_string(payload.scales.size()) + " scales, expected " +
                      std::to_string(scales));
  }
  if (scales > 0 && !model) throw DecodeError("occupancy payloads without a decoder model");
  if (payload.base.empty()) throw DecodeError("empty lowest-scale block");
  const std::uint32_t limit = 1u << (bit_depth - scales);
  for (const auto& p : payload.base) {
    if (p.x >= limit || p.y >= limit || p.z >= limit) {
      throw DecodeError("lowest-scale coordinate out of range for the pyramid depth");
    }
  }
  SparseVoxelSet current;
  try {
    current = SparseVoxelSet::from_sorted(payload.base);
  } catch (const PyramidMismatch&) {
    throw DecodeError("lowest-scale coordinates not strictly increasing");
  }
  for (int s = 0; s < scales; ++s) {
    const int i = scales - 1 - s;
    const LevelContext level(current);
    ChildOccupancy occ;
    occ.masks.assign(level.points, 0);
    const auto& payloads = payload.scales[static_cast<std::size_t>(s)];
    run_scale(*model, level, i, [&](int j, std::span<const float> probs) {
      std::vector<std::uint8_t> bits(level.points);
      RangeDecoder dec(payloads[static_cast<std::size_t>(j)]);
      for (std::size_t p = 0; p < level.points; ++p) {
        bits[p] = static_cast<std::uint8_t>(dec.decode_bit(quantize_probability(static_cast<double>(probs[p]))));
        occ.masks[p] = static_cast<std::uint8_t>(occ.masks[p] | (bits[p] << j));
      }
      dec.finish();
      if (observer) {
        observer(StageEvent{frame_index, i, j, &current, probs, bits, payloads[static_cast<std::size_t>(j)].size()});
      }
      return bits;
    });
    current = reconstruct_children(occ, current);
  }
  return current;
}

std::optional<LinrModel<float>> model_from_block(const ParamBlock& block, int scales, int bit_depth) {
  if (scales == 0) {
    if (block.header.count != 0) throw DecodeError("parameter block present for a model-free stream");
    return std::nullopt;
  }
  LinrModel<float> model(format_model_config(scales, bit_depth), 0);
  const auto values = decode_param_block(block);
  if (values.size() != model.parameter_count()) {
    throw DecodeError("parameter block holds " + std::to_string(values.size()) + " values, model needs " +
                      std::to_string(model.parameter_count()));
  }
  model.unflatten(values);
  return model;
}

std::vector<SparseVoxelSet> decode_gop(const GopPayload& gop, const ContainerHeader& header,
                                       std::size_t first_frame, const StageObserver& observer) {
  try {
    auto model = model_from_block(gop.params, header.scales, header.bit_depth);
    std::vector<SparseVoxelSet> out;
    for (std::size_t f = 0; f < gop.frames.size(); ++f) {
      out.push_back(decode_frame(model ? &*model : nullptr, gop.frames[f], header.scales, header.bit_depth,
                                 first_frame + f, observer));
    }
    return out;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw DecodeError(std::string("corrupt GoP section: ") + e.what());
  }
}

std::vector<SparseVoxelSet> decode_container(const Container& c, const StageObserver& observer) {
  if (c.gops.size() != c.header.gop_count()) throw DecodeError("GoP count disagrees with header");
  std::vector<SparseVoxelSet> out;
  for (std::size_t g = 0; g < c.gops.size(); ++g) {
    if (c.gops[g].frames.size() != c.header.frames_in_gop(g)) throw DecodeError("GoP frame count mismatch");
    auto frames = decode_gop(c.gops[g], c.header, g * c.header.gop_size, observer);
    for (auto& f : frames) out.push_back(std::move(f));
  }
  return out;
}

double Allocation::sum() const {
  return std::accumulate(scales.begin(), scales.end(), header + params + base);
}

double EncodeReport::frame_bits(std::size_t f) const {
  const auto& fs = frames.at(f);
  const auto& g = gops.at(fs.gop);
  double bits = 8.0 * static_cast<double>(bytes.header) / static_cast<double>(frames.size());
  bits += 8.0 * static_cast<double>(bytes.params.at(fs.gop)) / static_cast<double>(g.frames);
  bits += 8.0 * static_cast<double>(bytes.base.at(f));
  for (auto b : bytes.occupancy.at(f)) bits += 8.0 * static_cast<double>(b);
  return bits;
}

double EncodeReport::frame_bpp(std::size_t f) const {
  return frame_bits(f) / static_cast<double>(frames.at(f).points);
}

double EncodeReport::frame_param_bpp(std::size_t f) const {
  const auto& fs = frames.at(f);
  return 8.0 * static_cast<double>(bytes.params.at(fs.gop)) / static_cast<double>(gops.at(fs.gop).frames) /
         static_cast<double>(fs.points);
}

double EncodeReport::mean_bpp() const {
  std::size_t points = 0;
  for (const auto& f : frames) points += f.points;
  return 8.0 * static_cast<double>(total_bytes()) / static_cast<double>(points);
}

Allocation EncodeReport::allocation() const {
  const double total = static_cast<double>(total_bytes());
  Allocation a;
  a.header = static_cast<double>(bytes.header) / total;
  a.params = static_cast<double>(std::accumulate(bytes.params.begin(), bytes.params.end(), std::size_t{0})) / total;
  a.base = static_cast<double>(std::accumulate(bytes.base.begin(), bytes.base.end(), std::size_t{0})) / total;
  a.scales.assign(static_cast<std::size_t>(scales), 0.0);
  for (const auto& f : bytes.occupancy) {
    for (std::size_t i = 0; i < f.size(); ++i) a.scales[i] += static_cast<double>(f[i]) / total;
  }
  return a;
}

double EncodeReport::train_seconds() const {
  double t = 0.0;
  for (const auto& g : gops) t += g.train_seconds;
  return t;
}

double EncodeReport::quantize_seconds() const {
  double t = 0.0;
  for (const auto& g : gops) t += g.quantize_seconds;
  return t;
}

double EncodeReport::code_seconds() const {
  double t = 0.0;
  for (const auto& g : gops) t += g.code_seconds;
  return t;
}

EncodeResult encode_sequence(std::span<const SparseVoxelSet> frames, const GopConfig& cfg,
                             const StageObserver& observer) {
  const auto t0 = Clock::now();
  cfg.validate();
  if (frames.empty()) throw std::invalid_argument("cannot encode an empty sequence");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].empty()) throw EmptyCloud("frame " + std::to_string(f) + " is empty");
    if (frames[f].required_bit_depth() > cfg.bit_depth) {
      throw DepthError("frame " + std::to_string(f) + " needs " + std::to_string(frames[f].required_bit_depth()) +
                       " bits, configured depth is " + std::to_string(cfg.bit_depth));
    }
  }

  const int scales = build_pyramid(frames[0], cfg.stop_at).scales();
  EncodeResult result;
  auto& header = result.container.header;
  header.bit_depth = static_cast<std::uint8_t>(cfg.bit_depth);
  header.scales = static_cast<std::uint8_t>(scales);
  header.gop_size = static_cast<std::uint16_t>(cfg.gop_size);
  header.frame_count = static_cast<std::uint32_t>(frames.size());
  header.bits = static_cast<std::uint8_t>(cfg.bits);
  auto& report = result.report;
  report.scales = scales;

  std::vector<float> previous;
  const ModelConfig mcfg = format_model_config(scales, cfg.bit_depth);
  for (std::size_t g = 0; g < header.gop_count(); ++g) {
    const std::size_t first = g * cfg.gop_size;
    const std::size_t count = header.frames_in_gop(g);
    GopStats gs;
    gs.first_frame = first;
    gs.frames = count;
    gs.epochs = g == 0 ? cfg.epochs_first : cfg.epochs_rest;

    std::vector<FrameContext> contexts;
    contexts.reserve(count);
    for (std::size_t f = first; f < first + count; ++f) contexts.emplace_back(frames[f], scales);

    GopPayload gop;
    std::optional<LinrModel<float>> coder;
    if (scales > 0) {
      LinrModel<float> model(mcfg, cfg.seed + g);
      if (g == 0 && cfg.warm_start == WarmStart::ExternalCheckpoint) {
        model.unflatten(cfg.checkpoint);
      } else if (g > 0 && cfg.warm_start != WarmStart::Random) {
        model.unflatten(previous);
      }
      const auto stats = train_gop(model, contexts, cfg, TrainOptions{gs.epochs, std::nullopt});
      gs.steps = stats.steps;
      gs.epoch_loss = stats.epoch_loss;
      gs.train_seconds = stats.seconds;
      gs.final_loss = mean_loss(model, contexts, cfg.adam.weight_decay);
      previous = model.flatten();
      gs.parameters = previous.size();

      const auto tq = Clock::now();
      gop.params = encode_param_block(previous, cfg.bits);
      coder.emplace(mcfg, 0);
      coder->unflatten(decode_param_block(gop.params));
      gs.quantize_seconds = seconds_since(tq);
    } else {
      gop.params = encode_param_block({}, cfg.bits);
    }
    result.trained.push_back(previous);

    const auto tc = Clock::now();
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t f = first + k;
      FrameStats fs;
      fs.points = frames[f].size();
      fs.gop = g;
      fs.stages.resize(static_cast<std::size_t>(scales));
      auto observe = [&](const StageEvent& ev) {
        auto& st = fs.stages[static_cast<std::size_t>(ev.scale)][static_cast<std::size_t>(ev.stage)];
        st.symbols = ev.bits.size();
        st.payload_bits = 8 * static_cast<std::uint64_t>(ev.payload_bytes);
        st.estimated_bits = bce_estimate(ev.probs, ev.bits);
        if (observer) observer(ev);
      };
      gop.frames.push_back(encode_frame(coder ? &*coder : nullptr, contexts[k], f, observe));
      report.frames.push_back(std::move(fs));
    }
    gs.code_seconds = seconds_since(tc);
    report.gops.push_back(std::move(gs));
    result.container.gops.push_back(std::move(gop));
  }
  report.bytes = account(result.container);
  report.total_seconds = seconds_since(t0);
  return result;
}

namespace {

std::string describe_diff(const SparseVoxelSet& got, const SparseVoxelSet& want) {
  std::size_t missing = 0, extra = 0;
  for (const auto& p : want.coords()) missing += !got.contains(p);
  for (const auto& p : got.coords()) extra += !want.contains(p);
  return std::to_string(got.size()) + " decoded vs " + std::to_string(want.size()) + " original points, " +
         std::to_string(missing) + " missing, " + std::to_string(extra) + " extra";
}

}  // namespace

VerifyResult verify(const Container& c, std::span<const SparseVoxelSet> originals) {
  VerifyResult r;
  std::vector<SparseVoxelSet> decoded;
  try {
    decoded = decode_container(c);
  } catch (const std::exception& e) {
    r.summary = std::string("decode failed: ") + e.what();
    return r;
  }
  if (decoded.size() != originals.size()) {
    r.summary = "container holds " + std::to_string(decoded.size()) + " frames, expected " +
                std::to_string(originals.size());
    return r;
  }
  for (std::size_t f = 0; f < decoded.size(); ++f) {
    if (!(decoded[f] == originals[f])) {
      r.first_mismatch = f;
      r.summary = "frame " + std::to_string(f) + " differs: " + describe_diff(decoded[f], originals[f]);
      return r;
    }
  }
  r.ok = true;
  r.summary = std::to_string(decoded.size()) + " frames identical";
  return r;
}

VerifyResult verify(std::span<const std::uint8_t> bytes, std::span<const SparseVoxelSet> originals) {
  try {
    return verify(parse_container(bytes), originals);
  } catch (const std::exception& e) {
    VerifyResult r;
    r.summary = std::string("parse failed: ") + e.what();
    return r;
  }
}

}  // namespace linr

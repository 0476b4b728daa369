#include "linr/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "linr/bytes.hpp"
#include "linr/cloud_io.hpp"
#include "linr/codec.hpp"
#include "linr/fixtures.hpp"
#include "linr/report.hpp"

namespace linr {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x43524E4C;  // "LNRC"

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> checkpoint_bytes(std::span<const float> params) {
  ByteWriter w;
  w.u32(kCheckpointMagic);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (float v : params) w.f32(v);
  return w.take();
}

std::vector<float> load_checkpoint(const fs::path& path) {
  const auto data = read_file(path);
  ByteReader r(data);
  if (r.u32() != kCheckpointMagic) throw ParseError("'" + path.string() + "' is not a checkpoint");
  const std::uint32_t n = r.u32();
  if (n != r.remaining() / 4 || r.remaining() % 4 != 0) throw ParseError("checkpoint length mismatch");
  std::vector<float> out(n);
  for (auto& v : out) v = r.f32();
  return out;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool flag_given(int argc, char** argv, std::string_view flag) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view a = argv[i];
    if (a == flag || (a.size() > flag.size() && a.substr(0, flag.size()) == flag && a[flag.size()] == '=')) {
      return true;
    }
  }
  return false;
}

std::vector<SparseVoxelSet> load_frames(const fs::path& input, const ReadOptions& opt, std::ostream& err) {
  std::vector<SparseVoxelSet> frames;
  for (const auto& path : list_sequence(input)) {
    auto loaded = read_cloud(path, opt);
    for (const auto& w : loaded.report.warnings) err << path.string() << ": warning: " << w << '\n';
    if (loaded.report.duplicates > 0) {
      err << path.string() << ": " << loaded.report.duplicates << " duplicate points merged\n";
    }
    frames.push_back(std::move(loaded.cloud));
  }
  return frames;
}

struct EncodeArgs {
  std::string input, out, report, checkpoint_in, checkpoint_out, warm_start = "previous_gop";
  std::size_t gop = 32, stop_at = kDefaultStopAt;
  int epochs_first = 6, epochs_rest = 1, steps_per_frame = GopConfig{}.steps_per_frame, bits = 8;
  int bit_depth = kDefaultBitDepth;
  std::uint64_t seed = 0;
  double lambda = 1e-4;
  std::optional<double> voxelize;
  bool verify = false;
};

int run_encode(const EncodeArgs& a, bool seed_flag, std::ostream& out, std::ostream& err) {
  GopConfig cfg;
  cfg.gop_size = a.gop;
  cfg.epochs_first = a.epochs_first;
  cfg.epochs_rest = a.epochs_rest;
  cfg.steps_per_frame = a.steps_per_frame;
  cfg.bits = a.bits;
  cfg.bit_depth = a.bit_depth;
  cfg.stop_at = a.stop_at;
  cfg.adam.weight_decay = a.lambda;
  cfg.seed = a.seed;
  if (!seed_flag) {
    if (const char* env = std::getenv("LINR_SEED")) {
      try {
        std::size_t used = 0;
        cfg.seed = std::stoull(env, &used);
        if (used != std::string_view(env).size()) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        throw UsageError(std::string("LINR_SEED is not an unsigned integer: '") + env + "'");
      }
    }
  }
  try {
    cfg.warm_start = parse_warm_start(a.warm_start);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!a.checkpoint_in.empty()) {
    cfg.checkpoint = load_checkpoint(a.checkpoint_in);
    cfg.warm_start = WarmStart::ExternalCheckpoint;
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto frames = load_frames(a.input, ReadOptions{a.bit_depth, a.voxelize}, err);
  const auto result = encode_sequence(frames, cfg);
  const auto bytes = serialize(result.container);
  if (a.verify) {
    const auto v = verify(bytes, frames);
    if (!v.ok) {
      err << "verification failed: " << v.summary << '\n';
      return 1;
    }
  }
  write_file_atomic(a.out, bytes);
  if (!a.report.empty()) write_text_atomic(a.report, report_json(result.report, cfg));
  if (!a.checkpoint_out.empty() && !result.trained.back().empty()) {
    write_file_atomic(a.checkpoint_out, checkpoint_bytes(result.trained.back()));
  }
  out << "encoded " << frames.size() << " frames in " << result.container.gops.size() << " GoPs, " << bytes.size()
      << " bytes, " << result.report.mean_bpp() << " bpp, " << result.report.scales << " scales\n";
  return 0;
}

Container load_container(const fs::path& path) { return parse_container(read_file(path)); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Flat "key = value" lines; '#' starts a comment. Keys are long flag names
// without the dashes.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(n) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '_', '-');
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

// Appends "--key=value" for every config entry whose flag is absent from
// the command line, so flags win over the file and the file over defaults.
std::vector<std::string> merge_config(int argc, char** argv, const CLI::App& encode) {
  std::vector<std::string> args(argv, argv + argc);
  if (args.size() < 2 || args[1] != "encode") return args;
  std::optional<std::string> config;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (!config) return args;
  for (const auto& [key, value] : read_config(*config)) {
    const std::string flag = "--" + key;
    if (key == "config" || key == "input" || key == "out" || encode.get_option_no_throw(flag) == nullptr) {
      throw UsageError("unknown config key '" + key + "'");
    }
    if (!flag_given(argc, argv, flag)) args.push_back(flag + "=" + value);
  }
  return args;
}

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lossless point-cloud geometry codec with per-GoP overfitted networks", "linr"};
  app.require_subcommand(1);

  EncodeArgs enc;
  auto* encode = app.add_subcommand("encode", "Encode a cloud or a directory of frames into a .linr file");
  std::string config_path;
  encode->add_option("--config", config_path, "Flat 'key = value' file of option defaults (keys are long flag names)");
  encode->add_option("--input,-i", enc.input, "Input file or directory")->required();
  encode->add_option("--out,-o", enc.out, "Output .linr path")->required();
  encode->add_option("--report", enc.report, "Write the encode report as JSON");
  encode->add_option("--gop", enc.gop, "Frames per GoP")->capture_default_str()->check(CLI::Range(1, 65535));
  encode->add_option("--epochs-first", enc.epochs_first, "Training epochs of the first GoP")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  encode->add_option("--epochs-rest", enc.epochs_rest, "Training epochs of later GoPs")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  encode->add_option("--steps-per-frame", enc.steps_per_frame, "Optimizer steps per frame and epoch")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  encode->add_option("--bits", enc.bits, "Parameter quantization bits B")->capture_default_str()->check(CLI::Range(1, 16));
  encode->add_option("--seed", enc.seed, "Initialization seed (overrides LINR_SEED)")->capture_default_str();
  encode->add_option("--warm-start", enc.warm_start, "random | previous_gop | external_checkpoint")
      ->capture_default_str();
  encode->add_option("--checkpoint-in", enc.checkpoint_in, "Initial parameters for the first GoP");
  encode->add_option("--checkpoint-out", enc.checkpoint_out, "Save the last GoP's trained parameters");
  encode->add_option("--bit-depth", enc.bit_depth, "Coordinate bit depth")->capture_default_str()->check(CLI::Range(1, 16));
  encode->add_option("--stop-at", enc.stop_at, "Pyramid stops at this many points")->capture_default_str();
  encode->add_option("--lambda", enc.lambda, "L2 weight")->capture_default_str()->check(CLI::NonNegativeNumber);
  encode->add_option("--voxelize", enc.voxelize, "Grid size for voxelizing real coordinates")
      ->check(CLI::PositiveNumber);
  encode->add_flag("--verify", enc.verify, "Decode and compare before writing");

  std::string dec_in, dec_dir, dec_format = "ply", dec_prefix = "frame_";
  auto* decode = app.add_subcommand("decode", "Decode a .linr file into one cloud file per frame");
  decode->add_option("--input,-i", dec_in, "Input .linr file")->required();
  decode->add_option("--out-dir,-o", dec_dir, "Output directory")->required();
  decode->add_option("--format", dec_format, "ply | ply-binary | xyz")->capture_default_str();
  decode->add_option("--prefix", dec_prefix, "Output file name prefix")->capture_default_str();

  std::string ver_in, ver_ref;
  int ver_depth = kDefaultBitDepth;
  std::optional<double> ver_voxelize;
  auto* verify_cmd = app.add_subcommand("verify", "Check that a .linr file decodes to the reference frames");
  verify_cmd->add_option("--input,-i", ver_in, "Input .linr file")->required();
  verify_cmd->add_option("--reference,-r", ver_ref, "Original file or directory")->required();
  verify_cmd->add_option("--bit-depth", ver_depth, "Coordinate bit depth")->capture_default_str();
  verify_cmd->add_option("--voxelize", ver_voxelize, "Grid size used at encode time");

  std::string st_in, st_report, st_csv;
  auto* stats = app.add_subcommand("stats", "Bitstream allocation and timing table");
  stats->add_option("--input,-i", st_in, "Input .linr file")->required();
  stats->add_option("--report", st_report, "Encode report JSON for the time breakdown");
  stats->add_option("--csv", st_csv, "Write per-voxel bit costs as CSV");

  std::string fx_kind, fx_out, fx_format;
  std::size_t fx_size = 0, fx_frames = 1;
  int fx_shift = 0, fx_depth = kDefaultBitDepth;
  std::uint64_t fx_seed = 0;
  auto* fixture = app.add_subcommand("fixture", "Write a synthetic test cloud or sequence");
  fixture->add_option("--kind", fx_kind, "cube | sphere-shell | random | plane")->required();
  fixture->add_option("--size", fx_size, "Edge length, radius or point count")->required();
  fixture->add_option("--seed", fx_seed, "Seed for random fixtures")->capture_default_str();
  fixture->add_option("--bit-depth", fx_depth, "Coordinate bit depth")->capture_default_str();
  fixture->add_option("--frames", fx_frames, "Frames to write; more than one writes a directory")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  fixture->add_option("--shift", fx_shift, "Per-frame x translation")->capture_default_str();
  fixture->add_option("--out,-o", fx_out, "Output file, or directory when --frames > 1")->required();
  fixture->add_option("--format", fx_format, "ply | ply-binary | xyz (default from extension)");

  try {
    auto args = merge_config(argc, argv, *encode);
    std::vector<char*> ptrs;
    for (auto& a : args) ptrs.push_back(a.data());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*encode) return run_encode(enc, flag_given(argc, argv, "--seed"), out, err);

    if (*decode) {
      const auto format = parse_cloud_format(dec_format);
      const auto container = load_container(dec_in);
      const auto frames = decode_container(container);
      fs::create_directories(dec_dir);
      const std::string ext = format == CloudFormat::Xyz ? ".xyz" : ".ply";
      for (std::size_t f = 0; f < frames.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu", f);
        write_cloud(frames[f], fs::path(dec_dir) / (dec_prefix + name + ext), format);
      }
      out << "decoded " << frames.size() << " frames into " << dec_dir << '\n';
      return 0;
    }

    if (*verify_cmd) {
      const auto reference = load_frames(ver_ref, ReadOptions{ver_depth, ver_voxelize}, err);
      const auto result = verify(read_file(ver_in), reference);
      (result.ok ? out : err) << (result.ok ? "lossless: " : "MISMATCH: ") << result.summary << '\n';
      return result.ok ? 0 : 1;
    }

    if (*stats) {
      const auto container = load_container(st_in);
      const auto result = compute_stats(container, !st_csv.empty());
      std::optional<std::string> report;
      if (!st_report.empty()) {
        const auto data = read_file(st_report);
        report = std::string(data.begin(), data.end());
      }
      print_stats(out, result, container, report);
      if (!st_csv.empty()) {
        std::ostringstream csv;
        write_costs_csv(csv, result.costs);
        write_text_atomic(st_csv, csv.str());
      }
      return 0;
    }

    if (*fixture) {
      const auto kind = parse_fixture_kind(fx_kind);
      const auto base = generate_fixture(kind, fx_size, fx_seed, fx_depth);
      const fs::path target(fx_out);
      CloudFormat format = CloudFormat::AsciiPly;
      if (!fx_format.empty()) {
        format = parse_cloud_format(fx_format);
      } else if (fx_frames == 1) {
        format = format_from_extension(target).value_or(CloudFormat::AsciiPly);
      }
      const std::string ext = format == CloudFormat::Xyz ? ".xyz" : ".ply";
      std::vector<SparseVoxelSet> frames;
      for (std::size_t f = 0; f < fx_frames; ++f) {
        std::vector<VoxelCoord> pts;
        const long dx = static_cast<long>(f) * fx_shift;
        for (const auto& p : base.coords()) {
          const long x = p.x + dx;
          if (x < 0 || x >= (1L << fx_depth)) throw DepthError("shifted fixture leaves the bit depth");
          pts.push_back({static_cast<std::uint16_t>(x), p.y, p.z});
        }
        frames.emplace_back(std::move(pts));
      }
      if (fx_frames > 1) fs::create_directories(target);
      for (std::size_t f = 0; f < fx_frames; ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu", f);
        write_cloud(frames[f], fx_frames > 1 ? target / (name + ext) : target, format);
      }
      out << "wrote " << fx_frames << " frame(s) of " << base.size() << " points\n";
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int cli_main(int argc, char** argv) { return cli_main(argc, argv, std::cout, std::cerr); }

}  // namespace linr

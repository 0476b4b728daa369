#include "linr/report.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>

#include "json.hpp"
#include "linr/range_coder.hpp"

namespace linr {

using nlohmann::json;

std::string report_json(const EncodeReport& report, const GopConfig& cfg) {
  json j;
  j["config"] = {
      {"gop_size", cfg.gop_size},
      {"epochs_first", cfg.epochs_first},
      {"epochs_rest", cfg.epochs_rest},
      {"steps_per_frame", cfg.steps_per_frame},
      {"bits", cfg.bits},
      {"seed", cfg.seed},
      {"warm_start", to_string(cfg.warm_start)},
      {"bit_depth", cfg.bit_depth},
      {"stop_at", cfg.stop_at},
      {"lambda", cfg.adam.weight_decay},
  };
  j["scales"] = report.scales;
  j["file_bytes"] = report.total_bytes();
  j["mean_bpp"] = report.mean_bpp();

  const Allocation a = report.allocation();
  j["allocation"] = {{"header", a.header}, {"decoder_params", a.params}, {"lowest_scale", a.base},
                     {"scales", a.scales}, {"sum", a.sum()}};
  j["bytes"] = {{"header", report.bytes.header},
                {"decoder_params", report.bytes.params},
                {"lowest_scale", report.bytes.base},
                {"occupancy", report.bytes.occupancy}};

  json frames = json::array();
  for (std::size_t f = 0; f < report.frames.size(); ++f) {
    const auto& fs = report.frames[f];
    json stages = json::array();
    for (const auto& scale : fs.stages) {
      json row = json::array();
      for (const auto& st : scale) {
        row.push_back({{"symbols", st.symbols},
                       {"payload_bits", st.payload_bits},
                       {"estimated_bits", st.estimated_bits}});
      }
      stages.push_back(std::move(row));
    }
    frames.push_back({{"index", f},
                      {"gop", fs.gop},
                      {"points", fs.points},
                      {"bits", report.frame_bits(f)},
                      {"bpp", report.frame_bpp(f)},
                      {"param_bpp", report.frame_param_bpp(f)},
                      {"stages", std::move(stages)}});
  }
  j["frames"] = std::move(frames);

  json gops = json::array();
  for (const auto& g : report.gops) {
    gops.push_back({{"first_frame", g.first_frame},
                    {"frames", g.frames},
                    {"epochs", g.epochs},
                    {"steps", g.steps},
                    {"final_loss", g.final_loss},
                    {"epoch_loss", g.epoch_loss},
                    {"parameters", g.parameters},
                    {"train_seconds", g.train_seconds},
                    {"quantize_seconds", g.quantize_seconds},
                    {"code_seconds", g.code_seconds}});
  }
  j["gops"] = std::move(gops);
  j["times"] = {{"training", report.train_seconds()},
                {"quantization", report.quantize_seconds()},
                {"coding", report.code_seconds()},
                {"total", report.total_seconds}};
  return j.dump(2);
}

std::vector<SectionShare> section_shares(const Container& c) {
  const ByteAccounting acc = account(c);
  std::vector<SectionShare> out;
  out.push_back({"header", acc.header, 0.0});
  std::size_t params = 0, base = 0;
  for (auto b : acc.params) params += b;
  for (auto b : acc.base) base += b;
  out.push_back({"decoder params", params, 0.0});
  out.push_back({"lowest scale", base, 0.0});
  for (int i = c.header.scales - 1; i >= 0; --i) {
    std::size_t bytes = 0;
    for (const auto& f : acc.occupancy) bytes += f[static_cast<std::size_t>(i)];
    out.push_back({"scale " + std::to_string(i) + " occupancy", bytes, 0.0});
  }
  const double total = static_cast<double>(acc.total());
  for (auto& s : out) s.fraction = static_cast<double>(s.bytes) / total;
  return out;
}

StatsResult compute_stats(const Container& c, bool per_point_costs) {
  StatsResult r;
  r.sections = section_shares(c);
  for (const auto& s : r.sections) r.total_bytes += s.bytes;

  std::vector<double> pending;
  StageObserver observer;
  if (per_point_costs) {
    observer = [&](const StageEvent& ev) {
      if (ev.stage == 0) pending.assign(ev.bits.size(), 0.0);
      for (std::size_t p = 0; p < ev.bits.size(); ++p) {
        pending[p] += quantize_probability(static_cast<double>(ev.probs[p])).cost(ev.bits[p]);
      }
      if (ev.stage == kStages - 1) {
        for (std::size_t p = 0; p < pending.size(); ++p) {
          r.costs.push_back({ev.frame, ev.scale, (*ev.parents)[p], pending[p]});
        }
      }
    };
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto frames = decode_container(c, observer);
  r.decode_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& f : frames) r.points += f.size();
  return r;
}

void print_stats(std::ostream& out, const StatsResult& stats, const Container& c,
                 const std::optional<std::string>& encode_report_json) {
  char line[160];
  std::snprintf(line, sizeof line, "frames %u  GoPs %zu  scales %u  bit depth %u  B %u\n", c.header.frame_count,
                c.header.gop_count(), c.header.scales, c.header.bit_depth, c.header.bits);
  out << line;
  std::snprintf(line, sizeof line, "%-22s %12s %10s\n", "section", "bytes", "share");
  out << line;
  double sum = 0.0;
  for (const auto& s : stats.sections) {
    std::snprintf(line, sizeof line, "%-22s %12zu %9.4f%%\n", s.name.c_str(), s.bytes, 100.0 * s.fraction);
    out << line;
    sum += s.fraction;
  }
  std::snprintf(line, sizeof line, "%-22s %12zu %9.4f%%\n", "total", stats.total_bytes, 100.0 * sum);
  out << line;
  std::snprintf(line, sizeof line, "points %zu  bpp %.4f\n", stats.points,
                8.0 * static_cast<double>(stats.total_bytes) / static_cast<double>(stats.points));
  out << line;

  if (encode_report_json) {
    const json j = json::parse(*encode_report_json);
    const auto& t = j.at("times");
    const double training = t.at("training").get<double>();
    const double quant = t.at("quantization").get<double>();
    const double coding = t.at("coding").get<double>();
    const double total = t.at("total").get<double>();
    const double other = std::max(0.0, total - training - quant - coding);
    const double all = total + stats.decode_seconds;
    std::snprintf(line, sizeof line, "%-22s %12s %10s\n", "time", "seconds", "share");
    out << line;
    const std::pair<const char*, double> rows[] = {{"training", training},
                                                   {"quantize + compress", quant},
                                                   {"encoding", coding},
                                                   {"encoder other", other},
                                                   {"decoding", stats.decode_seconds}};
    for (const auto& [name, secs] : rows) {
      std::snprintf(line, sizeof line, "%-22s %12.3f %9.4f%%\n", name, secs, all > 0 ? 100.0 * secs / all : 0.0);
      out << line;
    }
  } else {
    std::snprintf(line, sizeof line, "decode time %.3f s\n", stats.decode_seconds);
    out << line;
  }
}

void write_costs_csv(std::ostream& out, const std::vector<PointCost>& costs) {
  out << "frame,scale,x,y,z,bits\n";
  char line[96];
  for (const auto& c : costs) {
    std::snprintf(line, sizeof line, "%zu,%d,%u,%u,%u,%.6f\n", c.frame, c.scale, c.parent.x, c.parent.y, c.parent.z,
                  c.bits);
    out << line;
  }
}

}  // namespace linr

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "linr/cli.hpp"
#include "linr/cloud_io.hpp"
#include "linr/fixtures.hpp"

using namespace linr;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "linr");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  Run r;
  r.code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("linr_cli_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string json_field(const std::string& json, const std::string& key) {
  std::smatch m;
  const std::regex re("\"" + key + "\": ([^,\\n]+)");
  return std::regex_search(json, m, re) ? m[1].str() : "";
}

}  // namespace

TEST_CASE("encode a sequence, verify, decode and stats") {
  TempDir dir;
  REQUIRE(run({"fixture", "--kind", "sphere-shell", "--size", "6", "--frames", "4", "--shift", "1", "-o", dir / "seq"})
              .code == 0);
  CHECK(list_sequence(dir / "seq").size() == 4);

  const auto enc = run({"encode", "--input", dir / "seq", "--gop", "4", "--epochs-first", "6", "--epochs-rest", "1",
                        "--bits", "8", "--bit-depth", "5", "--stop-at", "16", "--out", dir / "s.linr", "--report",
                        dir / "r.json"});
  INFO(enc.err);
  REQUIRE(enc.code == 0);
  CHECK(fs::exists(dir / "s.linr"));
  CHECK(run({"verify", "-i", dir / "s.linr", "-r", dir / "seq", "--bit-depth", "5"}).code == 0);

  // A different reference fails with exit 1.
  REQUIRE(run({"fixture", "--kind", "cube", "--size", "4", "-o", dir / "other.ply"}).code == 0);
  CHECK(run({"verify", "-i", dir / "s.linr", "-r", dir / "other.ply", "--bit-depth", "5"}).code == 1);

  REQUIRE(run({"decode", "-i", dir / "s.linr", "-o", dir / "out"}).code == 0);
  const auto decoded = list_sequence(dir / "out");
  const auto original = list_sequence(dir / "seq");
  REQUIRE(decoded.size() == 4);
  for (std::size_t f = 0; f < 4; ++f) CHECK(read_cloud(decoded[f]).cloud == read_cloud(original[f]).cloud);

  const auto st = run({"stats", "-i", dir / "s.linr", "--report", dir / "r.json", "--csv", dir / "c.csv"});
  REQUIRE(st.code == 0);
  // Section shares add up to 100%.
  double sum = 0.0;
  std::istringstream lines(st.out);
  std::string line;
  bool in_sections = false;
  double total_row = -1;
  while (std::getline(lines, line)) {
    if (line.rfind("section", 0) == 0) {
      in_sections = true;
      continue;
    }
    if (!in_sections) continue;
    if (line.rfind("total", 0) == 0) {
      total_row = std::stod(line.substr(line.rfind(' ', line.size() - 2)));
      break;
    }
    const auto pct = line.rfind('%');
    const auto sp = line.rfind(' ', pct);
    sum += std::stod(line.substr(sp + 1, pct - sp - 1));
  }
  CHECK(std::abs(sum - 100.0) <= 1e-3);  // table prints 4 decimals per row
  CHECK(std::abs(total_row - 100.0) <= 1e-6);
  CHECK(st.out.find("decoder params") != std::string::npos);
  CHECK(st.out.find("training") != std::string::npos);
  const auto csv = slurp(dir / "c.csv");
  CHECK(csv.rfind("frame,scale,x,y,z,bits\n", 0) == 0);

  const auto report = slurp(dir / "r.json");
  CHECK(json_field(report, "gop_size") == "4");
  CHECK(json_field(report, "epochs_first") == "6");
  CHECK(std::abs(std::stod(json_field(report, "sum")) - 1.0) <= 1e-9);
}

TEST_CASE("truncated input: nonzero exit and no output") {
  TempDir dir;
  REQUIRE(run({"fixture", "--kind", "random", "--size", "300", "--bit-depth", "7", "-o", dir / "a.ply"}).code == 0);
  REQUIRE(run({"encode", "-i", dir / "a.ply", "-o", dir / "a.linr", "--bit-depth", "7", "--epochs-first", "1",
               "--steps-per-frame", "1"})
              .code == 0);
  auto bytes = read_file(dir / "a.linr");
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{10}}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    write_file_atomic(dir / "t.linr", part);
    const auto r = run({"decode", "-i", dir / "t.linr", "-o", dir / "out"});
    CHECK(r.code == 1);
    CHECK(!r.err.empty());
    CHECK(!fs::exists(dir / "out"));
  }

#ifdef LINR_TOOL
  // Same through the real binary.
  const std::string cmd = std::string(LINR_TOOL) + " decode -i " + (dir / "t.linr") + " -o " + (dir / "out2") +
                          " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  CHECK(status != 0);
  CHECK(!fs::exists(dir / "out2"));
#endif
}

TEST_CASE("usage errors exit with 2") {
  TempDir dir;
  CHECK(run({}).code == 2);
  CHECK(run({"bogus"}).code == 2);
  CHECK(run({"encode", "-i", dir / "x.ply"}).code == 2);
  CHECK(run({"encode", "-i", dir / "x.ply", "-o", dir / "x.linr", "--gop", "0"}).code == 2);
  CHECK(run({"encode", "-i", dir / "x.ply", "-o", dir / "x.linr", "--warm-start", "sideways"}).code == 2);
  CHECK(run({"fixture", "--kind", "torus", "--size", "3", "-o", dir / "t.ply"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  // A shift that leaves the bit depth writes nothing.
  CHECK(run({"fixture", "--kind", "random", "--size", "50", "--bit-depth", "6", "--frames", "3", "--shift", "40", "-o",
             dir / "mv"})
            .code == 1);
  CHECK(!fs::exists(dir / "mv"));
  // Missing input file is a runtime failure, not usage.
  CHECK(run({"encode", "-i", dir / "nothing.ply", "-o", dir / "x.linr"}).code == 1);
  CHECK(!fs::exists(dir / "x.linr"));
}

TEST_CASE("flag > LINR_SEED > config file > default") {
  TempDir dir;
  REQUIRE(run({"fixture", "--kind", "cube", "--size", "6", "-o", dir / "c.ply"}).code == 0);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# defaults for this run\n"
        << "gop = 2\n"
        << "epochs_first = 0\n"
        << "bit-depth = 4\n"
        << "stop_at = 8\n"
        << "seed = 5\n";
  }
  auto encode = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = {"encode", "-i", dir / "c.ply", "-o", dir / "c.linr", "--report",
                                     dir / "c.json", "--config", dir / "run.cfg"};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = run(args);
    INFO(r.err);
    REQUIRE(r.code == 0);
    return slurp(dir / "c.json");
  };
  ::unsetenv("LINR_SEED");
  auto rep = encode({});
  CHECK(json_field(rep, "gop_size") == "2");
  CHECK(json_field(rep, "seed") == "5");
  CHECK(json_field(rep, "bit_depth") == "4");
  CHECK(json_field(rep, "epochs_first") == "0");
  CHECK(json_field(rep, "epochs_rest") == "1");  // default

  rep = encode({"--gop", "3"});
  CHECK(json_field(rep, "gop_size") == "3");

  ::setenv("LINR_SEED", "17", 1);
  rep = encode({});
  CHECK(json_field(rep, "seed") == "17");
  rep = encode({"--seed", "9"});
  CHECK(json_field(rep, "seed") == "9");
  ::setenv("LINR_SEED", "abc", 1);
  CHECK(run({"encode", "-i", dir / "c.ply", "-o", dir / "c.linr", "--config", dir / "run.cfg"}).code == 2);
  ::unsetenv("LINR_SEED");

  std::ofstream(dir / "bad.cfg") << "gopp = 3\n";
  CHECK(run({"encode", "-i", dir / "c.ply", "-o", dir / "c.linr", "--config", dir / "bad.cfg"}).code == 2);
  CHECK(run({"encode", "-i", dir / "c.ply", "-o", dir / "c.linr", "--config", dir / "missing.cfg"}).code != 0);
}

TEST_CASE("checkpoint files round trip through the CLI") {
  TempDir dir;
  REQUIRE(run({"fixture", "--kind", "plane", "--size", "16", "-o", dir / "p.ply"}).code == 0);
  const std::vector<std::string> base = {"encode", "-i", dir / "p.ply", "--bit-depth", "5", "--stop-at", "8",
                                         "--epochs-first", "0"};
  auto a = base;
  a.insert(a.end(), {"-o", dir / "a.linr", "--checkpoint-out", dir / "a.ckpt", "--seed", "3"});
  REQUIRE(run(a).code == 0);
  // Zero epochs from the checkpoint reproduce the same parameters and file.
  auto b = base;
  b.insert(b.end(), {"-o", dir / "b.linr", "--warm-start", "external_checkpoint", "--checkpoint-in", dir / "a.ckpt"});
  REQUIRE(run(b).code == 0);
  CHECK(read_file(dir / "a.linr") == read_file(dir / "b.linr"));
  auto c = base;
  c.insert(c.end(), {"-o", dir / "c.linr", "--warm-start", "external_checkpoint"});
  CHECK(run(c).code == 2);
}

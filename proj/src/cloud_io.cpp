#include "linr/cloud_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "linr/errors.hpp"

namespace linr {

namespace fs = std::filesystem;

namespace {

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

std::optional<Scalar> scalar_from_name(std::string_view s) {
  if (s == "char" || s == "int8") return Scalar::I8;
  if (s == "uchar" || s == "uint8") return Scalar::U8;
  if (s == "short" || s == "int16") return Scalar::I16;
  if (s == "ushort" || s == "uint16") return Scalar::U16;
  if (s == "int" || s == "int32") return Scalar::I32;
  if (s == "uint" || s == "uint32") return Scalar::U32;
  if (s == "float" || s == "float32") return Scalar::F32;
  if (s == "double" || s == "float64") return Scalar::F64;
  return std::nullopt;
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::I8:
    case Scalar::U8: return 1;
    case Scalar::I16:
    case Scalar::U16: return 2;
    case Scalar::I32:
    case Scalar::U32:
    case Scalar::F32: return 4;
    case Scalar::F64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::F32;
  bool list = false;
  Scalar count_type = Scalar::U8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

// Line cursor that tracks 1-based line numbers and strips '\r'.
class Lines {
 public:
  explicit Lines(std::span<const std::uint8_t> data) : data_(data) {}

  bool next(std::string_view& line) {
    if (pos_ >= data_.size()) return false;
    const auto* base = reinterpret_cast<const char*>(data_.data());
    std::size_t end = pos_;
    while (end < data_.size() && data_[end] != '\n') ++end;
    line = std::string_view(base + pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end < data_.size() ? end + 1 : end;
    ++number_;
    return true;
  }
  std::size_t number() const { return number_; }
  std::size_t offset() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::size_t number_ = 0;
};

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ": " + what);
}

[[noreturn]] void fail_byte(std::size_t byte, const std::string& what) {
  throw ParseError("byte " + std::to_string(byte) + ": " + what);
}

std::optional<double> parse_number(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

class VoxelBuilder {
 public:
  explicit VoxelBuilder(const ReadOptions& opt) : opt_(opt) {
    if (opt.bit_depth < 1 || opt.bit_depth > kMaxBitDepth) throw std::invalid_argument("bit depth outside [1, 16]");
    if (opt.voxelize && !(*opt.voxelize > 0.0 && std::isfinite(*opt.voxelize))) {
      throw std::invalid_argument("voxelize grid must be positive");
    }
  }

  // `where` is prefixed to error messages ("line 7", "byte 120").
  void add(const double (&c)[3], const std::string& where) {
    std::uint16_t out[3];
    const double limit = std::ldexp(1.0, opt_.bit_depth);
    for (int k = 0; k < 3; ++k) {
      double v = c[k];
      if (!std::isfinite(v)) throw ParseError(where + ": non-finite coordinate");
      if (opt_.voxelize) {
        v = std::floor(v / *opt_.voxelize);
      } else if (v != std::floor(v)) {
        throw ParseError(where + ": non-integer coordinate (pass a voxelize grid)");
      }
      if (v < 0.0 || v >= limit) {
        throw DepthError(where + ": coordinate " + std::to_string(v) + " outside [0, 2^" +
                         std::to_string(opt_.bit_depth) + ")");
      }
      out[k] = static_cast<std::uint16_t>(v);
    }
    pts_.push_back({out[0], out[1], out[2]});
  }

  LoadedCloud finish(LoadReport report) {
    report.vertices = pts_.size();
    LoadedCloud out;
    out.cloud = SparseVoxelSet(std::move(pts_), &report.duplicates);
    out.report = std::move(report);
    return out;
  }

 private:
  ReadOptions opt_;
  std::vector<VoxelCoord> pts_;
};

struct PlyHeader {
  bool binary = false;
  std::vector<Element> elements;
  std::size_t body_offset = 0;
  std::size_t lines = 0;
};

PlyHeader parse_ply_header(std::span<const std::uint8_t> bytes) {
  Lines lines(bytes);
  std::string_view line;
  if (!lines.next(line) || line != "ply") fail_line(1, "missing 'ply' magic");
  PlyHeader h;
  bool have_format = false;
  while (true) {
    if (!lines.next(line)) fail_line(lines.number(), "header not terminated by end_header");
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() != 3) fail_line(lines.number(), "malformed format line");
      if (tok[1] == "ascii") {
        h.binary = false;
      } else if (tok[1] == "binary_little_endian") {
        h.binary = true;
      } else {
        fail_line(lines.number(), "unsupported PLY format '" + std::string(tok[1]) + "'");
      }
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) fail_line(lines.number(), "malformed element line");
      const auto n = parse_number(tok[2]);
      if (!n || *n < 0 || *n != std::floor(*n)) fail_line(lines.number(), "bad element count");
      h.elements.push_back({std::string(tok[1]), static_cast<std::size_t>(*n), {}});
    } else if (tok[0] == "property") {
      if (h.elements.empty()) fail_line(lines.number(), "property before any element");
      Property p;
      if (tok.size() == 5 && tok[1] == "list") {
        const auto ct = scalar_from_name(tok[2]);
        const auto vt = scalar_from_name(tok[3]);
        if (!ct || !vt) fail_line(lines.number(), "unknown list property type");
        p = {std::string(tok[4]), *vt, true, *ct};
      } else if (tok.size() == 3) {
        const auto t = scalar_from_name(tok[1]);
        if (!t) fail_line(lines.number(), "unknown property type '" + std::string(tok[1]) + "'");
        p = {std::string(tok[2]), *t, false, Scalar::U8};
      } else {
        fail_line(lines.number(), "malformed property line");
      }
      h.elements.back().props.push_back(std::move(p));
    } else {
      fail_line(lines.number(), "unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!have_format) fail_line(lines.number(), "missing format line");
  h.body_offset = lines.offset();
  h.lines = lines.number();
  return h;
}

struct VertexLayout {
  std::size_t element = 0;
  int index[3] = {-1, -1, -1};
};

VertexLayout find_vertex(const PlyHeader& h, LoadReport& report) {
  VertexLayout v;
  bool found = false;
  for (std::size_t e = 0; e < h.elements.size(); ++e) {
    const auto& el = h.elements[e];
    if (el.name != "vertex") {
      report.warnings.push_back("skipping element '" + el.name + "' (" + std::to_string(el.count) + " entries)");
      continue;
    }
    found = true;
    v.element = e;
    for (std::size_t p = 0; p < el.props.size(); ++p) {
      const auto& prop = el.props[p];
      const int axis = prop.name == "x" ? 0 : prop.name == "y" ? 1 : prop.name == "z" ? 2 : -1;
      if (axis < 0) {
        report.warnings.push_back("skipping vertex property '" + prop.name + "'");
        continue;
      }
      if (prop.list) throw ParseError("vertex property '" + prop.name + "' is a list");
      v.index[axis] = static_cast<int>(p);
    }
  }
  if (!found) throw ParseError("PLY has no vertex element");
  for (int k = 0; k < 3; ++k) {
    if (v.index[k] < 0) throw ParseError(std::string("vertex element lacks property ") + "xyz"[k]);
  }
  return v;
}

LoadedCloud parse_ascii_ply(std::span<const std::uint8_t> bytes, const PlyHeader& h, const ReadOptions& opt,
                            LoadReport report) {
  const auto layout = find_vertex(h, report);
  VoxelBuilder builder(opt);
  Lines lines(bytes.subspan(h.body_offset));
  std::string_view line;
  auto line_no = [&] { return h.lines + lines.number(); };
  for (std::size_t e = 0; e < h.elements.size(); ++e) {
    const auto& el = h.elements[e];
    for (std::size_t i = 0; i < el.count; ++i) {
      do {
        if (!lines.next(line)) {
          fail_line(line_no(), "file ends after " + std::to_string(i) + " of " + std::to_string(el.count) + " '" +
                                   el.name + "' entries");
        }
      } while (split_ws(line).empty());
      const auto tok = split_ws(line);
      std::size_t t = 0;
      double c[3] = {0, 0, 0};
      for (std::size_t p = 0; p < el.props.size(); ++p) {
        const auto& prop = el.props[p];
        std::size_t n = 1;
        if (prop.list) {
          if (t >= tok.size()) fail_line(line_no(), "missing list length");
          const auto len = parse_number(tok[t++]);
          if (!len || *len < 0 || *len != std::floor(*len)) fail_line(line_no(), "bad list length");
          n = static_cast<std::size_t>(*len);
        }
        for (std::size_t k = 0; k < n; ++k) {
          if (t >= tok.size()) fail_line(line_no(), "too few values");
          const auto v = parse_number(tok[t++]);
          if (!v) fail_line(line_no(), "not a number: '" + std::string(tok[t - 1]) + "'");
          if (e == layout.element && !prop.list) {
            for (int a = 0; a < 3; ++a) {
              if (layout.index[a] == static_cast<int>(p)) c[a] = *v;
            }
          }
        }
      }
      if (t != tok.size()) fail_line(line_no(), "too many values");
      if (e == layout.element) builder.add(c, "line " + std::to_string(line_no()));
    }
  }
  while (lines.next(line)) {
    if (!split_ws(line).empty()) fail_line(line_no(), "data after the last declared element");
  }
  return builder.finish(std::move(report));
}

double read_scalar(std::span<const std::uint8_t> bytes, std::size_t& pos, Scalar type) {
  const std::size_t n = scalar_size(type);
  if (pos + n > bytes.size()) fail_byte(pos, "unexpected end of binary data");
  std::uint64_t raw = 0;
  for (std::size_t i = 0; i < n; ++i) raw |= std::uint64_t{bytes[pos + i]} << (8 * i);
  pos += n;
  switch (type) {
    case Scalar::I8: return static_cast<std::int8_t>(raw);
    case Scalar::U8: return static_cast<std::uint8_t>(raw);
    case Scalar::I16: return static_cast<std::int16_t>(raw);
    case Scalar::U16: return static_cast<std::uint16_t>(raw);
    case Scalar::I32: return static_cast<std::int32_t>(raw);
    case Scalar::U32: return static_cast<std::uint32_t>(raw);
    case Scalar::F32: return std::bit_cast<float>(static_cast<std::uint32_t>(raw));
    case Scalar::F64: return std::bit_cast<double>(raw);
  }
  return 0.0;
}

LoadedCloud parse_binary_ply(std::span<const std::uint8_t> bytes, const PlyHeader& h, const ReadOptions& opt,
                             LoadReport report) {
  const auto layout = find_vertex(h, report);
  VoxelBuilder builder(opt);
  std::size_t pos = h.body_offset;
  for (std::size_t e = 0; e < h.elements.size(); ++e) {
    const auto& el = h.elements[e];
    for (std::size_t i = 0; i < el.count; ++i) {
      const std::size_t start = pos;
      double c[3] = {0, 0, 0};
      for (std::size_t p = 0; p < el.props.size(); ++p) {
        const auto& prop = el.props[p];
        if (prop.list) {
          const double len = read_scalar(bytes, pos, prop.count_type);
          if (len < 0) fail_byte(pos, "negative list length");
          const std::size_t skip = static_cast<std::size_t>(len) * scalar_size(prop.type);
          if (pos + skip > bytes.size()) fail_byte(pos, "unexpected end of binary data");
          pos += skip;
          continue;
        }
        const double v = read_scalar(bytes, pos, prop.type);
        for (int a = 0; a < 3; ++a) {
          if (layout.index[a] == static_cast<int>(p)) c[a] = v;
        }
      }
      if (e == layout.element) builder.add(c, "byte " + std::to_string(start));
    }
  }
  if (pos != bytes.size()) fail_byte(pos, std::to_string(bytes.size() - pos) + " trailing bytes");
  return builder.finish(std::move(report));
}

LoadedCloud parse_xyz(std::span<const std::uint8_t> bytes, const ReadOptions& opt) {
  VoxelBuilder builder(opt);
  Lines lines(bytes);
  std::string_view line;
  while (lines.next(line)) {
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok.size() < 3) fail_line(lines.number(), "expected at least 3 values");
    double c[3];
    for (int k = 0; k < 3; ++k) {
      const auto v = parse_number(tok[static_cast<std::size_t>(k)]);
      if (!v) fail_line(lines.number(), "not a number: '" + std::string(tok[static_cast<std::size_t>(k)]) + "'");
      c[k] = *v;
    }
    builder.add(c, "line " + std::to_string(lines.number()));
  }
  LoadReport report;
  report.format = CloudFormat::Xyz;
  return builder.finish(std::move(report));
}

bool starts_with_ply(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 'p' && bytes[1] == 'l' && bytes[2] == 'y';
}

}  // namespace

std::string to_string(CloudFormat f) {
  switch (f) {
    case CloudFormat::AsciiPly: return "ply";
    case CloudFormat::BinaryPly: return "ply-binary";
    case CloudFormat::Xyz: return "xyz";
  }
  return "?";
}

CloudFormat parse_cloud_format(std::string_view s) {
  if (s == "ply" || s == "ply-ascii") return CloudFormat::AsciiPly;
  if (s == "ply-binary") return CloudFormat::BinaryPly;
  if (s == "xyz") return CloudFormat::Xyz;
  throw std::invalid_argument("unknown cloud format '" + std::string(s) + "'");
}

std::optional<CloudFormat> format_from_extension(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ply") return CloudFormat::AsciiPly;
  if (ext == ".xyz" || ext == ".txt") return CloudFormat::Xyz;
  return std::nullopt;
}

LoadedCloud parse_cloud(std::span<const std::uint8_t> bytes, CloudFormat hint, const ReadOptions& opt) {
  if (hint == CloudFormat::Xyz && !starts_with_ply(bytes)) return parse_xyz(bytes, opt);
  const auto header = parse_ply_header(bytes);
  LoadReport report;
  report.format = header.binary ? CloudFormat::BinaryPly : CloudFormat::AsciiPly;
  return header.binary ? parse_binary_ply(bytes, header, opt, std::move(report))
                       : parse_ascii_ply(bytes, header, opt, std::move(report));
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return data;
}

LoadedCloud read_cloud(const fs::path& path, const ReadOptions& opt) {
  const auto fmt = format_from_extension(path);
  if (!fmt) throw ParseError("unsupported file extension '" + path.extension().string() + "'");
  const auto data = read_file(path);
  try {
    return parse_cloud(data, *fmt, opt);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const DepthError& e) {
    throw DepthError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> render_cloud(const SparseVoxelSet& pc, CloudFormat format) {
  std::ostringstream text;
  if (format == CloudFormat::Xyz) {
    for (const auto& p : pc.coords()) text << p.x << ' ' << p.y << ' ' << p.z << '\n';
  } else {
    text << "ply\nformat " << (format == CloudFormat::BinaryPly ? "binary_little_endian" : "ascii") << " 1.0\n"
         << "element vertex " << pc.size() << "\nproperty int x\nproperty int y\nproperty int z\nend_header\n";
    if (format == CloudFormat::AsciiPly) {
      for (const auto& p : pc.coords()) text << p.x << ' ' << p.y << ' ' << p.z << '\n';
    }
  }
  const std::string s = text.str();
  std::vector<std::uint8_t> out(s.begin(), s.end());
  if (format == CloudFormat::BinaryPly) {
    out.reserve(out.size() + 12 * pc.size());
    for (const auto& p : pc.coords()) {
      for (std::uint32_t v : {std::uint32_t{p.x}, std::uint32_t{p.y}, std::uint32_t{p.z}}) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
      }
    }
  }
  return out;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

void write_cloud(const SparseVoxelSet& pc, const fs::path& path, CloudFormat format) {
  write_file_atomic(path, render_cloud(pc, format));
}

std::vector<fs::path> list_sequence(const fs::path& input) {
  std::error_code ec;
  if (fs::is_regular_file(input, ec)) return {input};
  if (!fs::is_directory(input, ec)) throw IoError("no such file or directory: '" + input.string() + "'");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_regular_file() && format_from_extension(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  if (out.empty()) throw IoError("no .ply/.xyz files in '" + input.string() + "'");
  return out;
}

}  // namespace linr

#include "s2d4d/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>

namespace s2d4d {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidInputError("write failed for " + path.string());
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

/// Splits text into lines while tracking line number and byte offset.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    line_start_ = pos_;
    ++line_no_;
    const auto end = text_.find('\n', pos_);
    const std::size_t stop = end == std::string_view::npos ? text_.size() : end;
    line = text_.substr(pos_, stop - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = stop + 1;
    return true;
  }

  std::size_t line_no() const { return line_no_; }
  std::size_t line_start() const { return line_start_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
  std::size_t line_no_ = 0;
};

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

bool parse_number(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_number(std::string_view s, long long& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

Points3 to_points(const std::vector<double>& xyz) {
  Points3 p(static_cast<Eigen::Index>(xyz.size() / 3), 3);
  std::copy(xyz.begin(), xyz.end(), p.data());
  return p;
}

}  // namespace

MeshData parse_obj(const std::string& text, const std::string& source_name) {
  LineReader reader(text);
  std::string_view line;
  std::vector<double> xyz;
  std::vector<Triangle> tris;
  std::vector<std::pair<std::vector<long long>, std::pair<std::size_t, std::size_t>>> faces;
  while (reader.next(line)) {
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    auto fail = [&](const std::string& msg) {
      throw ParseError(source_name, reader.line_no(), reader.line_start(), msg);
    };
    if (tok[0] == "v") {
      if (tok.size() < 4) fail("vertex record needs 3 coordinates");
      for (int c = 1; c <= 3; ++c) {
        double x;
        if (!parse_number(tok[static_cast<std::size_t>(c)], x)) fail("bad coordinate '" + std::string(tok[static_cast<std::size_t>(c)]) + "'");
        xyz.push_back(x);
      }
    } else if (tok[0] == "f") {
      if (tok.size() < 4) fail("face record needs at least 3 vertices");
      std::vector<long long> idx;
      for (std::size_t c = 1; c < tok.size(); ++c) {
        const auto slash = tok[c].find('/');
        long long i;
        if (!parse_number(tok[c].substr(0, slash), i) || i == 0) fail("bad face index '" + std::string(tok[c]) + "'");
        idx.push_back(i);
      }
      faces.push_back({std::move(idx), {reader.line_no(), reader.line_start()}});
    }
  }
  const auto nv = static_cast<long long>(xyz.size() / 3);
  for (const auto& [idx, where] : faces) {
    std::vector<int> resolved;
    for (long long i : idx) {
      const long long r = i > 0 ? i - 1 : nv + i;
      if (r < 0 || r >= nv) {
        throw ParseError(source_name, where.first, where.second,
                         "face index " + std::to_string(i) + " out of range (" + std::to_string(nv) + " vertices)");
      }
      resolved.push_back(static_cast<int>(r));
    }
    for (std::size_t c = 1; c + 1 < resolved.size(); ++c) tris.push_back({resolved[0], resolved[c], resolved[c + 1]});
  }
  return MeshData{to_points(xyz), std::move(tris)};
}

namespace {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType ply_type(std::string_view s, bool& ok) {
  ok = true;
  if (s == "char" || s == "int8") return PlyType::Int8;
  if (s == "uchar" || s == "uint8") return PlyType::UInt8;
  if (s == "short" || s == "int16") return PlyType::Int16;
  if (s == "ushort" || s == "uint16") return PlyType::UInt16;
  if (s == "int" || s == "int32") return PlyType::Int32;
  if (s == "uint" || s == "uint32") return PlyType::UInt32;
  if (s == "float" || s == "float32") return PlyType::Float32;
  if (s == "double" || s == "float64") return PlyType::Float64;
  ok = false;
  return PlyType::Float64;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 8;
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
  PlyType type = PlyType::Float32;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

class BinaryCursor {
 public:
  BinaryCursor(std::string_view data, std::size_t pos, const std::string& src) : data_(data), pos_(pos), src_(src) {}

  double read(PlyType t) {
    const std::size_t n = ply_size(t);
    if (pos_ + n > data_.size()) throw ParseError(src_, 0, pos_, "unexpected end of binary data");
    const char* p = data_.data() + pos_;
    pos_ += n;
    switch (t) {
      case PlyType::Int8: return static_cast<double>(static_cast<std::int8_t>(*p));
      case PlyType::UInt8: return static_cast<double>(static_cast<std::uint8_t>(*p));
      case PlyType::Int16: return load<std::int16_t>(p);
      case PlyType::UInt16: return load<std::uint16_t>(p);
      case PlyType::Int32: return load<std::int32_t>(p);
      case PlyType::UInt32: return load<std::uint32_t>(p);
      case PlyType::Float32: return load<float>(p);
      case PlyType::Float64: return load<double>(p);
    }
    return 0.0;
  }
  std::size_t pos() const { return pos_; }

 private:
  // little-endian host assumed (x86-64 / aarch64)
  template <class T>
  static double load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof v);
    return static_cast<double>(v);
  }

  std::string_view data_;
  std::size_t pos_;
  const std::string& src_;
};

}  // namespace

MeshData parse_ply(const std::string& bytes, const std::string& source_name) {
  LineReader reader(bytes);
  std::string_view line;
  auto fail = [&](const std::string& msg) {
    throw ParseError(source_name, reader.line_no(), reader.line_start(), msg);
  };
  if (!reader.next(line) || line != "ply") fail("missing 'ply' magic");
  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (reader.next(line)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) fail("bad format line");
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else fail("unsupported PLY format '" + std::string(tok[1]) + "'");
      have_format = true;
    } else if (tok[0] == "element") {
      long long count;
      if (tok.size() != 3 || !parse_number(tok[2], count) || count < 0) fail("bad element line");
      elements.push_back(PlyElement{std::string(tok[1]), static_cast<std::size_t>(count), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) fail("property before element");
      PlyProperty p;
      bool ok = true;
      if (tok.size() == 5 && tok[1] == "list") {
        p.is_list = true;
        p.count_type = ply_type(tok[2], ok);
        if (!ok) fail("bad list count type");
        p.type = ply_type(tok[3], ok);
        p.name = std::string(tok[4]);
      } else if (tok.size() == 3) {
        p.type = ply_type(tok[1], ok);
        p.name = std::string(tok[2]);
      } else {
        fail("bad property line");
      }
      if (!ok) fail("unknown property type");
      elements.back().props.push_back(p);
    } else if (tok[0] == "end_header") {
      header_done = true;
      break;
    } else {
      fail("unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!header_done) fail("missing end_header");
  if (!have_format) fail("missing format line");

  std::vector<double> xyz;
  std::vector<Triangle> tris;
  std::size_t nv = 0;
  BinaryCursor cur(bytes, reader.position(), source_name);

  for (const auto& el : elements) {
    int ix = -1, iy = -1, iz = -1, iface = -1;
    for (std::size_t i = 0; i < el.props.size(); ++i) {
      const auto& n = el.props[i].name;
      if (n == "x") ix = static_cast<int>(i);
      if (n == "y") iy = static_cast<int>(i);
      if (n == "z") iz = static_cast<int>(i);
      if ((n == "vertex_indices" || n == "vertex_index") && el.props[i].is_list) iface = static_cast<int>(i);
    }
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) fail("vertex element lacks x/y/z");
    if (is_vertex) nv = el.count;
    for (std::size_t r = 0; r < el.count; ++r) {
      std::vector<std::vector<double>> values(el.props.size());
      std::size_t where_line = 0, where_byte = cur.pos();
      if (binary) {
        for (std::size_t i = 0; i < el.props.size(); ++i) {
          const auto& p = el.props[i];
          if (p.is_list) {
            const double c = cur.read(p.count_type);
            if (c < 0 || c > 1e6) throw ParseError(source_name, 0, cur.pos(), "bad list length");
            for (int j = 0; j < static_cast<int>(c); ++j) values[i].push_back(cur.read(p.type));
          } else {
            values[i].push_back(cur.read(p.type));
          }
        }
      } else {
        if (!reader.next(line)) fail("unexpected end of ascii data in element '" + el.name + "'");
        where_line = reader.line_no();
        where_byte = reader.line_start();
        const auto tok = split_ws(line);
        std::size_t t = 0;
        auto take = [&]() {
          double x;
          if (t >= tok.size()) fail("too few values in element '" + el.name + "'");
          if (!parse_number(tok[t], x)) fail("bad value '" + std::string(tok[t]) + "'");
          ++t;
          return x;
        };
        for (std::size_t i = 0; i < el.props.size(); ++i) {
          if (el.props[i].is_list) {
            const double c = take();
            if (c < 0 || c > 1e6) fail("bad list length");
            for (int j = 0; j < static_cast<int>(c); ++j) values[i].push_back(take());
          } else {
            values[i].push_back(take());
          }
        }
      }
      if (is_vertex) {
        xyz.push_back(values[static_cast<std::size_t>(ix)][0]);
        xyz.push_back(values[static_cast<std::size_t>(iy)][0]);
        xyz.push_back(values[static_cast<std::size_t>(iz)][0]);
      } else if (is_face && iface >= 0) {
        const auto& idx = values[static_cast<std::size_t>(iface)];
        if (idx.size() < 3) throw ParseError(source_name, where_line, where_byte, "face with fewer than 3 vertices");
        std::vector<int> resolved;
        for (double d : idx) {
          if (d < 0 || d >= static_cast<double>(nv) || d != static_cast<double>(static_cast<long long>(d))) {
            throw ParseError(source_name, where_line, where_byte,
                             "face index " + format_double(d) + " out of range (" + std::to_string(nv) + " vertices)");
          }
          resolved.push_back(static_cast<int>(d));
        }
        for (std::size_t c = 1; c + 1 < resolved.size(); ++c) tris.push_back({resolved[0], resolved[c], resolved[c + 1]});
      }
    }
  }
  return MeshData{to_points(xyz), std::move(tris)};
}

MeshData read_mesh_data(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const std::string bytes = read_file(path);
  if (ext == ".obj") return parse_obj(bytes, path.string());
  if (ext == ".ply") return parse_ply(bytes, path.string());
  throw InvalidInputError("unsupported mesh extension '" + ext + "' for " + path.string());
}

Mesh read_mesh(const fs::path& path, TopologyPtr topology) {
  MeshData data = read_mesh_data(path);
  if (topology && topology->triangles() == data.triangles &&
      topology->vertex_count() == static_cast<int>(data.positions.rows())) {
    return Mesh(std::move(topology), std::move(data.positions));
  }
  auto topo = std::make_shared<const MeshTopology>(static_cast<int>(data.positions.rows()), std::move(data.triangles));
  return Mesh(std::move(topo), std::move(data.positions));
}

std::string format_obj(const Mesh& mesh) {
  std::string out = "# s2d4d mesh\n";
  out.reserve(static_cast<std::size_t>(mesh.positions.rows()) * 64);
  for (Eigen::Index i = 0; i < mesh.positions.rows(); ++i) {
    out += "v ";
    out += format_double(mesh.positions(i, 0));
    out += ' ';
    out += format_double(mesh.positions(i, 1));
    out += ' ';
    out += format_double(mesh.positions(i, 2));
    out += '\n';
  }
  for (const auto& t : mesh.topology->triangles()) {
    out += "f " + std::to_string(t[0] + 1) + ' ' + std::to_string(t[1] + 1) + ' ' + std::to_string(t[2] + 1) + '\n';
  }
  return out;
}

void write_obj(const fs::path& path, const Mesh& mesh) { write_file(path, format_obj(mesh)); }

LandmarkIndexTable read_landmark_indices(const fs::path& path) {
  const std::string text = read_file(path);
  LineReader reader(text);
  std::string_view line;
  LandmarkIndexTable table;
  while (reader.next(line)) {
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    long long i;
    if (tok.size() != 1 || !parse_number(tok[0], i) || i < 0) {
      throw ParseError(path.string(), reader.line_no(), reader.line_start(), "expected one non-negative vertex index");
    }
    table.indices.push_back(static_cast<int>(i));
  }
  if (table.indices.empty()) throw ParseError(path.string(), 0, 0, "landmark index file is empty");
  return table;
}

void write_landmark_indices(const fs::path& path, const LandmarkIndexTable& table) {
  std::string out;
  for (int i : table.indices) out += std::to_string(i) + '\n';
  write_file(path, out);
}

std::string format_landmark_csv(const LandmarkSequence& seq) {
  std::string out = "frame";
  const auto k = seq.k();
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto s = std::to_string(j);
    out += ",l" + s + "x,l" + s + "y,l" + s + "z";
  }
  out += '\n';
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    out += std::to_string(t);
    const auto& p = seq.frames[t].points;
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
      for (int c = 0; c < 3; ++c) {
        out += ',';
        out += format_double(p(j, c));
      }
    }
    out += '\n';
  }
  return out;
}

LandmarkSequence parse_landmark_csv(const std::string& text, const std::string& source_name) {
  LineReader reader(text);
  std::string_view line;
  auto fail = [&](const std::string& msg) {
    throw ParseError(source_name, reader.line_no(), reader.line_start(), msg);
  };
  auto split_commas = [](std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t b = 0;
    while (true) {
      const auto e = s.find(',', b);
      out.push_back(s.substr(b, e == std::string_view::npos ? std::string_view::npos : e - b));
      if (e == std::string_view::npos) break;
      b = e + 1;
    }
    return out;
  };
  if (!reader.next(line)) fail("empty landmark CSV");
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "frame" || (header.size() - 1) % 3 != 0 || header.size() < 4) {
    fail("header must be 'frame,l0x,l0y,l0z,...'");
  }
  const auto k = static_cast<Eigen::Index>((header.size() - 1) / 3);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto s = "l" + std::to_string(j);
    if (header[static_cast<std::size_t>(1 + 3 * j)] != s + "x" || header[static_cast<std::size_t>(2 + 3 * j)] != s + "y" ||
        header[static_cast<std::size_t>(3 + 3 * j)] != s + "z") {
      fail("unexpected column name near landmark " + std::to_string(j));
    }
  }
  LandmarkSequence seq;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) fail("row has " + std::to_string(cells.size()) + " cells, expected " + std::to_string(header.size()));
    Points3 p(k, 3);
    for (Eigen::Index j = 0; j < k; ++j) {
      for (int c = 0; c < 3; ++c) {
        double x;
        const auto cell = cells[static_cast<std::size_t>(1 + 3 * j + c)];
        if (!parse_number(cell, x)) fail("bad number '" + std::string(cell) + "'");
        p(j, c) = x;
      }
    }
    seq.frames.emplace_back(std::move(p));
  }
  if (seq.frames.empty()) fail("landmark CSV has no frames");
  return seq;
}

void write_landmark_csv(const fs::path& path, const LandmarkSequence& seq) { write_file(path, format_landmark_csv(seq)); }

LandmarkSequence read_landmark_csv(const fs::path& path) { return parse_landmark_csv(read_file(path), path.string()); }

}  // namespace s2d4d

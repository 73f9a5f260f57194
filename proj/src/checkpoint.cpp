#include "s2d4d/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "s2d4d/errors.hpp"
#include "s2d4d/io.hpp"

namespace s2d4d {

namespace {

constexpr std::size_t kMagicLen = 8;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void put_f64(std::string& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

}  // namespace

const Matrix& Checkpoint::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json manifest;
  manifest["format"] = kCheckpointMagic;
  manifest["tensors"] = nlohmann::json::object();
  manifest["meta"] = ck.meta;
  std::uint64_t offset = 0;
  for (const auto& [name, m] : ck.tensors) {
    const std::uint64_t nbytes = static_cast<std::uint64_t>(m.size()) * 8;
    manifest["tensors"][name] = {{"shape", {m.rows(), m.cols()}}, {"dtype", "f64"}, {"offset", offset}, {"nbytes", nbytes}};
    offset += nbytes;
  }
  const std::string header = manifest.dump();
  std::string out(kCheckpointMagic, kMagicLen);
  put_u64(out, header.size());
  out += header;
  out.reserve(out.size() + offset);
  for (const auto& [name, m] : ck.tensors) {
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& source_name) {
  auto fail = [&](const std::string& msg) { return FormatError(source_name + ": " + msg); };
  if (bytes.size() < kMagicLen + 8 || std::memcmp(bytes.data(), kCheckpointMagic, kMagicLen) != 0) {
    throw fail("not an S2D4DCK1 checkpoint");
  }
  const std::uint64_t hlen = get_u64(bytes.data() + kMagicLen);
  const std::size_t blob_start = kMagicLen + 8 + hlen;
  if (hlen > bytes.size() || blob_start > bytes.size()) throw fail("truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + kMagicLen + 8, bytes.begin() + static_cast<std::ptrdiff_t>(blob_start));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("manifest is not valid JSON: ") + e.what());
  }
  Checkpoint ck;
  try {
    if (manifest.at("format") != kCheckpointMagic) throw fail("unexpected format tag");
    ck.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& [name, info] : manifest.at("tensors").items()) {
      if (info.at("dtype") != "f64") throw fail("tensor '" + name + "' has unsupported dtype");
      const auto shape = info.at("shape").get<std::vector<std::int64_t>>();
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw fail("tensor '" + name + "' has a bad shape");
      const auto off = info.at("offset").get<std::uint64_t>();
      const auto nbytes = info.at("nbytes").get<std::uint64_t>();
      if (nbytes != static_cast<std::uint64_t>(shape[0] * shape[1]) * 8) throw fail("tensor '" + name + "' size mismatch");
      if (off > bytes.size() - blob_start || nbytes > bytes.size() - blob_start - off) {
        throw fail("tensor '" + name + "' runs past the end of the file");
      }
      Matrix m(shape[0], shape[1]);
      const char* p = bytes.data() + blob_start + off;
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(get_u64(p + 8 * i));
      ck.tensors.emplace(name, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed manifest: ") + e.what());
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file(path, serialize_checkpoint(ck));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

}  // namespace s2d4d

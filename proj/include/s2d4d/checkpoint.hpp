#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "s2d4d/types.hpp"

// Container: 8-byte magic "S2D4DCK1", uint64 little-endian manifest length,
// JSON manifest, then the tensor blobs as little-endian float64.
//
// manifest = {"format": "S2D4DCK1",
//             "tensors": {name: {"shape": [r, c], "dtype": "f64",
//                                "offset": bytes from blob start, "nbytes": n}},
//             "meta": {...}}

namespace s2d4d {

inline constexpr char kCheckpointMagic[] = "S2D4DCK1";

struct Checkpoint {
  std::map<std::string, Matrix> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Matrix& tensor(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

std::string serialize_checkpoint(const Checkpoint& ck);
/// Throws FormatError on a bad magic, truncated data or an inconsistent manifest.
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& source_name = "<memory>");

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace s2d4d

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "s2d4d/curve_manifold.hpp"
#include "s2d4d/mesh.hpp"

// File formats: OBJ (v/f records) and PLY (ascii, binary little endian) mesh
// input, OBJ output, landmark index files and landmark sequence CSV.
//
// OBJ output writes every coordinate in the shortest decimal form that
// parses back to the same double, so write -> read is bit-exact.

namespace s2d4d {

struct MeshData {
  Points3 positions;
  std::vector<Triangle> triangles;
};

MeshData parse_obj(const std::string& text, const std::string& source_name = "<memory>");
MeshData parse_ply(const std::string& bytes, const std::string& source_name = "<memory>");

/// Reads .obj or .ply by extension.
MeshData read_mesh_data(const std::filesystem::path& path);
/// Reads a mesh; reuses `topology` if given and the connectivity matches,
/// otherwise builds a new one.
Mesh read_mesh(const std::filesystem::path& path, TopologyPtr topology = nullptr);

std::string format_obj(const Mesh& mesh);
void write_obj(const std::filesystem::path& path, const Mesh& mesh);

/// One 0-based vertex index per line.
LandmarkIndexTable read_landmark_indices(const std::filesystem::path& path);
void write_landmark_indices(const std::filesystem::path& path, const LandmarkIndexTable& table);

/// Header `frame,l0x,l0y,l0z,...`, one row per frame.
std::string format_landmark_csv(const LandmarkSequence& seq);
LandmarkSequence parse_landmark_csv(const std::string& text, const std::string& source_name = "<memory>");
void write_landmark_csv(const std::filesystem::path& path, const LandmarkSequence& seq);
LandmarkSequence read_landmark_csv(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace s2d4d

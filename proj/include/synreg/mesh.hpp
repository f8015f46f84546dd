#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "synreg/geometry.hpp"

namespace synreg {

/// Triangle mesh M = (V, F). Vertex coordinates in mm.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  /// Throws ValidationError on out-of-range or repeated face indices, or N < 3.
  void validate() const;
};

/// Reads ASCII PLY or OBJ (by extension). Throws IoError, ParseError, ValidationError.
TriMesh load_mesh(const std::filesystem::path& path);

void save_ply(const TriMesh& mesh, const std::filesystem::path& path);
void save_obj(const TriMesh& mesh, const std::filesystem::path& path);

/// Arithmetic mean of the vertices.
Vec3 mesh_centroid(const TriMesh& mesh);

TriMesh transformed(const TriMesh& mesh, const Transform& t);

/// Unit icosahedron subdivided `level` times and projected onto a sphere.
TriMesh make_icosphere(int level, double radius_mm);

/// Concave, asymmetric bowl opening toward -z (toward a camera looking down +z).
TriMesh make_cavity(double radius_mm, double depth_mm, int rings = 24, int sectors = 48);

/// Lumpy ellipsoid with two lobes, standing in for an irregular anatomy-like blob.
TriMesh make_blob(double radius_mm, int level = 3);

/// Procedural meshes addressable by name: "sphere", "cavity", "blob".
/// All are centered on their centroid. Throws ValidationError for unknown names.
TriMesh builtin_mesh(std::string_view name);

/// Resolves "builtin:<name>" to a procedural mesh, otherwise loads from disk.
TriMesh resolve_mesh(const std::string& spec);

}  // namespace synreg

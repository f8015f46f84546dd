#include "synreg/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "synreg/error.hpp"

namespace synreg {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file: " + path.string());
  return in;
}

TriMesh parse_ply(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw ParseError(name + ": missing 'ply' magic");

  struct Element {
    std::string name;
    long count = 0;
    std::vector<std::string> props;
    bool has_list = false;
  };
  std::vector<Element> elements;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (tok == "element") {
      Element e;
      ls >> e.name >> e.count;
      if (!ls || e.count < 0) throw ParseError(name + ": bad element line: " + line);
      elements.push_back(e);
    } else if (tok == "property") {
      if (elements.empty()) throw ParseError(name + ": property before element");
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string a, b, pname;
        ls >> a >> b >> pname;
        elements.back().has_list = true;
        elements.back().props.push_back(pname);
      } else {
        std::string pname;
        ls >> pname;
        elements.back().props.push_back(pname);
      }
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!ascii) throw ParseError(name + ": only ASCII PLY is supported");

  TriMesh mesh;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      const auto find = [&](const char* p) {
        auto it = std::find(e.props.begin(), e.props.end(), p);
        if (it == e.props.end()) throw ParseError(name + ": vertex element lacks property " + p);
        return static_cast<std::size_t>(it - e.props.begin());
      };
      const std::size_t ix = find("x"), iy = find("y"), iz = find("z");
      mesh.vertices.reserve(e.count);
      for (long i = 0; i < e.count; ++i) {
        if (!std::getline(in, line)) throw ParseError(name + ": truncated vertex list");
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (vals.size() < e.props.size()) throw ParseError(name + ": malformed vertex line: " + line);
        mesh.vertices.emplace_back(vals[ix], vals[iy], vals[iz]);
      }
    } else if (e.name == "face") {
      mesh.faces.reserve(e.count);
      for (long i = 0; i < e.count; ++i) {
        if (!std::getline(in, line)) throw ParseError(name + ": truncated face list");
        std::istringstream ls(line);
        long n = 0;
        ls >> n;
        if (!ls) throw ParseError(name + ": malformed face line: " + line);
        if (n != 3) throw ParseError(name + ": only triangular faces are supported");
        std::array<int, 3> f{};
        ls >> f[0] >> f[1] >> f[2];
        if (!ls) throw ParseError(name + ": malformed face line: " + line);
        mesh.faces.push_back(f);
      }
    } else {
      for (long i = 0; i < e.count; ++i) {
        if (!std::getline(in, line)) throw ParseError(name + ": truncated element " + e.name);
      }
    }
  }
  return mesh;
}

int parse_obj_index(const std::string& tok, std::size_t n_vertices, const std::string& name) {
  const std::string head = tok.substr(0, tok.find('/'));
  std::size_t used = 0;
  long idx = 0;
  try {
    idx = std::stol(head, &used);
  } catch (const std::exception&) {
    throw ParseError(name + ": bad face index '" + tok + "'");
  }
  if (used != head.size() || idx == 0) throw ParseError(name + ": bad face index '" + tok + "'");
  // OBJ indices are 1-based; negative values count back from the last vertex.
  return static_cast<int>(idx > 0 ? idx - 1 : static_cast<long>(n_vertices) + idx);
}

TriMesh parse_obj(std::istream& in, const std::string& name) {
  TriMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "v") {
      double x, y, z;
      ls >> x >> y >> z;
      if (!ls) throw ParseError(name + ": malformed vertex line: " + line);
      mesh.vertices.emplace_back(x, y, z);
    } else if (tok == "f") {
      std::vector<std::string> toks;
      std::string t;
      while (ls >> t) toks.push_back(t);
      if (toks.size() != 3) throw ParseError(name + ": only triangular faces are supported");
      std::array<int, 3> f{};
      for (int k = 0; k < 3; ++k) f[k] = parse_obj_index(toks[k], mesh.vertices.size(), name);
      mesh.faces.push_back(f);
    }
  }
  return mesh;
}

void center_on_centroid(TriMesh& mesh) {
  const Vec3 c = mesh_centroid(mesh);
  for (auto& v : mesh.vertices) v -= c;
}

}  // namespace

void TriMesh::validate() const {
  if (vertices.size() < 3) throw ValidationError("mesh needs at least 3 vertices");
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw ValidationError("mesh has non-finite vertex coordinates");
  }
  const int n = static_cast<int>(vertices.size());
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const auto& f = faces[i];
    for (int idx : f) {
      if (idx < 0 || idx >= n) {
        throw ValidationError("face " + std::to_string(i) + " references vertex " + std::to_string(idx) +
                              " outside [0, " + std::to_string(n) + ")");
      }
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw ValidationError("face " + std::to_string(i) + " is degenerate (repeated index)");
    }
  }
}

TriMesh load_mesh(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  const std::string ext = lower_ext(path);
  TriMesh mesh;
  if (ext == ".ply") {
    mesh = parse_ply(in, path.string());
  } else if (ext == ".obj") {
    mesh = parse_obj(in, path.string());
  } else {
    throw ParseError("unsupported mesh format: " + path.string());
  }
  mesh.validate();
  return mesh;
}

void save_ply(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file: " + path.string());
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!out) throw IoError("failed writing mesh file: " + path.string());
}

void save_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file: " + path.string());
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw IoError("failed writing mesh file: " + path.string());
}

Vec3 mesh_centroid(const TriMesh& mesh) {
  Vec3 sum = Vec3::Zero();
  for (const auto& v : mesh.vertices) sum += v;
  return mesh.vertices.empty() ? sum : Vec3(sum / static_cast<double>(mesh.vertices.size()));
}

TriMesh transformed(const TriMesh& mesh, const Transform& t) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = t.apply(v);
  return out;
}

TriMesh make_icosphere(int level, double radius_mm) {
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  m.vertices = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const int idx = static_cast<int>(m.vertices.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    m.faces = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius_mm;
  return m;
}

TriMesh make_cavity(double radius_mm, double depth_mm, int rings, int sectors) {
  TriMesh m;
  // Polar grid; the bowl floor sits farther from the camera (+z) than the rim.
  auto height = [&](double x, double y) {
    const double r2 = (x * x + y * y) / (radius_mm * radius_mm);
    double z = depth_mm * (1.0 - r2);
    // Off-center ridge and a shallow dimple break the rotational symmetry.
    const double rx = x - 0.35 * radius_mm, ry = y + 0.2 * radius_mm;
    z -= 0.35 * depth_mm * std::exp(-(rx * rx + ry * ry) / (0.08 * radius_mm * radius_mm));
    const double dx = x + 0.4 * radius_mm, dy = y - 0.3 * radius_mm;
    z += 0.2 * depth_mm * std::exp(-(dx * dx + dy * dy) / (0.05 * radius_mm * radius_mm));
    z += 0.08 * depth_mm * std::sin(3.0 * x / radius_mm + 1.0) * std::cos(2.0 * y / radius_mm);
    return z;
  };
  m.vertices.emplace_back(0.0, 0.0, height(0.0, 0.0));
  for (int i = 1; i <= rings; ++i) {
    const double r = radius_mm * i / rings;
    for (int j = 0; j < sectors; ++j) {
      const double a = 2.0 * kPi * j / sectors;
      // Elliptic outline keeps the silhouette orientation-discriminative.
      const double x = 1.15 * r * std::cos(a), y = 0.85 * r * std::sin(a);
      m.vertices.emplace_back(x, y, height(x, y));
    }
  }
  auto ring_idx = [&](int ring, int j) { return 1 + (ring - 1) * sectors + (j % sectors); };
  for (int j = 0; j < sectors; ++j) m.faces.push_back({0, ring_idx(1, j), ring_idx(1, j + 1)});
  for (int i = 1; i < rings; ++i) {
    for (int j = 0; j < sectors; ++j) {
      const int a = ring_idx(i, j), b = ring_idx(i, j + 1), c = ring_idx(i + 1, j), d = ring_idx(i + 1, j + 1);
      m.faces.push_back({a, c, d});
      m.faces.push_back({a, d, b});
    }
  }
  center_on_centroid(m);
  return m;
}

TriMesh make_blob(double radius_mm, int level) {
  TriMesh m = make_icosphere(level, 1.0);
  const Vec3 lobe_a = Vec3(0.6, 0.7, -0.4).normalized();
  const Vec3 lobe_b = Vec3(-0.5, 0.8, 0.3).normalized();
  for (auto& v : m.vertices) {
    const Vec3 d = v.normalized();
    double r = 1.0 + 0.12 * std::sin(3.0 * d.x() + 0.5) * std::cos(2.0 * d.y());
    r += 0.45 * std::pow(std::max(0.0, d.dot(lobe_a)), 8.0);
    r += 0.35 * std::pow(std::max(0.0, d.dot(lobe_b)), 10.0);
    v = Vec3(1.2 * d.x(), 0.9 * d.y(), 0.8 * d.z()) * (r * radius_mm);
  }
  center_on_centroid(m);
  return m;
}

TriMesh builtin_mesh(std::string_view name) {
  if (name == "sphere") return make_icosphere(3, 20.0);
  if (name == "cavity") return make_cavity(22.0, 12.0);
  if (name == "blob") return make_blob(17.0);
  throw ValidationError("unknown builtin mesh: " + std::string(name));
}

TriMesh resolve_mesh(const std::string& spec) {
  constexpr std::string_view prefix = "builtin:";
  TriMesh mesh = spec.rfind(prefix, 0) == 0 ? builtin_mesh(std::string_view(spec).substr(prefix.size()))
                                            : load_mesh(spec);
  mesh.validate();
  return mesh;
}

}  // namespace synreg

#include "synreg/json_io.hpp"

namespace synreg {

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(context + ": expected a 3-element array");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(context + ": " + e.what());
  }
}

void to_json(Json& j, const Pose& p) {
  const Mat3& r = p.rotation.matrix();
  Json rot = Json::array();
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 3; ++c) rot.push_back(r(i, c));
  }
  j = Json{{"rotation", rot}, {"translation", vec3_to_json(p.translation)}};
}

void from_json(const Json& j, Pose& p) {
  StrictReader r(j, "pose");
  r.with("rotation", [&](const Json& rot) {
    if (!rot.is_array() || rot.size() != 9) throw ValidationError("pose.rotation: expected 9 row-major entries");
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = rot[i].get<double>();
    p.rotation = Rotation::from_matrix(m, 1e-6);
  });
  r.with("translation", [&](const Json& t) { p.translation = vec3_from_json(t, "pose.translation"); });
  r.finish();
}

void to_json(Json& j, const Intrinsics& k) { j = Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}; }

void from_json(const Json& j, Intrinsics& k) {
  StrictReader(j, "intrinsics").opt("fx", k.fx).opt("fy", k.fy).opt("cx", k.cx).opt("cy", k.cy).finish();
}

void to_json(Json& j, const ImageSize& s) { j = Json{{"width", s.width}, {"height", s.height}}; }

void from_json(const Json& j, ImageSize& s) {
  StrictReader(j, "image_size").opt("width", s.width).opt("height", s.height).finish();
}

std::string dump_canonical(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace synreg

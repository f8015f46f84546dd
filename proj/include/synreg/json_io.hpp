#pragma once

#include <set>
#include <string>

#include "json.hpp"

#include "synreg/error.hpp"
#include "synreg/geometry.hpp"
#include "synreg/image.hpp"

namespace synreg {

using Json = nlohmann::json;

/// Reads optional keys into pre-initialized fields and rejects keys that
/// were never requested.
class StrictReader {
public:
  StrictReader(const Json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ValidationError(context_ + ": expected a JSON object");
  }

  template <typename T>
  StrictReader& opt(const char* key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(context_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  template <typename Fn>
  StrictReader& with(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) fn(*it);
    return *this;
  }

  template <typename T>
  StrictReader& req(const char* key, T& out) {
    if (!j_.contains(key)) throw ValidationError(context_ + ": missing key '" + std::string(key) + "'");
    return opt(key, out);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ValidationError(context_ + ": unknown key '" + item.key() + "'");
    }
  }

private:
  const Json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

Json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j, const std::string& context);

void to_json(Json& j, const Pose& p);
void from_json(const Json& j, Pose& p);
void to_json(Json& j, const Intrinsics& k);
void from_json(const Json& j, Intrinsics& k);
void to_json(Json& j, const ImageSize& s);
void from_json(const Json& j, ImageSize& s);

/// Canonical serialization used for files that must be byte-reproducible.
std::string dump_canonical(const Json& j);

}  // namespace synreg

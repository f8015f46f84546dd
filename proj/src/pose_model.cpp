#include "synreg/pose_model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "synreg/error.hpp"

namespace synreg {

namespace {

std::uint32_t crc32_of(const void* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<char>& buf, T v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

class Cursor {
public:
  explicit Cursor(const std::vector<char>& b) : buf_(b) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const char* take(std::size_t n) {
    need(n);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CorruptChecksum("checkpoint is truncated");
  }
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

PoseModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
  PoseModel m(cfg);
  m.network().initialize(seed);
  return m;
}

std::vector<PosePrediction> to_predictions(const ModelConfig& cfg, const HeadOutput<float>& out) {
  std::vector<PosePrediction> preds(out.n);
  for (int i = 0; i < out.n; ++i) {
    for (int k = 0; k < 6; ++k) preds[i].r6.v[k] = out.r6[6 * i + k];
    const Vec3 tn(out.t[3 * i], out.t[3 * i + 1], out.t[3 * i + 2]);
    preds[i].t = cfg.translation_offset + cfg.translation_scale * tn;
  }
  return preds;
}

std::vector<PosePrediction> forward(const PoseModel& model, std::span<const Image> images, std::uint64_t dropout_seed) {
  const auto x = make_input<float>(model.config(), images);
  return to_predictions(model.config(), model.network().forward(x, model.mode(), dropout_seed, nullptr));
}

Pose prediction_to_pose(const PosePrediction& p) { return Pose{r6_to_rotation(p.r6), p.t}; }

Pose predict_pose(const PoseModel& model, const Image& image) {
  if (model.mode() != Mode::Eval) throw ValidationError("predict_pose requires an eval-mode model");
  return prediction_to_pose(forward(model, std::span(&image, 1)).front());
}

std::uint32_t config_hash(const ModelConfig& cfg) {
  const std::string s = Json(cfg).dump();
  return crc32_of(s.data(), s.size());
}

void save_checkpoint(const PoseModel& model, const std::filesystem::path& path) {
  const std::string cfg = Json(model.config()).dump();
  const auto& params = model.network().params();
  std::vector<char> buf;
  buf.reserve(32 + cfg.size() + 4 * params.size());
  buf.insert(buf.end(), {'P', '6', 'C', 'K'});
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint32_t>(buf, crc32_of(cfg.data(), cfg.size()));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(cfg.size()));
  buf.insert(buf.end(), cfg.begin(), cfg.end());
  put<std::uint64_t>(buf, params.size());
  const auto* raw = reinterpret_cast<const char*>(params.data());
  buf.insert(buf.end(), raw, raw + sizeof(float) * params.size());
  put<std::uint32_t>(buf, crc32_of(buf.data(), buf.size()));

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("failed writing checkpoint " + path.string());
}

PoseModel load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), "P6CK", 4) != 0) {
    throw IoError(path.string() + " is not a checkpoint (bad magic)");
  }
  if (buf.size() < 4 + 4 * 4 + 8) throw CorruptChecksum("checkpoint is truncated");
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  if (crc32_of(buf.data(), buf.size() - 4) != stored_crc) {
    throw CorruptChecksum("checkpoint checksum mismatch (truncated or corrupted): " + path.string());
  }

  Cursor c(buf);
  c.take(4);
  const auto version = c.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint format version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto hash = c.get<std::uint32_t>();
  if (expected && config_hash(*expected) != hash) {
    throw VersionMismatch("checkpoint was written for a different model config");
  }
  const auto len = c.get<std::uint32_t>();
  const char* cfg_text = c.take(len);
  if (crc32_of(cfg_text, len) != hash) throw CorruptChecksum("checkpoint config does not match its hash");
  ModelConfig cfg;
  try {
    cfg = Json::parse(cfg_text, cfg_text + len).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptChecksum(std::string("checkpoint config is unreadable: ") + e.what());
  }
  PoseModel model(cfg);
  auto& params = model.network().params();
  const auto count = c.get<std::uint64_t>();
  if (count != params.size()) {
    throw VersionMismatch("checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                          std::to_string(params.size()));
  }
  std::memcpy(params.data(), c.take(sizeof(float) * count), sizeof(float) * count);
  if (c.remaining() != 4) throw CorruptChecksum("checkpoint has trailing bytes");
  model.set_mode(Mode::Eval);
  return model;
}

}  // namespace synreg

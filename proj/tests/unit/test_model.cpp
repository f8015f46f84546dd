#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "doctest.h"

#include "support.hpp"
#include "synreg/error.hpp"
#include "synreg/network.hpp"
#include "synreg/pose_model.hpp"
#include "synreg/training.hpp"

using namespace synreg;
using synreg::test::TempDir;

namespace {

ModelConfig tiny_config(HeadPooling pooling = HeadPooling::GlobalAverage) {
  ModelConfig c;
  c.input_size = {20, 17};
  c.conv_blocks = {{3, false}, {4, true}, {5, true}};
  c.head_hidden_dim = 7;
  c.pooling = pooling;
  return c;
}

std::vector<Image> noise_images(ImageSize size, int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    Image img(size.width, size.height);
    for (auto& p : img.pixels) p = u(rng);
    out.push_back(img);
  }
  return out;
}

double leaky(double x, double s) { return x > 0 ? x : s * x; }

/// Direct-loop evaluation of the eval-mode network for one image.
std::vector<double> reference_forward(const ModelConfig& cfg, const Buffer<double>& p, const ParameterLayout& l,
                                      const Image& img) {
  int c_in = 1, h = img.height, w = img.width;
  std::vector<double> x(img.pixels.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (img.pixels[i] - cfg.input_mean) / cfg.input_std;
  for (std::size_t b = 0; b < cfg.conv_blocks.size(); ++b) {
    const int c_out = cfg.conv_blocks[b].out_channels;
    const int ho = (h + 1) / 2, wo = (w + 1) / 2;
    std::vector<double> y(static_cast<std::size_t>(c_out) * ho * wo);
    const auto& d = l.conv[b];
    for (int o = 0; o < c_out; ++o)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = p[d.bias + o];
          for (int c = 0; c < c_in; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = 2 * oy + ky - 1, ix = 2 * ox + kx - 1;
                if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
                acc += p[d.weight + o * d.cols + (c * 3 + ky) * 3 + kx] * x[(c * h + iy) * w + ix];
              }
          y[(o * ho + oy) * wo + ox] = leaky(acc, cfg.leaky_slope);
        }
    x = std::move(y);
    c_in = c_out;
    h = ho;
    w = wo;
  }
  std::vector<double> feat;
  if (cfg.pooling == HeadPooling::GlobalAverage) {
    for (int c = 0; c < c_in; ++c) {
      double s = 0;
      for (int i = 0; i < h * w; ++i) s += x[c * h * w + i];
      feat.push_back(s / (h * w));
    }
  } else {
    feat = x;
  }
  auto dense = [&](const ParameterLayout::Dense& d, const std::vector<double>& in, bool act) {
    std::vector<double> out(d.rows);
    for (int r = 0; r < d.rows; ++r) {
      double acc = p[d.bias + r];
      for (int c = 0; c < d.cols; ++c) acc += p[d.weight + r * d.cols + c] * in[c];
      out[r] = act ? leaky(acc, cfg.leaky_slope) : acc;
    }
    return out;
  };
  const auto hid = dense(l.hidden, feat, true);
  auto out = dense(l.rotation, hid, false);
  const auto t = dense(l.translation, hid, false);
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST_SUITE("model") {

TEST_CASE("initialization is seeded") {
  const ModelConfig cfg;
  CHECK(init_model(cfg, 3).network().params() == init_model(cfg, 3).network().params());
  CHECK(init_model(cfg, 3).network().params() != init_model(cfg, 4).network().params());
}

TEST_CASE("default model stays within the parameter budget") {
  const ModelConfig cfg;
  std::size_t expected = 0;
  int in = 1;
  for (const auto& b : cfg.conv_blocks) {
    expected += static_cast<std::size_t>(b.out_channels) * (9 * in) + b.out_channels;
    in = b.out_channels;
  }
  const int hidden = cfg.head_hidden_dim;
  expected += static_cast<std::size_t>(hidden) * in + hidden;
  expected += 6 * hidden + 6 + 3 * hidden + 3;
  const PoseModel m = init_model(cfg, 0);
  CHECK(m.network().params().size() == expected);
  CHECK(expected < 5'000'000);

  ModelConfig flat = cfg;
  flat.pooling = HeadPooling::Flatten;
  const ImageSize fs = flat.feature_size();
  CHECK(fs == ImageSize{8, 8});
  CHECK(make_layout(flat).hidden.cols == in * 64);
}

TEST_CASE("invalid model configs") {
  ModelConfig c;
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(init_model(c, 0), InvalidConfig);
  c = ModelConfig{};
  c.conv_blocks.resize(2);
  CHECK_THROWS_AS(init_model(c, 0), InvalidConfig);
  c = ModelConfig{};
  c.leaky_slope = 0.0;
  CHECK_THROWS_AS(init_model(c, 0), InvalidConfig);
  c = ModelConfig{};
  c.head_hidden_dim = 0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
}

TEST_CASE("model config json round trip is strict") {
  ModelConfig c = tiny_config(HeadPooling::Flatten);
  c.translation_offset = Vec3(1, 2, 3);
  const Json j = c;
  const ModelConfig back = j.get<ModelConfig>();
  CHECK(Json(back) == j);
  Json bad = j;
  bad["unexpected"] = true;
  CHECK_THROWS(bad.get<ModelConfig>());
}

TEST_CASE("forward matches a direct-loop reference") {
  for (auto pooling : {HeadPooling::GlobalAverage, HeadPooling::Flatten}) {
    const ModelConfig cfg = tiny_config(pooling);
    Network<double> net(cfg);
    net.initialize(5);
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& v : net.params()) v += u(rng);  // nonzero biases too
    const auto imgs = noise_images(cfg.input_size, 3, 9);
    const auto input = make_input<double>(cfg, imgs);
    const auto out = net.forward(input, Mode::Eval, 0, nullptr);
    for (int s = 0; s < 3; ++s) {
      const auto ref = reference_forward(cfg, net.params(), net.layout(), imgs[s]);
      for (int k = 0; k < 6; ++k) CHECK(out.r6[6 * s + k] == doctest::Approx(ref[k]).epsilon(1e-12));
      for (int k = 0; k < 3; ++k) CHECK(out.t[3 * s + k] == doctest::Approx(ref[6 + k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("batch of one gives finite outputs") {
  const PoseModel m = init_model(ModelConfig{}, 1);
  const auto imgs = noise_images(m.config().input_size, 1, 1);
  const auto preds = forward(m, imgs);
  REQUIRE(preds.size() == 1);
  for (double v : preds[0].r6.v) CHECK(std::isfinite(v));
  CHECK(preds[0].t.allFinite());
}

TEST_CASE("eval forward is deterministic and per-sample") {
  ModelConfig cfg = tiny_config();
  cfg.input_size = {64, 64};
  const PoseModel m = init_model(cfg, 2);
  const auto imgs = noise_images(cfg.input_size, 3, 4);
  const auto a = forward(m, imgs);
  const auto b = forward(m, imgs);
  std::vector<Image> doubled = imgs;
  doubled.insert(doubled.end(), imgs.begin(), imgs.end());
  const auto d = forward(m, doubled);
  for (int i = 0; i < 3; ++i) {
    CHECK(a[i].r6 == b[i].r6);
    CHECK(a[i].t == b[i].t);
    for (int k = 0; k < 6; ++k) {
      CHECK(d[i].r6.v[k] == doctest::Approx(a[i].r6.v[k]).epsilon(1e-6));
      CHECK(d[i + 3].r6.v[k] == doctest::Approx(a[i].r6.v[k]).epsilon(1e-6));
    }
    CHECK((d[i + 3].t - a[i].t).norm() < 1e-4);
  }
}

TEST_CASE("train-mode dropout is reproducible from its seed") {
  ModelConfig cfg = tiny_config();
  cfg.dropout_rate = 0.5;
  PoseModel m = init_model(cfg, 2);
  m.set_mode(Mode::Train);
  const auto imgs = noise_images(cfg.input_size, 2, 4);
  const auto a = forward(m, imgs, 10);
  const auto b = forward(m, imgs, 10);
  const auto c = forward(m, imgs, 11);
  CHECK(a[0].r6 == b[0].r6);
  CHECK(a[0].r6 != c[0].r6);
  m.set_mode(Mode::Eval);
  CHECK(forward(m, imgs, 10)[0].r6 == forward(m, imgs, 11)[0].r6);
}

TEST_CASE("wrong input size is rejected") {
  const PoseModel m = init_model(tiny_config(), 0);
  CHECK_THROWS_AS(forward(m, noise_images({21, 17}, 1, 0)), ShapeMismatch);
}

TEST_CASE("forced head outputs map to the requested pose") {
  PoseModel m = init_model(ModelConfig{}, 0);
  auto& p = m.network().params();
  std::fill(p.begin(), p.end(), 0.0f);
  const auto& l = m.network().layout();
  const std::array<float, 6> r6{1, 0, 0, 0, 1, 0};
  for (int k = 0; k < 6; ++k) p[l.rotation.bias + k] = r6[k];
  const Vec3 target(0, 0, 100);
  const Vec3 norm = (target - m.config().translation_offset) / m.config().translation_scale;
  for (int k = 0; k < 3; ++k) p[l.translation.bias + k] = static_cast<float>(norm[k]);

  const Pose pose = predict_pose(m, noise_images(m.config().input_size, 1, 3)[0]);
  CHECK(pose.rotation.matrix() == Mat3::Identity());
  CHECK((pose.translation - target).norm() < 1e-9);
}

TEST_CASE("predicted poses are rotations and repeatable") {
  const PoseModel m = init_model(ModelConfig{}, 8);
  for (const auto& img : noise_images(m.config().input_size, 4, 8)) {
    const Pose a = predict_pose(m, img);
    const Pose b = predict_pose(m, img);
    CHECK(Rotation::orthonormality_error(a.rotation.matrix()) < 1e-9);
    CHECK(a.matrix() == b.matrix());
  }
  PoseModel t = init_model(ModelConfig{}, 8);
  t.set_mode(Mode::Train);
  CHECK_THROWS_AS(predict_pose(t, noise_images(t.config().input_size, 1, 0)[0]), ValidationError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt");
  ModelConfig cfg;
  cfg.input_mean = 0.41;
  const PoseModel m = init_model(cfg, 6);
  save_checkpoint(m, dir / "sub/m.ckpt");
  const PoseModel back = load_checkpoint(dir / "sub/m.ckpt", cfg);
  CHECK(back.mode() == Mode::Eval);
  CHECK(back.network().params() == m.network().params());
  CHECK(Json(back.config()) == Json(cfg));
  const auto imgs = noise_images(cfg.input_size, 2, 6);
  const auto a = forward(m, imgs), b = forward(back, imgs);
  for (int i = 0; i < 2; ++i) {
    CHECK(a[i].r6 == b[i].r6);
    CHECK(a[i].t == b[i].t);
  }
  save_checkpoint(back, dir / "again.ckpt");
  CHECK(slurp(dir / "sub/m.ckpt") == slurp(dir / "again.ckpt"));
}

TEST_CASE("checkpoint corruption and mismatches") {
  TempDir dir("ckpt_bad");
  const ModelConfig cfg = tiny_config();
  save_checkpoint(init_model(cfg, 1), dir / "m.ckpt");
  const std::string bytes = slurp(dir / "m.ckpt");

  spit(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 10));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), CorruptChecksum);

  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  spit(dir / "flip.ckpt", flipped);
  CHECK_THROWS_AS(load_checkpoint(dir / "flip.ckpt"), CorruptChecksum);

  std::string magic = bytes;
  magic[0] = 'X';
  spit(dir / "magic.ckpt", magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), IoError);

  ModelConfig other = cfg;
  other.head_hidden_dim = 8;
  CHECK(config_hash(other) != config_hash(cfg));
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", other), VersionMismatch);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), IoError);
}

TEST_CASE("every layer's gradient matches central differences") {
  for (auto pooling : {HeadPooling::GlobalAverage, HeadPooling::Flatten}) {
    const ModelConfig cfg = tiny_config(pooling);
    const PoseModel m = init_model(cfg, 12);
    const auto img = noise_images(cfg.input_size, 1, 12)[0];
    const Pose gt{Rotation::euler_xyz(0.3, -0.2, 0.5), Vec3(5, -4, 260)};
    const std::size_t all = m.network().params().size();
    // Some coordinates have |g| near 1e-6; a 1e-5 step keeps their round-off below the bound.
    CHECK(finite_difference_check(m, img, gt, LossWeights{}, 1e-5, all, 0) < 1e-4);
  }
}

}

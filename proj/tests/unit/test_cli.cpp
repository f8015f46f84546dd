#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"

#include "support.hpp"
#include "synreg/cli.hpp"
#include "synreg/mesh.hpp"

using namespace synreg;
using synreg::test::small_scene;
using synreg::test::TempDir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "synreg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// A small, fast run config written to `dir`/config.json.
std::string write_config(const TempDir& dir, const std::function<void(RunConfig&)>& edit = {}) {
  RunConfig c;
  c.scene = small_scene();
  c.generation.sample.n_frames = 20;
  c.model.conv_blocks = {{4, false}, {6, true}, {8, true}};
  c.model.head_hidden_dim = 16;
  c.model.input_size = c.scene.size;
  c.train.epochs = 1;
  c.train.batch_size = 4;
  c.bench.frames = 100;
  c.bench.warmup = 1;
  if (edit) edit(c);
  const auto path = dir / "config.json";
  std::ofstream(path) << run_config_to_json(c).dump(2);
  return path.string();
}

int count_png(const std::filesystem::path& dir) {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) n += e.path().extension() == ".png";
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes the requested frames") {
  TempDir dir("cli_synth");
  const auto cfg = write_config(dir);
  const auto r = run({"synth", "--config", cfg, "--out", (dir / "run").string(), "--frames", "10"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(count_png(dir / "run/dataset/frames") == 10);
  CHECK(load_manifest(dir / "run/dataset/manifest.json").records.size() == 10);
  CHECK(load_manifest(dir / "run/dataset/train.json").records.size() == 8);
  CHECK(std::filesystem::exists(dir / "run/run_config.json"));
  CHECK(r.out.find("seed 0") != std::string::npos);
}

TEST_CASE("synth is idempotent and seed sensitive") {
  TempDir dir("cli_seed");
  const auto cfg = write_config(dir);
  const auto out = (dir / "run").string();
  REQUIRE(run({"synth", "--config", cfg, "--out", out, "--frames", "4"}).code == 0);
  const std::string first = slurp(dir / "run/dataset/manifest.json");
  const std::string first_png = slurp(dir / "run/dataset/frames/000000.png");
  REQUIRE(run({"synth", "--config", cfg, "--out", out, "--frames", "4"}).code == 0);
  CHECK(slurp(dir / "run/dataset/manifest.json") == first);
  REQUIRE(run({"synth", "--config", cfg, "--out", out, "--frames", "4", "--seed", "99"}).code == 0);
  CHECK(slurp(dir / "run/dataset/manifest.json") != first);
  CHECK(slurp(dir / "run/dataset/frames/000000.png") != first_png);
}

TEST_CASE("flags override the config file") {
  TempDir dir("cli_override");
  const auto cfg = write_config(dir, [](RunConfig& c) { c.generation.sample.n_frames = 9; });
  REQUIRE(run({"synth", "--config", cfg, "--out", (dir / "run").string(), "--frames", "5", "--seed", "4"}).code == 0);
  const RunConfig used = load_run_config(dir / "run/run_config.json");
  CHECK(used.generation.sample.n_frames == 5);
  CHECK(used.seed == 4);
  CHECK(used.scene.size == ImageSize{64, 64});
}

TEST_CASE("error exit codes") {
  TempDir dir("cli_err");
  const auto cfg = write_config(dir);
  const auto out = (dir / "run").string();
  CHECK(run({"synth", "--config", cfg, "--out", out, "--mesh", (dir / "missing.ply").string()}).code == 2);
  CHECK(run({"synth", "--config", (dir / "absent.json").string()}).code == 2);
  CHECK(run({"synth", "--config", cfg, "--out", out, "--frames", "0"}).code == 1);
  CHECK(run({"synth", "--bogus"}).code == 1);
  CHECK(run({}).code == 1);

  Json j = run_config_to_json(RunConfig{});
  j["surprise"] = 1;
  std::ofstream(dir / "unknown.json") << j.dump();
  CHECK(run({"synth", "--config", (dir / "unknown.json").string()}).code == 1);

  j.erase("surprise");
  j["train"]["seed"] = 5;
  std::ofstream(dir / "nested.json") << j.dump();
  CHECK(run({"synth", "--config", (dir / "nested.json").string()}).code == 1);

  const auto behind = write_config(dir, [](RunConfig& c) {
    c.scene.base_pose.translation = Vec3(0, 0, -250);
    c.generation.max_retries = 2;
  });
  CHECK(run({"synth", "--config", behind, "--out", out, "--frames", "2"}).code == 3);
}

TEST_CASE("help lists every flag") {
  const auto top = run({"--help"});
  CHECK(top.code == 0);
  for (const auto* sub : {"synth", "train", "eval", "loo", "bench", "overlay"}) {
    CHECK(top.out.find(sub) != std::string::npos);
    const auto r = run({sub, "--help"});
    CHECK(r.code == 0);
    for (const auto* flag : {"--config", "--out", "--seed", "--mesh", "--frames", "--epochs", "--batch"})
      CHECK_MESSAGE(r.out.find(flag) != std::string::npos, sub << " " << flag);
  }
  CHECK(run({"overlay", "--help"}).out.find("--pred-pose") != std::string::npos);
  CHECK(run({"eval", "--help"}).out.find("--checkpoint") != std::string::npos);
}

TEST_CASE("train then eval") {
  TempDir dir("cli_train");
  const auto cfg = write_config(dir);
  const auto out = (dir / "run").string();
  REQUIRE(run({"synth", "--config", cfg, "--out", out}).code == 0);
  const auto t = run({"train", "--config", cfg, "--out", out});
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(std::filesystem::exists(dir / "run/model.ckpt"));
  CHECK(slurp(dir / "run/train_log.csv").rfind("epoch,", 0) == 0);
  const auto e = run({"eval", "--config", cfg, "--out", out});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  const Json report = Json::parse(slurp(dir / "run/eval/report.json"));
  CHECK(report["n_frames"] == 2);
  CHECK(report["protocol"] == "per-mesh");
  CHECK(slurp(dir / "run/eval/table.txt").find("E_rot") != std::string::npos);
}

TEST_CASE("eval with an exact checkpoint reports zeros") {
  TempDir dir("cli_oracle");
  const auto cfg = write_config(dir, [](RunConfig& c) {
    c.generation.sample.rot_range_deg = 0.0;
    c.generation.sample.trans_jitter_mm = Vec3::Zero();
  });
  const auto out = (dir / "run").string();
  REQUIRE(run({"synth", "--config", cfg, "--out", out, "--frames", "5"}).code == 0);

  RunConfig rc = load_run_config(cfg);
  PoseModel oracle(rc.model);
  auto& p = oracle.network().params();
  std::fill(p.begin(), p.end(), 0.0f);
  const auto& l = oracle.network().layout();
  p[l.rotation.bias + 0] = 1.0f;
  p[l.rotation.bias + 4] = 1.0f;
  // translation bias 0 maps to the offset, which equals the base pose depth.
  REQUIRE(rc.model.translation_offset == rc.scene.base_pose.translation);
  save_checkpoint(oracle, dir / "oracle.ckpt");

  const auto e = run({"eval", "--config", cfg, "--out", out, "--checkpoint", (dir / "oracle.ckpt").string(),
                      "--manifest", (dir / "run/dataset/manifest.json").string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  const Json r = Json::parse(slurp(dir / "run/eval/report.json"));
  CHECK(r["n_frames"] == 5);
  for (const auto* key : {"add_mm", "e_rot_deg", "e_t_mm"}) {
    CHECK(r[key]["mean"] == 0.0);
    CHECK(r[key]["max"] == 0.0);
  }
  CHECK(r["pass_rate"] == 1.0);
}

TEST_CASE("bench writes a report") {
  TempDir dir("cli_bench");
  const auto cfg = write_config(dir);
  const auto r = run({"bench", "--config", cfg, "--out", (dir / "run").string(), "--frames", "100"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const Json j = Json::parse(slurp(dir / "run/bench/report.json"));
  CHECK(j["n_frames"] == 100);
  CHECK(j["batch_size"] == 1);
  CHECK(j["mean_ms"].get<double>() > 0.0);
  CHECK(std::filesystem::exists(dir / "run/bench/report.txt"));
  CHECK(run({"bench", "--config", cfg, "--out", (dir / "run").string(), "--frames", "50"}).code == 1);
}

TEST_CASE("overlay draws both boxes") {
  TempDir dir("cli_overlay");
  const auto cfg = write_config(dir);
  const auto out = (dir / "run").string();
  REQUIRE(run({"synth", "--config", cfg, "--out", out, "--frames", "10"}).code == 0);
  const DatasetManifest test = load_manifest(dir / "run/dataset/test.json");
  REQUIRE_FALSE(test.records.empty());
  auto records = test.records;
  std::sort(records.begin(), records.end(), [](auto& a, auto& b) { return a.image_path < b.image_path; });
  Pose pred = records[0].pose;
  pred.translation += Vec3(6, 4, 0);
  std::ofstream(dir / "pred.json") << Json(pred).dump();

  const auto png = (dir / "overlay.png").string();
  const auto r = run({"overlay", "--config", cfg, "--out", out, "--pred-pose", (dir / "pred.json").string(),
                      "--output", png, "--index", "0"});
  REQUIRE_MESSAGE(r.code == 0, r.err);

  const RgbImage expected = overlay_image(read_png(test.image_file(records[0])), builtin_mesh("cavity"),
                                          records[0].pose, pred, test.scene);
  int green = 0, cyan = 0;
  for (const auto& px : expected.pixels) {
    green += px == kGroundTruthColor;
    cyan += px == kPredictionColor;
  }
  CHECK(green > 20);
  CHECK(cyan > 20);
  CHECK(std::filesystem::file_size(png) > 0);
  CHECK(run({"overlay", "--config", cfg, "--out", out, "--pred-pose", (dir / "pred.json").string(), "--index",
             "99"}).code == 1);
}

TEST_CASE("loo runs every fold") {
  TempDir dir("cli_loo");
  const auto cfg = write_config(dir, [](RunConfig& c) { c.generation.sample.n_frames = 10; });
  const auto r = run({"loo", "--config", cfg, "--out", (dir / "run").string(), "--meshes",
                      "builtin:sphere,builtin:blob"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const Json j = Json::parse(slurp(dir / "run/loo/reports.json"));
  CHECK(j.size() == 2);
  CHECK(std::filesystem::exists(dir / "run/loo/table.txt"));
}

}

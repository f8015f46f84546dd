#include "synreg/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "synreg/error.hpp"
#include "synreg/rasterizer.hpp"
#include "synreg/rng.hpp"

namespace synreg {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (out.empty()) throw ValidationError("config.out must not be empty");
  if (mesh.empty()) throw ValidationError("config.mesh must not be empty");
  scene.validate();
  generation.validate();
  if (!(split.train > 0.0 && split.val > 0.0 && split.test > 0.0) ||
      std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw InvalidRatios("config.split ratios must be positive and sum to 1");
  }
  model.validate();
  train.validate();
  if (eval_batch < 1) throw ValidationError("config.eval.batch_size must be >= 1");
  if (bench.frames < 100) throw ValidationError("config.bench.frames must be >= 100");
  if (bench.batch < 1) throw ValidationError("config.bench.batch must be >= 1");
  if (bench.warmup < 0) throw ValidationError("config.bench.warmup must be >= 0");
  if (!(loo_val_fraction > 0.0 && loo_val_fraction < 1.0)) {
    throw ValidationError("config.loo.val_fraction must lie in (0, 1)");
  }
}

std::uint64_t stage_seed(const RunConfig& cfg, Stage s) {
  return derive_seed(cfg.seed, {static_cast<std::uint64_t>(s)});
}

Json run_config_to_json(const RunConfig& c) {
  Json j{{"seed", c.seed},
         {"out", c.out},
         {"mesh", c.mesh},
         {"loo_meshes", c.loo_meshes},
         {"scene", c.scene},
         {"generation", c.generation},
         {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
         {"model", c.model},
         {"train", c.train},
         {"eval", {{"batch_size", c.eval_batch}}},
         {"bench", {{"frames", c.bench.frames}, {"batch", c.bench.batch}, {"warmup", c.bench.warmup}}},
         {"loo", {{"val_fraction", c.loo_val_fraction}}}};
  j["generation"]["sample"].erase("seed");
  j["train"].erase("seed");
  j["train"].erase("checkpoint_path");
  j["train"]["augment"].erase("seed");
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  const std::vector<Json::json_pointer> forbidden = {
      Json::json_pointer("/generation/sample/seed"), Json::json_pointer("/train/seed"),
      Json::json_pointer("/train/augment/seed"), Json::json_pointer("/train/checkpoint_path")};
  for (const auto& p : forbidden) {
    if (j.contains(p)) {
      throw ValidationError("config" + p.to_string() +
                            " is not settable; stage seeds derive from the top-level 'seed' and the "
                            "checkpoint lives under 'out'");
    }
  }
  RunConfig c;
  StrictReader(j, "config")
      .opt("seed", c.seed)
      .opt("out", c.out)
      .opt("mesh", c.mesh)
      .opt("loo_meshes", c.loo_meshes)
      .with("scene", [&](const Json& v) { from_json(v, c.scene); })
      .with("generation", [&](const Json& v) { from_json(v, c.generation); })
      .with("split",
            [&](const Json& v) {
              StrictReader(v, "config.split")
                  .opt("train", c.split.train)
                  .opt("val", c.split.val)
                  .opt("test", c.split.test)
                  .finish();
            })
      .with("model", [&](const Json& v) { from_json(v, c.model); })
      .with("train", [&](const Json& v) { from_json(v, c.train); })
      .with("eval", [&](const Json& v) { StrictReader(v, "config.eval").opt("batch_size", c.eval_batch).finish(); })
      .with("bench",
            [&](const Json& v) {
              StrictReader(v, "config.bench")
                  .opt("frames", c.bench.frames)
                  .opt("batch", c.bench.batch)
                  .opt("warmup", c.bench.warmup)
                  .finish();
            })
      .with("loo", [&](const Json& v) { StrictReader(v, "config.loo").opt("val_fraction", c.loo_val_fraction).finish(); })
      .finish();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

RgbImage overlay_image(const Image& frame, const TriMesh& mesh, const Pose& gt, const Pose& pred,
                       const SceneConfig& scene) {
  const ImageSize size = frame.size();
  const RenderResult pred_render = rasterize(mesh, pred, scene.intrinsics, size, scene.shading);
  const RenderResult gt_render = rasterize(mesh, gt, scene.intrinsics, size, scene.shading);
  RgbImage img = blend_overlay(RgbImage::from_gray(frame), pred_render, OverlayStyle{kPredictionColor, 0.5f});
  if (auto box = silhouette_bbox(gt_render.depth)) draw_box(img, *box, kGroundTruthColor);
  if (auto box = silhouette_bbox(pred_render.depth)) draw_box(img, *box, kPredictionColor);
  return img;
}

int exit_code_for(const std::exception& e) {
  if (const auto* se = dynamic_cast<const Error*>(&e)) {
    switch (se->error_class()) {
      case ErrorClass::Validation: return 1;
      case ErrorClass::Io: return 2;
      case ErrorClass::Numeric: return 3;
    }
  }
  if (dynamic_cast<const fs::filesystem_error*>(&e) || dynamic_cast<const std::ios_base::failure*>(&e)) return 2;
  return 1;
}

namespace {

struct Options {
  std::optional<std::string> config, out, mesh;
  std::optional<std::uint64_t> seed;
  std::optional<int> frames, epochs, batch, workers;
  std::optional<double> lr;
  std::optional<std::string> train_manifest, val_manifest, manifest, checkpoint, pred_pose, output;
  std::vector<std::string> meshes;
  std::optional<int> warmup;
  std::size_t index = 0;
};

enum class Command { Synth, Train, Eval, Loo, Bench, Overlay };

std::string case_name(const std::string& mesh_spec) {
  constexpr std::string_view prefix = "builtin:";
  if (mesh_spec.rfind(prefix, 0) == 0) return mesh_spec.substr(prefix.size());
  return fs::path(mesh_spec).stem().string();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

class Runner {
public:
  Runner(RunConfig cfg, const Options& opt, std::ostream& out) : cfg_(std::move(cfg)), opt_(opt), out_(out) {}

  int run(Command cmd) {
    fs::create_directories(root());
    write_text(root() / "run_config.json", dump_canonical(run_config_to_json(cfg_)));
    switch (cmd) {
      case Command::Synth: return synth();
      case Command::Train: return train_cmd();
      case Command::Eval: return eval_cmd();
      case Command::Loo: return loo_cmd();
      case Command::Bench: return bench_cmd();
      case Command::Overlay: return overlay_cmd();
    }
    return 1;
  }

private:
  fs::path root() const { return fs::path(cfg_.out); }
  fs::path dataset_dir() const { return root() / "dataset"; }
  fs::path checkpoint() const { return opt_.checkpoint ? fs::path(*opt_.checkpoint) : root() / "model.ckpt"; }

  void header(const std::string& cmd, std::initializer_list<std::pair<const char*, Stage>> stages) {
    out_ << "[" << cmd << "] seed " << cfg_.seed;
    for (const auto& [name, s] : stages) out_ << ", " << name << " " << stage_seed(cfg_, s);
    out_ << '\n';
  }

  TrainConfig train_config(const fs::path& ckpt) const {
    TrainConfig tc = cfg_.train;
    tc.seed = stage_seed(cfg_, Stage::Train);
    tc.augment.seed = stage_seed(cfg_, Stage::Augment);
    tc.checkpoint_path = ckpt.string();
    return tc;
  }

  int synth() {
    header("synth", {{"synth", Stage::Synth}, {"split", Stage::Split}});
    const TriMesh mesh = resolve_mesh(cfg_.mesh);
    GenerationConfig gen = cfg_.generation;
    gen.sample.seed = stage_seed(cfg_, Stage::Synth);
    const DatasetManifest m = generate_dataset(mesh, cfg_.mesh, cfg_.scene, gen, dataset_dir(), case_name(cfg_.mesh));
    const auto parts = split_dataset(m, cfg_.split, stage_seed(cfg_, Stage::Split));
    const char* names[] = {"train.json", "val.json", "test.json"};
    for (int i = 0; i < 3; ++i) save_manifest(parts[i], dataset_dir() / names[i]);
    out_ << "manifest " << (dataset_dir() / "manifest.json").string() << ": " << m.records.size() << " frames (train "
         << parts[0].records.size() << ", val " << parts[1].records.size() << ", test " << parts[2].records.size()
         << ")\n";
    return 0;
  }

  int train_cmd() {
    header("train", {{"init", Stage::Init}, {"train", Stage::Train}, {"augment", Stage::Augment}});
    const auto train_set = load_manifest(opt_.train_manifest ? fs::path(*opt_.train_manifest) : dataset_dir() / "train.json");
    const auto val_set = load_manifest(opt_.val_manifest ? fs::path(*opt_.val_manifest) : dataset_dir() / "val.json");
    PoseModel model = init_model(normalized_for(cfg_.model, train_set), stage_seed(cfg_, Stage::Init));
    const fs::path ckpt = checkpoint();
    const TrainLog log = train(model, train_set, val_set, train_config(ckpt));
    log.write_csv(root() / "train_log.csv");
    save_checkpoint(model, ckpt);
    const EpochLog& best = log.epochs.at(static_cast<std::size_t>(std::max(log.best_epoch, 0)));
    out_ << std::fixed << std::setprecision(3) << "final val E_rot " << best.val_erot_deg << " deg, E_t "
         << best.val_et_mm << " mm (best epoch " << log.best_epoch + 1 << " of " << log.epochs.size() << ", "
         << std::setprecision(1) << log.epochs.back().seconds << " s); checkpoint " << ckpt.string() << '\n';
    return 0;
  }

  int eval_cmd() {
    header("eval", {});
    const PoseModel model = load_checkpoint(checkpoint());
    const auto manifest = load_manifest(opt_.manifest ? fs::path(*opt_.manifest) : dataset_dir() / "test.json");
    const std::string mesh_spec = opt_.mesh ? *opt_.mesh : manifest.mesh;
    const TriMesh mesh = resolve_mesh(mesh_spec);
    const EvalReport report = evaluate(model, manifest, mesh, "per-mesh", case_name(mesh_spec), cfg_.eval_batch);
    const fs::path dir = root() / "eval";
    write_text(dir / "report.json", dump_canonical(report_to_json(report)));
    write_text(dir / "table.txt", format_table(std::span(&report, 1)));
    out_ << "table " << (dir / "table.txt").string() << " (" << report.n_frames << " frames, median E_rot "
         << std::fixed << std::setprecision(3) << report.e_rot_deg.median << " deg)\n";
    return 0;
  }

  int loo_cmd() {
    header("loo", {{"loo", Stage::Loo}});
    std::vector<LooCase> cases;
    for (const auto& spec : cfg_.loo_meshes) cases.push_back({case_name(spec), spec});
    LooConfig lc;
    lc.scene = cfg_.scene;
    lc.generation = cfg_.generation;
    lc.model = cfg_.model;
    lc.train = cfg_.train;
    lc.val_fraction = cfg_.loo_val_fraction;
    lc.seed = stage_seed(cfg_, Stage::Loo);
    const fs::path dir = root() / "loo";
    const auto folds = leave_one_out(cases, lc, dir);
    std::vector<EvalReport> reports;
    Json all = Json::array();
    for (const auto& f : folds) {
      reports.push_back(f.report);
      all.push_back(report_to_json(f.report, false));
    }
    write_text(dir / "reports.json", dump_canonical(all));
    write_text(dir / "table.txt", format_table(reports));
    out_ << "table " << (dir / "table.txt").string() << " (" << folds.size() << " folds)\n";
    return 0;
  }

  int bench_cmd() {
    header("bench", {{"bench", Stage::Bench}});
    PoseModel model = opt_.checkpoint ? load_checkpoint(*opt_.checkpoint)
                                      : init_model(cfg_.model, stage_seed(cfg_, Stage::Init));
    const BenchReport r =
        benchmark_inference(model, cfg_.bench.frames, cfg_.bench.batch, cfg_.bench.warmup, stage_seed(cfg_, Stage::Bench));
    const fs::path dir = root() / "bench";
    write_text(dir / "report.json", dump_canonical(bench_to_json(r)));
    write_text(dir / "report.txt", format_bench(r));
    out_ << "bench " << (dir / "report.json").string() << ": " << std::fixed << std::setprecision(2) << r.mean_ms
         << " ms mean latency, " << std::setprecision(1) << r.fps << " fps at batch " << r.batch_size << '\n';
    return 0;
  }

  int overlay_cmd() {
    header("overlay", {});
    const auto manifest = load_manifest(opt_.manifest ? fs::path(*opt_.manifest) : dataset_dir() / "test.json");
    std::vector<FrameRecord> records = manifest.records;
    std::sort(records.begin(), records.end(),
              [](const FrameRecord& a, const FrameRecord& b) { return a.image_path < b.image_path; });
    if (opt_.index >= records.size()) {
      throw ValidationError("--index " + std::to_string(opt_.index) + " is out of range (" +
                            std::to_string(records.size()) + " records)");
    }
    const FrameRecord& rec = records[opt_.index];
    int w = 0, h = 0;
    const auto bytes = read_png_bytes(manifest.image_file(rec), w, h);
    const Image frame = from_bytes(w, h, bytes);
    Pose pred;
    if (opt_.pred_pose) {
      std::ifstream f(*opt_.pred_pose);
      if (!f) throw IoError("cannot open " + *opt_.pred_pose);
      try {
        pred = Json::parse(f).get<Pose>();
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(*opt_.pred_pose + ": " + e.what());
      }
    } else {
      pred = predict_pose(load_checkpoint(checkpoint()), frame);
    }
    const std::string mesh_spec = opt_.mesh ? *opt_.mesh : manifest.mesh;
    const RgbImage img = overlay_image(frame, resolve_mesh(mesh_spec), rec.pose, pred, manifest.scene);
    const fs::path path = opt_.output ? fs::path(*opt_.output)
                                      : root() / "overlay" / (fs::path(rec.image_path).stem().string() + ".png");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_png(img, path);
    out_ << "overlay " << path.string() << " (green: ground truth, cyan: prediction; E_rot " << std::fixed
         << std::setprecision(3) << rad_to_deg(rotation_geodesic_distance(rec.pose.rotation, pred.rotation))
         << " deg)\n";
    return 0;
  }

  RunConfig cfg_;
  const Options& opt_;
  std::ostream& out_;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic mesh rendering, 6D-rotation pose regression and evaluation"};
  app.name("synreg");
  app.require_subcommand(1);
  Options opt;
  std::optional<Command> cmd;

  auto common = [&](CLI::App* sub, Command c, const char* frames_help, const char* batch_help) {
    sub->add_option("--config", opt.config, "JSON run config; flags override its values");
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--seed", opt.seed, "Top-level seed; every stage seed derives from it");
    sub->add_option("--mesh", opt.mesh, "Mesh: builtin:<sphere|cavity|blob> or a .ply/.obj path");
    sub->add_option("--frames", opt.frames, frames_help);
    sub->add_option("--epochs", opt.epochs, "Training epochs");
    sub->add_option("--batch", opt.batch, batch_help);
    sub->add_option("--workers", opt.workers, "Render workers for dataset synthesis");
    sub->add_option("--lr", opt.lr, "Learning rate");
    sub->callback([&cmd, c] { cmd = c; });
  };
  const char* gen_frames = "Frames to synthesize";
  const char* train_batch = "Training batch size";

  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset and its train/val/test split");
  common(synth, Command::Synth, gen_frames, train_batch);

  auto* train_sub = app.add_subcommand("train", "Train the pose regressor");
  common(train_sub, Command::Train, gen_frames, train_batch);
  train_sub->add_option("--train-manifest", opt.train_manifest, "Training manifest (default <out>/dataset/train.json)");
  train_sub->add_option("--val-manifest", opt.val_manifest, "Validation manifest (default <out>/dataset/val.json)");
  train_sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint to write (default <out>/model.ckpt)");

  auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  common(eval_sub, Command::Eval, gen_frames, "Inference batch size");
  eval_sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint (default <out>/model.ckpt)");
  eval_sub->add_option("--manifest", opt.manifest, "Manifest to evaluate (default <out>/dataset/test.json)");

  auto* loo_sub = app.add_subcommand("loo", "Leave-one-mesh-out cross validation");
  common(loo_sub, Command::Loo, "Frames to synthesize per mesh", train_batch);
  loo_sub->add_option("--meshes", opt.meshes, "Meshes, one per case (at least 2)")->delimiter(',');

  auto* bench_sub = app.add_subcommand("bench", "Benchmark single-stream inference latency");
  common(bench_sub, Command::Bench, "Frames to time (>= 100)", "Inference batch size");
  bench_sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint (default: freshly initialized model)");
  bench_sub->add_option("--warmup", opt.warmup, "Untimed warmup iterations");

  auto* overlay_sub = app.add_subcommand("overlay", "Draw a predicted pose over a dataset frame");
  common(overlay_sub, Command::Overlay, gen_frames, train_batch);
  overlay_sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint used to predict (default <out>/model.ckpt)");
  overlay_sub->add_option("--manifest", opt.manifest, "Manifest (default <out>/dataset/test.json)");
  overlay_sub->add_option("--index", opt.index, "Record index in image-path order");
  overlay_sub->add_option("--pred-pose", opt.pred_pose, "JSON pose to draw instead of a model prediction");
  overlay_sub->add_option("--output", opt.output, "Output PNG (default <out>/overlay/<frame>.png)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = opt.config ? load_run_config(*opt.config) : RunConfig{};
    if (opt.out) cfg.out = *opt.out;
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.mesh) cfg.mesh = *opt.mesh;
    if (opt.frames) {
      if (*cmd == Command::Bench) {
        if (*opt.frames < 0) throw ValidationError("--frames must be >= 0");
        cfg.bench.frames = static_cast<std::size_t>(*opt.frames);
      } else {
        cfg.generation.sample.n_frames = *opt.frames;
      }
    }
    if (opt.epochs) cfg.train.epochs = *opt.epochs;
    if (opt.batch) {
      if (*cmd == Command::Bench) {
        cfg.bench.batch = *opt.batch;
      } else if (*cmd == Command::Eval) {
        cfg.eval_batch = *opt.batch;
      } else {
        cfg.train.batch_size = *opt.batch;
      }
    }
    if (opt.workers) cfg.generation.workers = *opt.workers;
    if (opt.lr) cfg.train.learning_rate = *opt.lr;
    if (!opt.meshes.empty()) cfg.loo_meshes = opt.meshes;
    if (opt.warmup) cfg.bench.warmup = *opt.warmup;
    cfg.validate();
    return Runner(std::move(cfg), opt, out).run(*cmd);
  } catch (const std::exception& e) {
    err << "synreg: error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace synreg

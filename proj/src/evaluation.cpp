#include "synreg/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "synreg/error.hpp"
#include "synreg/rng.hpp"

namespace synreg {

namespace fs = std::filesystem;

double add_metric(std::span<const Vec3> vertices, const Pose& p, const Pose& q) {
  if (vertices.empty()) throw ValidationError("add_metric needs at least one vertex");
  double sum = 0.0;
  for (const Vec3& v : vertices) sum += (p.apply(v) - q.apply(v)).norm();
  return sum / static_cast<double>(vertices.size());
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Summary summarize(std::vector<double> values) {
  Summary s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.median = percentile(values, 0.5);
  s.p25 = percentile(values, 0.25);
  s.p75 = percentile(values, 0.75);
  s.p90 = percentile(values, 0.90);
  s.p95 = percentile(values, 0.95);
  s.max = values.back();
  return s;
}

FrameMetrics frame_metrics(std::span<const Vec3> vertices, const Pose& gt, const Pose& pred) {
  FrameMetrics f;
  f.add_mm = add_metric(vertices, gt, pred);
  f.e_rot_deg = rad_to_deg(rotation_geodesic_distance(gt.rotation, pred.rotation));
  const TranslationError te = translation_error(gt.translation, pred.translation);
  f.e_t_mm = te.total;
  f.e_t_axis_mm = te.per_axis;
  return f;
}

EvalReport make_report(std::vector<FrameMetrics> frames, const std::string& protocol, const std::string& case_name) {
  std::stable_sort(frames.begin(), frames.end(),
                   [](const FrameMetrics& a, const FrameMetrics& b) { return a.image < b.image; });
  EvalReport r;
  r.protocol = protocol;
  r.case_name = case_name;
  r.n_frames = frames.size();
  std::vector<double> add, rot, t, ax[3];
  std::size_t pass = 0;
  for (const auto& f : frames) {
    add.push_back(f.add_mm);
    rot.push_back(f.e_rot_deg);
    t.push_back(f.e_t_mm);
    for (int k = 0; k < 3; ++k) ax[k].push_back(f.e_t_axis_mm[k]);
    pass += f.e_rot_deg < kPassThresholdDeg;
  }
  r.add_mm = summarize(add);
  r.e_rot_deg = summarize(rot);
  r.e_t_mm = summarize(t);
  for (int k = 0; k < 3; ++k) r.e_t_axis_mm[k] = summarize(ax[k]);
  r.pass_rate = frames.empty() ? 0.0 : static_cast<double>(pass) / static_cast<double>(frames.size());
  r.frames = std::move(frames);
  return r;
}

EvalReport evaluate(const PoseModel& model, const DatasetManifest& manifest, const TriMesh& mesh,
                    const std::string& protocol, const std::string& case_name, int batch_size) {
  if (model.mode() != Mode::Eval) throw ValidationError("evaluate requires an eval-mode model");
  if (batch_size < 1) throw ValidationError("evaluation batch size must be >= 1");
  std::vector<FrameRecord> records = manifest.records;
  std::sort(records.begin(), records.end(),
            [](const FrameRecord& a, const FrameRecord& b) { return a.image_path < b.image_path; });

  std::vector<FrameMetrics> frames;
  frames.reserve(records.size());
  std::vector<Image> images;
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const std::size_t end = std::min(records.size(), start + static_cast<std::size_t>(batch_size));
    images.clear();
    for (std::size_t i = start; i < end; ++i) {
      int w = 0, h = 0;
      auto bytes = read_png_bytes(manifest.image_file(records[i]), w, h);
      images.push_back(from_bytes(w, h, bytes));
    }
    const auto preds = forward(model, images);
    for (std::size_t i = start; i < end; ++i) {
      FrameMetrics f = frame_metrics(mesh.vertices, records[i].pose, prediction_to_pose(preds[i - start]));
      f.image = records[i].image_path;
      frames.push_back(std::move(f));
    }
  }
  return make_report(std::move(frames), protocol, case_name);
}

namespace {

Json summary_json(const Summary& s) {
  return Json{{"mean", s.mean}, {"median", s.median}, {"p25", s.p25}, {"p75", s.p75},
              {"p90", s.p90},   {"p95", s.p95},       {"max", s.max}};
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

Json report_to_json(const EvalReport& r, bool include_frames) {
  Json j{{"protocol", r.protocol},
         {"case", r.case_name},
         {"n_frames", r.n_frames},
         {"add_mm", summary_json(r.add_mm)},
         {"e_rot_deg", summary_json(r.e_rot_deg)},
         {"e_t_mm", summary_json(r.e_t_mm)},
         {"e_t_axis_mm",
          {{"x", summary_json(r.e_t_axis_mm[0])},
           {"y", summary_json(r.e_t_axis_mm[1])},
           {"z", summary_json(r.e_t_axis_mm[2])}}},
         {"pass_threshold_deg", kPassThresholdDeg},
         {"pass_rate", r.pass_rate}};
  if (include_frames) {
    Json frames = Json::array();
    for (const auto& f : r.frames) {
      frames.push_back({{"image", f.image},
                        {"add_mm", f.add_mm},
                        {"e_rot_deg", f.e_rot_deg},
                        {"e_t_mm", f.e_t_mm},
                        {"e_t_axis_mm", vec3_to_json(f.e_t_axis_mm)}});
    }
    j["frames"] = std::move(frames);
  }
  return j;
}

std::string format_table(std::span<const EvalReport> reports) {
  std::vector<std::string> header{"metric"};
  for (const auto& r : reports) header.push_back(r.case_name.empty() ? r.protocol : r.case_name);
  std::vector<std::vector<std::string>> rows;
  auto mm = [](const Summary& s) { return fixed(s.mean, 2) + " / " + fixed(s.median, 2); };
  auto add_row = [&](const std::string& name, auto cell) {
    std::vector<std::string> row{name};
    for (const auto& r : reports) row.push_back(cell(r));
    rows.push_back(std::move(row));
  };
  add_row("ADD mm (mean / median)", [&](const EvalReport& r) { return mm(r.add_mm); });
  add_row("E_rot deg (mean / median)", [&](const EvalReport& r) { return mm(r.e_rot_deg); });
  add_row("E_t mm (mean / median)", [&](const EvalReport& r) { return mm(r.e_t_mm); });
  add_row("E_t x mm (mean)", [&](const EvalReport& r) { return fixed(r.e_t_axis_mm[0].mean, 2); });
  add_row("E_t y mm (mean)", [&](const EvalReport& r) { return fixed(r.e_t_axis_mm[1].mean, 2); });
  add_row("E_t z mm (mean)", [&](const EvalReport& r) { return fixed(r.e_t_axis_mm[2].mean, 2); });
  add_row("pass rate (E_rot < 10 deg)", [&](const EvalReport& r) { return fixed(100.0 * r.pass_rate, 1) + " %"; });
  add_row("frames", [&](const EvalReport& r) { return std::to_string(r.n_frames); });

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        os << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
    }
    os << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  os << std::string(total - 2, '-') << '\n';
  for (const auto& row : rows) emit(row);
  return os.str();
}

std::vector<LooFold> leave_one_out(const std::vector<LooCase>& cases, const LooConfig& cfg,
                                   const fs::path& work_dir) {
  if (cases.size() < 2) throw ValidationError("leave-one-out needs at least 2 meshes");
  std::set<std::string> names;
  for (const auto& c : cases) {
    if (c.name.empty() || !names.insert(c.name).second) {
      throw ValidationError("leave-one-out case names must be unique and non-empty");
    }
  }
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) {
    throw ValidationError("leave-one-out val_fraction must lie in (0, 1)");
  }

  const fs::path data_root = work_dir / "data";
  std::vector<DatasetManifest> datasets;
  std::vector<TriMesh> meshes;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    meshes.push_back(resolve_mesh(cases[i].mesh_spec));
    GenerationConfig gen = cfg.generation;
    gen.sample.seed = derive_seed(cfg.seed, {0x73796e74 /* "synt" */, i});
    datasets.push_back(
        generate_dataset(meshes.back(), cases[i].mesh_spec, cfg.scene, gen, data_root / cases[i].name, cases[i].name));
  }

  std::vector<LooFold> folds;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    LooFold fold;
    fold.held_out = cases[k].name;
    std::vector<DatasetManifest> others;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (i != k) others.push_back(datasets[i]);
    }
    const DatasetManifest pooled = merge_manifests(others, data_root);
    const double v = cfg.val_fraction;
    auto parts = split_dataset(pooled, SplitRatios{1.0 - v, v / 2.0, v / 2.0}, derive_seed(cfg.seed, {0x73706c74, k}));
    fold.train_manifest = parts[0];
    fold.val_manifest = parts[1];
    fold.val_manifest.records.insert(fold.val_manifest.records.end(), parts[2].records.begin(), parts[2].records.end());
    std::sort(fold.val_manifest.records.begin(), fold.val_manifest.records.end(),
              [](const FrameRecord& a, const FrameRecord& b) { return a.image_path < b.image_path; });
    fold.test_manifest = datasets[k];

    const fs::path fold_dir = work_dir / ("fold_" + cases[k].name);
    fs::create_directories(fold_dir);
    for (auto* m : {&fold.train_manifest, &fold.val_manifest}) {
      // Re-root onto the fold directory so the saved manifests resolve.
      *m = merge_manifests({*m}, fold_dir);
    }
    save_manifest(fold.train_manifest, fold_dir / "train.json");
    save_manifest(fold.val_manifest, fold_dir / "val.json");

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, {0x74726e, k});
    tc.checkpoint_path = (fold_dir / "model.ckpt").string();
    PoseModel model = init_model(normalized_for(cfg.model, fold.train_manifest), derive_seed(cfg.seed, {0x696e, k}));
    fold.log = train(model, fold.train_manifest, fold.val_manifest, tc);
    fold.log.write_csv(fold_dir / "train_log.csv");
    fold.report = evaluate(model, fold.test_manifest, meshes[k], "leave-one-out", cases[k].name);
    std::ofstream(fold_dir / "report.json", std::ios::binary) << dump_canonical(report_to_json(fold.report));
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::string hardware_description() {
  std::string model = "unknown CPU";
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " hardware threads, single-stream float32 inference";
}

BenchReport benchmark_inference(const PoseModel& model, std::size_t n_frames, int batch_size, int warmup,
                                std::uint64_t seed) {
  if (n_frames < 100) throw ValidationError("benchmark needs at least 100 frames");
  if (batch_size < 1) throw ValidationError("benchmark batch size must be >= 1");
  if (warmup < 0) throw ValidationError("benchmark warmup must be >= 0");
  PoseModel eval_model = model;
  eval_model.set_mode(Mode::Eval);
  const ImageSize size = model.config().input_size;
  Rng rng = substream(seed, {0x62656e63 /* "benc" */});
  std::vector<Image> batch;
  for (int i = 0; i < batch_size; ++i) {
    Image img(size.width, size.height);
    for (auto& p : img.pixels) p = static_cast<float>(uniform(rng, 0.0, 1.0));
    batch.push_back(std::move(img));
  }

  auto run_once = [&] {
    const auto preds = forward(eval_model, batch);
    for (const auto& p : preds) static_cast<void>(r6_to_rotation(p.r6));
  };
  for (int i = 0; i < warmup; ++i) run_once();

  BenchReport r;
  r.batch_size = batch_size;
  r.n_frames = n_frames;
  r.warmup = warmup;
  r.iterations = static_cast<int>((n_frames + batch_size - 1) / batch_size);
  std::vector<double> lat;
  lat.reserve(r.iterations);
  for (int i = 0; i < r.iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once();
    lat.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  const Summary s = summarize(lat);
  r.mean_ms = s.mean;
  r.median_ms = s.median;
  std::sort(lat.begin(), lat.end());
  r.p99_ms = percentile(lat, 0.99);
  r.fps = 1000.0 * batch_size / r.mean_ms;
  r.hardware = hardware_description();
  return r;
}

Json bench_to_json(const BenchReport& r) {
  return Json{{"batch_size", r.batch_size}, {"n_frames", r.n_frames}, {"iterations", r.iterations},
              {"warmup", r.warmup},         {"mean_ms", r.mean_ms},   {"median_ms", r.median_ms},
              {"p99_ms", r.p99_ms},         {"fps", r.fps},           {"hardware", r.hardware}};
}

std::string format_bench(const BenchReport& r) {
  std::ostringstream os;
  os << "batch " << r.batch_size << ", " << r.iterations << " timed iterations (" << r.warmup << " warmup)\n"
     << "latency ms  mean " << fixed(r.mean_ms, 3) << "  median " << fixed(r.median_ms, 3) << "  p99 "
     << fixed(r.p99_ms, 3) << '\n'
     << "throughput  " << fixed(r.fps, 1) << " fps\n"
     << "hardware    " << r.hardware << '\n';
  return os.str();
}

}  // namespace synreg

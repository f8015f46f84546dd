#include "synreg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "synreg/error.hpp"
#include "synreg/rng.hpp"

namespace synreg {

namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566;  // "shuf"
constexpr std::uint64_t kAugmentTag = 0x61756721;  // "aug!"
constexpr std::uint64_t kDropoutTag = 0x64726f70;  // "drop"
constexpr std::uint64_t kCoordTag = 0x636f6f72;    // "coor"

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_rot >= 0.0 && lambda_rot_frob >= 0.0 && lambda_t >= 0.0)) {
    throw InvalidConfig("loss weights must be >= 0");
  }
  if (lambda_rot + lambda_rot_frob + lambda_t == 0.0) throw InvalidConfig("loss weights must not all be zero");
}

double pose_loss(const PosePrediction& pred, const Pose& gt, const LossWeights& w, LossGradient* grad) {
  const Mat3 rp = r6_to_rotation(pred.r6).matrix();
  const Mat3& r = gt.rotation.matrix();
  const double c = ((r.transpose() * rp).trace() - 1.0) * 0.5;
  const double d_rot = std::acos(std::clamp(c, -1.0, 1.0));
  const double frob = (rp - r).squaredNorm();
  const Vec3 dt = pred.t - gt.translation;
  const double loss = w.lambda_rot * d_rot + w.lambda_rot_frob * frob + w.lambda_t * dt.squaredNorm();
  if (!grad) return loss;

  // dL/dR'
  Mat3 g = 2.0 * w.lambda_rot_frob * (rp - r);
  if (w.lambda_rot != 0.0 && std::abs(c) <= kArccosGuard) {
    g += (-w.lambda_rot * 0.5 / std::sqrt(1.0 - c * c)) * r;
  }

  // Back through the Gram-Schmidt recovery R' = [b1, b2, b1 x b2].
  const Vec3 a = pred.r6.first(), b = pred.r6.second();
  const double na = a.norm();
  const Vec3 b1 = a / na;
  const double s = b1.dot(b);
  const Vec3 u = b - s * b1;
  const double nu = u.norm();
  const Vec3 b2 = u / nu;
  Vec3 gb1 = g.col(0), gb2 = g.col(1);
  const Vec3 gb3 = g.col(2);
  gb1 += b2.cross(gb3);
  gb2 += gb3.cross(b1);
  const Vec3 gu = (gb2 - b2 * b2.dot(gb2)) / nu;
  const Vec3 gb = gu - b1 * b1.dot(gu);
  gb1 += -gu.dot(b1) * b - s * gu;
  const Vec3 ga = (gb1 - b1 * b1.dot(gb1)) / na;

  for (int k = 0; k < 3; ++k) {
    grad->d_r6[k] = ga[k];
    grad->d_r6[3 + k] = gb[k];
  }
  grad->d_t = 2.0 * w.lambda_t * dt;
  return loss;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidConfig("train.epochs must be >= 1");
  if (batch_size < 1) throw InvalidConfig("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidConfig("train.learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InvalidConfig("train.adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw InvalidConfig("train.adam.epsilon must be > 0");
  if (early_stop_patience < 0) throw InvalidConfig("train.early_stop_patience must be >= 0");
  weights.validate();
  try {
    augment.validate();
  } catch (const ValidationError& e) {
    throw InvalidConfig(e.what());
  }
}

double learning_rate_at(const TrainConfig& c, long step, long total_steps) {
  if (c.lr_schedule == LrSchedule::Constant || total_steps <= 0) return c.learning_rate;
  return c.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
}

namespace {

const char* schedule_name(LrSchedule s) { return s == LrSchedule::Cosine ? "cosine" : "constant"; }

LrSchedule parse_schedule(const std::string& s) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "cosine") return LrSchedule::Cosine;
  throw InvalidConfig("train.lr_schedule must be \"constant\" or \"cosine\", got \"" + s + "\"");
}

}  // namespace

void to_json(Json& j, const LossWeights& w) {
  j = Json{{"lambda_rot", w.lambda_rot}, {"lambda_rot_frob", w.lambda_rot_frob}, {"lambda_t", w.lambda_t}};
}

void from_json(const Json& j, LossWeights& w) {
  StrictReader(j, "train.weights")
      .opt("lambda_rot", w.lambda_rot)
      .opt("lambda_rot_frob", w.lambda_rot_frob)
      .opt("lambda_t", w.lambda_t)
      .finish();
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"lr_schedule", schedule_name(c.lr_schedule)},
           {"adam", {{"beta1", c.adam_beta1}, {"beta2", c.adam_beta2}, {"epsilon", c.adam_epsilon}}},
           {"weights", c.weights},
           {"augment", c.augment},
           {"seed", c.seed},
           {"early_stop_patience", c.early_stop_patience},
           {"checkpoint_path", c.checkpoint_path}};
}

void from_json(const Json& j, TrainConfig& c) {
  StrictReader(j, "train")
      .opt("epochs", c.epochs)
      .opt("batch_size", c.batch_size)
      .opt("learning_rate", c.learning_rate)
      .with("lr_schedule",
            [&](const Json& v) {
              if (!v.is_string()) throw InvalidConfig("train.lr_schedule must be a string");
              c.lr_schedule = parse_schedule(v.get<std::string>());
            })
      .with("adam",
            [&](const Json& a) {
              StrictReader(a, "train.adam")
                  .opt("beta1", c.adam_beta1)
                  .opt("beta2", c.adam_beta2)
                  .opt("epsilon", c.adam_epsilon)
                  .finish();
            })
      .with("weights", [&](const Json& v) { from_json(v, c.weights); })
      .with("augment", [&](const Json& v) { from_json(v, c.augment); })
      .opt("seed", c.seed)
      .opt("early_stop_patience", c.early_stop_patience)
      .opt("checkpoint_path", c.checkpoint_path)
      .finish();
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_erot_deg,val_et_mm,seconds\n";
  os << std::setprecision(9);
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_erot_deg << ',' << e.val_et_mm << ','
       << std::fixed << std::setprecision(3) << e.seconds << std::defaultfloat << std::setprecision(9) << '\n';
  }
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << to_csv();
  if (!f) throw IoError("failed writing " + path.string());
}

ModelConfig normalized_for(ModelConfig cfg, const DatasetManifest& m) {
  cfg.input_size = m.scene.size;
  cfg.input_mean = m.pixel_mean;
  cfg.input_std = m.pixel_std > 1e-6 ? m.pixel_std : 1.0;
  return cfg;
}

Image FrameSet::image(std::size_t i) const { return from_bytes(size.width, size.height, pixels[i]); }

FrameSet load_frames(const DatasetManifest& m) {
  FrameSet fs;
  fs.size = m.scene.size;
  fs.pixels.reserve(m.records.size());
  fs.poses.reserve(m.records.size());
  for (const auto& r : m.records) {
    int w = 0, h = 0;
    fs.pixels.push_back(read_png_bytes(m.image_file(r), w, h));
    if (w != fs.size.width || h != fs.size.height) {
      throw SizeMismatch(r.image_path + " is " + std::to_string(w) + "x" + std::to_string(h) +
                         ", manifest declares " + std::to_string(fs.size.width) + "x" +
                         std::to_string(fs.size.height));
    }
    fs.poses.push_back(r.pose);
  }
  return fs;
}

namespace {

struct HeadEval {
  double loss_sum = 0.0;
  double erot_sum_deg = 0.0;
  double et_sum_mm = 0.0;
};

/// Per-sample losses over a head output; fills d_out with the gradient of the
/// batch mean when non-null.
template <typename T>
HeadEval score_heads(const ModelConfig& cfg, const HeadOutput<T>& out, std::span<const Pose> gt, const LossWeights& w,
                     HeadOutput<T>* d_out) {
  HeadEval ev;
  const int n = out.n;
  if (d_out) {
    d_out->n = n;
    d_out->r6.assign(out.r6.size(), T(0));
    d_out->t.assign(out.t.size(), T(0));
  }
  for (int i = 0; i < n; ++i) {
    PosePrediction p;
    for (int k = 0; k < 6; ++k) p.r6.v[k] = static_cast<double>(out.r6[6 * i + k]);
    p.t = Vec3(out.t[3 * i], out.t[3 * i + 1], out.t[3 * i + 2]);
    const Pose gt_n{gt[i].rotation, (gt[i].translation - cfg.translation_offset) / cfg.translation_scale};
    LossGradient g;
    ev.loss_sum += pose_loss(p, gt_n, w, d_out ? &g : nullptr);
    if (d_out) {
      for (int k = 0; k < 6; ++k) d_out->r6[6 * i + k] = static_cast<T>(g.d_r6[k] / n);
      for (int k = 0; k < 3; ++k) d_out->t[3 * i + k] = static_cast<T>(g.d_t[k] / n);
    } else {
      ev.erot_sum_deg += rad_to_deg(rotation_geodesic_distance(r6_to_rotation(p.r6), gt[i].rotation));
      ev.et_sum_mm += cfg.translation_scale * (p.t - gt_n.translation).norm();
    }
  }
  return ev;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

bool all_finite(const Buffer<float>& v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

template <typename T>
double batch_loss(const Network<T>& net, const Tensor<T>& input, std::span<const Pose> gt, const LossWeights& w,
                  Mode mode, std::uint64_t dropout_seed, Buffer<T>* grad, ForwardTrace<T>* workspace) {
  if (static_cast<std::size_t>(input.n) != gt.size()) throw ShapeMismatch("batch and ground-truth sizes differ");
  ForwardTrace<T> local;
  ForwardTrace<T>& trace = workspace ? *workspace : local;
  const auto out = net.forward(input, mode, dropout_seed, grad ? &trace : nullptr);
  HeadOutput<T> d_out;
  const HeadEval ev = score_heads(net.config(), out, gt, w, grad ? &d_out : nullptr);
  if (grad) {
    grad->assign(net.params().size(), T(0));
    net.backward(trace, d_out, *grad);
  }
  return ev.loss_sum / input.n;
}

template double batch_loss<float>(const Network<float>&, const Tensor<float>&, std::span<const Pose>,
                                  const LossWeights&, Mode, std::uint64_t, Buffer<float>*,
                                  ForwardTrace<float>*);
template double batch_loss<double>(const Network<double>&, const Tensor<double>&, std::span<const Pose>,
                                   const LossWeights&, Mode, std::uint64_t, Buffer<double>*,
                                   ForwardTrace<double>*);

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(Buffer<float>& params, const Buffer<float>& grad) {
  ++step_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
    params[i] -= static_cast<float>(lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_));
  }
}

TrainLog train(PoseModel& model, const DatasetManifest& train_set, const DatasetManifest& val_set,
               const TrainConfig& cfg) {
  return train(model, load_frames(train_set), load_frames(val_set), cfg);
}

TrainLog train(PoseModel& model, const FrameSet& train_set, const FrameSet& val_set, const TrainConfig& cfg) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  for (const FrameSet* fs : {&train_set, &val_set}) {
    if (fs->size_frames() > 0 && !(fs->size == mc.input_size)) {
      throw ShapeMismatch("dataset image size does not match the model input size");
    }
  }
  if (train_set.size_frames() == 0) throw ValidationError("training set is empty");

  auto& params = model.network().params();
  Adam opt(params.size(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  Buffer<float> grad;
  ForwardTrace<float> workspace;
  Buffer<float> best = params;
  double best_score = std::numeric_limits<double>::infinity();
  TrainLog log;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = train_set.size_frames();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const long total_steps = static_cast<long>(cfg.epochs) * static_cast<long>((n + bs - 1) / bs);
  long update = 0;

  auto abort_non_finite = [&](const std::string& what) {
    params = best;
    model.set_mode(Mode::Eval);
    if (log.best_epoch >= 0 && !cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
    throw NonFiniteLoss(what + "; parameters restored to the best epoch (" + std::to_string(log.best_epoch) + ")");
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    model.set_mode(Mode::Train);
    const auto order = shuffled(n, substream(cfg.seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    double loss_sum = 0.0;
    std::vector<Image> images;
    std::vector<Pose> gts;
    for (std::size_t start = 0, batch = 0; start < n; start += bs, ++batch) {
      const std::size_t end = std::min(n, start + bs);
      images.clear();
      gts.clear();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        Image img = train_set.image(idx);
        if (cfg.augment.enabled) {
          Rng rng = substream(cfg.seed, {kAugmentTag, cfg.augment.seed, static_cast<std::uint64_t>(epoch), idx});
          img = augment(img, cfg.augment, rng);
        }
        images.push_back(std::move(img));
        gts.push_back(train_set.poses[idx]);
      }
      const auto x = make_input<float>(mc, images);
      const auto dseed = derive_seed(cfg.seed, {kDropoutTag, static_cast<std::uint64_t>(epoch), batch});
      double loss = 0.0;
      try {
        loss = batch_loss(model.network(), x, gts, cfg.weights, Mode::Train, dseed, &grad, &workspace);
      } catch (const DegenerateInput& err) {
        abort_non_finite(std::string(err.what()) + " at epoch " + std::to_string(epoch));
      }
      if (!std::isfinite(loss) || !all_finite(grad)) {
        abort_non_finite("non-finite loss at epoch " + std::to_string(epoch));
      }
      opt.set_learning_rate(learning_rate_at(cfg, update++, total_steps));
      opt.step(params, grad);
      loss_sum += loss * static_cast<double>(end - start);
    }

    model.set_mode(Mode::Eval);
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(n);
    const std::size_t nv = val_set.size_frames();
    if (nv > 0) {
      HeadEval total;
      for (std::size_t start = 0; start < nv; start += bs) {
        const std::size_t end = std::min(nv, start + bs);
        images.clear();
        for (std::size_t k = start; k < end; ++k) images.push_back(val_set.image(k));
        const auto out = model.network().forward(make_input<float>(mc, images), Mode::Eval, 0, nullptr);
        HeadEval ev;
        try {
          ev = score_heads(mc, out, std::span(val_set.poses).subspan(start, end - start), cfg.weights,
                           static_cast<HeadOutput<float>*>(nullptr));
        } catch (const DegenerateInput& err) {
          abort_non_finite(std::string(err.what()) + " in validation at epoch " + std::to_string(epoch));
        }
        total.loss_sum += ev.loss_sum;
        total.erot_sum_deg += ev.erot_sum_deg;
        total.et_sum_mm += ev.et_sum_mm;
      }
      e.val_loss = total.loss_sum / static_cast<double>(nv);
      e.val_erot_deg = total.erot_sum_deg / static_cast<double>(nv);
      e.val_et_mm = total.et_sum_mm / static_cast<double>(nv);
      if (!std::isfinite(e.val_loss)) abort_non_finite("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(e);

    const double score = nv > 0 ? e.val_erot_deg : e.train_loss;
    if (score < best_score) {
      best_score = score;
      best = params;
      log.best_epoch = epoch;
      if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
    } else if (cfg.early_stop_patience > 0 && epoch - log.best_epoch >= cfg.early_stop_patience) {
      break;
    }
  }
  params = best;
  model.set_mode(Mode::Eval);
  return log;
}

double max_relative_gradient_error(const std::function<double(const std::vector<double>&)>& loss,
                                   const std::vector<double>& params, const std::vector<double>& analytic,
                                   std::span<const std::size_t> coords, double eps, double floor) {
  std::vector<double> p = params;
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double orig = p[i];
    p[i] = orig + eps;
    const double lp = loss(p);
    p[i] = orig - eps;
    const double lm = loss(p);
    p[i] = orig;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

std::vector<std::size_t> sample_coordinates(const ParameterLayout& layout, std::size_t n_coords, std::uint64_t seed) {
  Rng rng = substream(seed, {kCoordTag});
  std::set<std::size_t> picked;
  const std::size_t n_tensors = layout.ranges.size();
  n_coords = std::min(n_coords, layout.total);
  for (std::size_t t = 0; t < n_tensors; ++t) {
    const auto [lo, hi] = layout.ranges[t];
    const std::size_t share = n_coords / n_tensors + (t < n_coords % n_tensors ? 1 : 0);
    const std::size_t want = std::min(share, hi - lo);
    std::set<std::size_t> local;
    while (local.size() < want) local.insert(lo + rng() % (hi - lo));
    picked.insert(local.begin(), local.end());
  }
  while (picked.size() < n_coords) picked.insert(rng() % layout.total);
  return {picked.begin(), picked.end()};
}

double finite_difference_check(const PoseModel& model, const Image& image, const Pose& gt, const LossWeights& w,
                               double epsilon, std::size_t n_coords, std::uint64_t seed) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) throw InvalidConfig("finite-difference epsilon must lie in [1e-6, 1e-3]");
  Network<double> net = model.network().cast<double>();
  const auto x = make_input<double>(net.config(), std::span(&image, 1));
  const std::uint64_t dseed = derive_seed(seed, {kDropoutTag});
  const std::span<const Pose> gts(&gt, 1);
  Buffer<double> grad;
  ForwardTrace<double> workspace;
  batch_loss(net, x, gts, w, Mode::Train, dseed, &grad, &workspace);
  const std::vector<double> analytic(grad.begin(), grad.end());
  const std::vector<double> base(net.params().begin(), net.params().end());
  auto loss = [&](const std::vector<double>& p) {
    net.params().assign(p.begin(), p.end());
    return batch_loss<double>(net, x, gts, w, Mode::Train, dseed, nullptr, &workspace);
  };
  const auto coords = sample_coordinates(net.layout(), n_coords, seed);
  return max_relative_gradient_error(loss, base, analytic, coords, epsilon);
}

}  // namespace synreg

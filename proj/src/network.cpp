#include "synreg/network.hpp"

#include <cmath>

#include <Eigen/Core>

#include "synreg/error.hpp"
#include "synreg/rng.hpp"

namespace synreg {

void ModelConfig::validate() const {
  if (input_size.width < 1 || input_size.height < 1) throw InvalidConfig("model.input_size must be positive");
  if (conv_blocks.size() < 3) throw InvalidConfig("model needs at least 3 conv blocks");
  for (const auto& b : conv_blocks) {
    if (b.out_channels < 1) throw InvalidConfig("conv block out_channels must be >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidConfig("model.dropout_rate must lie in [0, 1)");
  if (!(leaky_slope > 0.0)) throw InvalidConfig("model.leaky_slope must be > 0");
  if (head_hidden_dim < 1) throw InvalidConfig("model.head_hidden_dim must be >= 1");
  if (!(input_std > 0.0)) throw InvalidConfig("model.input_std must be > 0");
  if (!(translation_scale > 0.0)) throw InvalidConfig("model.translation_scale must be > 0");
  if (!translation_offset.allFinite()) throw InvalidConfig("model.translation_offset must be finite");
}

namespace {

int conv_out(int in) { return (in - 1) / 2 + 1; }

}  // namespace

ImageSize ModelConfig::feature_size() const {
  ImageSize s = input_size;
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) s = {conv_out(s.width), conv_out(s.height)};
  return s;
}

void to_json(Json& j, const ModelConfig& c) {
  Json blocks = Json::array();
  for (const auto& b : c.conv_blocks) {
    blocks.push_back({{"out_channels", b.out_channels}, {"kernel", 3}, {"stride", 2}, {"dropout", b.dropout}});
  }
  j = Json{{"input_size", c.input_size},
           {"conv_blocks", blocks},
           {"leaky_slope", c.leaky_slope},
           {"dropout_rate", c.dropout_rate},
           {"pooling", c.pooling == HeadPooling::GlobalAverage ? "global_average" : "flatten"},
           {"head_hidden_dim", c.head_hidden_dim},
           {"input_mean", c.input_mean},
           {"input_std", c.input_std},
           {"translation_offset", vec3_to_json(c.translation_offset)},
           {"translation_scale", c.translation_scale}};
}

void from_json(const Json& j, ModelConfig& c) {
  StrictReader(j, "model")
      .with("input_size", [&](const Json& v) { from_json(v, c.input_size); })
      .with("conv_blocks",
            [&](const Json& v) {
              if (!v.is_array()) throw InvalidConfig("model.conv_blocks must be an array");
              c.conv_blocks.clear();
              for (const auto& b : v) {
                ConvBlock block;
                int kernel = 3, stride = 2;
                StrictReader(b, "model.conv_blocks[]")
                    .req("out_channels", block.out_channels)
                    .opt("kernel", kernel)
                    .opt("stride", stride)
                    .opt("dropout", block.dropout)
                    .finish();
                if (kernel != 3 || stride != 2) throw InvalidConfig("conv blocks are fixed at kernel 3, stride 2");
                c.conv_blocks.push_back(block);
              }
            })
      .opt("leaky_slope", c.leaky_slope)
      .opt("dropout_rate", c.dropout_rate)
      .with("pooling",
            [&](const Json& v) {
              const auto s = v.get<std::string>();
              if (s == "global_average") {
                c.pooling = HeadPooling::GlobalAverage;
              } else if (s == "flatten") {
                c.pooling = HeadPooling::Flatten;
              } else {
                throw InvalidConfig("model.pooling must be 'global_average' or 'flatten'");
              }
            })
      .opt("head_hidden_dim", c.head_hidden_dim)
      .opt("input_mean", c.input_mean)
      .opt("input_std", c.input_std)
      .with("translation_offset",
            [&](const Json& v) { c.translation_offset = vec3_from_json(v, "model.translation_offset"); })
      .opt("translation_scale", c.translation_scale)
      .finish();
}

ParameterLayout make_layout(const ModelConfig& cfg) {
  ParameterLayout l;
  auto add = [&](const std::string& name, int rows, int cols) {
    ParameterLayout::Dense d;
    d.rows = rows;
    d.cols = cols;
    d.weight = l.total;
    l.total += static_cast<std::size_t>(rows) * cols;
    l.names.push_back(name + ".weight");
    l.ranges.emplace_back(d.weight, l.total);
    d.bias = l.total;
    l.total += static_cast<std::size_t>(rows);
    l.names.push_back(name + ".bias");
    l.ranges.emplace_back(d.bias, l.total);
    return d;
  };
  int in_c = 1;
  for (std::size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
    const int out_c = cfg.conv_blocks[i].out_channels;
    l.conv.push_back(add("conv" + std::to_string(i), out_c, 9 * in_c));
    in_c = out_c;
  }
  const ImageSize fs = cfg.feature_size();
  const int features = cfg.pooling == HeadPooling::GlobalAverage ? in_c : in_c * fs.width * fs.height;
  l.hidden = add("hidden", cfg.head_hidden_dim, features);
  l.rotation = add("rotation_head", 6, cfg.head_hidden_dim);
  l.translation = add("translation_head", 3, cfg.head_hidden_dim);
  return l;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
void reshape(Tensor<T>& t, int c, int n, int h, int w) {
  t.c = c;
  t.n = n;
  t.h = h;
  t.w = w;
  t.data.resize(static_cast<std::size_t>(c) * n * h * w);
}

// Splits each row of width w into its even and odd columns, both padded with
// zeros to wo entries.
template <typename T>
void split_columns(const T* x, std::size_t rows, int w, int wo, Buffer<T>& even, Buffer<T>& odd) {
  even.resize(rows * wo);
  odd.resize(rows * wo);
  const int half = w / 2;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = x + r * w;
    T* e = even.data() + r * wo;
    T* o = odd.data() + r * wo;
    for (int j = 0; j < wo; ++j) e[j] = src[2 * j];
    for (int j = 0; j < half; ++j) o[j] = src[2 * j + 1];
    for (int j = half; j < wo; ++j) o[j] = T(0);
  }
}

// col: (9 * C) x (N * Ho * Wo), row-major; row index (c * 3 + ky) * 3 + kx.
// With stride 2 and padding 1, tap kx = 1 reads even columns, kx = 2 odd
// columns and kx = 0 odd columns shifted right by one.
template <typename T>
void im2col(const Tensor<T>& x, int ho, int wo, Buffer<T>& col, Buffer<T>& even, Buffer<T>& odd) {
  split_columns(x.data.data(), static_cast<std::size_t>(x.c) * x.n * x.h, x.w, wo, even, odd);
  const std::size_t cols = static_cast<std::size_t>(x.n) * ho * wo;
  col.resize(static_cast<std::size_t>(9) * x.c * cols);
  for (int c = 0; c < x.c; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col.data() + static_cast<std::size_t>((c * 3 + ky) * 3 + kx) * cols;
        const T* phase = (kx == 1 ? even : odd).data();
        for (int n = 0; n < x.n; ++n) {
          const std::size_t plane = (static_cast<std::size_t>(c) * x.n + n) * x.h;
          for (int oy = 0; oy < ho; ++oy, dst += wo) {
            const int iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= x.h) {
              std::fill(dst, dst + wo, T(0));
              continue;
            }
            const T* src = phase + (plane + iy) * wo;
            if (kx == 0) {
              dst[0] = T(0);
              std::copy(src, src + wo - 1, dst + 1);
            } else {
              std::copy(src, src + wo, dst);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col; overwrites dx.
template <typename T>
void col2im(const Buffer<T>& col, int ho, int wo, Tensor<T>& dx, Buffer<T>& even, Buffer<T>& odd) {
  const std::size_t rows = static_cast<std::size_t>(dx.c) * dx.n * dx.h;
  even.assign(rows * wo, T(0));
  odd.assign(rows * wo, T(0));
  const std::size_t cols = static_cast<std::size_t>(dx.n) * ho * wo;
  for (int c = 0; c < dx.c; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col.data() + static_cast<std::size_t>((c * 3 + ky) * 3 + kx) * cols;
        T* phase = (kx == 1 ? even : odd).data();
        for (int n = 0; n < dx.n; ++n) {
          const std::size_t plane = (static_cast<std::size_t>(c) * dx.n + n) * dx.h;
          for (int oy = 0; oy < ho; ++oy, src += wo) {
            const int iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= dx.h) continue;
            T* dst = phase + (plane + iy) * wo;
            if (kx == 0) {
              for (int ox = 1; ox < wo; ++ox) dst[ox - 1] += src[ox];
            } else {
              for (int ox = 0; ox < wo; ++ox) dst[ox] += src[ox];
            }
          }
        }
      }
    }
  }
  const int half = dx.w / 2;
  for (std::size_t r = 0; r < rows; ++r) {
    T* d = dx.data.data() + r * dx.w;
    const T* e = even.data() + r * wo;
    const T* o = odd.data() + r * wo;
    for (int j = 0; j < wo; ++j) d[2 * j] = e[j];
    for (int j = 0; j < half; ++j) d[2 * j + 1] = o[j];
  }
}

template <typename T>
Eigen::Map<const RowMat<T>> weights(const Buffer<T>& p, const ParameterLayout::Dense& d) {
  return {p.data() + d.weight, d.rows, d.cols};
}

template <typename T>
Eigen::Map<const Vec<T>> bias(const Buffer<T>& p, const ParameterLayout::Dense& d) {
  return {p.data() + d.bias, d.rows};
}

template <typename T>
void dense_forward(const Buffer<T>& p, const ParameterLayout::Dense& d, const T* in, int n, T* out) {
  Eigen::Map<const RowMat<T>> x(in, d.cols, n);
  Eigen::Map<RowMat<T>> y(out, d.rows, n);
  y.noalias() = weights(p, d) * x;
  y.colwise() += bias(p, d);
}

// y = W x + b; accumulates dW, db and returns dx when requested.
template <typename T>
void dense_backward(const Buffer<T>& p, const ParameterLayout::Dense& d, const T* in, int n, const T* dy,
                    Buffer<T>& grad, T* dx) {
  Eigen::Map<const RowMat<T>> x(in, d.cols, n);
  Eigen::Map<const RowMat<T>> g(dy, d.rows, n);
  Eigen::Map<RowMat<T>> gw(grad.data() + d.weight, d.rows, d.cols);
  Eigen::Map<Vec<T>> gb(grad.data() + d.bias, d.rows);
  gw.noalias() += g * x.transpose();
  gb += g.rowwise().sum();
  if (dx) {
    Eigen::Map<RowMat<T>> gx(dx, d.cols, n);
    gx.noalias() = weights(p, d).transpose() * g;
  }
}

}  // namespace

template <typename T>
Network<T>::Network(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  layout_ = make_layout(cfg_);
  params_.assign(layout_.total, T(0));
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  Rng rng = substream(seed, {0x696e6974 /* "init" */});
  auto fill = [&](const ParameterLayout::Dense& d, double bound) {
    for (std::size_t i = d.weight; i < d.bias; ++i) params_[i] = static_cast<T>(uniform(rng, -bound, bound));
    for (int i = 0; i < d.rows; ++i) params_[d.bias + i] = T(0);
  };
  for (const auto& c : layout_.conv) fill(c, std::sqrt(6.0 / c.cols));
  fill(layout_.hidden, std::sqrt(6.0 / layout_.hidden.cols));
  fill(layout_.rotation, std::sqrt(1.0 / layout_.rotation.cols));
  fill(layout_.translation, std::sqrt(1.0 / layout_.translation.cols));
  const Rot6 identity;
  for (int i = 0; i < 6; ++i) params_[layout_.rotation.bias + i] = static_cast<T>(identity.v[i]);
}

template <typename T>
HeadOutput<T> Network<T>::forward(const Tensor<T>& input, Mode mode, std::uint64_t dropout_seed,
                                  ForwardTrace<T>* trace) const {
  if (input.c != 1 || input.h != cfg_.input_size.height || input.w != cfg_.input_size.width) {
    throw ShapeMismatch("network input does not match the configured size");
  }
  const int n = input.n;
  const T slope = static_cast<T>(cfg_.leaky_slope);
  ForwardTrace<T> local;
  ForwardTrace<T>& tr = trace ? *trace : local;
  const std::size_t nb = cfg_.conv_blocks.size();
  tr.block_inputs.resize(nb + 1);
  tr.pre_activation.resize(nb);
  tr.dropout_scale.resize(nb);
  tr.cols.resize(nb);

  tr.block_inputs[0] = input;
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& d = layout_.conv[b];
    const Tensor<T>& x = tr.block_inputs[b];
    const int ho = conv_out(x.h), wo = conv_out(x.w);
    Buffer<T>& col = tr.cols[trace ? b : 0];
    im2col(x, ho, wo, col, tr.even, tr.odd);
    Tensor<T>& z = tr.pre_activation[b];
    reshape(z, d.rows, n, ho, wo);
    const auto cols = static_cast<Eigen::Index>(n) * ho * wo;
    {
      Eigen::Map<const RowMat<T>> xm(col.data(), d.cols, cols);
      Eigen::Map<RowMat<T>> y(z.data.data(), d.rows, cols);
      y.noalias() = weights(params_, d) * xm;
      y.colwise() += bias(params_, d);
    }
    Tensor<T>& a = tr.block_inputs[b + 1];
    reshape(a, d.rows, n, ho, wo);
    for (std::size_t i = 0; i < z.size(); ++i) a.data[i] = z.data[i] > T(0) ? z.data[i] : slope * z.data[i];

    Buffer<T>& scale = tr.dropout_scale[b];
    scale.clear();
    if (mode == Mode::Train && cfg_.conv_blocks[b].dropout && cfg_.dropout_rate > 0.0) {
      Rng rng = substream(dropout_seed, {0x64726f70 /* "drop" */, b});
      const double p = cfg_.dropout_rate;
      const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
      // Drop when a uniform 53-bit draw falls below p.
      scale.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        scale[i] = u < p ? T(0) : keep_scale;
        a.data[i] *= scale[i];
      }
    }
  }

  const Tensor<T>& feat = tr.block_inputs[nb];
  const auto& hd = layout_.hidden;
  tr.pooled.resize(static_cast<std::size_t>(hd.cols) * n);
  const std::size_t hw = static_cast<std::size_t>(feat.h) * feat.w;
  for (int c = 0; c < feat.c; ++c) {
    for (int s = 0; s < n; ++s) {
      const T* src = feat.data.data() + (static_cast<std::size_t>(c) * n + s) * hw;
      if (cfg_.pooling == HeadPooling::GlobalAverage) {
        T acc = T(0);
        for (std::size_t i = 0; i < hw; ++i) acc += src[i];
        tr.pooled[static_cast<std::size_t>(c) * n + s] = acc / static_cast<T>(hw);
      } else {
        for (std::size_t i = 0; i < hw; ++i) tr.pooled[(c * hw + i) * n + s] = src[i];
      }
    }
  }

  tr.hidden_pre.resize(static_cast<std::size_t>(hd.rows) * n);
  dense_forward(params_, hd, tr.pooled.data(), n, tr.hidden_pre.data());
  tr.hidden.resize(tr.hidden_pre.size());
  for (std::size_t i = 0; i < tr.hidden.size(); ++i) {
    tr.hidden[i] = tr.hidden_pre[i] > T(0) ? tr.hidden_pre[i] : slope * tr.hidden_pre[i];
  }

  Buffer<T> r6(6 * static_cast<std::size_t>(n)), t(3 * static_cast<std::size_t>(n));
  dense_forward(params_, layout_.rotation, tr.hidden.data(), n, r6.data());
  dense_forward(params_, layout_.translation, tr.hidden.data(), n, t.data());

  HeadOutput<T> out;
  out.n = n;
  out.r6.resize(r6.size());
  out.t.resize(t.size());
  for (int s = 0; s < n; ++s) {
    for (int k = 0; k < 6; ++k) out.r6[6 * s + k] = r6[static_cast<std::size_t>(k) * n + s];
    for (int k = 0; k < 3; ++k) out.t[3 * s + k] = t[static_cast<std::size_t>(k) * n + s];
  }
  return out;
}

template <typename T>
void Network<T>::backward(ForwardTrace<T>& trace, const HeadOutput<T>& d_out, Buffer<T>& grad) const {
  const int n = d_out.n;
  const T slope = static_cast<T>(cfg_.leaky_slope);
  if (grad.size() != params_.size()) grad.assign(params_.size(), T(0));

  Buffer<T> dr6(6 * static_cast<std::size_t>(n)), dt(3 * static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    for (int k = 0; k < 6; ++k) dr6[static_cast<std::size_t>(k) * n + s] = d_out.r6[6 * s + k];
    for (int k = 0; k < 3; ++k) dt[static_cast<std::size_t>(k) * n + s] = d_out.t[3 * s + k];
  }

  const auto& hd = layout_.hidden;
  Buffer<T> d_hidden(static_cast<std::size_t>(hd.rows) * n), d_tmp(d_hidden.size());
  dense_backward(params_, layout_.rotation, trace.hidden.data(), n, dr6.data(), grad, d_hidden.data());
  dense_backward(params_, layout_.translation, trace.hidden.data(), n, dt.data(), grad, d_tmp.data());
  for (std::size_t i = 0; i < d_hidden.size(); ++i) {
    d_hidden[i] = (d_hidden[i] + d_tmp[i]) * (trace.hidden_pre[i] > T(0) ? T(1) : slope);
  }

  Buffer<T> d_pooled(static_cast<std::size_t>(hd.cols) * n);
  dense_backward(params_, hd, trace.pooled.data(), n, d_hidden.data(), grad, d_pooled.data());

  const std::size_t nb = cfg_.conv_blocks.size();
  const Tensor<T>& feat = trace.block_inputs[nb];
  Tensor<T>& d_act = trace.grad_a;
  reshape(d_act, feat.c, feat.n, feat.h, feat.w);
  const std::size_t hw = static_cast<std::size_t>(feat.h) * feat.w;
  for (int c = 0; c < feat.c; ++c) {
    for (int s = 0; s < n; ++s) {
      T* dst = d_act.data.data() + (static_cast<std::size_t>(c) * n + s) * hw;
      if (cfg_.pooling == HeadPooling::GlobalAverage) {
        const T g = d_pooled[static_cast<std::size_t>(c) * n + s] / static_cast<T>(hw);
        for (std::size_t i = 0; i < hw; ++i) dst[i] = g;
      } else {
        for (std::size_t i = 0; i < hw; ++i) dst[i] = d_pooled[(c * hw + i) * n + s];
      }
    }
  }

  for (std::size_t bi = nb; bi-- > 0;) {
    const auto& d = layout_.conv[bi];
    const Tensor<T>& z = trace.pre_activation[bi];
    const Buffer<T>& scale = trace.dropout_scale[bi];
    for (std::size_t i = 0; i < d_act.size(); ++i) {
      T g = d_act.data[i];
      if (!scale.empty()) g *= scale[i];
      d_act.data[i] = g * (z.data[i] > T(0) ? T(1) : slope);
    }
    const auto cols = static_cast<Eigen::Index>(n) * z.h * z.w;
    Eigen::Map<const RowMat<T>> xm(trace.cols[bi].data(), d.cols, cols);
    Eigen::Map<const RowMat<T>> g(d_act.data.data(), d.rows, cols);
    Eigen::Map<RowMat<T>> gw(grad.data() + d.weight, d.rows, d.cols);
    Eigen::Map<Vec<T>> gb(grad.data() + d.bias, d.rows);
    gw.noalias() += g * xm.transpose();
    gb += g.rowwise().sum();
    if (bi == 0) break;
    trace.dcol.resize(static_cast<std::size_t>(d.cols) * cols);
    Eigen::Map<RowMat<T>> gx(trace.dcol.data(), d.cols, cols);
    gx.noalias() = weights(params_, d).transpose() * g;
    const Tensor<T>& x = trace.block_inputs[bi];
    reshape(trace.grad_b, x.c, x.n, x.h, x.w);
    col2im(trace.dcol, z.h, z.w, trace.grad_b, trace.even, trace.odd);
    std::swap(trace.grad_a, trace.grad_b);
  }
}

template <typename T>
Tensor<T> make_input(const ModelConfig& cfg, std::span<const Image> images) {
  const int h = cfg.input_size.height, w = cfg.input_size.width;
  Tensor<T> x(1, static_cast<int>(images.size()), h, w);
  const double mean = cfg.input_mean, inv_std = 1.0 / cfg.input_std;
  for (std::size_t s = 0; s < images.size(); ++s) {
    const Image& img = images[s];
    if (img.width != w || img.height != h) {
      throw ShapeMismatch("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                          ", model expects " + std::to_string(w) + "x" + std::to_string(h));
    }
    T* dst = x.data.data() + s * static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) dst[i] = static_cast<T>((img.pixels[i] - mean) * inv_std);
  }
  return x;
}

template class Network<float>;
template class Network<double>;
template Tensor<float> make_input<float>(const ModelConfig&, std::span<const Image>);
template Tensor<double> make_input<double>(const ModelConfig&, std::span<const Image>);

}  // namespace synreg

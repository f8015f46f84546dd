#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "synreg/geometry.hpp"
#include "synreg/image.hpp"
#include "synreg/json_io.hpp"

namespace synreg {

/// Allocator with a fixed 64-byte base alignment. Eigen peels vectorized
/// reductions up to the first aligned element, so with malloc's alignment the
/// float summation order, and hence training, would follow heap layout.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

/// Storage for every parameter, gradient and activation buffer.
template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

/// One 3x3, stride-2, zero-padded convolution followed by a leaky rectifier
/// and, optionally, dropout.
struct ConvBlock {
  int out_channels = 32;
  bool dropout = false;
  bool operator==(const ConvBlock&) const = default;
};

enum class HeadPooling { GlobalAverage, Flatten };

struct ModelConfig {
  ImageSize input_size;
  std::vector<ConvBlock> conv_blocks = {{16, false}, {32, false}, {64, true}, {128, true}, {128, true}};
  double leaky_slope = 0.01;
  double dropout_rate = 0.2;
  HeadPooling pooling = HeadPooling::GlobalAverage;
  int head_hidden_dim = 256;

  /// Input normalization: (pixel - input_mean) / input_std.
  double input_mean = 0.5;
  double input_std = 0.25;
  /// The translation head predicts (t - translation_offset) / translation_scale.
  Vec3 translation_offset = Vec3(0.0, 0.0, 250.0);
  double translation_scale = 30.0;

  /// Throws InvalidConfig.
  void validate() const;
  /// Spatial size of the last conv feature map.
  ImageSize feature_size() const;
};

void to_json(Json& j, const ModelConfig& c);
void from_json(const Json& j, ModelConfig& c);

/// Activations in channel-major (C, N, H, W) layout, so one GEMM per layer
/// covers the whole batch.
template <typename T>
struct Tensor {
  int c = 0, n = 0, h = 0, w = 0;
  Buffer<T> data;

  Tensor() = default;
  Tensor(int c_, int n_, int h_, int w_) : c(c_), n(n_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * n_ * h_ * w_) {}
  std::size_t size() const { return data.size(); }
};

/// Raw head outputs, sample-major: r6[6*i + k], t[3*i + k] (normalized units).
template <typename T>
struct HeadOutput {
  int n = 0;
  Buffer<T> r6;
  Buffer<T> t;
};

enum class Mode { Train, Eval };

/// Intermediate values kept by a forward pass for backpropagation. Reusing
/// one trace across steps keeps its buffers allocated.
template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> block_inputs;   // input to each conv, then the final feature map
  std::vector<Tensor<T>> pre_activation; // conv output, before the rectifier
  std::vector<Buffer<T>> dropout_scale;  // per-element multiplier (0 or 1/(1-p)); empty when inactive
  std::vector<Buffer<T>> cols;      // im2col matrix of each conv input
  Buffer<T> pooled;                 // features x N, row-major
  Buffer<T> hidden_pre;             // hidden x N
  Buffer<T> hidden;                 // hidden x N

  // Scratch for backward.
  Buffer<T> even, odd, dcol;
  Tensor<T> grad_a, grad_b;
};

/// Parameter offsets into the flat parameter vector.
struct ParameterLayout {
  struct Dense {
    std::size_t weight = 0, bias = 0;
    int rows = 0, cols = 0;
  };
  std::vector<Dense> conv;  // rows = out channels, cols = 9 * in channels
  Dense hidden, rotation, translation;
  std::size_t total = 0;
  std::vector<std::string> names;  // one entry per tensor, for diagnostics
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
};

ParameterLayout make_layout(const ModelConfig& cfg);

/// Convolutional regressor over a flat parameter vector. Scalar type is a
/// template parameter so the same code runs in float for training and in
/// double for gradient verification.
template <typename T>
class Network {
public:
  explicit Network(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const ParameterLayout& layout() const { return layout_; }
  Buffer<T>& params() { return params_; }
  const Buffer<T>& params() const { return params_; }

  /// Fan-in-scaled uniform weights, zero biases, rotation head bias at the
  /// identity's 6D vector.
  void initialize(std::uint64_t seed);

  /// `input` is (1, N, H, W), already normalized. In Train mode, dropout
  /// masks are drawn from `dropout_seed`.
  HeadOutput<T> forward(const Tensor<T>& input, Mode mode, std::uint64_t dropout_seed,
                        ForwardTrace<T>* trace) const;

  /// Accumulates parameter gradients into `grad` (size = params().size()).
  /// Uses the trace's scratch buffers.
  void backward(ForwardTrace<T>& trace, const HeadOutput<T>& d_out, Buffer<T>& grad) const;

  template <typename U>
  Network<U> cast() const {
    Network<U> out(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = static_cast<U>(params_[i]);
    return out;
  }

private:
  ModelConfig cfg_;
  ParameterLayout layout_;
  Buffer<T> params_;
};

/// (1, N, H, W) tensor of normalized pixels. Throws ShapeMismatch when an
/// image does not match the configured input size.
template <typename T>
Tensor<T> make_input(const ModelConfig& cfg, std::span<const Image> images);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace synreg

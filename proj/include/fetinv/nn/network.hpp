// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small dense + GRU engine in double precision.
//
// Activations are (batch, steps, features) row-major. All parameters of a
// network live in one flat vector; each layer owns a contiguous range of it.
// Layout per layer:
//   dense:  kernel [in x out] row-major, then bias [out]
//   gru:    W [in x 3H], U [H x 3H], bias [3H]; gate blocks ordered z, r, h
// A dense layer acts on the last axis, so it applies per step.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace fetinv::nn {

enum class Activation { identity, relu, tanh };
const char* to_string(Activation a) noexcept;
Activation activation_from_string(const std::string& s);

enum class LayerKind { dense, gru, flatten };
const char* to_string(LayerKind k) noexcept;

enum class Topology { forward, inverse, custom };
const char* to_string(Topology t) noexcept;

/// Per-sample shape.
struct Shape {
  std::size_t steps = 1;
  std::size_t features = 0;
  std::size_t size() const noexcept { return steps * features; }
  bool operator==(const Shape&) const = default;
};

struct Batch {
  std::size_t batch = 0;
  Shape shape;
  std::vector<double> data;

  Batch() = default;
  Batch(std::size_t b, Shape s) : batch(b), shape(s), data(b * s.size(), 0.0) {}
  std::size_t rows() const noexcept { return batch * shape.steps; }
};

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t units = 0;  ///< dense width or GRU hidden size
  Activation activation = Activation::identity;
  std::size_t steps = 0;  ///< GRU: output sequence length (input is repeated when it has 1 step)
};

/// Scratch kept between forward and backward.
struct LayerCache {
  std::vector<double> a;  ///< dense: pre-activation output; gru: z
  std::vector<double> b;  ///< gru: r
  std::vector<double> c;  ///< gru: candidate
  std::vector<double> d;  ///< gru: r * h_prev
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const noexcept = 0;
  virtual LayerSpec spec() const = 0;
  virtual Shape input_shape() const noexcept = 0;
  virtual Shape output_shape() const noexcept = 0;
  virtual std::size_t param_count() const noexcept = 0;
  virtual void init(double* params, std::uint64_t seed) const = 0;
  virtual void forward(const double* params, const Batch& in, Batch& out, LayerCache* cache) const = 0;
  /// `din` and `grad` may be null. Gradients are accumulated into `grad`.
  virtual void backward(const double* params, const Batch& in, const Batch& out, const LayerCache& cache,
                        const Batch& dout, Batch* din, double* grad) const = 0;
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, Shape input);

/// Everything cached by one forward pass.
struct Tape {
  std::vector<Batch> acts;  ///< acts[0] = input, acts[i+1] = output of layer i
  std::vector<LayerCache> caches;
  const void* owner = nullptr;
};

/// Glorot/Xavier uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
std::vector<double> glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);
void glorot_fill(double* w, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

class Network {
 public:
  Network() = default;
  Network(Topology topology, Shape input, const std::vector<LayerSpec>& layers);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  Topology topology() const noexcept { return topology_; }
  Shape input_shape() const noexcept { return input_; }
  Shape output_shape() const noexcept;
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  std::size_t param_offset(std::size_t i) const { return offsets_[i]; }
  std::vector<LayerSpec> layer_specs() const;

  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }

  /// Glorot weights, zero biases; each layer seeded from (seed, index).
  void init(std::uint64_t seed);

  /// A frozen network refuses weight gradients but still propagates
  /// gradients to its input.
  bool frozen() const noexcept { return frozen_; }
  void set_frozen(bool f) noexcept { frozen_ = f; }

  Batch forward(const Batch& in, Tape* tape = nullptr) const;

  /// Reverse pass over a tape from forward(). `grad` (param_count, accumulated)
  /// must be null for a frozen network; `din` receives the input gradient.
  void backward(const Tape& tape, const Batch& dout, double* grad, Batch* din = nullptr) const;

 private:
  Topology topology_ = Topology::custom;
  Shape input_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  bool frozen_ = false;
};

struct ForwardNetConfig {
  std::size_t n_params = 8;
  std::size_t dense_width = 256;
  std::size_t gru_width = 128;
  std::size_t steps = 32;
  std::size_t channels = 4;
};

struct InverseNetConfig {
  std::size_t steps = 32;
  std::size_t features = 8;
  std::vector<std::size_t> hidden = {512, 256, 128};
  std::size_t n_params = 8;
};

/// params -> dense(tanh) -> repeat over steps -> GRU -> per-step dense(tanh).
Network make_forward_net(const ForwardNetConfig& cfg);
/// flatten -> dense(relu) x hidden -> dense(tanh) n_params.
Network make_inverse_net(const InverseNetConfig& cfg);

/// Adam with bias correction, over a flat parameter vector.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(std::size_t n = 0) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& w, const std::vector<double>& g, double lr);
  void reset();
  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

}  // namespace fetinv::nn

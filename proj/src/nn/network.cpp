// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "fetinv/error.hpp"
#include "fetinv/nn/network.hpp"
#include "fetinv/seed.hpp"
#include "fetinv/simd/kernels.hpp"

namespace fetinv::nn {

const char* to_string(Topology t) noexcept {
  switch (t) {
    case Topology::forward: return "forward";
    case Topology::inverse: return "inverse";
    case Topology::custom: return "custom";
  }
  return "?";
}

Network::Network(Topology topology, Shape input, const std::vector<LayerSpec>& layers)
    : topology_(topology), input_(input) {
  if (input.size() == 0) throw ContractError("network: empty input shape");
  Shape s = input;
  std::size_t offset = 0;
  for (const auto& spec : layers) {
    layers_.push_back(make_layer(spec, s));
    offsets_.push_back(offset);
    offset += layers_.back()->param_count();
    s = layers_.back()->output_shape();
  }
  params_.assign(offset, 0.0);
}

Network::Network(const Network& other)
    : topology_(other.topology_), input_(other.input_), params_(other.params_), frozen_(other.frozen_) {
  Shape s = input_;
  for (const auto& l : other.layers_) {
    layers_.push_back(make_layer(l->spec(), s));
    s = layers_.back()->output_shape();
  }
  offsets_ = other.offsets_;
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Shape Network::output_shape() const noexcept {
  return layers_.empty() ? input_ : layers_.back()->output_shape();
}

std::vector<LayerSpec> Network::layer_specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l->spec());
  return out;
}

void Network::init(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->init(params_.data() + offsets_[i], derive_seed(seed, "layer", i));
}

Batch Network::forward(const Batch& in, Tape* tape) const {
  if (in.shape != input_ || in.data.size() != in.batch * input_.size())
    throw ContractError(std::string("network (") + to_string(topology_) + "): input shape mismatch");
  if (tape) {
    tape->acts.resize(layers_.size() + 1);
    tape->caches.resize(layers_.size());
    tape->acts[0] = in;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->forward(params_.data() + offsets_[i], tape->acts[i], tape->acts[i + 1], &tape->caches[i]);
    tape->owner = this;
    return tape->acts.back();
  }
  Batch cur = in, next;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->forward(params_.data() + offsets_[i], cur, next, nullptr);
    std::swap(cur, next);
  }
  return cur;
}

void Network::backward(const Tape& tape, const Batch& dout, double* grad, Batch* din) const {
  if (tape.owner != this || tape.acts.size() != layers_.size() + 1)
    throw ContractError("backward: tape was not produced by this network's forward pass");
  if (grad && frozen_) throw ContractError("backward: weight gradients requested from a frozen network");
  const Batch& out = tape.acts.back();
  if (dout.batch != out.batch || dout.shape != out.shape || dout.data.size() != out.data.size())
    throw ContractError("backward: upstream gradient shape mismatch");
  Batch g = dout, gin;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_din = i > 0 || din != nullptr;
    layers_[i]->backward(params_.data() + offsets_[i], tape.acts[i], tape.acts[i + 1], tape.caches[i], g,
                         need_din ? &gin : nullptr, grad ? grad + offsets_[i] : nullptr);
    if (need_din) std::swap(g, gin);
  }
  if (din) *din = std::move(g);
}

Network make_forward_net(const ForwardNetConfig& cfg) {
  return Network(Topology::forward, {1, cfg.n_params},
                 {{LayerKind::dense, cfg.dense_width, Activation::tanh, 0},
                  {LayerKind::gru, cfg.gru_width, Activation::tanh, cfg.steps},
                  {LayerKind::dense, cfg.channels, Activation::tanh, 0}});
}

Network make_inverse_net(const InverseNetConfig& cfg) {
  std::vector<LayerSpec> layers{{LayerKind::flatten, 0, Activation::identity, 0}};
  for (std::size_t w : cfg.hidden) layers.push_back({LayerKind::dense, w, Activation::relu, 0});
  layers.push_back({LayerKind::dense, cfg.n_params, Activation::tanh, 0});
  return Network(Topology::inverse, {cfg.steps, cfg.features}, layers);
}

void Adam::step(std::vector<double>& w, const std::vector<double>& g, double lr) {
  if (w.size() != m_.size() || g.size() != m_.size()) throw ContractError("adam: state/gradient shape mismatch");
  ++t_;
  const double t = static_cast<double>(t_);
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  const double step_size = lr * std::sqrt(c2) / c1;
  const double eps_hat = kEps * std::sqrt(c2);
  simd::kernels().adam(w.size(), w.data(), g.data(), m_.data(), v_.data(), kBeta1, kBeta2, step_size, eps_hat);
}

void Adam::reset() {
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
  t_ = 0;
}

}  // namespace fetinv::nn

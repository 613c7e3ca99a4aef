// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>

#include "fetinv/error.hpp"
#include "fetinv/nn/network.hpp"
#include "fetinv/simd/kernels.hpp"

namespace fetinv::nn {

const char* to_string(Activation a) noexcept {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ContractError("unknown activation '" + s + "'");
}

const char* to_string(LayerKind k) noexcept {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::gru: return "gru";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

std::vector<double> glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  std::vector<double> w(fan_in * fan_out);
  glorot_fill(w.data(), fan_in, fan_out, seed);
  return w;
}

void glorot_fill(double* w, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-a, a);
  for (std::size_t i = 0; i < fan_in * fan_out; ++i) w[i] = u(rng);
}

namespace {

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  simd::kernels().gemm(m, n, k, a, lda, b, ldb, c, ldc);
}

// dst[cols x rows] = src[rows x cols]^T, src with leading dimension ld.
void transpose(const double* src, std::size_t rows, std::size_t cols, std::size_t ld, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * ld + j];
}

void check_input(const Batch& in, Shape expected, const char* who) {
  if (in.shape != expected || in.data.size() != in.batch * expected.size())
    throw ContractError(std::string(who) + ": input shape mismatch");
}

class DenseLayer final : public Layer {
 public:
  DenseLayer(Shape in, std::size_t units, Activation act) : in_(in), units_(units), act_(act) {
    if (units == 0 || in.features == 0) throw ContractError("dense: dimensions must be positive");
  }
  LayerKind kind() const noexcept override { return LayerKind::dense; }
  LayerSpec spec() const override { return {LayerKind::dense, units_, act_, 0}; }
  Shape input_shape() const noexcept override { return in_; }
  Shape output_shape() const noexcept override { return {in_.steps, units_}; }
  std::size_t param_count() const noexcept override { return in_.features * units_ + units_; }

  void init(double* p, std::uint64_t seed) const override {
    glorot_fill(p, in_.features, units_, seed);
    std::fill(p + in_.features * units_, p + param_count(), 0.0);
  }

  void forward(const double* p, const Batch& in, Batch& out, LayerCache*) const override {
    check_input(in, in_, "dense");
    const std::size_t rows = in.rows(), ni = in_.features, no = units_;
    out = Batch(in.batch, output_shape());
    const double* bias = p + ni * no;
    for (std::size_t r = 0; r < rows; ++r) std::copy(bias, bias + no, &out.data[r * no]);
    gemm(rows, no, ni, in.data.data(), ni, p, no, out.data.data(), no);
    switch (act_) {
      case Activation::identity: break;
      case Activation::relu:
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        break;
      case Activation::tanh:
        simd::kernels().tanh(out.data.data(), out.data.size());
        break;
    }
  }

  void backward(const double* p, const Batch& in, const Batch& out, const LayerCache&, const Batch& dout,
                Batch* din, double* grad) const override {
    const std::size_t rows = in.rows(), ni = in_.features, no = units_;
    std::vector<double> dpre(dout.data);
    switch (act_) {
      case Activation::identity: break;
      case Activation::relu:
        for (std::size_t i = 0; i < dpre.size(); ++i)
          if (!(out.data[i] > 0.0)) dpre[i] = 0.0;
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < dpre.size(); ++i) dpre[i] *= 1.0 - out.data[i] * out.data[i];
        break;
    }
    if (grad) {
      std::vector<double> xt;
      transpose(in.data.data(), rows, ni, ni, xt);
      gemm(ni, no, rows, xt.data(), rows, dpre.data(), no, grad, no);
      double* gb = grad + ni * no;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < no; ++j) gb[j] += dpre[r * no + j];
    }
    if (din) {
      *din = Batch(in.batch, in_);
      std::vector<double> wt;
      transpose(p, ni, no, no, wt);
      gemm(rows, ni, no, dpre.data(), no, wt.data(), ni, din->data.data(), ni);
    }
  }

 private:
  Shape in_;
  std::size_t units_;
  Activation act_;
};

// GRU with sigmoid gates and tanh candidate, reset applied before the
// recurrent product: h~ = tanh(x W_h + (r * h) U_h + b_h).
class GRULayer final : public Layer {
 public:
  GRULayer(Shape in, std::size_t hidden, std::size_t steps) : in_(in), h_(hidden), t_(steps) {
    if (hidden == 0 || steps == 0 || in.features == 0) throw ContractError("gru: dimensions must be positive");
    if (in.steps != 1 && in.steps != steps)
      throw ContractError("gru: input must have 1 step (repeated) or match the output length");
  }
  LayerKind kind() const noexcept override { return LayerKind::gru; }
  LayerSpec spec() const override { return {LayerKind::gru, h_, Activation::tanh, t_}; }
  Shape input_shape() const noexcept override { return in_; }
  Shape output_shape() const noexcept override { return {t_, h_}; }
  std::size_t param_count() const noexcept override { return (in_.features + h_ + 1) * 3 * h_; }

  void init(double* p, std::uint64_t seed) const override {
    const std::size_t d = in_.features, g = 3 * h_;
    glorot_fill(p, d, g, seed);
    glorot_fill(p + d * g, h_, g, seed ^ 0x9e3779b97f4a7c15ULL);
    std::fill(p + (d + h_) * g, p + param_count(), 0.0);
  }

  void forward(const double* p, const Batch& in, Batch& out, LayerCache* cache) const override {
    check_input(in, in_, "gru");
    const std::size_t B = in.batch, D = in_.features, H = h_, G = 3 * H, T = t_, Tin = in_.steps;
    const double* W = p;
    const double* U = p + D * G;
    const double* bias = p + (D + H) * G;

    // Input projection, once per distinct input step.
    std::vector<double> xp(B * Tin * G);
    for (std::size_t r = 0; r < B * Tin; ++r) std::copy(bias, bias + G, &xp[r * G]);
    gemm(B * Tin, G, D, in.data.data(), D, W, G, xp.data(), G);

    out = Batch(B, output_shape());
    LayerCache local;
    LayerCache& c = cache ? *cache : local;
    c.a.assign(B * T * H, 0.0);
    c.b.assign(B * T * H, 0.0);
    c.c.assign(B * T * H, 0.0);
    c.d.assign(B * T * H, 0.0);

    const auto& k = simd::kernels();
    std::vector<double> hu(B * G);
    std::vector<double> pre(B * 2 * H);
    for (std::size_t t = 0; t < T; ++t) {
      std::fill(hu.begin(), hu.end(), 0.0);
      const double* hprev = t > 0 ? &out.data[(t - 1) * H] : nullptr;
      if (hprev) gemm(B, 2 * H, H, hprev, T * H, U, G, hu.data(), G);
      for (std::size_t b = 0; b < B; ++b) {
        const double* x = &xp[(Tin == 1 ? b : b * T + t) * G];
        for (std::size_t j = 0; j < 2 * H; ++j) pre[b * 2 * H + j] = x[j] + hu[b * G + j];
      }
      k.sigmoid(pre.data(), pre.size());
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t o = (b * T + t) * H;
        for (std::size_t j = 0; j < H; ++j) {
          const double hp = hprev ? hprev[b * T * H + j] : 0.0;
          const double r = pre[b * 2 * H + H + j];
          c.a[o + j] = pre[b * 2 * H + j];
          c.b[o + j] = r;
          c.d[o + j] = r * hp;
        }
      }
      if (hprev) gemm(B, H, H, &c.d[t * H], T * H, U + 2 * H, G, hu.data() + 2 * H, G);
      for (std::size_t b = 0; b < B; ++b) {
        const double* x = &xp[(Tin == 1 ? b : b * T + t) * G];
        for (std::size_t j = 0; j < H; ++j) pre[b * H + j] = x[2 * H + j] + hu[b * G + 2 * H + j];
      }
      k.tanh(pre.data(), B * H);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t o = (b * T + t) * H;
        for (std::size_t j = 0; j < H; ++j) {
          const double hp = hprev ? hprev[b * T * H + j] : 0.0;
          const double cand = pre[b * H + j];
          const double z = c.a[o + j];
          c.c[o + j] = cand;
          out.data[o + j] = (1.0 - z) * hp + z * cand;
        }
      }
    }
  }

  void backward(const double* p, const Batch& in, const Batch& out, const LayerCache& c, const Batch& dout,
                Batch* din, double* grad) const override {
    const std::size_t B = in.batch, D = in_.features, H = h_, G = 3 * H, T = t_, Tin = in_.steps;
    const double* W = p;
    const double* U = p + D * G;
    if (c.a.size() != B * T * H) throw ContractError("gru: backward without a matching forward cache");

    std::vector<double> ut;  // [3H x H]
    transpose(U, H, G, G, ut);

    std::vector<double> da(B * T * G, 0.0);  // pre-activation gradients, (B, T, 3H)
    std::vector<double> dh(B * H, 0.0);      // gradient flowing into h_t
    std::vector<double> dhp(B * H);
    std::vector<double> drh(B * H);
    for (std::size_t tt = T; tt-- > 0;) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < H; ++j) dh[b * H + j] += dout.data[(b * T + tt) * H + j];
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t o = (b * T + tt) * H;
        double* a = &da[(b * T + tt) * G];
        for (std::size_t j = 0; j < H; ++j) {
          const double g = dh[b * H + j];
          const double hp = tt > 0 ? out.data[o - H + j] : 0.0;
          const double z = c.a[o + j], cand = c.c[o + j];
          a[2 * H + j] = g * z * (1.0 - cand * cand);
          a[j] = g * (cand - hp) * z * (1.0 - z);
          dhp[b * H + j] = g * (1.0 - z);
        }
      }
      if (tt == 0) break;
      std::fill(drh.begin(), drh.end(), 0.0);
      gemm(B, H, H, &da[tt * G + 2 * H], T * G, ut.data() + 2 * H * H, H, drh.data(), H);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t o = (b * T + tt) * H;
        double* a = &da[(b * T + tt) * G];
        for (std::size_t j = 0; j < H; ++j) {
          const double hp = out.data[o - H + j];
          const double r = c.b[o + j];
          a[H + j] = drh[b * H + j] * hp * r * (1.0 - r);
          dhp[b * H + j] += drh[b * H + j] * r;
        }
      }
      gemm(B, H, 2 * H, &da[tt * G], T * G, ut.data(), H, dhp.data(), H);
      dh.swap(dhp);
    }

    // Input-side gradient, summed over steps when the input was repeated.
    std::vector<double> dxp;
    const std::vector<double>* dx_src = &da;
    if (Tin == 1 && T > 1) {
      dxp.assign(B * G, 0.0);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t k = 0; k < G; ++k) dxp[b * G + k] += da[(b * T + t) * G + k];
      dx_src = &dxp;
    }
    const std::size_t xrows = B * Tin;

    if (grad) {
      double* gW = grad;
      double* gU = grad + D * G;
      double* gb = grad + (D + H) * G;
      std::vector<double> xt;
      transpose(in.data.data(), xrows, D, D, xt);
      gemm(D, G, xrows, xt.data(), xrows, dx_src->data(), G, gW, G);
      for (std::size_t r = 0; r < xrows; ++r)
        for (std::size_t k = 0; k < G; ++k) gb[k] += (*dx_src)[r * G + k];
      // Recurrent weights: h_{t-1}^T da_zr and (r h_{t-1})^T da_h over all rows.
      const std::size_t rows = B * T;
      std::vector<double> hprev_t(H * rows, 0.0);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 1; t < T; ++t)
          for (std::size_t j = 0; j < H; ++j) hprev_t[j * rows + b * T + t] = out.data[(b * T + t - 1) * H + j];
      gemm(H, 2 * H, rows, hprev_t.data(), rows, da.data(), G, gU, G);
      std::vector<double> rh_t;
      transpose(c.d.data(), rows, H, H, rh_t);
      gemm(H, H, rows, rh_t.data(), rows, da.data() + 2 * H, G, gU + 2 * H, G);
    }
    if (din) {
      *din = Batch(B, in_);
      std::vector<double> wt;
      transpose(W, D, G, G, wt);
      gemm(xrows, D, G, dx_src->data(), G, wt.data(), D, din->data.data(), D);
    }
  }

 private:
  Shape in_;
  std::size_t h_;
  std::size_t t_;
};

class FlattenLayer final : public Layer {
 public:
  explicit FlattenLayer(Shape in) : in_(in) {}
  LayerKind kind() const noexcept override { return LayerKind::flatten; }
  LayerSpec spec() const override { return {LayerKind::flatten, 0, Activation::identity, 0}; }
  Shape input_shape() const noexcept override { return in_; }
  Shape output_shape() const noexcept override { return {1, in_.size()}; }
  std::size_t param_count() const noexcept override { return 0; }
  void init(double*, std::uint64_t) const override {}
  void forward(const double*, const Batch& in, Batch& out, LayerCache*) const override {
    check_input(in, in_, "flatten");
    out.batch = in.batch;
    out.shape = output_shape();
    out.data = in.data;
  }
  void backward(const double*, const Batch& in, const Batch&, const LayerCache&, const Batch& dout, Batch* din,
                double*) const override {
    if (!din) return;
    din->batch = in.batch;
    din->shape = in_;
    din->data = dout.data;
  }

 private:
  Shape in_;
};

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, Shape input) {
  switch (spec.kind) {
    case LayerKind::dense: return std::make_unique<DenseLayer>(input, spec.units, spec.activation);
    case LayerKind::gru: return std::make_unique<GRULayer>(input, spec.units, spec.steps);
    case LayerKind::flatten: return std::make_unique<FlattenLayer>(input);
  }
  throw ContractError("unknown layer kind");
}

}  // namespace fetinv::nn

// SPDX-License-Identifier: Apache-2.0
#include "fetinv/training/losses.hpp"

#include "fetinv/error.hpp"

namespace fetinv::training {

CurrentErrorTerms current_error(const double* truth, const double* pred, std::size_t steps, std::size_t channels,
                                double* grad, double weight) {
  if (steps < 3 || channels == 0) throw ContractError("current_error: need >= 3 steps and >= 1 channel");
  CurrentErrorTerms t;
  const double n0 = static_cast<double>(steps * channels);
  const double n1 = static_cast<double>((steps - 1) * channels);
  const double n2 = static_cast<double>((steps - 2) * channels);
  auto e = [&](std::size_t k, std::size_t c) { return pred[k * channels + c] - truth[k * channels + c]; };
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < steps; ++k) {
      const double ek = e(k, c);
      t.value += ek * ek;
      if (grad) grad[k * channels + c] += weight * 2.0 * ek / n0;
      if (k >= 1) {
        const double d = ek - e(k - 1, c);
        t.first += d * d;
        if (grad) {
          grad[k * channels + c] += weight * 2.0 * d / n1;
          grad[(k - 1) * channels + c] -= weight * 2.0 * d / n1;
        }
      }
      if (k >= 2) {
        const double s = ek - 2.0 * e(k - 1, c) + e(k - 2, c);
        t.second += s * s;
        if (grad) {
          grad[k * channels + c] += weight * 2.0 * s / n2;
          grad[(k - 1) * channels + c] -= weight * 4.0 * s / n2;
          grad[(k - 2) * channels + c] += weight * 2.0 * s / n2;
        }
      }
    }
  }
  t.value /= n0;
  t.first /= n1;
  t.second /= n2;
  return t;
}

double loss_forward(const std::vector<double>& truth, const std::vector<double>& pred, std::size_t devices,
                    std::size_t steps, std::size_t channels, std::vector<double>* grad) {
  if (devices == 0) throw ContractError("loss_forward: empty batch");
  const std::size_t block = steps * channels;
  if (truth.size() != devices * block || pred.size() != devices * block)
    throw ContractError("loss_forward: shape mismatch");
  if (grad) grad->assign(pred.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(devices);
  double sum = 0.0;
  for (std::size_t d = 0; d < devices; ++d) {
    sum += current_error(&truth[d * block], &pred[d * block], steps, channels,
                         grad ? grad->data() + d * block : nullptr, inv)
               .total();
  }
  return sum * inv;
}

TandemLoss loss_tandem(const std::vector<double>& y_actual, const std::vector<double>& y_pred,
                       const std::vector<double>& v_true, const nn::Network& surrogate, double lambda,
                       std::vector<double>* grad_yp) {
  if (!surrogate.frozen()) throw ContractError("loss_tandem: the forward surrogate must be frozen");
  const nn::Shape in = surrogate.input_shape();
  const nn::Shape out = surrogate.output_shape();
  const std::size_t np = in.size();
  if (np == 0 || y_pred.size() % np != 0 || y_actual.size() != y_pred.size())
    throw ContractError("loss_tandem: parameter shape mismatch");
  const std::size_t devices = y_pred.size() / np;
  if (devices == 0) throw ContractError("loss_tandem: empty batch");
  if (v_true.size() != devices * out.size()) throw ContractError("loss_tandem: curve shape mismatch");

  nn::Batch yb(devices, in);
  yb.data = y_pred;
  nn::Tape tape;
  const nn::Batch v_pred = surrogate.forward(yb, grad_yp ? &tape : nullptr);

  const double inv = 1.0 / static_cast<double>(devices);
  TandemLoss L;
  nn::Batch dv(devices, out);
  for (std::size_t d = 0; d < devices; ++d) {
    double pe = 0.0;
    for (std::size_t l = 0; l < np; ++l) {
      const double diff = y_actual[d * np + l] - y_pred[d * np + l];
      pe += diff * diff;
    }
    L.param_term += pe / static_cast<double>(np);
    L.current_term += current_error(&v_true[d * out.size()], &v_pred.data[d * out.size()], out.steps, out.features,
                                    grad_yp ? dv.data.data() + d * out.size() : nullptr, lambda * inv)
                          .total();
  }
  L.param_term *= inv;
  L.current_term *= inv;
  L.total = L.param_term + lambda * L.current_term;

  if (grad_yp) {
    nn::Batch dy;
    surrogate.backward(tape, dv, nullptr, &dy);
    grad_yp->assign(y_pred.size(), 0.0);
    const double scale = 2.0 * inv / static_cast<double>(np);
    for (std::size_t i = 0; i < y_pred.size(); ++i) (*grad_yp)[i] = scale * (y_pred[i] - y_actual[i]) + dy.data[i];
  }
  return L;
}

}  // namespace fetinv::training

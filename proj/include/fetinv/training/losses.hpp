// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "fetinv/nn/network.hpp"

namespace fetinv::training {

/// Components of the current error on one device's scaled curves, laid out
/// [step][channel]. Each term is a mean over channels and its own step range.
struct CurrentErrorTerms {
  double value = 0.0;   ///< mean (p - t)^2 over steps
  double first = 0.0;   ///< mean squared error of first differences
  double second = 0.0;  ///< mean squared error of second differences
  double total() const noexcept { return value + first + second; }
};

/// E_Id for one device. If `grad` is non-null, d(total)/d(pred) is *added*
/// to it, scaled by `weight`.
CurrentErrorTerms current_error(const double* truth, const double* pred, std::size_t steps, std::size_t channels,
                                double* grad = nullptr, double weight = 1.0);

/// Mean of E_Id over `devices` consecutive [steps x channels] blocks.
/// `grad` (same size as pred) is overwritten when non-null.
double loss_forward(const std::vector<double>& truth, const std::vector<double>& pred, std::size_t devices,
                    std::size_t steps, std::size_t channels, std::vector<double>* grad = nullptr);

struct TandemLoss {
  double total = 0.0;
  double param_term = 0.0;    ///< mean over devices of the parameter MSE
  double current_term = 0.0;  ///< mean over devices of E_Id (unweighted)
};

/// mean_devices [ mean_l (ya - yp)^2 + lambda * E_Id(v, fwd(yp)) ].
/// The surrogate must be frozen. `grad_yp` (devices x n_params) is
/// overwritten when non-null.
TandemLoss loss_tandem(const std::vector<double>& y_actual, const std::vector<double>& y_pred,
                       const std::vector<double>& v_true, const nn::Network& surrogate, double lambda,
                       std::vector<double>* grad_yp = nullptr);

}  // namespace fetinv::training

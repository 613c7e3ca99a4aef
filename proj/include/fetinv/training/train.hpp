// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fetinv/nn/network.hpp"

namespace fetinv::training {

/// One training stage: annealing steps at lr = initial_lr * anneal_rate^s,
/// each stopped early after `patience` epochs without a new best dev loss.
struct TrainPlan {
  double initial_lr = 1e-3;
  double anneal_rate = 1.0;
  std::size_t anneal_steps = 1;
  std::size_t max_epochs_per_step = 500;
  std::size_t patience = 10;
  std::size_t minibatch_size = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

// Epoch caps are safety bounds only, except pretraining's hard 50: with a
// few hundred devices the first forward step can run ~2000 epochs before
// patience stops it.
struct StagePresets {
  TrainPlan forward{1e-3, 0.35, 4, 5000, 50, 128, 0};
  TrainPlan pretrain{2.5e-4, 0.6, 2, 50, 5, 256, 0};
  TrainPlan finetune{2e-5, 0.9, 3, 5000, 40, 256, 0};
  TrainPlan no_pretrain{1e-3, 0.8, 10, 5000, 40, 256, 0};
};

/// Disjoint train/dev index sets over [0, n).
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
};

/// Deterministic shuffle; dev gets round(n * dev_fraction) items (at least
/// one when n >= 2), train the rest. Both lists are sorted.
Split make_split(std::size_t n, double dev_fraction, std::uint64_t seed);

/// Deterministic Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

/// A loss over indexed samples with gradients for one trainable network.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual nn::Network& network() = 0;
  /// Mean loss over `idx`; when `grad` is non-null it receives the gradient
  /// with respect to network().params() (overwritten).
  virtual double loss(const std::vector<std::size_t>& idx, std::vector<double>* grad) = 0;
};

/// Surrogate training: inputs y (n x n_params), targets v (n x steps*channels).
class ForwardObjective final : public Objective {
 public:
  ForwardObjective(nn::Network& net, const std::vector<double>& y, const std::vector<double>& v);
  nn::Network& network() override { return net_; }
  double loss(const std::vector<std::size_t>& idx, std::vector<double>* grad) override;

 private:
  nn::Network& net_;
  const std::vector<double>& y_;
  const std::vector<double>& v_;
};

/// Inverse training through a frozen surrogate.
class TandemObjective final : public Objective {
 public:
  TandemObjective(nn::Network& inverse, const nn::Network& surrogate, const std::vector<double>& u,
                  const std::vector<double>& y, const std::vector<double>& v, double lambda);
  nn::Network& network() override { return inv_; }
  double loss(const std::vector<std::size_t>& idx, std::vector<double>* grad) override;

 private:
  nn::Network& inv_;
  const nn::Network& fwd_;
  const std::vector<double>& u_;
  const std::vector<double>& y_;
  const std::vector<double>& v_;
  double lambda_;
};

struct EpochRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;  ///< global, 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  bool improved = false;
};

struct StageResult {
  std::string stage;
  double initial_dev_loss = 0.0;
  double best_dev_loss = 0.0;
  std::vector<std::size_t> epochs_per_step;
  std::vector<EpochRecord> history;
  std::size_t total_epochs() const noexcept { return history.size(); }
};

using EpochCallback = std::function<void(const std::string& stage, const EpochRecord&)>;

/// Mean objective over `idx`, evaluated in chunks.
double evaluate_loss(Objective& obj, const std::vector<std::size_t>& idx);

/// Minibatch Adam with early stopping. The dev loss of the incoming weights
/// is the first checkpoint. Each annealing step starts from the best
/// checkpoint with fresh Adam moments; the network ends on the best
/// checkpoint overall. Throws NumericalError on a non-finite batch loss.
StageResult train_stage(Objective& obj, const std::vector<std::size_t>& train, const std::vector<std::size_t>& dev,
                        const TrainPlan& plan, const std::string& stage, const EpochCallback& on_epoch = {});

}  // namespace fetinv::training

// SPDX-License-Identifier: Apache-2.0
#include "fetinv/training/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fetinv/error.hpp"
#include "fetinv/seed.hpp"
#include "fetinv/training/losses.hpp"

namespace fetinv::training {

void TrainPlan::validate() const {
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("train plan: initial_lr must be > 0");
  if (!(anneal_rate > 0.0 && anneal_rate <= 1.0)) throw ConfigError("train plan: anneal_rate must be in (0, 1]");
  if (anneal_steps < 1) throw ConfigError("train plan: anneal_steps must be >= 1");
  if (max_epochs_per_step < 1) throw ConfigError("train plan: max_epochs_per_step must be >= 1");
  if (patience < 1) throw ConfigError("train plan: patience must be >= 1");
  if (minibatch_size < 1) throw ConfigError("train plan: minibatch_size must be >= 1");
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    // Rejection sampling keeps the draw unbiased and portable.
    const std::uint64_t range = i;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t r;
    do r = rng(); while (r >= limit);
    std::swap(p[i - 1], p[r % range]);
  }
  return p;
}

Split make_split(std::size_t n, double dev_fraction, std::uint64_t seed) {
  if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) throw ConfigError("dev fraction must be in [0, 1)");
  std::size_t n_dev = static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(n)));
  if (n >= 2 && dev_fraction > 0.0) n_dev = std::clamp<std::size_t>(n_dev, 1, n - 1);
  const auto p = permutation(n, seed);
  Split s;
  s.dev.assign(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n_dev));
  s.train.assign(p.begin() + static_cast<std::ptrdiff_t>(n_dev), p.end());
  std::sort(s.dev.begin(), s.dev.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

namespace {

std::vector<double> gather(const std::vector<double>& src, std::size_t width, const std::vector<std::size_t>& idx) {
  std::vector<double> out(idx.size() * width);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[i] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(i * width));
  return out;
}

}  // namespace

ForwardObjective::ForwardObjective(nn::Network& net, const std::vector<double>& y, const std::vector<double>& v)
    : net_(net), y_(y), v_(v) {
  const std::size_t ni = net.input_shape().size(), no = net.output_shape().size();
  if (y.size() % ni != 0 || v.size() % no != 0 || y.size() / ni != v.size() / no)
    throw ContractError("forward objective: data shapes do not match the network");
}

double ForwardObjective::loss(const std::vector<std::size_t>& idx, std::vector<double>* grad) {
  const nn::Shape in = net_.input_shape(), out = net_.output_shape();
  nn::Batch x(idx.size(), in);
  x.data = gather(y_, in.size(), idx);
  const std::vector<double> target = gather(v_, out.size(), idx);
  if (!grad) {
    const nn::Batch pred = net_.forward(x);
    return loss_forward(target, pred.data, idx.size(), out.steps, out.features);
  }
  nn::Tape tape;
  const nn::Batch pred = net_.forward(x, &tape);
  nn::Batch dout(idx.size(), out);
  const double L = loss_forward(target, pred.data, idx.size(), out.steps, out.features, &dout.data);
  grad->assign(net_.param_count(), 0.0);
  net_.backward(tape, dout, grad->data());
  return L;
}

TandemObjective::TandemObjective(nn::Network& inverse, const nn::Network& surrogate, const std::vector<double>& u,
                                 const std::vector<double>& y, const std::vector<double>& v, double lambda)
    : inv_(inverse), fwd_(surrogate), u_(u), y_(y), v_(v), lambda_(lambda) {
  if (!surrogate.frozen()) throw ContractError("tandem objective: the surrogate must be frozen");
  const std::size_t ni = inverse.input_shape().size(), np = inverse.output_shape().size();
  if (surrogate.input_shape().size() != np) throw ContractError("tandem objective: parameter widths differ");
  const std::size_t n = u.size() / ni;
  if (u.size() % ni != 0 || y.size() != n * np || v.size() != n * surrogate.output_shape().size())
    throw ContractError("tandem objective: data shapes do not match the networks");
}

double TandemObjective::loss(const std::vector<std::size_t>& idx, std::vector<double>* grad) {
  const nn::Shape in = inv_.input_shape(), out = inv_.output_shape();
  nn::Batch x(idx.size(), in);
  x.data = gather(u_, in.size(), idx);
  const std::vector<double> ya = gather(y_, out.size(), idx);
  const std::vector<double> vt = gather(v_, fwd_.output_shape().size(), idx);
  if (!grad) {
    const nn::Batch yp = inv_.forward(x);
    return loss_tandem(ya, yp.data, vt, fwd_, lambda_).total;
  }
  nn::Tape tape;
  const nn::Batch yp = inv_.forward(x, &tape);
  nn::Batch dy(idx.size(), out);
  const TandemLoss L = loss_tandem(ya, yp.data, vt, fwd_, lambda_, &dy.data);
  grad->assign(inv_.param_count(), 0.0);
  inv_.backward(tape, dy, grad->data());
  return L.total;
}

double evaluate_loss(Objective& obj, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw ContractError("evaluate_loss: empty index set");
  constexpr std::size_t kChunk = 512;
  double sum = 0.0;
  for (std::size_t b = 0; b < idx.size(); b += kChunk) {
    const std::size_t e = std::min(idx.size(), b + kChunk);
    const std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(b),
                                         idx.begin() + static_cast<std::ptrdiff_t>(e));
    sum += obj.loss(chunk, nullptr) * static_cast<double>(chunk.size());
  }
  return sum / static_cast<double>(idx.size());
}

StageResult train_stage(Objective& obj, const std::vector<std::size_t>& train, const std::vector<std::size_t>& dev,
                        const TrainPlan& plan, const std::string& stage, const EpochCallback& on_epoch) {
  plan.validate();
  if (train.empty() || dev.empty()) throw ContractError(stage + ": train and dev sets must be nonempty");
  nn::Network& net = obj.network();
  if (net.frozen()) throw ContractError(stage + ": cannot train a frozen network");

  StageResult res;
  res.stage = stage;
  res.initial_dev_loss = evaluate_loss(obj, dev);
  if (!std::isfinite(res.initial_dev_loss)) throw NumericalError(stage + ": non-finite initial dev loss");
  res.best_dev_loss = res.initial_dev_loss;
  std::vector<double> best = net.params();

  std::vector<double> grad;
  std::size_t global_epoch = 0;
  for (std::size_t s = 0; s < plan.anneal_steps; ++s) {
    const double lr = plan.initial_lr * std::pow(plan.anneal_rate, static_cast<double>(s));
    net.params() = best;
    nn::Adam opt(net.param_count());
    std::size_t stale = 0, epochs = 0;
    while (epochs < plan.max_epochs_per_step && stale < plan.patience) {
      ++epochs;
      ++global_epoch;
      const auto order = permutation(train.size(), derive_seed(plan.seed, "epoch", global_epoch));
      double train_sum = 0.0;
      std::size_t batch_no = 0;
      for (std::size_t b = 0; b < order.size(); b += plan.minibatch_size, ++batch_no) {
        const std::size_t e = std::min(order.size(), b + plan.minibatch_size);
        std::vector<std::size_t> idx;
        idx.reserve(e - b);
        for (std::size_t k = b; k < e; ++k) idx.push_back(train[order[k]]);
        const double L = obj.loss(idx, &grad);
        if (!std::isfinite(L))
          throw NumericalError(stage + ": non-finite loss at step " + std::to_string(s) + ", epoch " +
                               std::to_string(global_epoch) + ", batch " + std::to_string(batch_no));
        train_sum += L * static_cast<double>(idx.size());
        opt.step(net.params(), grad, lr);
      }
      EpochRecord rec;
      rec.step = s;
      rec.epoch = global_epoch;
      rec.lr = lr;
      rec.train_loss = train_sum / static_cast<double>(train.size());
      rec.dev_loss = evaluate_loss(obj, dev);
      if (!std::isfinite(rec.dev_loss))
        throw NumericalError(stage + ": non-finite dev loss at epoch " + std::to_string(global_epoch));
      if (rec.dev_loss < res.best_dev_loss) {
        res.best_dev_loss = rec.dev_loss;
        best = net.params();
        rec.improved = true;
        stale = 0;
      } else {
        ++stale;
      }
      res.history.push_back(rec);
      if (on_epoch) on_epoch(stage, rec);
    }
    res.epochs_per_step.push_back(epochs);
  }
  net.params() = best;
  return res;
}

}  // namespace fetinv::training

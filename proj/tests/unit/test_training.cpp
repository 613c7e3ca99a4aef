// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "fetinv/error.hpp"
#include "fetinv/nn/network.hpp"
#include "fetinv/refmodel/dataset.hpp"
#include "fetinv/training/losses.hpp"
#include "fetinv/training/pipeline.hpp"
#include "fetinv/training/train.hpp"

using namespace fetinv;
using namespace fetinv::training;

namespace {

std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

// Direct evaluation of the three current-error terms, one channel at a time.
double current_error_oracle(const std::vector<double>& t, const std::vector<double>& p, std::size_t steps,
                            std::size_t ch) {
  long double v = 0, d1 = 0, d2 = 0;
  for (std::size_t c = 0; c < ch; ++c) {
    std::vector<long double> T(steps), P(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      T[k] = t[k * ch + c];
      P[k] = p[k * ch + c];
    }
    for (std::size_t k = 0; k < steps; ++k) v += (P[k] - T[k]) * (P[k] - T[k]);
    for (std::size_t k = 0; k + 1 < steps; ++k) {
      const long double dp = P[k + 1] - P[k], dt = T[k + 1] - T[k];
      d1 += (dp - dt) * (dp - dt);
    }
    for (std::size_t k = 0; k + 2 < steps; ++k) {
      const long double sp = P[k + 2] - 2 * P[k + 1] + P[k], st = T[k + 2] - 2 * T[k + 1] + T[k];
      d2 += (sp - st) * (sp - st);
    }
  }
  return static_cast<double>(v / (steps * ch) + d1 / ((steps - 1) * ch) + d2 / ((steps - 2) * ch));
}

// 2 params -> 3 steps x 2 channels; 42 weights.
nn::Network tiny_forward(std::uint64_t seed) {
  nn::ForwardNetConfig c;
  c.n_params = 2;
  c.dense_width = 2;
  c.gru_width = 2;
  c.steps = 3;
  c.channels = 2;
  nn::Network n = nn::make_forward_net(c);
  n.init(seed);
  return n;
}

// (3 x 2) features -> 2 params; 14 weights.
nn::Network tiny_inverse(std::uint64_t seed) {
  nn::Network n(nn::Topology::inverse, {3, 2},
                {{nn::LayerKind::flatten, 0, nn::Activation::identity, 0},
                 {nn::LayerKind::dense, 2, nn::Activation::tanh, 0}});
  n.init(seed);
  return n;
}

// Constant loss with zero gradient: never improves. `train_value` is what
// minibatches see.
class FlatObjective final : public Objective {
 public:
  explicit FlatObjective(nn::Network& n, double train_value = 1.0) : net_(n), train_value_(train_value) {}
  nn::Network& network() override { return net_; }
  double loss(const std::vector<std::size_t>&, std::vector<double>* grad) override {
    if (!grad) return 1.0;
    grad->assign(net_.param_count(), 0.0);
    return train_value_;
  }

 private:
  nn::Network& net_;
  double train_value_;
};

void check_objective_gradient(Objective& obj, const std::vector<std::size_t>& idx) {
  std::vector<double> grad;
  obj.loss(idx, &grad);
  auto& w = obj.network().params();
  REQUIRE(w.size() <= 50);
  const double h = 1e-5;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double w0 = w[i];
    w[i] = w0 + h;
    const double lp = obj.loss(idx, nullptr);
    w[i] = w0 - h;
    const double lm = obj.loss(idx, nullptr);
    w[i] = w0;
    const double fd = (lp - lm) / (2 * h);
    INFO("weight " << i << " analytic " << grad[i] << " fd " << fd);
    if (std::abs(grad[i]) + std::abs(fd) > 1e-9) CHECK(rel_err(grad[i], fd) < 1e-4);
  }
}

const std::vector<refmodel::DeviceRecord>& small_dataset() {
  static const std::vector<refmodel::DeviceRecord> d = [] {
    refmodel::DatasetSpec s;
    s.count = 70;
    s.master_seed = 11;
    s.workers = 1;
    auto g = refmodel::generate_dataset(s);
    return g.devices;
  }();
  return d;
}

PipelineConfig tiny_pipeline(std::uint64_t seed) {
  PipelineConfig c;
  c.forward_net.dense_width = 8;
  c.forward_net.gru_width = 6;
  c.inverse_net.hidden = {16, 8};
  c.augmented_count = 120;
  c.seed = seed;
  for (TrainPlan* p : {&c.presets.forward, &c.presets.pretrain, &c.presets.finetune, &c.presets.no_pretrain}) {
    p->anneal_steps = 2;
    p->max_epochs_per_step = 3;
    p->patience = 2;
    p->minibatch_size = 32;
  }
  return c;
}

}  // namespace

TEST_CASE("current error: three-point hand case and multichannel oracle") {
  // steps = 3, one channel: e = (0.1, -0.2, 0.4).
  const std::vector<double> t{0.5, 0.0, -0.3}, p{0.6, -0.2, 0.1};
  const auto terms = current_error(t.data(), p.data(), 3, 1);
  CHECK(std::abs(terms.value - (0.01 + 0.04 + 0.16) / 3.0) < 1e-12);
  CHECK(std::abs(terms.first - (0.09 + 0.36) / 2.0) < 1e-12);
  CHECK(std::abs(terms.second - 0.81) < 1e-12);

  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t steps = 3 + s % 30, ch = 1 + s % 4;
    const auto tt = uniform(steps * ch, 2 * s), pp = uniform(steps * ch, 2 * s + 1);
    CHECK(std::abs(current_error(tt.data(), pp.data(), steps, ch).total() - current_error_oracle(tt, pp, steps, ch)) <
          1e-12);
  }
  CHECK(current_error(t.data(), t.data(), 3, 1).total() == 0.0);
  CHECK_THROWS_AS(current_error(t.data(), p.data(), 2, 1), ContractError);
}

TEST_CASE("current error: constant offsets only enter the value term") {
  const auto t = uniform(32 * 4, 5);
  for (double c : {-0.7, 0.05, 0.3}) {
    std::vector<double> p = t;
    for (double& x : p) x += c;
    const auto e = current_error(t.data(), p.data(), 32, 4);
    CHECK(std::abs(e.value - c * c) < 1e-14);
    CHECK(e.first < 1e-28);
    CHECK(e.second < 1e-28);
  }
}

TEST_CASE("forward loss: batch mean and gradient") {
  const auto t = uniform(2 * 12, 1), p = uniform(2 * 12, 2);
  const double a = current_error(t.data(), p.data(), 4, 3).total();
  const double b = current_error(t.data() + 12, p.data() + 12, 4, 3).total();
  CHECK(std::abs(loss_forward(t, p, 2, 4, 3) - 0.5 * (a + b)) < 1e-15);
  const std::vector<double> t1(t.begin(), t.begin() + 12), p1(p.begin(), p.begin() + 12);
  CHECK(loss_forward(t1, p1, 1, 4, 3) == a);
  CHECK(loss_forward(t, t, 2, 4, 3) == 0.0);
  CHECK_THROWS_AS(loss_forward({}, {}, 0, 4, 3), ContractError);
  CHECK_THROWS_AS(loss_forward(t, p1, 2, 4, 3), ContractError);

  std::vector<double> g;
  loss_forward(t, p, 2, 4, 3, &g);
  std::vector<double> q = p;
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = p[i] + 1e-6;
    const double lp = loss_forward(t, q, 2, 4, 3);
    q[i] = p[i] - 1e-6;
    const double lm = loss_forward(t, q, 2, 4, 3);
    q[i] = p[i];
    CHECK(rel_err(g[i], (lp - lm) / 2e-6) < 1e-6);
  }
}

TEST_CASE("tandem loss: hand oracle, exact branch and freeze contract") {
  nn::Network fwd = tiny_forward(3);
  CHECK_THROWS_AS(loss_tandem({0.0, 0.0}, {0.0, 0.0}, std::vector<double>(6, 0.0), fwd, 1.0), ContractError);
  fwd.set_frozen(true);

  const std::vector<double> ya{0.3, -0.2}, yp{0.1, 0.4};
  nn::Batch x(1, {1, 2});
  x.data = yp;
  const std::vector<double> v_exact = fwd.forward(x).data;
  const TandemLoss exact = loss_tandem(ya, yp, v_exact, fwd, 1.0);
  CHECK(std::abs(exact.total - 0.2) < 1e-12);  // (0.2^2 + 0.6^2) / 2
  CHECK(exact.current_term == 0.0);

  std::vector<double> v_off = v_exact;
  for (double& v : v_off) v -= 0.1;
  const TandemLoss off = loss_tandem(ya, yp, v_off, fwd, 2.5);
  CHECK(std::abs(off.current_term - 0.01) < 1e-12);
  CHECK(std::abs(off.total - (0.2 + 2.5 * 0.01)) < 1e-12);

  CHECK(loss_tandem(yp, yp, v_exact, fwd, 1.0).total == 0.0);
}

TEST_CASE("forward and tandem objectives match finite differences") {
  const std::size_t n = 5;
  const auto y = uniform(n * 2, 10, -0.9, 0.9);
  const auto v = uniform(n * 6, 11, -0.9, 0.9);
  const auto u = uniform(n * 6, 12);
  const std::vector<std::size_t> idx{0, 2, 3, 4};

  nn::Network fwd = tiny_forward(21);
  ForwardObjective fo(fwd, y, v);
  check_objective_gradient(fo, idx);

  fwd.set_frozen(true);
  const std::vector<double> fwd_before = fwd.params();
  nn::Network inv = tiny_inverse(22);
  TandemObjective to(inv, fwd, u, y, v, 1.0);
  check_objective_gradient(to, idx);
  std::vector<double> g;
  to.loss(idx, &g);
  CHECK(std::any_of(g.begin(), g.end(), [](double x) { return x != 0.0; }));
  CHECK(fwd.params() == fwd_before);

  nn::Network loose = tiny_forward(21);
  CHECK_THROWS_AS(TandemObjective(inv, loose, u, y, v, 1.0), ContractError);
}

TEST_CASE("split and permutation") {
  for (std::size_t n : {2u, 5u, 50u, 501u}) {
    const Split s = make_split(n, 0.2, 7);
    CHECK(s.train.size() + s.dev.size() == n);
    CHECK(s.dev.size() == std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * n))));
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (auto i : s.dev) CHECK(all.insert(i).second);
    CHECK(all.size() == n);
    CHECK(make_split(n, 0.2, 7).dev == s.dev);
  }
  CHECK(make_split(100, 0.2, 1).dev != make_split(100, 0.2, 2).dev);
  auto p = permutation(1000, 3);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == i);
  CHECK_THROWS_AS(make_split(10, 1.0, 0), ConfigError);
}

TEST_CASE("train plan validation and presets") {
  const StagePresets sp;
  CHECK(sp.forward.initial_lr == 1e-3);
  CHECK(sp.forward.anneal_rate == 0.35);
  CHECK(sp.forward.anneal_steps == 4);
  CHECK(sp.forward.patience == 50);
  CHECK(sp.forward.minibatch_size == 128);
  CHECK(sp.pretrain.initial_lr == 2.5e-4);
  CHECK(sp.pretrain.max_epochs_per_step == 50);
  CHECK(sp.pretrain.patience == 5);
  CHECK(sp.finetune.initial_lr == 2e-5);
  CHECK(sp.finetune.anneal_rate == 0.9);
  CHECK(sp.no_pretrain.anneal_steps == 10);
  CHECK(sp.no_pretrain.anneal_rate == 0.8);
  CHECK(sp.no_pretrain.minibatch_size == 256);

  TrainPlan p;
  CHECK_NOTHROW(p.validate());
  for (auto mutate : std::vector<void (*)(TrainPlan&)>{
           [](TrainPlan& q) { q.initial_lr = 0; }, [](TrainPlan& q) { q.anneal_rate = 1.5; },
           [](TrainPlan& q) { q.anneal_rate = 0; }, [](TrainPlan& q) { q.patience = 0; },
           [](TrainPlan& q) { q.minibatch_size = 0; }}) {
    TrainPlan q;
    mutate(q);
    CHECK_THROWS_AS(q.validate(), ConfigError);
  }
}

TEST_CASE("early stopping: patience 1 on a flat loss gives one epoch per step") {
  nn::Network net = tiny_inverse(1);
  FlatObjective obj(net);
  TrainPlan plan;
  plan.anneal_steps = 4;
  plan.patience = 1;
  plan.minibatch_size = 3;
  const StageResult r = train_stage(obj, {0, 1, 2, 3, 4}, {5, 6}, plan, "flat");
  CHECK(r.history.size() == 4);
  CHECK(r.epochs_per_step == std::vector<std::size_t>{1, 1, 1, 1});
  CHECK(r.best_dev_loss == r.initial_dev_loss);

  FlatObjective nan_obj(net, std::numeric_limits<double>::quiet_NaN());
  try {
    train_stage(nan_obj, {0, 1}, {2}, plan, "nan");
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
  net.set_frozen(true);
  CHECK_THROWS_AS(train_stage(obj, {0}, {1}, plan, "frozen"), ContractError);
}

TEST_CASE("early stopping: best checkpoint and determinism") {
  const std::size_t n = 40;
  const auto y = uniform(n * 2, 30, -0.9, 0.9);
  std::vector<double> v(n * 6);
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t k = 0; k < 6; ++k) v[d * 6 + k] = 0.5 * std::tanh(y[2 * d] * (1.0 + k) - y[2 * d + 1]);
  std::vector<std::size_t> train, dev;
  for (std::size_t i = 0; i < n; ++i) (i % 5 == 0 ? dev : train).push_back(i);
  TrainPlan plan;
  plan.initial_lr = 0.05;
  plan.anneal_rate = 0.5;
  plan.anneal_steps = 3;
  plan.max_epochs_per_step = 40;
  plan.patience = 5;
  plan.minibatch_size = 7;
  plan.seed = 9;

  nn::Network a = tiny_forward(4), b = tiny_forward(4);
  ForwardObjective oa(a, y, v), ob(b, y, v);
  const StageResult ra = train_stage(oa, train, dev, plan, "a");
  const StageResult rb = train_stage(ob, train, dev, plan, "b");
  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) CHECK(ra.history[i].dev_loss == rb.history[i].dev_loss);
  CHECK(a.params() == b.params());

  const double final_dev = evaluate_loss(oa, dev);
  CHECK(final_dev == ra.best_dev_loss);
  CHECK(final_dev < ra.initial_dev_loss);
  for (const auto& e : ra.history) CHECK(final_dev <= e.dev_loss);
  std::size_t total = 0;
  for (auto e : ra.epochs_per_step) total += e;
  CHECK(total == ra.history.size());
}

TEST_CASE("augmented set: shape, bounds and determinism") {
  const PhysicsSet data = make_physics_set(small_dataset());
  const PipelineConfig cfg = tiny_pipeline(5);
  const Split split = make_split(data.size(), 0.2, 1);
  const ForwardModel fwd = train_forward(data, split, cfg);
  CHECK(fwd.net.frozen());

  CHECK(generate_augmented(fwd, cfg.ranges, 0, 1).size() == 0);
  const AugmentedSet a = generate_augmented(fwd, cfg.ranges, 50, 2);
  CHECK(a.size() == 50);
  CHECK(a.u.size() == 50 * kDeviceFeatures);
  CHECK(a.v.size() == 50 * kDeviceCurves);
  for (double x : a.v) CHECK((x > -1.0 && x < 1.0));
  for (double x : a.y) CHECK((x > -1.0 && x < 1.0));
  for (double x : a.u) CHECK(std::isfinite(x));
  const AugmentedSet b = generate_augmented(fwd, cfg.ranges, 50, 2);
  CHECK(a.u == b.u);
  CHECK(a.v == b.v);
  CHECK(generate_augmented(fwd, cfg.ranges, 50, 3).y != a.y);

  // Curve columns of the augmented features are the surrogate curves after flooring.
  std::vector<double> curves = a.v;
  fwd.u_rec.subset({0, 1, 2, 3}).invert(curves.data(), curves.size());
  std::vector<double> u = a.u;
  fwd.u_rec.invert(u.data(), u.size());
  for (std::size_t r = 0; r < 50 * kGridSteps; ++r) {
    CHECK(u[r * 8 + 2] == doctest::Approx(std::max(curves[r * 4 + 2], std::log10(features::kNoiseFloor))).epsilon(1e-9));
    CHECK(u[r * 8 + 0] == doctest::Approx(std::max(curves[r * 4 + 0], features::kNoiseFloor)).epsilon(1e-9));
  }
}

TEST_CASE("pipeline composition, reuse and reproducibility") {
  const PhysicsSet data = make_physics_set(small_dataset());
  CHECK_THROWS_AS(run_pipeline(data.subset({0, 1, 2}), tiny_pipeline(1)), ConfigError);

  PipelineConfig cfg = tiny_pipeline(8);
  const PipelineResult full = run_pipeline(data, cfg);
  REQUIRE(full.stages.size() == 3);
  CHECK(full.stages[0].stage == "forward");
  CHECK(full.stages[1].stage == "pretrain");
  CHECK(full.stages[2].stage == "finetune");
  CHECK(full.augmented_count == 120);
  CHECK(full.split.train.size() + full.split.dev.size() == data.size());

  cfg.pretrain = false;
  const PipelineResult np1 = run_pipeline(data, cfg);
  const PipelineResult np2 = run_pipeline(data, cfg, {&full.forward, nullptr});
  REQUIRE(np1.stages.size() == 2);
  CHECK(np1.stages[1].stage == "no_pretrain");
  CHECK(np2.stages.size() == 1);
  CHECK(np1.inverse.net.params() == np2.inverse.net.params());
  CHECK(np1.stages[1].best_dev_loss == np2.stages[0].best_dev_loss);

  // Extracted parameters stay strictly inside the ranges.
  const auto pred = full.inverse.extract(data.u);
  for (const auto& p : pred) {
    const auto a = p.to_array();
    for (std::size_t k = 0; k < refmodel::kNumParams; ++k) {
      CHECK(a[k] > cfg.ranges[k].lower);
      CHECK(a[k] < cfg.ranges[k].upper);
    }
  }

  const InverseModel back = InverseModel::from_checkpoint(full.inverse.checkpoint());
  CHECK(back.extract(data.u) == pred);
  const ForwardModel fback = ForwardModel::from_checkpoint(full.forward.checkpoint());
  CHECK(fback.predict_curves(data.params) == full.forward.predict_curves(data.params));
  CHECK_THROWS_AS(InverseModel::from_checkpoint(full.forward.checkpoint()), ContractError);
}

TEST_CASE("bootstrap: size checks and rerun identity") {
  const PhysicsSet data = make_physics_set(small_dataset());
  const PhysicsSet pool = data.subset([] {
    std::vector<std::size_t> i(60);
    for (std::size_t k = 0; k < 60; ++k) i[k] = k;
    return i;
  }());
  const PhysicsSet test = data.subset({60, 61, 62, 63, 64, 65, 66, 67, 68, 69});
  BootstrapOptions opt;
  opt.sizes = {61};
  CHECK_THROWS_AS(bootstrap_run(pool, test, tiny_pipeline(1), opt), ConfigError);
  opt.sizes = {55};
  opt.repeats = 2;
  opt.compare_no_pretrain = true;
  const auto r1 = bootstrap_run(pool, test, tiny_pipeline(1), opt);
  const auto r2 = bootstrap_run(pool, test, tiny_pipeline(1), opt);
  REQUIRE(r1.size() == 2);
  CHECK(r1[0].pretrain);
  CHECK_FALSE(r1[1].pretrain);
  CHECK(r1[0].q5.size() == 2);
  CHECK(r1[0].median == r2[0].median);
  CHECK(r1[1].q5 == r2[1].q5);
  CHECK(r1[0].mean_q5 <= r1[0].mean_median);
}

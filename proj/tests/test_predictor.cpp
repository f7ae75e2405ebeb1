#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mdc/optimizer.hpp"
#include "mdc/predictor.hpp"
#include "mdc/rng.hpp"

using namespace mdc;

namespace {

// Scalar probe loss sum_{masked} log mu[x0] used by the gradient checks.
double probe_loss(Predictor& p, const TokenSequence& x0,
                  const TokenSequence& xt, double t) {
  const int m = p.value_count();
  std::vector<double> log_mu(static_cast<std::size_t>(xt.size()) * m);
  p.eval_log_probs(xt, t, log_mu);
  double acc = 0.0;
  for (int n = 0; n < x0.size(); ++n)
    if (xt.ids[n] == xt.vocab.mask_id())
      acc += log_mu[static_cast<std::size_t>(n) * m + x0.ids[n]];
  return acc;
}

std::vector<double> probe_grad(Predictor& p, const TokenSequence& x0,
                               const TokenSequence& xt, double t) {
  const int m = p.value_count();
  std::vector<double> log_mu(static_cast<std::size_t>(xt.size()) * m);
  std::vector<double> up(log_mu.size(), 0.0);
  p.forward(xt, t, log_mu);
  for (int n = 0; n < x0.size(); ++n)
    if (xt.ids[n] == xt.vocab.mask_id())
      up[static_cast<std::size_t>(n) * m + x0.ids[n]] = 1.0;
  std::vector<double> grad(p.param_count(), 0.0);
  p.backward(up, grad);
  return grad;
}

void check_grad_fd(Predictor& p, const TokenSequence& x0,
                   const TokenSequence& xt, double t, int n_coords,
                   double tol, RngStream& rng) {
  const auto grad = probe_grad(p, x0, xt, t);
  auto params = p.params();
  const double h = 1e-6;
  for (int rep = 0; rep < n_coords; ++rep) {
    const std::size_t i =
        rng.next_below(static_cast<std::uint32_t>(p.param_count()));
    const double saved = params[i];
    params[i] = saved + h;
    const double up = probe_loss(p, x0, xt, t);
    params[i] = saved - h;
    const double dn = probe_loss(p, x0, xt, t);
    params[i] = saved;
    const double fd = (up - dn) / (2.0 * h);
    CHECK(std::abs(grad[i] - fd) <= tol * std::max(1.0, std::abs(fd)));
  }
}

}  // namespace

TEST_SUITE("predictor") {

TEST_CASE("carry-over forces unmasked positions to one-hot") {
  const Vocabulary v{6};
  TabularPredictor p(v, TabularContext::shared);
  const TokenSequence xt(v, {5, v.mask_id(), 2});
  std::vector<double> probs(3 * 6);
  p.predict(xt, 0.5, probs);
  CHECK(probs[5] == 1.0);
  for (int j = 0; j < 5; ++j) CHECK(probs[j] == 0.0);
  CHECK(probs[2 * 6 + 2] == 1.0);
  CHECK(probs[2 * 6 + 0] == 0.0);
}

TEST_CASE("uniform logits give uniform prediction") {
  const Vocabulary v{4};
  TabularPredictor p(v, TabularContext::shared);
  const TokenSequence xt = TokenSequence::all_mask(v, 2);
  std::vector<double> probs(2 * 4);
  p.predict(xt, 0.3, probs);
  for (double q : probs) CHECK(q == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("rows are normalized for random parameters") {
  const Vocabulary v{5};
  RngStream rng = derive_stream(21, "pred.norm");
  MlpConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden = 16;
  MlpPredictor p(v, cfg, 3);
  for (auto& x : p.params()) x += 0.3 * rng.next_normal();
  const TokenSequence xt(v, {1, v.mask_id(), v.mask_id(), 4});
  std::vector<double> probs(4 * 5);
  p.predict(xt, 0.7, probs);
  for (int n = 0; n < 4; ++n) {
    double sum = 0.0;
    for (int j = 0; j < 5; ++j) sum += probs[n * 5 + j];
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("tabular gradient matches finite differences") {
  const Vocabulary v{3};
  RngStream rng = derive_stream(22, "pred.fd1");
  TabularPredictor p(v, TabularContext::full_state, 2);
  for (auto& x : p.params()) x = rng.next_normal();
  const TokenSequence x0(v, {1, 2});
  const TokenSequence xt(v, {1, v.mask_id()});
  check_grad_fd(p, x0, xt, 0.5, 30, 1e-5, rng);
}

TEST_CASE("one-parameter log-probability gradient is exact") {
  // single shared row, m=2: d/d logit_0 of log mu_0 = 1 - mu_0
  const Vocabulary v{2};
  TabularPredictor p(v, TabularContext::shared);
  p.params()[0] = 0.4;
  p.params()[1] = -0.3;
  const TokenSequence x0(v, {0});
  const TokenSequence xt = TokenSequence::all_mask(v, 1);
  const auto grad = probe_grad(p, x0, xt, 0.5);
  const double mu0 = std::exp(0.4) / (std::exp(0.4) + std::exp(-0.3));
  CHECK(grad[0] == doctest::Approx(1.0 - mu0).epsilon(1e-12));
  CHECK(grad[1] == doctest::Approx(-(1.0 - mu0)).epsilon(1e-12));
}

TEST_CASE("zero upstream gives zero gradient") {
  const Vocabulary v{3};
  TabularPredictor p(v, TabularContext::shared);
  const TokenSequence xt = TokenSequence::all_mask(v, 2);
  std::vector<double> log_mu(2 * 3), up(2 * 3, 0.0), grad(p.param_count(), 0.0);
  p.forward(xt, 0.5, log_mu);
  p.backward(up, grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("mlp gradient matches finite differences") {
  const Vocabulary v{4};
  MlpConfig cfg;
  cfg.embed_dim = 5;
  cfg.hidden = 12;
  cfg.layers = 2;
  cfg.window = 1;
  MlpPredictor p(v, cfg, 17);
  RngStream rng = derive_stream(23, "pred.fd2");
  const TokenSequence x0(v, {0, 3, 1});
  const TokenSequence xt(v, {v.mask_id(), 3, v.mask_id()});
  check_grad_fd(p, x0, xt, 0.42, 20, 1e-4, rng);
}

TEST_CASE("mlp directional derivatives match finite differences") {
  const Vocabulary v{3};
  MlpConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden = 8;
  cfg.layers = 1;
  cfg.window = 2;
  MlpPredictor p(v, cfg, 5);
  RngStream rng = derive_stream(24, "pred.dir");
  const TokenSequence x0(v, {2, 0});
  const TokenSequence xt(v, {v.mask_id(), v.mask_id()});
  const auto grad = probe_grad(p, x0, xt, 0.6);
  auto params = p.params();
  std::vector<double> dir(p.param_count());
  const double h = 1e-6;
  for (int rep = 0; rep < 20; ++rep) {
    double norm = 0.0;
    for (auto& d : dir) {
      d = rng.next_normal();
      norm += d * d;
    }
    norm = std::sqrt(norm);
    double expected = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] /= norm;
      expected += grad[i] * dir[i];
    }
    std::vector<double> saved(params.begin(), params.end());
    for (std::size_t i = 0; i < dir.size(); ++i)
      params[i] = saved[i] + h * dir[i];
    const double up = probe_loss(p, x0, xt, 0.6);
    for (std::size_t i = 0; i < dir.size(); ++i)
      params[i] = saved[i] - h * dir[i];
    const double dn = probe_loss(p, x0, xt, 0.6);
    std::copy(saved.begin(), saved.end(), params.begin());
    const double fd = (up - dn) / (2.0 * h);
    CHECK(std::abs(expected - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("deterministic construction") {
  const Vocabulary v{4};
  MlpConfig cfg;
  MlpPredictor a(v, cfg, 99), b(v, cfg, 99), c(v, cfg, 100);
  CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  bool same =
      std::equal(a.params().begin(), a.params().end(), c.params().begin());
  CHECK(!same);
}

TEST_CASE("onehot predictor is the oracle") {
  const Vocabulary v{3};
  const TokenSequence ref(v, {2, 0});
  OneHotPredictor p(ref);
  const TokenSequence xt(v, {v.mask_id(), 0});
  std::vector<double> log_mu(2 * 3);
  p.eval_log_probs(xt, 0.5, log_mu);
  CHECK(log_mu[2] == 0.0);
  CHECK(log_mu[3 + 0] == 0.0);
  CHECK(std::isinf(log_mu[0]));
}

TEST_CASE("adamw reproduces a hand-computed first step") {
  // after one step from zero state the bias corrections cancel and the
  // update is lr * g / (|g| + eps)
  std::vector<double> params = {1.0, -2.0};
  const std::vector<double> grad = {0.5, -0.25};
  AdamState st(2);
  AdamConfig cfg;
  cfg.lr = 0.1;
  adamw_step(params, grad, st, cfg);
  CHECK(params[0] ==
        doctest::Approx(1.0 - 0.1 * (0.5 / (0.5 + 1e-8))).epsilon(1e-12));
  CHECK(params[1] ==
        doctest::Approx(-2.0 + 0.1 * (0.25 / (0.25 + 1e-8))).epsilon(1e-12));
}

TEST_CASE("adamw with zero betas is a normalized gradient step") {
  std::vector<double> params = {0.5};
  const std::vector<double> grad = {-2.0};
  AdamState st(1);
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  adamw_step(params, grad, st, cfg);
  CHECK(params[0] ==
        doctest::Approx(0.5 + 0.01 * (2.0 / (2.0 + 1e-8))).epsilon(1e-12));
}

TEST_CASE("adamw decoupled weight decay") {
  std::vector<double> params = {1.0};
  const std::vector<double> grad = {0.0};
  AdamState st(1);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  adamw_step(params, grad, st, cfg);
  CHECK(params[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-12));
}

TEST_CASE("adamw rejects non-finite input") {
  std::vector<double> params = {1.0};
  const std::vector<double> grad = {std::nan("")};
  AdamState st(1);
  CHECK_THROWS_AS(adamw_step(params, grad, st, AdamConfig{}),
                  std::runtime_error);
}

TEST_CASE("ema with decay zero copies the parameters") {
  std::vector<double> ema = {5.0, 5.0};
  const std::vector<double> params = {1.0, 2.0};
  ema_update(ema, params, 0.0);
  CHECK(ema[0] == 1.0);
  CHECK(ema[1] == 2.0);
}

TEST_CASE("neighbor context keys on nearest revealed values") {
  const Vocabulary v{2};
  TabularPredictor p(v, TabularContext::neighbors, 1, 4);
  RngStream rng = derive_stream(31, "pred.nb");
  for (auto& x : p.params()) x = rng.next_normal();
  const int m = 2;
  // position 2 sees (left=0 at distance 2, right=1 at distance 1) in both
  // sequences; the differing id at position 4 is occluded by position 3.
  const TokenSequence a(v, {0, v.mask_id(), v.mask_id(), 1, 0});
  const TokenSequence b(v, {0, v.mask_id(), v.mask_id(), 1, 1});
  std::vector<double> la(5 * m), lb(5 * m);
  p.eval_log_probs(a, 0.5, la);
  p.eval_log_probs(b, 0.5, lb);
  CHECK(la[2 * m] == lb[2 * m]);
  CHECK(la[2 * m + 1] == lb[2 * m + 1]);
}

TEST_CASE("predictor descriptions round-trip") {
  const Vocabulary v{3};
  const Schedule sched = Schedule::linear(1e-4);
  TabularPredictor t(v, TabularContext::neighbors, 4, 6);
  auto t2 = make_predictor(t.describe(), v, sched);
  CHECK(t2->describe() == t.describe());
  CHECK(t2->param_count() == t.param_count());

  MlpConfig cfg;
  cfg.embed_dim = 3;
  cfg.hidden = 7;
  MlpPredictor m(v, cfg, 1, sched);
  auto m2 = make_predictor(m.describe(), v, sched);
  CHECK(m2->describe() == m.describe());
  CHECK(m2->param_count() == m.param_count());
}

}

#include "mdc/selfcheck.hpp"

#include <cmath>
#include <numbers>

#include "mdc/genmd4.hpp"
#include "mdc/oracle.hpp"
#include "mdc/sampler.hpp"
#include "mdc/trainer.hpp"

namespace mdc {

namespace {

// Dense (m+1)x(m+1) product.
std::vector<double> matmul(const std::vector<double>& a,
                           const std::vector<double>& b, int d) {
  std::vector<double> c(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double aik = a[i * d + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < d; ++j) c[i * d + j] += aik * b[k * d + j];
    }
  return c;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double mx = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    mx = std::max(mx, std::abs(a[i] - b[i]));
  return mx;
}

CheckResult check_chapman_kolmogorov(std::uint64_t seed) {
  CheckResult r{"chapman_kolmogorov", false, 0.0, 1e-12, "scalar and vector"};
  RngStream rng = derive_stream(seed, "selfcheck.ck");
  const Vocabulary v{4};
  const ForwardKernel scalar(v, Schedule::linear(1e-4));
  const ForwardKernel vector(v, VectorSchedule({2.0, 1.0, 0.5, 1.3}));
  double worst = 0.0;
  for (int rep = 0; rep < 64; ++rep) {
    double ts[3] = {rng.next_unit_open(), rng.next_unit_open(),
                    rng.next_unit_open()};
    std::sort(ts, ts + 3);
    if (ts[0] == ts[1] || ts[1] == ts[2]) continue;
    for (const ForwardKernel* k : {&scalar, &vector}) {
      const auto ab = matmul(materialize_transition(*k, ts[0], ts[1]),
                             materialize_transition(*k, ts[1], ts[2]), v.m + 1);
      const auto ac = materialize_transition(*k, ts[0], ts[2]);
      worst = std::max(worst, max_abs_diff(ab, ac));
    }
  }
  r.observed = worst;
  r.pass = worst <= r.tolerance;
  return r;
}

CheckResult check_bayes_posterior(std::uint64_t seed) {
  CheckResult r{"bayes_reverse_posterior", false, 0.0, 1e-12, "m=3"};
  RngStream rng = derive_stream(seed, "selfcheck.bayes");
  const Vocabulary v{3};
  const ForwardKernel scalar(v, Schedule::cosine(1e-4));
  const ForwardKernel vector(v, VectorSchedule({1.7, 0.8, 1.0}));
  double worst = 0.0;
  for (int rep = 0; rep < 64; ++rep) {
    double s = rng.next_unit_open(), t = rng.next_unit_open();
    if (s > t) std::swap(s, t);
    if (s == t) continue;
    for (const ForwardKernel* k : {&scalar, &vector}) {
      for (int x0 = 0; x0 < v.m; ++x0) {
        const auto marg_t = k->marginal(x0, t);
        const auto marg_s = k->marginal(x0, s);
        for (int xt : {x0, v.mask_id()}) {
          const auto post = k->reverse_posterior(xt, x0, s, t);
          for (int xs = 0; xs <= v.m; ++xs) {
            // Bayes: q(xs|xt,x0) = q(xt|xs) q(xs|x0) / q(xt|x0)
            const double num = k->transition(xs, s, t)[xt] * marg_s[xs];
            const double expected = num / marg_t[xt];
            worst = std::max(worst, std::abs(post[xs] - expected));
          }
        }
      }
    }
  }
  r.observed = worst;
  r.pass = worst <= r.tolerance;
  return r;
}

CheckResult check_rate_lemma(std::uint64_t seed) {
  CheckResult r{"rate_relation_lemma", false, 0.0, 1e-12,
                "R^{x0}(t)_{kj} = Q(t)_{jk} q(j|x0)/q(k|x0)"};
  RngStream rng = derive_stream(seed, "selfcheck.lemma");
  const Vocabulary v{4};
  const ForwardKernel k(v, Schedule::linear(0.0));
  double worst = 0.0;
  for (int rep = 0; rep < 32; ++rep) {
    const double t = 0.05 + 0.9 * rng.next_unit_open();
    const auto q = forward_rate(k, t);
    for (int x0 = 0; x0 < v.m; ++x0) {
      const auto rate = reverse_rate_given_x0(k, x0, t);
      const auto marg = k.marginal(x0, t);
      for (int kk = 0; kk <= v.m; ++kk) {
        if (marg[kk] <= 0.0) continue;
        for (int j = 0; j <= v.m; ++j) {
          if (j == kk) continue;
          const double expected = q.entry(j, kk) * marg[j] / marg[kk];
          worst = std::max(worst, std::abs(rate.entry(kk, j) - expected));
        }
      }
    }
  }
  r.observed = worst;
  r.pass = worst <= r.tolerance;
  return r;
}

CheckResult check_taylor(std::uint64_t) {
  CheckResult r{"taylor_expansion_decay", false, 0.0, 0.03,
                "residual ratio per decade (quadratic ~ 0.01)"};
  const Vocabulary v{4};
  const ForwardKernel k(v, Schedule::cosine(0.0));
  const double t = 0.4;
  const auto q = materialize(forward_rate(k, t));
  const int d = v.m + 1;
  double res[3];
  const double deltas[3] = {1e-2, 1e-3, 1e-4};
  for (int i = 0; i < 3; ++i) {
    const auto trans = materialize_transition(k, t, t + deltas[i]);
    double mx = 0.0;
    for (int jj = 0; jj < d; ++jj) {
      double rowsum = 0.0;
      for (int c = 0; c < d; ++c) {
        const double ident = jj == c ? 1.0 : 0.0;
        rowsum += std::abs(trans[jj * d + c] - ident - q[jj * d + c] * deltas[i]);
      }
      mx = std::max(mx, rowsum);
    }
    res[i] = mx;
  }
  double worst_ratio = 0.0;
  for (int i = 1; i < 3; ++i)
    worst_ratio = std::max(worst_ratio, res[i] / res[i - 1]);
  r.observed = worst_ratio;
  r.pass = worst_ratio <= r.tolerance && res[0] > 0.0;
  return r;
}

struct EquivFixture {
  Vocabulary v{3};
  TokenSequence x0;
  ForwardKernel kernel;
  TabularPredictor pred;

  explicit EquivFixture(std::uint64_t seed)
      : x0(v, {1, 2}),
        kernel(v, Schedule::linear(0.0)),
        pred(v, TabularContext::full_state, 2) {
    RngStream rng = derive_stream(seed, "selfcheck.equiv");
    for (auto& p : pred.params()) p = rng.next_normal();
  }
};

CheckResult check_score_equivalence(std::uint64_t seed, double scale) {
  CheckResult r{"loss_equivalence_score", false, 0.0, 1e-9,
                "L_score == L_inf_ce under the constrained score"};
  EquivFixture f(seed);
  const double ce = oracle::exact_loss(LossKind::continuous_ce, f.x0, f.pred,
                                       &f.kernel, nullptr, 1e-5, 64);
  const double sc = oracle::exact_loss(LossKind::score_entropy, f.x0, f.pred,
                                       &f.kernel, nullptr, 1e-5, 64, scale);
  r.observed = std::abs(sc - ce);
  r.pass = r.observed <= r.tolerance;
  return r;
}

CheckResult check_ctmc_equivalence(std::uint64_t seed) {
  CheckResult r{"loss_equivalence_ctmc", false, 0.0, 1e-9,
                "theta-differences of L_ctmc match L_inf_ce"};
  EquivFixture f1(seed), f2(seed + 1);
  const double ce1 = oracle::exact_loss(LossKind::continuous_ce, f1.x0, f1.pred,
                                        &f1.kernel, nullptr, 1e-5, 64);
  const double ce2 = oracle::exact_loss(LossKind::continuous_ce, f2.x0, f2.pred,
                                        &f2.kernel, nullptr, 1e-5, 64);
  const double ct1 = oracle::exact_loss(LossKind::ctmc, f1.x0, f1.pred,
                                        &f1.kernel, nullptr, 1e-5, 64);
  const double ct2 = oracle::exact_loss(LossKind::ctmc, f2.x0, f2.pred,
                                        &f2.kernel, nullptr, 1e-5, 64);
  r.observed = std::abs((ct1 - ct2) - (ce1 - ce2));
  r.pass = r.observed <= r.tolerance;
  return r;
}

CheckResult check_prop1(std::uint64_t seed, double scale) {
  CheckResult r{"prop1_score_sum_rule", false, 0.0, 1e-12,
                "sum_j s(m,t)_j == alpha/(1-alpha)"};
  EquivFixture f(seed);
  const Schedule sched = Schedule::linear(0.0);
  ScoreView sv(f.pred, sched, scale);
  RngStream rng = derive_stream(seed, "selfcheck.prop1");
  TokenSequence xt(f.v, {1, f.v.mask_id()});
  std::vector<double> s(f.v.m);
  double worst = 0.0;
  for (int rep = 0; rep < 16; ++rep) {
    const double t = 0.05 + 0.9 * rng.next_unit_open();
    sv.score_at(xt, t, 1, s);
    double sum = 0.0;
    for (double x : s) sum += x;
    const double a = alpha(sched, t);
    worst = std::max(worst, std::abs(sum - a / (1.0 - a)));
  }
  r.observed = worst;
  r.pass = worst <= r.tolerance;
  return r;
}

CheckResult check_rloo(std::uint64_t seed) {
  CheckResult r{"rloo_unbiasedness", false, 0.0, 4.0,
                "max |z| of RLOO mean vs enumeration gradient"};
  const Vocabulary v{2};
  const TokenSequence x0(v, {0});
  const VectorSchedule vs({1.3, 0.7});
  TabularPredictor pred(v, TabularContext::shared);
  const double logits[2] = {std::log(0.7), std::log(0.3)};
  pred.set_shared_logits(logits);

  const auto exact = oracle::exact_w_gradient(x0, pred, vs, 1e-5, 512);
  const int draws = 20000;
  RngStream rng = derive_stream(seed, "selfcheck.rloo");
  std::vector<double> mean(2, 0.0), m2(2, 0.0);
  for (int d = 0; d < draws; ++d) {
    const WGradient g = rloo_w_gradient(x0, pred, vs, rng, 1e-5);
    for (int j = 0; j < 2; ++j) {
      const double delta = g.grad_w[j] - mean[j];
      mean[j] += delta / (d + 1);
      m2[j] += delta * (g.grad_w[j] - mean[j]);
    }
  }
  double worst = 0.0;
  for (int j = 0; j < 2; ++j) {
    const double se = std::sqrt(m2[j] / (draws - 1.0) / draws);
    worst = std::max(worst, std::abs(mean[j] - exact[j]) / se);
  }
  r.observed = worst;
  r.pass = worst <= r.tolerance;
  return r;
}

CheckResult check_sampler_marginal(std::uint64_t seed) {
  CheckResult r{"sampler_marginal", false, 0.0, 13.815510557964274,
                "chi-square (df=2) vs oracle marginal, sig 1e-3"};
  const Vocabulary v{3};
  const std::vector<double> p = {0.5, 0.3, 0.2};
  TabularPredictor pred(v, TabularContext::shared);
  std::vector<double> logits(3);
  for (int i = 0; i < 3; ++i) logits[i] = std::log(p[i]);
  pred.set_shared_logits(logits);
  const ForwardKernel kernel(v, Schedule::linear(0.0));
  SamplerConfig cfg;
  cfg.steps = 50;
  RngStream rng = derive_stream(seed, "selfcheck.sampler");
  std::vector<long long> counts(3, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const TokenSequence x = sample(pred, kernel, 1, cfg, rng);
    counts[x.ids[0]] += 1;
  }
  r.observed = oracle::chi_square_stat(counts, p);
  r.pass = r.observed <= r.tolerance;
  return r;
}

CheckResult check_entropy_floor(std::uint64_t seed) {
  CheckResult r{"entropy_floor", false, 0.0, 0.0,
                "BPC of the optimal i.i.d. predictor vs source entropy"};
  const auto src = SyntheticSource::iid({0.5, 0.25, 0.125, 0.125});
  const double floor = synth_entropy(src) / std::numbers::ln2;
  const std::string text = synth_generate(src, 1 << 16, seed);
  CorpusData corpus = ingest_text(text, 8, 32, 0.1);

  // Optimal context-free predictor: logits = log source probability, mapped
  // through the corpus vocabulary order.
  TabularPredictor pred(corpus.vocab.vocabulary(), TabularContext::shared);
  std::vector<double> logits(corpus.vocab.m());
  for (int id = 0; id < corpus.vocab.m(); ++id) {
    const int state = static_cast<int>(corpus.vocab.id_to_char[id] - U'a');
    logits[id] = std::log(src.table[state]);
  }
  pred.set_shared_logits(logits);

  Checkpoint ck;
  ck.schedule = Schedule::linear(kDefaultEps);
  ck.vocab = corpus.vocab;
  ck.arch = pred.describe();
  ck.chunk_len = corpus.chunk_len;
  ck.seed = seed;
  ck.params.assign(pred.params().begin(), pred.params().end());
  ck.ema = ck.params;
  ck.adam_m.assign(pred.param_count(), 0.0f);
  ck.adam_v.assign(pred.param_count(), 0.0f);

  std::vector<std::vector<int>> eval_chunks(
      corpus.valid.begin(),
      corpus.valid.begin() + std::min<std::size_t>(64, corpus.valid.size()));
  const BpcResult bpc = evaluate_bpc(ck, eval_chunks, 8, seed);
  // Lower bounded by the source entropy (up to sampling error), and the
  // optimal predictor should sit essentially on the floor.
  const bool above = bpc.bpc + 4.0 * bpc.std_error >= floor;
  const bool tight = bpc.bpc <= floor + std::max(0.01 * floor, 5.0 * bpc.std_error);
  r.observed = bpc.bpc - floor;
  r.tolerance = std::max(0.01 * floor, 5.0 * bpc.std_error);
  r.pass = above && tight;
  return r;
}

}  // namespace

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opt) {
  const double score_scale = opt.fault == "score-constraint" ? 1.05 : 1.0;
  std::vector<CheckResult> out;
  out.push_back(check_chapman_kolmogorov(opt.seed));
  out.push_back(check_bayes_posterior(opt.seed));
  out.push_back(check_rate_lemma(opt.seed));
  out.push_back(check_taylor(opt.seed));
  out.push_back(check_score_equivalence(opt.seed, score_scale));
  out.push_back(check_ctmc_equivalence(opt.seed));
  out.push_back(check_prop1(opt.seed, score_scale));
  out.push_back(check_rloo(opt.seed));
  out.push_back(check_sampler_marginal(opt.seed));
  out.push_back(check_entropy_floor(opt.seed));
  return out;
}

}  // namespace mdc

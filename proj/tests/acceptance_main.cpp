// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned in code next to each check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mdc/batch.hpp"
#include "mdc/genmd4.hpp"
#include "mdc/oracle.hpp"
#include "mdc/sampler.hpp"
#include "mdc/selfcheck.hpp"
#include "mdc/trainer.hpp"

using namespace mdc;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// --- criterion 1: schedule table fidelity ----------------------------------

double table_ce_weight(const Schedule& s, double t) {
  switch (s.kind) {
    case ScheduleKind::linear:
      return -1.0 / t;
    case ScheduleKind::polynomial:
      return -s.poly_w / t;
    case ScheduleKind::cosine:
      return -std::numbers::pi / 2.0 *
             std::tan(std::numbers::pi / 2.0 * (1.0 - t));
    case ScheduleKind::geometric: {
      // closed-form table entry; the sign convention follows
      // alpha'/(1 - alpha) < 0, i.e. the log factor is log(bmin/bmax)
      const double g =
          std::pow(s.beta_min, 1.0 - t) * std::pow(s.beta_max, t);
      return std::exp(-g) / (1.0 - std::exp(-g)) * g *
             std::log(s.beta_min / s.beta_max);
    }
  }
  return 0.0;
}

Outcome criterion1() {
  Outcome out;
  const Schedule schedules[] = {
      Schedule::linear(0.0),
      Schedule::polynomial(2.5, 0.0),
      Schedule::geometric(1e-5, 20.0, 0.0),
      Schedule::cosine(0.0),
  };
  RngStream rng = derive_stream(101, "acc.schedule");
  double worst_w = 0.0, worst_fd = 0.0;
  for (const Schedule& s : schedules) {
    for (int i = 0; i < 100; ++i) {
      const double t = 0.01 + 0.98 * rng.next_double();
      const double want = table_ce_weight(s, t);
      const double got = ce_weight(s, t);
      worst_w = std::max(worst_w, std::abs(got - want) / std::abs(want));
      const double h = 1e-6;
      const double fd = (alpha(s, t + h) - alpha(s, t - h)) / (2.0 * h);
      const double ap = alpha_prime(s, t);
      worst_fd = std::max(worst_fd,
                          std::abs(ap - fd) / std::max(1e-12, std::abs(fd)));
    }
  }
  out.require(worst_w <= 1e-9, "ce_weight vs table rel err " + fmt(worst_w));
  out.require(worst_fd <= 1e-5, "alpha' vs FD rel err " + fmt(worst_fd));
  out.note("max rel err: weight " + fmt(worst_w) + ", derivative " +
           fmt(worst_fd));
  return out;
}

// --- criterion 2: process exactness -----------------------------------------

std::vector<double> matmul(const std::vector<double>& a,
                           const std::vector<double>& b, int d) {
  std::vector<double> c(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k)
      for (int j = 0; j < d; ++j) c[i * d + j] += a[i * d + k] * b[k * d + j];
  return c;
}

Outcome criterion2() {
  Outcome out;
  const Vocabulary v{4};
  const int d = v.m + 1;
  const ForwardKernel scalar(v, Schedule::cosine(1e-4));
  const ForwardKernel vector(v, VectorSchedule({2.0, 1.0, 0.5, 1.3}));
  RngStream rng = derive_stream(102, "acc.process");

  double ck = 0.0, bayes = 0.0, lemma = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    double a = rng.next_unit_open(), b = rng.next_unit_open(),
           c = rng.next_unit_open();
    if (a > b) std::swap(a, b);
    if (b > c) std::swap(b, c);
    if (a > b) std::swap(a, b);
    if (a == b || b == c) continue;
    for (const ForwardKernel* k : {&scalar, &vector}) {
      const auto prod = matmul(materialize_transition(*k, a, b),
                               materialize_transition(*k, b, c), d);
      const auto direct = materialize_transition(*k, a, c);
      for (std::size_t i = 0; i < prod.size(); ++i)
        ck = std::max(ck, std::abs(prod[i] - direct[i]));

      for (int x0 = 0; x0 < v.m; ++x0) {
        const auto ms = k->marginal(x0, a);
        const auto mt = k->marginal(x0, b);
        for (int xt : {x0, v.mask_id()}) {
          const auto post = k->reverse_posterior(xt, x0, a, b);
          for (int xs = 0; xs <= v.m; ++xs) {
            const double want =
                k->transition(xs, a, b)[xt] * ms[xs] / mt[xt];
            bayes = std::max(bayes, std::abs(post[xs] - want));
          }
        }
      }
    }
  }

  const ForwardKernel lin(v, Schedule::linear(0.0));
  for (int rep = 0; rep < 50; ++rep) {
    const double t = 0.02 + 0.96 * rng.next_double();
    const auto q = forward_rate(lin, t);
    for (int x0 = 0; x0 < v.m; ++x0) {
      const auto r = reverse_rate_given_x0(lin, x0, t);
      const auto marg = lin.marginal(x0, t);
      for (int kk = 0; kk <= v.m; ++kk) {
        if (marg[kk] <= 0.0) continue;
        for (int j = 0; j <= v.m; ++j)
          if (j != kk)
            lemma = std::max(lemma, std::abs(r.entry(kk, j) -
                                             q.entry(j, kk) * marg[j] /
                                                 marg[kk]));
      }
    }
  }

  // Taylor: residual of I + Q(t) delta decays quadratically
  double worst_ratio = 0.0;
  {
    const double t = 0.4;
    const auto q = materialize(forward_rate(scalar, t));
    double prev = -1.0;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
      const auto trans = materialize_transition(scalar, t, t + delta);
      double norm = 0.0;
      for (int j = 0; j < d; ++j) {
        double row = 0.0;
        for (int c = 0; c < d; ++c)
          row += std::abs(trans[j * d + c] - (j == c ? 1.0 : 0.0) -
                          q[j * d + c] * delta);
        norm = std::max(norm, row);
      }
      if (prev > 0.0) worst_ratio = std::max(worst_ratio, norm / prev);
      prev = norm;
    }
  }

  out.require(ck <= 1e-12, "Chapman-Kolmogorov dev " + fmt(ck));
  out.require(bayes <= 1e-12, "Bayes posterior dev " + fmt(bayes));
  out.require(lemma <= 1e-12, "rate relation dev " + fmt(lemma));
  out.require(worst_ratio <= 0.03 && worst_ratio >= 0.003,
              "Taylor decay ratio " + fmt(worst_ratio));
  out.note("CK " + fmt(ck) + ", Bayes " + fmt(bayes) + ", lemma " +
           fmt(lemma) + ", Taylor ratio " + fmt(worst_ratio));
  return out;
}

// --- criterion 3: loss equivalences ------------------------------------------

TabularPredictor fixture_predictor(Vocabulary v, int n, std::uint64_t seed,
                                   const TokenSequence* boost = nullptr) {
  TabularPredictor p(v, TabularContext::full_state, n);
  RngStream rng = derive_stream(seed, "acc.pred");
  for (auto& x : p.params()) x = 0.5 * rng.next_normal();
  if (boost) {
    // nudge every context row toward the fixture datum so the model beats
    // the uniform baseline (needed for the grid-refinement monotonicity)
    const int m = v.m;
    for (int row = 0; row < p.rows(); ++row)
      p.params()[static_cast<std::size_t>(row) * m +
                 boost->ids[row % boost->size()]] += 2.0;
  }
  return p;
}

Outcome criterion3() {
  Outcome out;
  const Vocabulary v{3};
  const ForwardKernel k(v, Schedule::linear(0.0));
  const TokenSequence x0(v, {1, 2});
  TabularPredictor p1 = fixture_predictor(v, 2, 1);
  TabularPredictor p2 = fixture_predictor(v, 2, 2);

  const double ce1 = oracle::exact_loss(LossKind::continuous_ce, x0, p1, &k,
                                        nullptr, 1e-5, 64);
  const double sc1 = oracle::exact_loss(LossKind::score_entropy, x0, p1, &k,
                                        nullptr, 1e-5, 64);
  out.require(std::abs(sc1 - ce1) <= 1e-9,
              "L_score - L_inf_ce = " + fmt(sc1 - ce1));

  const double ce2 = oracle::exact_loss(LossKind::continuous_ce, x0, p2, &k,
                                        nullptr, 1e-5, 64);
  const double ct1 =
      oracle::exact_loss(LossKind::ctmc, x0, p1, &k, nullptr, 1e-5, 64);
  const double ct2 =
      oracle::exact_loss(LossKind::ctmc, x0, p2, &k, nullptr, 1e-5, 64);
  out.require(std::abs((ct1 - ct2) - (ce1 - ce2)) <= 1e-9,
              "ctmc theta-difference dev " + fmt((ct1 - ct2) - (ce1 - ce2)));

  std::vector<double> gce(p1.param_count(), 0.0), gct(p1.param_count(), 0.0),
      gsc(p1.param_count(), 0.0);
  oracle::exact_loss_grad(LossKind::continuous_ce, x0, p1, &k, nullptr, 1e-5,
                          64, gce);
  oracle::exact_loss_grad(LossKind::ctmc, x0, p1, &k, nullptr, 1e-5, 64, gct);
  oracle::exact_loss_grad(LossKind::score_entropy, x0, p1, &k, nullptr, 1e-5,
                          64, gsc);
  double nce = 0.0, dct = 0.0, dsc = 0.0;
  for (std::size_t i = 0; i < gce.size(); ++i) {
    nce += gce[i] * gce[i];
    dct += (gct[i] - gce[i]) * (gct[i] - gce[i]);
    dsc += (gsc[i] - gce[i]) * (gsc[i] - gce[i]);
  }
  const double rel_ct = std::sqrt(dct / nce), rel_sc = std::sqrt(dsc / nce);
  out.require(rel_ct <= 1e-6, "ctmc gradient rel dev " + fmt(rel_ct));
  out.require(rel_sc <= 1e-6, "score gradient rel dev " + fmt(rel_sc));

  // grid refinement: the full bound is nonincreasing in T and dominated by
  // the continuous limit, for a better-than-uniform predictor
  TabularPredictor good = fixture_predictor(v, 2, 3, &x0);
  const double t_min = 1e-7;
  double l_inf = oracle::exact_loss(LossKind::continuous_ce, x0, good, &k,
                                    nullptr, t_min, 64);
  const auto [rec, prior] = boundary_terms(x0, k, t_min);
  l_inf += (rec + prior) * x0.size();
  double prev = -1.0;
  bool monotone = true, bounded = true;
  for (int T = 2; T <= 64; T *= 2) {
    const double lt = oracle::exact_discrete_loss(x0, T, good, k, true);
    bounded = bounded && lt >= l_inf - 1e-9;
    if (prev >= 0.0) monotone = monotone && lt <= prev + 1e-12;
    prev = lt;
  }
  out.require(monotone, "L_T not nonincreasing in T");
  out.require(bounded, "L_T below L_inf");
  out.note("grad rel dev: ctmc " + fmt(rel_ct) + ", score " + fmt(rel_sc));
  return out;
}

// --- criterion 4: schedule invariance ---------------------------------------

Outcome criterion4() {
  Outcome out;
  const Vocabulary v{3};
  const TokenSequence x0(v, {1, 2});
  TabularPredictor p(v, TabularContext::shared);
  const double logits[3] = {0.7, -0.2, 0.4};
  p.set_shared_logits(logits);

  const Schedule schedules[] = {
      Schedule::linear(0.0),
      Schedule::polynomial(2.0, 0.0),
      Schedule::polynomial(0.5, 0.0),
      Schedule::cosine(0.0),
  };
  const double lambda_hi = log_snr(Schedule::linear(0.0), 1e-6);
  double lo = 1e300, hi = -1e300;
  for (const Schedule& s : schedules) {
    const double t_lo = log_snr_inv(s, lambda_hi);
    const ForwardKernel k(v, s);
    const auto q = oracle::gauss_legendre_log_panels(24, t_lo, 1.0);
    const double value =
        oracle::exact_loss_q(LossKind::continuous_ce, x0, p, &k, nullptr, q);
    lo = std::min(lo, value);
    hi = std::max(hi, value);
  }
  out.require(hi - lo <= 1e-6, "spread " + fmt(hi - lo));
  out.note("value spread across schedules " + fmt(hi - lo));
  return out;
}

// --- criterion 5: analytic optima -------------------------------------------

Outcome criterion5() {
  Outcome out;
  // (a) i.i.d. uniform, m = 27, single tokens
  {
    const int m = 27;
    const auto src = SyntheticSource::iid(std::vector<double>(m, 1.0 / m));
    const CorpusData corpus =
        ingest_text(synth_generate(src, 1 << 18, 50), m + 1, 1, 0.02);
    TrainConfig cfg;
    cfg.batch = 64;
    cfg.steps = 1200;
    cfg.lr = 0.1;
    cfg.warmup = 50;
    cfg.ema_decay = 0.99;  // desk-scale horizon; 0.9999 suits 1M-step runs
    cfg.predictor = "tabular ctx=shared n=1 cap=8";
    cfg.seed = 51;
    const TrainResult r = train(cfg, corpus, exec::Mode::parallel);
    const auto pred = r.checkpoint.make_predictor(true);
    const ForwardKernel k(corpus.vocab.vocabulary(), cfg.schedule);
    double loss = 0.0;
    for (int x = 0; x < m; ++x) {
      const TokenSequence x0(corpus.vocab.vocabulary(), {x});
      loss += oracle::exact_loss(LossKind::continuous_ce, x0, *pred, &k,
                                 nullptr, cfg.t_min, 64) /
              m;
    }
    const double target = std::log(static_cast<double>(m));
    out.require(loss >= target * 0.99 && loss <= target * 1.01,
                "uniform-27 loss " + fmt(loss) + " vs log 27 = " +
                    fmt(target));
    out.note("uniform-27 loss " + fmt(loss) + " (log 27 = " + fmt(target) +
             ")");
  }
  // (b) 2-state Markov source, order-1 neighbor context
  {
    const auto src = SyntheticSource::markov(2, {0.9, 0.1, 0.1, 0.9});
    const double floor = synth_entropy(src) / std::numbers::ln2;
    const CorpusData corpus =
        ingest_text(synth_generate(src, 1 << 20, 52), 3, 64, 0.02);
    TrainConfig cfg;
    cfg.batch = 32;
    cfg.steps = 4000;
    cfg.lr = 0.1;
    cfg.warmup = 100;
    cfg.ema_decay = 0.99;
    cfg.predictor = "tabular ctx=neighbors n=1 cap=8";
    cfg.seed = 53;
    const TrainResult r = train(cfg, corpus, exec::Mode::parallel);
    const BpcResult bpc =
        evaluate_bpc(r.checkpoint, corpus.valid, 32, 54, exec::Mode::parallel);
    out.require(bpc.bpc >= floor,
                "bpc " + fmt(bpc.bpc) + " below the entropy floor " +
                    fmt(floor));
    out.require(bpc.bpc <= 1.05 * floor,
                "bpc " + fmt(bpc.bpc) + " more than 5% above floor " +
                    fmt(floor));
    out.note("markov bpc " + fmt(bpc.bpc) + " +/- " + fmt(bpc.std_error) +
             " vs floor " + fmt(floor));
  }
  return out;
}

// --- criterion 6: RLOO correctness -------------------------------------------

Outcome criterion6() {
  Outcome out;
  const Vocabulary v{2};
  const TokenSequence x0(v, {0});
  TabularPredictor p(v, TabularContext::shared);
  const double logits[2] = {std::log(0.7), std::log(0.3)};
  p.set_shared_logits(logits);
  const VectorSchedule vs({1.3, 0.7});
  const double t_min = 1e-5;
  const auto exact = oracle::exact_w_gradient(x0, p, vs, t_min, 512);

  const int draws = 100000;
  RngStream r1 = derive_stream(106, "acc.rloo");
  double mean[2] = {0, 0}, m2[2] = {0, 0};
  for (int d = 0; d < draws; ++d) {
    const WGradient g = rloo_w_gradient(x0, p, vs, r1, t_min);
    for (int i = 0; i < 2; ++i) {
      const double delta = g.grad_w[i] - mean[i];
      mean[i] += delta / (d + 1);
      m2[i] += delta * (g.grad_w[i] - mean[i]);
    }
  }
  double worst_z = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double se = std::sqrt(m2[i] / (draws - 1.0) / draws);
    worst_z = std::max(worst_z, std::abs(mean[i] - exact[i]) / se);
  }
  out.require(worst_z <= 4.0, "RLOO |z| = " + fmt(worst_z));

  RngStream r2 = derive_stream(107, "acc.rloo.path");
  double pmean = 0.0, pm2 = 0.0;
  for (int d = 0; d < draws; ++d) {
    const auto g = pathwise_only_w_gradient(x0, p, vs, r2, t_min);
    const double delta = g[0] - pmean;
    pmean += delta / (d + 1);
    pm2 += delta * (g[0] - pmean);
  }
  const double pse = std::sqrt(pm2 / (draws - 1.0) / draws);
  const double bias_z = std::abs(pmean - exact[0]) / pse;
  out.require(bias_z > 5.0, "pathwise bias |z| = " + fmt(bias_z));
  out.note("RLOO |z| " + fmt(worst_z) + "; pathwise bias |z| " + fmt(bias_z));
  return out;
}

// --- criterion 7: sampler marginal exactness ---------------------------------

Outcome criterion7() {
  Outcome out;
  const Vocabulary v{3};
  const ForwardKernel k(v, Schedule::linear(0.0));
  const std::vector<double> probs = {0.5, 0.3, 0.2};
  TabularPredictor p(v, TabularContext::shared);
  std::vector<double> logits(3);
  for (int i = 0; i < 3; ++i) logits[i] = std::log(probs[i]);
  p.set_shared_logits(logits);

  for (int steps : {10, 1000}) {
    SamplerConfig cfg;
    cfg.steps = steps;
    std::vector<long long> counts(3, 0);
    const int n = 100000;
    const auto samples = batch_sample(p, k, 1, cfg, n, 1000 + steps,
                                      "acc.sampler", 0, exec::Mode::parallel);
    for (const auto& s : samples) counts[s.ids[0]] += 1;
    const double stat = oracle::chi_square_stat(counts, probs);
    out.require(stat <= 13.815510557964274,
                "chi-square(T=" + std::to_string(steps) + ") = " + fmt(stat));
    out.note("chi2(T=" + std::to_string(steps) + ") " + fmt(stat));
  }

  // per-step unmask timing: masked tokens unmask with probability xi_{s,t}
  {
    SamplerConfig cfg;
    cfg.steps = 10;
    RngStream rng = derive_stream(108, "acc.timing");
    const int chains = 400, tokens = 50;
    std::vector<long long> masked_before(cfg.steps + 1, 0),
        unmasked_during(cfg.steps + 1, 0);
    for (int c = 0; c < chains; ++c) {
      const auto snaps = trajectory(p, k, tokens, cfg, 1, rng);
      for (int i = 1; i < static_cast<int>(snaps.size()); ++i) {
        for (int n = 0; n < tokens; ++n) {
          if (snaps[i - 1].ids[n] == v.mask_id()) {
            masked_before[i] += 1;
            if (snaps[i].ids[n] != v.mask_id()) unmasked_during[i] += 1;
          }
        }
      }
    }
    double worst_z = 0.0;
    for (int i = 1; i <= cfg.steps; ++i) {
      // snapshot i covers the reverse step t = (steps - i + 1)/steps -> s
      const double t = static_cast<double>(cfg.steps - i + 1) / cfg.steps;
      const double s = t - 1.0 / cfg.steps;
      const double xi = k.unmask_prob(0, s, t);
      if (masked_before[i] == 0) continue;
      const double phat =
          static_cast<double>(unmasked_during[i]) / masked_before[i];
      const double sigma =
          std::sqrt(std::max(xi * (1.0 - xi), 1e-12) /
                    static_cast<double>(masked_before[i]));
      if (sigma > 0.0)
        worst_z = std::max(worst_z, std::abs(phat - xi) / sigma);
    }
    out.require(worst_z <= 4.0, "unmask-timing |z| = " + fmt(worst_z));
    out.note("unmask timing worst |z| " + fmt(worst_z));
  }
  return out;
}

// --- criterion 8: GenMD4 reduction and gain ----------------------------------

Outcome criterion8() {
  Outcome out;
  // reduction at w = 1
  {
    const Vocabulary v{3};
    const TokenSequence x0(v, {0, 2});
    TabularPredictor p = fixture_predictor(v, 2, 81);
    const VectorSchedule ones({1.0, 1.0, 1.0});
    const ForwardKernel lin(v, Schedule::linear(0.0));
    const double g = oracle::exact_loss(LossKind::genmd4, x0, p, nullptr,
                                        &ones, 1e-5, 64);
    const double ce = oracle::exact_loss(LossKind::continuous_ce, x0, p, &lin,
                                         nullptr, 1e-5, 64);
    out.require(std::abs(g - ce) <= 1e-9 * std::max(1.0, std::abs(ce)),
                "w=1 reduction dev " + fmt(g - ce));
  }

  // end-to-end gain on a skewed source: value 'a' is rare but pins its
  // right neighbor, so a state-dependent schedule has something to learn
  const auto src = SyntheticSource::markov(3, {0.05, 0.90, 0.05,   //
                                               0.10, 0.45, 0.45,   //
                                               0.10, 0.45, 0.45});
  int wins = 0;
  double max_w_move = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const CorpusData corpus =
        ingest_text(synth_generate(src, 1 << 17, 820 + seed), 4, 32, 0.05);
    TrainConfig base;
    base.batch = 32;
    base.steps = 2500;
    base.lr = 0.1;
    base.warmup = 50;
    base.ema_decay = 0.99;
    base.predictor = "tabular ctx=neighbors n=1 cap=8";
    base.seed = 830 + seed;

    TrainConfig lin = base;
    TrainConfig gen = base;
    gen.loss = LossKind::genmd4;
    gen.genmd4 = true;
    gen.w_lr = 0.003;

    const TrainResult rl = train(lin, corpus, exec::Mode::parallel);
    const TrainResult rg = train(gen, corpus, exec::Mode::parallel);

    std::string wtxt;
    for (float wi : rg.checkpoint.w) {
      max_w_move = std::max(max_w_move,
                            std::abs(static_cast<double>(wi) - 1.0));
      wtxt += (wtxt.empty() ? "" : ",") + fmt(wi);
    }

    const BpcResult bl = evaluate_bpc(rl.checkpoint, corpus.valid, 64,
                                      840 + seed, exec::Mode::parallel);
    const BpcResult bg = evaluate_bpc(rg.checkpoint, corpus.valid, 64,
                                      840 + seed, exec::Mode::parallel);
    const double se = std::hypot(bl.std_error, bg.std_error);
    if (bg.bpc <= bl.bpc + 2.0 * se) ++wins;
    out.note("seed " + std::to_string(seed) + ": genmd4 " + fmt(bg.bpc) +
             " (w " + wtxt + ") vs linear " + fmt(bl.bpc) + " (se " +
             fmt(se) + ")");
  }
  out.require(wins == 5,
              "genmd4 beat linear + 2se on only " + std::to_string(wins) +
                  "/5 seeds");
  out.require(max_w_move > 0.05,
              "w barely moved (" + fmt(max_w_move) + ")");
  return out;
}

// --- criterion 9: variance ordering ------------------------------------------

Outcome criterion9() {
  Outcome out;
  // Trained-model regime: the analytic CE estimator's per-draw values
  // shrink with the log-likelihood of the data under mu, while the rate
  // form keeps its model-free rate terms. A near-optimal predictor on a
  // skewed sequence makes the gap plain.
  const Vocabulary v{8};
  const Schedule sched = Schedule::linear(1e-4);
  const ForwardKernel k(v, sched);
  const TokenSequence x0(v, {2, 2, 2, 2, 2, 2});
  TabularPredictor p(v, TabularContext::shared);
  std::vector<double> logits(8, 0.0);
  logits[2] = 4.0;  // mu[2] ~ 0.89
  p.set_shared_logits(logits);

  McOptions opt;
  opt.draws = 20000;
  RngStream r1 = derive_stream(110, "acc.var.ce");
  const auto ce = loss_continuous_ce(x0, p, k, r1, opt);
  RngStream r2 = derive_stream(111, "acc.var.ds");
  const auto ds = loss_ctmc_doubly_stochastic(x0, p, k, r2, opt);
  const double ratio = ds.variance() / ce.variance();
  out.require(ratio >= 2.0, "variance ratio " + fmt(ratio));
  out.note("per-draw variance: ce " + fmt(ce.variance()) + ", doubly " +
           fmt(ds.variance()) + " (ratio " + fmt(ratio) + ")");

  // Antithetic sampling does not increase variance. The cosine schedule
  // gives the integrand a strong time trend (which reflection cancels),
  // and the bounded-weight window keeps the empirical variances stable.
  const ForwardKernel kc(v, Schedule::cosine(1e-4));
  double var_plain = 0.0, var_anti = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    McOptions plain;
    plain.draws = 2000;
    plain.t_min = 0.01;
    RngStream rp = derive_stream(seed, "acc.var.plain");
    const auto ep = loss_continuous_ce(x0, p, kc, rp, plain);
    std::vector<double> pairs(ep.per_draw.size() / 2);
    double acc = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      pairs[i] = 0.5 * (ep.per_draw[2 * i] + ep.per_draw[2 * i + 1]);
      acc += pairs[i];
    }
    const double mean = acc / pairs.size();
    for (double x : pairs) var_plain += (x - mean) * (x - mean);

    McOptions anti;
    anti.draws = 1000;
    anti.antithetic = true;
    anti.t_min = 0.01;
    RngStream ra = derive_stream(seed, "acc.var.anti");
    const auto ea = loss_continuous_ce(x0, p, kc, ra, anti);
    for (double x : ea.per_draw) var_anti += (x - ea.value) * (x - ea.value);
  }
  out.require(var_anti <= var_plain * 1.05,
              "antithetic variance " + fmt(var_anti) + " vs plain " +
                  fmt(var_plain));
  out.note("antithetic/plain pair variance " + fmt(var_anti / var_plain));
  return out;
}

// --- criterion 10: engineering -----------------------------------------------

Outcome criterion10() {
  Outcome out;
  // checkpoint round-trip and bit-reproducible training
  const auto src = SyntheticSource::iid({0.4, 0.3, 0.2, 0.1});
  const CorpusData corpus =
      ingest_text(synth_generate(src, 1 << 14, 60), 5, 16, 0.05);
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.steps = 20;
  cfg.lr = 0.05;
  cfg.warmup = 4;
  cfg.predictor = "mlp embed=4 hidden=8 layers=1 window=1 lclip=10";
  cfg.seed = 61;

  const TrainResult a = train(cfg, corpus, exec::Mode::parallel);
  const TrainResult b = train(cfg, corpus, exec::Mode::serial);
  out.require(a.checkpoint.params == b.checkpoint.params &&
                  a.checkpoint.ema == b.checkpoint.ema,
              "fixed-seed runs differ across modes");

  const std::string p1 = "/tmp/mdc_acc_a.mdck", p2 = "/tmp/mdc_acc_b.mdck";
  save_checkpoint(a.checkpoint, p1);
  save_checkpoint(load_checkpoint(p1), p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::ostringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  out.require(!s1.str().empty() && s1.str() == s2.str(),
              "checkpoint round-trip not byte-identical");
  std::remove(p1.c_str());
  std::remove(p2.c_str());

  // selfcheck green
  int fails = 0;
  for (const auto& r : run_selfcheck({})) fails += r.pass ? 0 : 1;
  out.require(fails == 0, std::to_string(fails) + " selfcheck failures");

  // boundary terms against independently computed shifted-alpha values
  {
    const Vocabulary v{27};
    const double eps = 1e-4, t_min = 1e-5;
    const ForwardKernel k(v, Schedule::linear(eps));
    const TokenSequence x0(v, {3, 9});
    const auto [rec, prior] = boundary_terms(x0, k, t_min);
    const double alpha_tmin = (1.0 - 2.0 * eps) * (1.0 - t_min) + eps;
    const double alpha_one = eps;
    out.require(std::abs(rec - (1.0 - alpha_tmin) * std::log(27.0)) <= 1e-15,
                "reconstruction " + fmt(rec));
    out.require(std::abs(prior - alpha_one * std::log(27.0)) <= 1e-15,
                "prior KL " + fmt(prior));
  }
  return out;
}

struct Criterion {
  int index;
  const char* name;
  double budget_seconds;
  Outcome (*fn)();
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "schedule table fidelity", 1.0, criterion1},
      {2, "forward/reverse process exactness", 5.0, criterion2},
      {3, "loss equivalence suite", 30.0, criterion3},
      {4, "schedule invariance", 5.0, criterion4},
      {5, "analytic optima", 300.0, criterion5},
      {6, "RLOO correctness", 60.0, criterion6},
      {7, "sampler marginal exactness", 60.0, criterion7},
      {8, "GenMD4 reduction and gain", 600.0, criterion8},
      {9, "estimator variance ordering", 120.0, criterion9},
      {10, "engineering", 120.0, criterion10},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (secs > c.budget_seconds) {
      out.pass = false;
      out.detail += (out.detail.empty() ? "" : "; ") + std::string("over ") +
                    fmt(c.budget_seconds) + "s budget";
    }
    std::printf("[%s] criterion %d: %s (%.2fs)%s%s\n",
                out.pass ? "PASS" : "FAIL", c.index, c.name, secs,
                out.detail.empty() ? "" : " -- ", out.detail.c_str());
    failures += out.pass ? 0 : 1;
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}

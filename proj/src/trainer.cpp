#include "mdc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "mdc/genmd4.hpp"

namespace mdc {

TrainConfig parse_train_config(const ConfigMap& c) {
  TrainConfig cfg;
  cfg.loss = loss_kind_from_name(cfg_str(c, "loss", "ce"));
  Schedule s;
  s.kind = schedule_kind_from_name(cfg_str(c, "schedule", "linear"));
  s.poly_w = cfg_double(c, "poly_w", 2.0);
  s.beta_min = cfg_double(c, "beta_min", 1e-5);
  s.beta_max = cfg_double(c, "beta_max", 20.0);
  s.eps = cfg_double(c, "eps", kDefaultEps);
  cfg.schedule = s;
  cfg.discrete_T = cfg_int(c, "discrete_T", 32);
  cfg.batch = cfg_int(c, "batch", 32);
  cfg.steps = cfg_int(c, "steps", 1000);
  cfg.lr = cfg_double(c, "lr", 1e-2);
  cfg.warmup = cfg_int(c, "warmup", 100);
  cfg.cosine_decay = cfg_bool(c, "cosine_decay", true);
  cfg.weight_decay = cfg_double(c, "weight_decay", 0.0);
  cfg.adam_beta1 = cfg_double(c, "adam_beta1", 0.9);
  cfg.adam_beta2 = cfg_double(c, "adam_beta2", 0.999);
  cfg.adam_eps = cfg_double(c, "adam_eps", 1e-8);
  cfg.ema_decay = cfg_double(c, "ema_decay", 0.9999);
  cfg.antithetic = cfg_bool(c, "antithetic", true);
  cfg.t_min = cfg_double(c, "t_min", kTimeFloor);
  cfg.genmd4 = cfg_bool(c, "genmd4", false);
  cfg.w_lr = cfg_double(c, "w_lr", 0.0);
  cfg.genmd4_l2 = cfg_double(c, "genmd4_l2", 0.0);
  cfg.w_log_bound = cfg_double(c, "w_log_bound", 3.0);
  cfg.seed = cfg_u64(c, "seed", 0);
  cfg.predictor = cfg_str(c, "predictor", cfg.predictor);
  cfg.diagnostics_path = cfg_str(c, "diagnostics", "");
  if (cfg.batch < 1 || cfg.steps < 0)
    throw std::runtime_error("train config: batch >= 1, steps >= 0");
  if (!(cfg.lr > 0.0) || !(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0))
    throw std::runtime_error("train config: bad rates");
  return cfg;
}

namespace {

std::vector<float> to_f32(std::span<const double> xs) {
  std::vector<float> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    out[i] = static_cast<float>(xs[i]);
  return out;
}

double lr_at(const TrainConfig& cfg, int step) {
  if (cfg.warmup > 0 && step < cfg.warmup)
    return cfg.lr * (step + 1) / static_cast<double>(cfg.warmup);
  if (!cfg.cosine_decay) return cfg.lr;
  const int decay_steps = std::max(1, cfg.steps - cfg.warmup);
  const double frac =
      std::min(1.0, (step - cfg.warmup) / static_cast<double>(decay_steps));
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

// Antithetic pairing across the batch: B/2 uniform draws plus their
// reflections, shuffled across items (odd batches give the last item its
// own draw).
std::vector<double> batch_times(const TrainConfig& cfg, int step) {
  RngStream rng = derive_stream(cfg.seed, "train.time", step);
  const int b = cfg.batch;
  std::vector<double> us(b);
  if (cfg.antithetic) {
    const int half = b / 2;
    for (int i = 0; i < half; ++i) {
      const double u = rng.next_unit_open();
      us[2 * i] = u;
      us[2 * i + 1] = 1.0 - u;
    }
    if (b % 2 == 1) us[b - 1] = rng.next_unit_open();
    for (int i = b - 1; i > 0; --i)
      std::swap(us[i], us[rng.next_below(i + 1)]);
  } else {
    for (int i = 0; i < b; ++i) us[i] = rng.next_unit_open();
  }
  for (double& u : us) u = cfg.t_min + (1.0 - cfg.t_min) * u;
  return us;
}

Checkpoint assemble_checkpoint(const TrainConfig& cfg, const CorpusData& corpus,
                               const Predictor& pred,
                               std::span<const double> ema,
                               const AdamState& adam,
                               std::span<const double> w, int step) {
  Checkpoint ck;
  ck.schedule = cfg.schedule;
  ck.vocab = corpus.vocab;
  ck.arch = pred.describe();
  ck.loss = cfg.loss;
  ck.chunk_len = corpus.chunk_len;
  ck.step = step;
  ck.seed = cfg.seed;
  ck.params = to_f32(pred.params());
  ck.ema = to_f32(ema);
  ck.adam_m = to_f32(adam.m);
  ck.adam_v = to_f32(adam.v);
  ck.adam_step = adam.step;
  ck.w = to_f32(w);
  return ck;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const CorpusData& corpus,
                  exec::Mode mode, std::ostream* metrics_out) {
  if (corpus.train.empty()) throw std::runtime_error("train: empty corpus");
  const Vocabulary vocab = corpus.vocab.vocabulary();
  auto pred = make_predictor(cfg.predictor, vocab, cfg.schedule, cfg.seed);
  const std::size_t np = pred->param_count();
  if (np == 0) throw std::runtime_error("train: predictor has no parameters");

  const ForwardKernel kernel(vocab, cfg.schedule);
  std::vector<double> log_w(vocab.m, 0.0);
  std::vector<double> w(vocab.m, 1.0);
  const double w_lr = cfg.w_lr > 0.0 ? cfg.w_lr : cfg.lr / 10.0;

  std::vector<double> ema(pred->params().begin(), pred->params().end());
  AdamState adam(np);
  AdamState w_adam(static_cast<std::size_t>(vocab.m));
  std::vector<double> grad(np);
  BatchGrad bg(*pred, mode);
  const TimeGrid grid{cfg.discrete_T};

  TrainResult result;
  if (metrics_out) {
    *metrics_out << "step,loss_nats_per_token,grad_norm";
    if (cfg.genmd4)
      for (int i = 0; i < vocab.m; ++i) *metrics_out << ",w_" << i;
    *metrics_out << "\n";
  }

  std::vector<TokenSequence> items;
  items.reserve(cfg.batch);
  std::vector<double> w_grad(vocab.m);

  for (int step = 0; step < cfg.steps; ++step) {
    // batch selection
    RngStream bstream = derive_stream(cfg.seed, "train.batch", step);
    items.clear();
    for (int i = 0; i < cfg.batch; ++i) {
      const auto idx = bstream.next_below(
          static_cast<std::uint32_t>(corpus.train.size()));
      items.emplace_back(vocab, corpus.train[idx]);
    }
    const int tokens = items.front().size();

    std::fill(grad.begin(), grad.end(), 0.0);
    double loss_mean;
    const std::uint64_t base = static_cast<std::uint64_t>(step) * cfg.batch;
    std::optional<VectorSchedule> vs;
    if (cfg.genmd4 || cfg.loss == LossKind::genmd4) vs.emplace(w);

    const auto snapshot_and_abort = [&](const std::string& why) {
      if (!cfg.diagnostics_path.empty())
        save_checkpoint(
            assemble_checkpoint(cfg, corpus, *pred, ema, adam,
                                cfg.genmd4 ? std::span<const double>(w)
                                           : std::span<const double>(),
                                step),
            cfg.diagnostics_path);
      throw std::runtime_error("train: " + why + " at step " +
                               std::to_string(step) +
                               (cfg.diagnostics_path.empty()
                                    ? ""
                                    : "; snapshot at " + cfg.diagnostics_path));
    };

    try {
      if (cfg.loss == LossKind::discrete) {
        RngStream tstream = derive_stream(cfg.seed, "train.time", step);
        std::vector<int> item_i(cfg.batch);
        for (int i = 0; i < cfg.batch; ++i)
          item_i[i] = 2 + static_cast<int>(tstream.next_below(grid.T - 1));
        loss_mean = bg.run_discrete(items, item_i, grid, *pred, kernel,
                                    cfg.seed, "train.item", base, grad);
      } else {
        const std::vector<double> ts = batch_times(cfg, step);
        loss_mean = bg.run(cfg.loss, items, ts, *pred,
                           cfg.loss == LossKind::genmd4 ? nullptr : &kernel,
                           vs ? &*vs : nullptr, cfg.t_min, cfg.seed,
                           "train.item", base, grad);
      }
    } catch (const std::runtime_error& e) {
      snapshot_and_abort(std::string("numeric failure (") + e.what() + ")");
      throw;  // unreachable
    }

    if (!std::isfinite(loss_mean)) snapshot_and_abort("non-finite loss");

    AdamConfig ac;
    ac.lr = lr_at(cfg, step);
    ac.beta1 = cfg.adam_beta1;
    ac.beta2 = cfg.adam_beta2;
    ac.eps = cfg.adam_eps;
    ac.weight_decay = cfg.weight_decay;
    try {
      adamw_step(pred->params(), grad, adam, ac);
    } catch (const std::runtime_error& e) {
      snapshot_and_abort(std::string("numeric failure (") + e.what() + ")");
      throw;  // unreachable
    }
    ema_update(ema, pred->params(), cfg.ema_decay);

    if (cfg.genmd4) {
      // RLOO gradient for the schedule exponents, optimized in log space to
      // keep w_i > 0.
      std::fill(w_grad.begin(), w_grad.end(), 0.0);
      for (int i = 0; i < cfg.batch; ++i) {
        RngStream wrng = derive_stream(cfg.seed, "train.w", base + i);
        const WGradient wg =
            rloo_w_gradient(items[i], *pred, *vs, wrng, cfg.t_min);
        for (int j = 0; j < vocab.m; ++j) w_grad[j] += wg.grad_w[j];
      }
      for (int j = 0; j < vocab.m; ++j)
        w_grad[j] = w[j] * (w_grad[j] / cfg.batch) + cfg.genmd4_l2 * log_w[j];
      AdamConfig wc;
      wc.lr = w_lr;
      adamw_step(log_w, w_grad, w_adam, wc);
      for (int j = 0; j < vocab.m; ++j) {
        log_w[j] = std::clamp(log_w[j], -cfg.w_log_bound, cfg.w_log_bound);
        w[j] = std::exp(log_w[j]);
      }
    }

    MetricsRow row;
    row.step = step;
    row.loss_per_token = loss_mean / tokens;
    double gn = 0.0;
    for (double g : grad) gn += g * g;
    row.grad_norm = std::sqrt(gn);
    if (cfg.genmd4) row.w = w;
    if (metrics_out) {
      *metrics_out << row.step << "," << row.loss_per_token << ","
                   << row.grad_norm;
      for (double wi : row.w) *metrics_out << "," << wi;
      *metrics_out << "\n";
    }
    result.metrics.push_back(std::move(row));
  }

  result.checkpoint =
      assemble_checkpoint(cfg, corpus, *pred, ema, adam,
                          cfg.genmd4 ? std::span<const double>(w)
                                     : std::span<const double>(),
                          cfg.steps);
  return result;
}

BpcResult evaluate_bpc(const Checkpoint& ckpt,
                       const std::vector<std::vector<int>>& chunks,
                       int draws_per_chunk, std::uint64_t seed,
                       exec::Mode mode) {
  if (chunks.empty() || draws_per_chunk < 1)
    throw std::invalid_argument("evaluate_bpc: need chunks and draws >= 1");
  const auto pred = ckpt.make_predictor(/*use_ema=*/true);
  const Vocabulary vocab = ckpt.vocab.vocabulary();
  const double t_min = kTimeFloor;
  const double span = 1.0 - t_min;

  std::optional<VectorSchedule> vs;
  if (!ckpt.w.empty()) {
    std::vector<double> w(ckpt.w.begin(), ckpt.w.end());
    vs.emplace(std::move(w));
  }
  const ForwardKernel kernel =
      vs ? ForwardKernel(vocab, *vs) : ForwardKernel(vocab, ckpt.schedule);

  const std::size_t total =
      chunks.size() * static_cast<std::size_t>(draws_per_chunk);
  std::vector<double> slots(total);
  exec::parallel_for(total, mode, [&](std::size_t idx) {
    const std::size_t c = idx / draws_per_chunk;
    RngStream rng = derive_stream(seed, "eval", idx);
    const TokenSequence x0(vocab, chunks[c]);
    const auto [rec, prior] = boundary_terms(x0, kernel, t_min);
    const double t = t_min + span * rng.next_unit_open();
    const TokenSequence xt = kernel.sample_forward(x0, t, rng);
    const double integrand =
        vs ? genmd4_integrand(x0, xt, t, *pred, *vs)
           : ce_integrand(x0, xt, t, *pred, kernel);
    const double nats = span * integrand + (rec + prior) * x0.size();
    slots[idx] = nats / (x0.size() * std::numbers::ln2);
  });

  BpcResult r;
  r.draws = static_cast<int>(total);
  r.bpc = exec::pairwise_sum(slots) / static_cast<double>(total);
  double var = 0.0;
  for (double v : slots) var += (v - r.bpc) * (v - r.bpc);
  if (total > 1) var /= static_cast<double>(total - 1);
  r.std_error = std::sqrt(var / static_cast<double>(total));
  return r;
}

}  // namespace mdc

#include "mdc/batch.hpp"

#include <stdexcept>

namespace mdc {

namespace {

double one_item_loss(LossKind kind, const TokenSequence& x0,
                     const Predictor& p, const ForwardKernel* k,
                     const VectorSchedule* vs, const McOptions& opt,
                     RngStream rng) {
  switch (kind) {
    case LossKind::continuous_ce:
      return loss_continuous_ce(x0, p, *k, rng, opt).value;
    case LossKind::ctmc:
      return loss_ctmc(x0, p, *k, rng, opt).value;
    case LossKind::score_entropy: {
      ScoreView sv(p, *k->scalar_schedule());
      return loss_score_entropy(x0, sv, *k, rng, opt).value;
    }
    case LossKind::maskgit:
      return loss_maskgit(x0, p, *k, rng, opt).value;
    case LossKind::genmd4:
      return loss_genmd4(x0, p, *vs, rng, opt).value;
    case LossKind::discrete:
      throw std::invalid_argument("batch_loss: L_T not supported here");
  }
  throw std::logic_error("batch_loss: bad kind");
}

BatchLossResult finish(std::vector<double> per_item) {
  BatchLossResult r;
  r.mean = per_item.empty()
               ? 0.0
               : exec::pairwise_sum(per_item) / static_cast<double>(per_item.size());
  r.per_item = std::move(per_item);
  return r;
}

}  // namespace

BatchLossResult batch_loss_serial(LossKind kind,
                                  const std::vector<TokenSequence>& items,
                                  const Predictor& p, const ForwardKernel* k,
                                  const VectorSchedule* vs,
                                  const McOptions& opt, std::uint64_t seed,
                                  std::string_view label,
                                  std::uint64_t base_index) {
  std::vector<double> per_item(items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    per_item[i] = one_item_loss(kind, items[i], p, k, vs, opt,
                                derive_stream(seed, label, base_index + i));
  return finish(std::move(per_item));
}

BatchLossResult batch_loss_parallel(LossKind kind,
                                    const std::vector<TokenSequence>& items,
                                    const Predictor& p, const ForwardKernel* k,
                                    const VectorSchedule* vs,
                                    const McOptions& opt, std::uint64_t seed,
                                    std::string_view label,
                                    std::uint64_t base_index) {
  std::vector<double> per_item(items.size());
  exec::parallel_for(items.size(), exec::Mode::parallel, [&](std::size_t i) {
    per_item[i] = one_item_loss(kind, items[i], p, k, vs, opt,
                                derive_stream(seed, label, base_index + i));
  });
  return finish(std::move(per_item));
}

BatchLossResult batch_loss(LossKind kind,
                           const std::vector<TokenSequence>& items,
                           const Predictor& p, const ForwardKernel* k,
                           const VectorSchedule* vs, const McOptions& opt,
                           std::uint64_t seed, std::string_view label,
                           std::uint64_t base_index, exec::Mode mode) {
  return mode == exec::Mode::serial
             ? batch_loss_serial(kind, items, p, k, vs, opt, seed, label,
                                 base_index)
             : batch_loss_parallel(kind, items, p, k, vs, opt, seed, label,
                                   base_index);
}

BatchGrad::BatchGrad(const Predictor& master, exec::Mode mode) : mode_(mode) {
  const int n = mode == exec::Mode::serial ? 1 : exec::max_threads();
  for (int i = 0; i < n; ++i) workers_.push_back(master.clone());
}

void BatchGrad::sync(const Predictor& master) {
  for (auto& w : workers_) {
    if (w->param_count() != master.param_count())
      throw std::invalid_argument("BatchGrad: parameter count changed");
    std::copy(master.params().begin(), master.params().end(),
              w->params().begin());
  }
}

double BatchGrad::run(LossKind kind, const std::vector<TokenSequence>& items,
                      const std::vector<double>& item_t,
                      const Predictor& master, const ForwardKernel* kernel,
                      const VectorSchedule* vs, double t_min,
                      std::uint64_t seed, std::string_view label,
                      std::uint64_t base_index, std::span<double> grad_mean) {
  if (items.size() != item_t.size())
    throw std::invalid_argument("BatchGrad: items/times mismatch");
  sync(master);
  const std::size_t np = master.param_count();
  const std::size_t b = items.size();
  slots_.assign(b * np, 0.0);
  values_.assign(b, 0.0);
  const double span = 1.0 - t_min;
  const double scale = span / static_cast<double>(b);

  exec::parallel_for(b, mode_, [&](std::size_t i) {
    Predictor& w = *workers_[mode_ == exec::Mode::serial
                                 ? 0
                                 : static_cast<std::size_t>(exec::thread_index())];
    RngStream rng = derive_stream(seed, label, base_index + i);
    const ForwardKernel sample_kernel =
        kind == LossKind::genmd4 ? ForwardKernel(items[i].vocab, *vs) : *kernel;
    const TokenSequence xt =
        sample_kernel.sample_forward(items[i], item_t[i], rng);
    values_[i] = span * loss_value_and_grad(
                            kind, items[i], xt, item_t[i], w, kernel, vs,
                            scale, {slots_.data() + i * np, np});
  });
  exec::pairwise_sum_vectors(slots_, b, grad_mean);
  return exec::pairwise_sum(values_) / static_cast<double>(b);
}

double BatchGrad::run_discrete(const std::vector<TokenSequence>& items,
                               const std::vector<int>& item_i,
                               const TimeGrid& grid, const Predictor& master,
                               const ForwardKernel& kernel, std::uint64_t seed,
                               std::string_view label,
                               std::uint64_t base_index,
                               std::span<double> grad_mean) {
  if (items.size() != item_i.size())
    throw std::invalid_argument("BatchGrad: items/indices mismatch");
  sync(master);
  const std::size_t np = master.param_count();
  const std::size_t b = items.size();
  slots_.assign(b * np, 0.0);
  values_.assign(b, 0.0);
  const double scale = 1.0 / static_cast<double>(b);

  exec::parallel_for(b, mode_, [&](std::size_t i) {
    Predictor& w = *workers_[mode_ == exec::Mode::serial
                                 ? 0
                                 : static_cast<std::size_t>(exec::thread_index())];
    RngStream rng = derive_stream(seed, label, base_index + i);
    const TokenSequence xt =
        kernel.sample_forward(items[i], grid.t(item_i[i]), rng);
    values_[i] = discrete_value_and_grad(items[i], xt, grid, item_i[i], w,
                                         kernel, scale,
                                         {slots_.data() + i * np, np});
  });
  exec::pairwise_sum_vectors(slots_, b, grad_mean);
  return exec::pairwise_sum(values_) / static_cast<double>(b);
}

std::vector<TokenSequence> batch_sample(const Predictor& p,
                                        const ForwardKernel& k, int n_tokens,
                                        const SamplerConfig& cfg, int count,
                                        std::uint64_t seed,
                                        std::string_view label,
                                        std::uint64_t base_index,
                                        exec::Mode mode) {
  std::vector<TokenSequence> out(count);
  exec::parallel_for(count, mode, [&](std::size_t i) {
    RngStream rng = derive_stream(seed, label, base_index + i);
    out[i] = sample(p, k, n_tokens, cfg, rng);
  });
  return out;
}

}  // namespace mdc

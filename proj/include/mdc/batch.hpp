#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "mdc/losses.hpp"
#include "mdc/parallel.hpp"
#include "mdc/sampler.hpp"

namespace mdc {

// Data-parallel kernels over batch items. Each kernel exists twice: a plain
// serial loop (the reference) and an OpenMP version. Both write per-item
// results into per-item slots and reduce pairwise in index order, so results
// are identical bit for bit regardless of mode or thread count. Item i uses
// the derived stream (seed, label, base_index + i).

struct BatchLossResult {
  std::vector<double> per_item;
  double mean = 0.0;
};

BatchLossResult batch_loss_serial(LossKind kind,
                                  const std::vector<TokenSequence>& items,
                                  const Predictor& p, const ForwardKernel* k,
                                  const VectorSchedule* vs,
                                  const McOptions& opt, std::uint64_t seed,
                                  std::string_view label,
                                  std::uint64_t base_index = 0);

BatchLossResult batch_loss_parallel(LossKind kind,
                                    const std::vector<TokenSequence>& items,
                                    const Predictor& p, const ForwardKernel* k,
                                    const VectorSchedule* vs,
                                    const McOptions& opt, std::uint64_t seed,
                                    std::string_view label,
                                    std::uint64_t base_index = 0);

BatchLossResult batch_loss(LossKind kind,
                           const std::vector<TokenSequence>& items,
                           const Predictor& p, const ForwardKernel* k,
                           const VectorSchedule* vs, const McOptions& opt,
                           std::uint64_t seed, std::string_view label,
                           std::uint64_t base_index, exec::Mode mode);

// Per-item training draw: sample x_t at the given t, evaluate the loss and
// accumulate its parameter gradient. grad_mean receives the item-mean
// gradient; the return value is the item-mean loss. Worker predictors are
// cloned from `master` (one per thread) and re-synced on every call.
class BatchGrad {
 public:
  BatchGrad(const Predictor& master, exec::Mode mode);

  double run(LossKind kind, const std::vector<TokenSequence>& items,
             const std::vector<double>& item_t, const Predictor& master,
             const ForwardKernel* kernel, const VectorSchedule* vs,
             double t_min, std::uint64_t seed, std::string_view label,
             std::uint64_t base_index, std::span<double> grad_mean);

  // L_T variant: item_i carries the drawn grid index for item i.
  double run_discrete(const std::vector<TokenSequence>& items,
                      const std::vector<int>& item_i, const TimeGrid& grid,
                      const Predictor& master, const ForwardKernel& kernel,
                      std::uint64_t seed, std::string_view label,
                      std::uint64_t base_index, std::span<double> grad_mean);

 private:
  void sync(const Predictor& master);

  exec::Mode mode_;
  std::vector<std::unique_ptr<Predictor>> workers_;
  std::vector<double> slots_;  // items x params gradient slots
  std::vector<double> values_;
};

// S independent reverse chains; chain i uses stream (seed, label, base + i).
std::vector<TokenSequence> batch_sample(const Predictor& p,
                                        const ForwardKernel& k, int n_tokens,
                                        const SamplerConfig& cfg, int count,
                                        std::uint64_t seed,
                                        std::string_view label,
                                        std::uint64_t base_index,
                                        exec::Mode mode);

}  // namespace mdc

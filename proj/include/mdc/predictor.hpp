#pragma once

#include <memory>
#include <span>
#include <string>

#include "mdc/schedule.hpp"
#include "mdc/types.hpp"

namespace mdc {

// Mean-parameterization model mu_theta(x_t, t). The raw model produces, for
// every position, log-probabilities over the m clean values (the mask value
// is structurally excluded from the output). The carry-over rule -- an
// unmasked input position predicts itself with probability one -- is applied
// by predict(), outside the network.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual int value_count() const = 0;  // m
  virtual std::size_t param_count() const = 0;
  virtual double* param_data() = 0;
  virtual const double* param_data() const = 0;

  // Raw log mu, row-major xt.size() x m. Thread-safe, no recording.
  virtual void eval_log_probs(const TokenSequence& xt, double t,
                              std::span<double> log_mu) const = 0;

  // Training pass: same output as eval_log_probs but records activations
  // for the next backward() call on this instance.
  virtual void forward(const TokenSequence& xt, double t,
                       std::span<double> log_mu) = 0;

  // Accumulates d(loss)/d(params) into grad, given upstream gradients on the
  // recorded pass's log mu entries.
  virtual void backward(std::span<const double> dlog_mu,
                        std::span<double> grad) = 0;

  virtual std::unique_ptr<Predictor> clone() const = 0;

  // Architecture descriptor persisted in checkpoints.
  virtual std::string describe() const = 0;

  std::span<double> params() { return {param_data(), param_count()}; }
  std::span<const double> params() const { return {param_data(), param_count()}; }

  // Probabilities with the carry-over rule applied: unmasked positions are
  // one-hot at their input id. Row-major xt.size() x m.
  void predict(const TokenSequence& xt, double t, std::span<double> probs) const;
};

// Logit-table models used for exactness fixtures and desk-scale training.
//   shared     -- one logit row for every position and context
//   full_state -- one row per (entire masked sequence, position); tiny m, N
//   neighbors  -- row keyed on the nearest revealed left/right values and
//                 their (capped) distances; translation invariant
enum class TabularContext { shared, full_state, neighbors };

class TabularPredictor final : public Predictor {
 public:
  // max_positions is the fixed sequence length for full_state tables and is
  // ignored by the other contexts.
  TabularPredictor(Vocabulary v, TabularContext ctx, int max_positions = 1,
                   int neighbor_cap = 8);

  int value_count() const override { return vocab_.m; }
  std::size_t param_count() const override { return params_.size(); }
  double* param_data() override { return params_.data(); }
  const double* param_data() const override { return params_.data(); }
  void eval_log_probs(const TokenSequence& xt, double t,
                      std::span<double> log_mu) const override;
  void forward(const TokenSequence& xt, double t,
               std::span<double> log_mu) override;
  void backward(std::span<const double> dlog_mu,
                std::span<double> grad) override;
  std::unique_ptr<Predictor> clone() const override;
  std::string describe() const override;

  int rows() const { return rows_; }
  // Fixture helper: sets the shared row's logits.
  void set_shared_logits(std::span<const double> logits);

 private:
  int row_key(const TokenSequence& xt, int pos) const;

  Vocabulary vocab_;
  TabularContext ctx_;
  int max_positions_;
  int cap_;
  int rows_;
  std::vector<double> params_;  // rows_ x m logits

  // recording
  std::vector<int> rec_keys_;
  std::vector<double> rec_mu_;
  bool recorded_ = false;
};

// Oracle that always predicts the reference clean sequence. No parameters.
class OneHotPredictor final : public Predictor {
 public:
  explicit OneHotPredictor(TokenSequence reference);

  int value_count() const override { return ref_.vocab.m; }
  std::size_t param_count() const override { return 0; }
  double* param_data() override { return nullptr; }
  const double* param_data() const override { return nullptr; }
  void eval_log_probs(const TokenSequence& xt, double t,
                      std::span<double> log_mu) const override;
  void forward(const TokenSequence& xt, double t,
               std::span<double> log_mu) override;
  void backward(std::span<const double>, std::span<double>) override {}
  std::unique_ptr<Predictor> clone() const override;
  std::string describe() const override { return "onehot"; }

 private:
  TokenSequence ref_;
};

struct MlpConfig {
  int embed_dim = 16;
  int hidden = 128;
  int layers = 2;   // hidden layers
  int window = 2;   // context radius; each position sees 2*window+1 embeddings
  double lambda_clip = 10.0;
};

// Small windowed MLP with shared weights across positions and hand-rolled
// reverse-mode differentiation. Time conditioning appends (t, clamped
// log-SNR) to the embedding window. Deterministic given (seed, config).
class MlpPredictor final : public Predictor {
 public:
  MlpPredictor(Vocabulary v, MlpConfig cfg, std::uint64_t init_seed,
               Schedule time_feature_schedule = Schedule::linear(kDefaultEps));

  int value_count() const override { return vocab_.m; }
  std::size_t param_count() const override { return params_.size(); }
  double* param_data() override { return params_.data(); }
  const double* param_data() const override { return params_.data(); }
  void eval_log_probs(const TokenSequence& xt, double t,
                      std::span<double> log_mu) const override;
  void forward(const TokenSequence& xt, double t,
               std::span<double> log_mu) override;
  void backward(std::span<const double> dlog_mu,
                std::span<double> grad) override;
  std::unique_ptr<Predictor> clone() const override;
  std::string describe() const override;

  const MlpConfig& config() const { return cfg_; }

 private:
  struct Trace;
  void run(const TokenSequence& xt, double t, std::span<double> log_mu,
           Trace* trace) const;

  Vocabulary vocab_;
  MlpConfig cfg_;
  Schedule time_schedule_;
  int input_dim_;
  std::vector<double> params_;

  // offsets into params_
  std::size_t off_embed_, off_w_[4], off_b_[4], off_wout_, off_bout_;

  std::shared_ptr<Trace> rec_;  // recording for backward
  TokenSequence rec_xt_;
  double rec_t_ = 0.0;
};

// Parses a describe() string back into a predictor. Tabular tables start at
// zero; MLPs are initialized from init_seed (callers loading a checkpoint
// overwrite the parameters anyway).
std::unique_ptr<Predictor> make_predictor(const std::string& description,
                                          Vocabulary v, Schedule sched,
                                          std::uint64_t init_seed = 0);

}  // namespace mdc

#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mdc/batch.hpp"
#include "mdc/config.hpp"
#include "mdc/corpus.hpp"
#include "mdc/losses.hpp"
#include "mdc/optimizer.hpp"

namespace mdc {

struct TrainConfig {
  LossKind loss = LossKind::continuous_ce;
  Schedule schedule = Schedule::linear(kDefaultEps);
  int discrete_T = 32;  // grid size when loss == L_T

  int batch = 32;
  int steps = 1000;
  double lr = 1e-2;
  int warmup = 100;
  bool cosine_decay = true;
  double weight_decay = 0.0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double ema_decay = 0.9999;
  bool antithetic = true;
  double t_min = kTimeFloor;

  bool genmd4 = false;
  double w_lr = 0.0;       // 0 means lr / 10
  double genmd4_l2 = 0.0;  // optional pull of log w toward 0; off by default
  // The RLOO draws are heavy-tailed through the 1/t weight, which makes
  // plain SGD on log w collapse at desk scale; Adam keeps the step size
  // bounded without biasing the direction. log w also stays in a band.
  double w_log_bound = 3.0;

  std::uint64_t seed = 0;
  std::string predictor = "tabular ctx=shared n=1 cap=8";
  std::string diagnostics_path;  // snapshot target on divergence
};

TrainConfig parse_train_config(const ConfigMap& c);

enum class CheckpointErrorKind {
  bad_magic,
  bad_version,
  truncated,
  bad_checksum,
  bad_metadata,
};

struct CheckpointError : std::runtime_error {
  CheckpointErrorKind kind;
  CheckpointError(CheckpointErrorKind k, const std::string& msg)
      : std::runtime_error(msg), kind(k) {}
};

struct Checkpoint {
  std::uint32_t version = 1;
  Schedule schedule;
  CorpusVocab vocab;
  std::string arch;
  LossKind loss = LossKind::continuous_ce;
  int chunk_len = 0;
  std::int64_t step = 0;
  std::uint64_t seed = 0;  // master seed; with `step` it pins every stream

  std::vector<float> params, ema, adam_m, adam_v;
  std::int64_t adam_step = 0;
  std::vector<float> w;  // GenMD4 exponents; empty otherwise

  std::unique_ptr<Predictor> make_predictor(bool use_ema) const;
};

// Binary format: magic MDCK, u32 LE version, u64-length-prefixed UTF-8
// metadata (key = value lines), then the five f32 arrays (params, ema,
// adam_m, adam_v, w) each with a u64 LE length prefix, and a trailing CRC32
// over all preceding bytes.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::uint32_t crc32(const unsigned char* data, std::size_t n);

struct MetricsRow {
  int step = 0;
  double loss_per_token = 0.0;
  double grad_norm = 0.0;
  std::vector<double> w;  // populated under GenMD4
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
};

// Runs the training loop; optionally streams metrics CSV rows
// (step,loss_nats_per_token,grad_norm[,w_0..]) to metrics_out.
TrainResult train(const TrainConfig& cfg, const CorpusData& corpus,
                  exec::Mode mode = exec::Mode::serial,
                  std::ostream* metrics_out = nullptr);

struct BpcResult {
  double bpc = 0.0;
  double std_error = 0.0;
  int draws = 0;
};

// Likelihood bound in bits per character on the given chunks, evaluated with
// the EMA parameters; includes the reconstruction and prior boundary terms.
BpcResult evaluate_bpc(const Checkpoint& ckpt,
                       const std::vector<std::vector<int>>& chunks,
                       int draws_per_chunk, std::uint64_t seed,
                       exec::Mode mode = exec::Mode::serial);

}  // namespace mdc

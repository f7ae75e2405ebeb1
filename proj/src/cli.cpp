#include "mdc/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdc/batch.hpp"
#include "mdc/oracle.hpp"
#include "mdc/selfcheck.hpp"
#include "mdc/trainer.hpp"

namespace mdc {

namespace {

constexpr const char* kVersion = "0.1.0";

using nlohmann::json;

// MDC_SEED overrides --seed only when the flag was not given.
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t value) {
  if (opt->count() > 0) return value;
  if (const char* env = std::getenv("MDC_SEED")) return std::strtoull(env, nullptr, 10);
  return value;
}

void write_manifest(const std::string& subcommand, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& outputs,
                    double wall_seconds) {
  if (outputs.empty()) return;
  json m;
  m["subcommand"] = subcommand;
  m["config"] = config;
  m["seed"] = seed;
  m["versions"] = {{"mdc", kVersion}, {"checkpoint_format", 1}};
  m["outputs"] = outputs;
  m["wall_clock_seconds"] = wall_seconds;
  m["notes"] = {{"t_min", kTimeFloor},
                {"note", "singular loss weights near t=0 are handled by the "
                         "t_min cutoff"}};
  std::ofstream f(outputs.front() + ".manifest.json");
  f << m.dump(2) << "\n";
}

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

Schedule schedule_from_flags(const std::string& kind, double poly_w,
                             double beta_min, double beta_max, double eps) {
  Schedule s;
  s.kind = schedule_kind_from_name(kind);
  s.poly_w = poly_w;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.eps = eps;
  return s;
}

int run_schedule_dump(const std::string& kind, double poly_w, double beta_min,
                      double beta_max, double eps, int points,
                      const std::string& out_path, std::uint64_t seed) {
  Timer timer;
  const Schedule s =
      schedule_from_flags(kind, poly_w, beta_min, beta_max, eps);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open " + out_path);
  out << "t,alpha,alpha_prime,ce_weight,log_snr\n";
  out.precision(17);
  for (int i = 1; i <= points; ++i) {
    const double t = static_cast<double>(i) / (points + 1);
    out << t << "," << alpha(s, t) << "," << alpha_prime(s, t) << ","
        << ce_weight(s, t) << "," << log_snr(s, t) << "\n";
  }
  json cfg = {{"kind", kind},     {"poly_w", poly_w}, {"beta_min", beta_min},
              {"beta_max", beta_max}, {"eps", eps},   {"points", points}};
  write_manifest("schedule-dump", cfg, seed, {out_path}, timer.seconds());
  return 0;
}

int run_loss_compare(int draws, std::uint64_t seed,
                     const std::string& out_path) {
  Timer timer;
  const Vocabulary v{3};
  const TokenSequence x0(v, {1, 2});
  const ForwardKernel kernel(v, Schedule::linear(kDefaultEps));
  const VectorSchedule vs({1.5, 0.8, 1.2});
  TabularPredictor pred(v, TabularContext::full_state, 2);
  {
    RngStream rng = derive_stream(seed, "loss-compare.init");
    for (auto& p : pred.params()) p = 0.5 * rng.next_normal();
  }
  McOptions opt;
  opt.draws = draws;

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open " + out_path);
  out << "estimator,mean,variance,draws\n";
  out.precision(12);
  const auto emit = [&](const std::string& name, const LossEstimate& e) {
    out << name << "," << e.value << "," << e.variance() << "," << e.draws
        << "\n";
  };
  {
    RngStream rng = derive_stream(seed, "loss-compare", 0);
    emit("L_T", loss_discrete(x0, TimeGrid{32}, pred, kernel, rng, draws));
  }
  {
    RngStream rng = derive_stream(seed, "loss-compare", 1);
    emit("L_inf_ce", loss_continuous_ce(x0, pred, kernel, rng, opt));
  }
  {
    RngStream rng = derive_stream(seed, "loss-compare", 2);
    McOptions anti = opt;
    anti.antithetic = true;
    emit("L_inf_ce_antithetic",
         loss_continuous_ce(x0, pred, kernel, rng, anti));
  }
  {
    RngStream rng = derive_stream(seed, "loss-compare", 3);
    emit("L_ctmc", loss_ctmc(x0, pred, kernel, rng, opt));
  }
  {
    RngStream rng = derive_stream(seed, "loss-compare", 4);
    emit("L_ctmc_ds",
         loss_ctmc_doubly_stochastic(x0, pred, kernel, rng, opt));
  }
  {
    RngStream rng = derive_stream(seed, "loss-compare", 5);
    ScoreView sv(pred, *kernel.scalar_schedule());
    emit("L_score", loss_score_entropy(x0, sv, kernel, rng, opt));
  }
  {
    RngStream rng = derive_stream(seed, "loss-compare", 6);
    emit("L_maskgit", loss_maskgit(x0, pred, kernel, rng, opt));
  }
  {
    RngStream rng = derive_stream(seed, "loss-compare", 7);
    emit("L_genmd4", loss_genmd4(x0, pred, vs, rng, opt));
  }
  json cfg = {{"draws", draws}, {"fixture", "m=3 N=2 tabular full_state"}};
  write_manifest("loss-compare", cfg, seed, {out_path}, timer.seconds());
  return 0;
}

CorpusData corpus_from_config(const ConfigMap& c, std::uint64_t seed) {
  const int chunk_len = cfg_int(c, "chunk_len", 64);
  const int vocab_cap = cfg_int(c, "vocab_cap", 64);
  const double valid_frac = cfg_double(c, "valid_frac", 0.02);
  const std::string data = cfg_str(c, "data", "");
  if (!data.empty()) return ingest(data, vocab_cap, chunk_len, valid_frac);

  const std::size_t synth_len = cfg_u64(c, "synth_len", 1 << 18);
  const std::uint64_t synth_seed = cfg_u64(c, "synth_seed", seed);
  const std::string iid = cfg_str(c, "synth_iid", "");
  const std::string markov = cfg_str(c, "synth_markov", "");
  const auto parse_list = [](const std::string& s) {
    std::vector<double> xs;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) xs.push_back(std::stod(tok));
    return xs;
  };
  SyntheticSource src;
  if (!iid.empty()) {
    src = SyntheticSource::iid(parse_list(iid));
  } else if (!markov.empty()) {
    const auto table = parse_list(markov);
    const int states = cfg_int(c, "synth_states",
                               static_cast<int>(std::sqrt(table.size())));
    src = SyntheticSource::markov(states, table);
  } else {
    throw std::runtime_error(
        "config: need data=<path>, synth_iid=... or synth_markov=...");
  }
  return ingest_text(synth_generate(src, synth_len, synth_seed), vocab_cap,
                     chunk_len, valid_frac);
}

int run_train(const std::string& config_path, const std::string& out_path,
              const std::string& metrics_path, const CLI::Option* seed_opt,
              std::uint64_t seed_flag, bool serial) {
  Timer timer;
  ConfigMap c = read_config_file(config_path);
  TrainConfig cfg = parse_train_config(c);
  if (seed_opt->count() > 0 || std::getenv("MDC_SEED"))
    cfg.seed = resolve_seed(seed_opt, seed_flag);
  if (cfg.diagnostics_path.empty()) cfg.diagnostics_path = out_path + ".diverged";

  const CorpusData corpus = corpus_from_config(c, cfg.seed);
  std::ofstream metrics;
  std::ostream* metrics_out = nullptr;
  if (!metrics_path.empty()) {
    metrics.open(metrics_path);
    if (!metrics) throw std::runtime_error("cannot open " + metrics_path);
    metrics_out = &metrics;
  }
  const exec::Mode mode = serial ? exec::Mode::serial : exec::Mode::parallel;
  const TrainResult result = train(cfg, corpus, mode, metrics_out);
  save_checkpoint(result.checkpoint, out_path);

  if (!result.metrics.empty())
    std::cout << "final loss: " << result.metrics.back().loss_per_token
              << " nats/token over " << cfg.steps << " steps\n";
  json jc;
  for (const auto& [k, v] : c) jc[k] = v;
  jc["resolved_seed"] = cfg.seed;
  std::vector<std::string> outputs = {out_path};
  if (!metrics_path.empty()) outputs.push_back(metrics_path);
  write_manifest("train", jc, cfg.seed, outputs, timer.seconds());
  return 0;
}

std::vector<std::vector<int>> chunks_for_eval(const Checkpoint& ckpt,
                                              const std::string& data_path,
                                              const std::string& fixture_path) {
  if (!fixture_path.empty()) {
    auto [m, chunks] = read_chunks(fixture_path);
    if (m != ckpt.vocab.m())
      throw std::runtime_error("eval: fixture vocabulary size mismatch");
    return chunks;
  }
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw std::runtime_error("eval: cannot open " + data_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::vector<int> ids = ckpt.vocab.encode(decode_utf8(ss.str()));
  const int len = ckpt.chunk_len > 0 ? ckpt.chunk_len : 64;
  std::vector<std::vector<int>> chunks;
  for (std::size_t i = 0; i + len <= ids.size(); i += len)
    chunks.emplace_back(ids.begin() + i, ids.begin() + i + len);
  if (chunks.empty()) throw std::runtime_error("eval: no full chunk in data");
  return chunks;
}

int run_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& fixture_path, int draws, std::uint64_t seed,
             const std::string& out_path, bool serial) {
  Timer timer;
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto chunks = chunks_for_eval(ckpt, data_path, fixture_path);
  const BpcResult r =
      evaluate_bpc(ckpt, chunks, draws, seed,
                   serial ? exec::Mode::serial : exec::Mode::parallel);
  std::ostringstream line;
  line.precision(6);
  line << "bpc " << r.bpc << " +/- " << r.std_error << " (" << r.draws
       << " draws over " << chunks.size() << " chunks)";
  std::cout << line.str() << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << line.str() << "\n";
    json cfg = {{"checkpoint", ckpt_path},
                {"chunks", chunks.size()},
                {"draws_per_chunk", draws}};
    write_manifest("eval", cfg, seed, {out_path}, timer.seconds());
  }
  return 0;
}

int run_sample(const std::string& ckpt_path, int steps, int len, int num,
               std::uint64_t seed, int snapshot_stride, double temperature,
               const std::string& out_path, bool serial) {
  Timer timer;
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto pred = ckpt.make_predictor(/*use_ema=*/true);
  const Vocabulary vocab = ckpt.vocab.vocabulary();
  SamplerConfig cfg;
  cfg.steps = steps;
  cfg.temperature = temperature;

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open " + out_path);
  std::vector<std::string> outputs = {out_path};

  if (!ckpt.w.empty()) {
    if (snapshot_stride > 0)
      throw std::runtime_error(
          "sample: snapshot dumps support scalar-schedule checkpoints only");
    std::vector<double> w(ckpt.w.begin(), ckpt.w.end());
    const VectorSchedule vs(std::move(w));
    for (int i = 0; i < num; ++i) {
      RngStream rng = derive_stream(seed, "sample", i);
      const TokenSequence x = sample_genmd4(*pred, vocab, len, vs, cfg, rng);
      out << ckpt.vocab.decode(x.ids) << "\n";
    }
  } else {
    const ForwardKernel kernel(vocab, ckpt.schedule);
    if (snapshot_stride > 0) {
      // Snapshot dump of the first chain, one file per stride.
      RngStream rng = derive_stream(seed, "sample", 0);
      const auto snaps =
          trajectory(*pred, kernel, len, cfg, snapshot_stride, rng);
      for (std::size_t si = 0; si < snaps.size(); ++si) {
        const int step = static_cast<int>(si) * snapshot_stride;
        const std::string path =
            out_path + ".step" + std::to_string(step) + ".txt";
        std::ofstream snap(path);
        snap << ckpt.vocab.decode(snaps[si].ids, U'?') << "\n";
        outputs.push_back(path);
      }
      out << ckpt.vocab.decode(snaps.back().ids) << "\n";
      for (int i = 1; i < num; ++i) {
        RngStream rng2 = derive_stream(seed, "sample", i);
        out << ckpt.vocab.decode(sample(*pred, kernel, len, cfg, rng2).ids)
            << "\n";
      }
    } else {
      const auto samples = batch_sample(
          *pred, kernel, len, cfg, num, seed, "sample", 0,
          serial ? exec::Mode::serial : exec::Mode::parallel);
      for (const auto& x : samples) out << ckpt.vocab.decode(x.ids) << "\n";
    }
  }
  json cfg_json = {{"checkpoint", ckpt_path}, {"steps", steps},
                   {"len", len},              {"num", num},
                   {"snapshot_stride", snapshot_stride},
                   {"temperature", temperature}};
  write_manifest("sample", cfg_json, seed, outputs, timer.seconds());
  return 0;
}

int run_selfcheck_cmd(const std::string& report_path, const std::string& fault,
                      std::uint64_t seed) {
  Timer timer;
  SelfcheckOptions opt;
  opt.fault = fault;
  opt.seed = seed;
  const auto results = run_selfcheck(opt);
  bool all_pass = true;
  json rows = json::array();
  for (const auto& r : results) {
    all_pass = all_pass && r.pass;
    std::ostringstream line;
    line.precision(6);
    line << "check=" << r.name << " status=" << (r.pass ? "PASS" : "FAIL")
         << " observed=" << r.observed << " tolerance=" << r.tolerance;
    std::cout << line.str() << "\n";
    rows.push_back({{"name", r.name},
                    {"pass", r.pass},
                    {"observed", r.observed},
                    {"tolerance", r.tolerance},
                    {"note", r.note}});
  }
  std::cout << (all_pass ? "selfcheck: all checks passed"
                         : "selfcheck: FAILURES present")
            << "\n";
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    f << rows.dump(2) << "\n";
    json cfg = {{"fault", fault}};
    write_manifest("selfcheck", cfg, seed, {report_path}, timer.seconds());
  }
  return all_pass ? 0 : 3;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"masked discrete diffusion toolkit"};
  app.require_subcommand(1);

  // schedule-dump
  auto* sd = app.add_subcommand("schedule-dump",
                                "emit schedule curves as CSV data");
  std::string sd_kind = "linear", sd_out = "schedule.csv";
  double sd_poly_w = 2.0, sd_bmin = 1e-5, sd_bmax = 20.0, sd_eps = 0.0;
  int sd_points = 100;
  std::uint64_t sd_seed = 0;
  sd->add_option("--kind", sd_kind,
                 "schedule kind: linear|polynomial|geometric|cosine");
  sd->add_option("--points", sd_points, "number of interior points");
  sd->add_option("--out", sd_out, "output CSV path");
  sd->add_option("--poly-w", sd_poly_w, "polynomial exponent");
  sd->add_option("--beta-min", sd_bmin, "geometric beta_min");
  sd->add_option("--beta-max", sd_bmax, "geometric beta_max");
  sd->add_option("--eps", sd_eps, "endpoint shift");
  auto* sd_seed_opt = sd->add_option("--seed", sd_seed, "seed (manifest only)");

  // loss-compare
  auto* lc = app.add_subcommand(
      "loss-compare", "evaluate every estimator form on a fixed fixture");
  int lc_draws = 4096;
  std::uint64_t lc_seed = 0;
  std::string lc_out = "loss-compare.csv";
  lc->add_option("--draws", lc_draws, "Monte Carlo draws per estimator");
  auto* lc_seed_opt = lc->add_option("--seed", lc_seed, "seed");
  lc->add_option("--out", lc_out, "output CSV path");

  // train
  auto* tr = app.add_subcommand("train", "train a model from a config file");
  std::string tr_config, tr_out = "model.mdck", tr_metrics;
  std::uint64_t tr_seed = 0;
  bool tr_serial = false;
  tr->add_option("--config", tr_config, "key = value config file")
      ->required();
  tr->add_option("--out", tr_out, "checkpoint output path");
  tr->add_option("--metrics", tr_metrics, "metrics CSV path");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "seed override");
  tr->add_flag("--serial", tr_serial, "force the serial reference kernels");

  // eval
  auto* ev = app.add_subcommand("eval", "bits-per-character evaluation");
  std::string ev_ckpt, ev_data, ev_chunks, ev_out;
  int ev_draws = 16;
  std::uint64_t ev_seed = 0;
  bool ev_serial = false;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "UTF-8 text file");
  ev->add_option("--chunks", ev_chunks, "chunk fixture file");
  ev->add_option("--draws", ev_draws, "draws per chunk");
  auto* ev_seed_opt = ev->add_option("--seed", ev_seed, "seed");
  ev->add_option("--out", ev_out, "also write the result line here");
  ev->add_flag("--serial", ev_serial, "force the serial reference kernels");

  // sample
  auto* sa = app.add_subcommand("sample", "ancestral sampling");
  std::string sa_ckpt, sa_out = "samples.txt";
  int sa_steps = 1000, sa_len = 64, sa_num = 8, sa_stride = 0;
  double sa_temp = 1.0;
  std::uint64_t sa_seed = 0;
  bool sa_serial = false;
  sa->add_option("--checkpoint", sa_ckpt, "checkpoint path")->required();
  sa->add_option("--steps", sa_steps, "reverse steps");
  sa->add_option("--len", sa_len, "tokens per sample");
  sa->add_option("--num", sa_num, "number of samples");
  auto* sa_seed_opt = sa->add_option("--seed", sa_seed, "seed");
  sa->add_option("--snapshot-stride", sa_stride,
                 "dump chain snapshots every D steps (first sample)");
  sa->add_option("--temperature", sa_temp, "logit temperature");
  sa->add_option("--out", sa_out, "output text path");
  sa->add_flag("--serial", sa_serial, "force the serial reference kernels");

  // selfcheck
  auto* sc = app.add_subcommand("selfcheck", "run the oracle property suite");
  std::string sc_report, sc_fault;
  std::uint64_t sc_seed = 2024;
  sc->add_option("--report", sc_report, "JSON report path");
  sc->add_option("--fault", sc_fault,
                 "inject a named fault (negative control)");
  auto* sc_seed_opt = sc->add_option("--seed", sc_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sd->parsed())
      return run_schedule_dump(sd_kind, sd_poly_w, sd_bmin, sd_bmax, sd_eps,
                               sd_points, sd_out,
                               resolve_seed(sd_seed_opt, sd_seed));
    if (lc->parsed())
      return run_loss_compare(lc_draws, resolve_seed(lc_seed_opt, lc_seed),
                              lc_out);
    if (tr->parsed())
      return run_train(tr_config, tr_out, tr_metrics, tr_seed_opt, tr_seed,
                       tr_serial);
    if (ev->parsed()) {
      if (ev_data.empty() == ev_chunks.empty())
        throw std::runtime_error("eval: need exactly one of --data/--chunks");
      return run_eval(ev_ckpt, ev_data, ev_chunks, ev_draws,
                      resolve_seed(ev_seed_opt, ev_seed), ev_out, ev_serial);
    }
    if (sa->parsed())
      return run_sample(sa_ckpt, sa_steps, sa_len, sa_num,
                        resolve_seed(sa_seed_opt, sa_seed), sa_stride, sa_temp,
                        sa_out, sa_serial);
    if (sc->parsed())
      return run_selfcheck_cmd(sc_report, sc_fault,
                               resolve_seed(sc_seed_opt, sc_seed));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace mdc

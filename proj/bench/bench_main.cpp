// Serial-vs-OpenMP benchmark for the batch kernels. Each kernel runs in both
// modes on the same inputs; results must match bit for bit, and the table
// reports wall times and speedup.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "mdc/batch.hpp"
#include "mdc/corpus.hpp"
#include "mdc/trainer.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_of(const std::function<void()>& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best,
                    std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

int g_mismatches = 0;

void row(const char* name, double serial_s, double parallel_s, bool match) {
  std::printf("%-22s %10.1f ms %10.1f ms %7.2fx   %s\n", name,
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
              match ? "identical" : "MISMATCH");
  g_mismatches += match ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  int items = 64, reps = 3;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--items" && i + 1 < argc) items = std::atoi(argv[++i]);
    if (a == "--reps" && i + 1 < argc) reps = std::atoi(argv[++i]);
  }

  const auto src = mdc::SyntheticSource::markov(
      4, {0.7, 0.1, 0.1, 0.1,
          0.1, 0.7, 0.1, 0.1,
          0.1, 0.1, 0.7, 0.1,
          0.1, 0.1, 0.1, 0.7});
  const std::string text = mdc::synth_generate(src, 1 << 16, 7);
  const mdc::CorpusData corpus = mdc::ingest_text(text, 8, 128, 0.05);
  const mdc::Vocabulary vocab = corpus.vocab.vocabulary();
  const mdc::Schedule sched = mdc::Schedule::linear(mdc::kDefaultEps);
  const mdc::ForwardKernel kernel(vocab, sched);

  mdc::MlpConfig mcfg;
  mcfg.embed_dim = 8;
  mcfg.hidden = 64;
  mdc::MlpPredictor pred(vocab, mcfg, 11, sched);

  std::vector<mdc::TokenSequence> batch;
  for (int i = 0; i < items; ++i)
    batch.emplace_back(vocab, corpus.train[i % corpus.train.size()]);

  std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  {
    mdc::McOptions opt;
    opt.draws = 4;
    mdc::BatchLossResult rs, rp;
    const double ts = time_of(
        [&] {
          rs = mdc::batch_loss_serial(mdc::LossKind::continuous_ce, batch,
                                      pred, &kernel, nullptr, opt, 1,
                                      "bench.loss", 0);
        },
        reps);
    const double tp = time_of(
        [&] {
          rp = mdc::batch_loss_parallel(mdc::LossKind::continuous_ce, batch,
                                        pred, &kernel, nullptr, opt, 1,
                                        "bench.loss", 0);
        },
        reps);
    row("batch_loss(ce)", ts, tp, rs.per_item == rp.per_item);
  }

  {
    std::vector<double> ts_items(batch.size());
    mdc::RngStream trng = mdc::derive_stream(1, "bench.time");
    for (auto& t : ts_items) t = 1e-5 + (1 - 1e-5) * trng.next_unit_open();
    std::vector<double> gs(pred.param_count()), gp(pred.param_count());
    mdc::BatchGrad bgs(pred, mdc::exec::Mode::serial);
    mdc::BatchGrad bgp(pred, mdc::exec::Mode::parallel);
    const double ts = time_of(
        [&] {
          bgs.run(mdc::LossKind::continuous_ce, batch, ts_items, pred, &kernel,
                  nullptr, 1e-5, 1, "bench.grad", 0, gs);
        },
        reps);
    const double tp = time_of(
        [&] {
          bgp.run(mdc::LossKind::continuous_ce, batch, ts_items, pred, &kernel,
                  nullptr, 1e-5, 1, "bench.grad", 0, gp);
        },
        reps);
    row("batch_grad(ce)", ts, tp, gs == gp);
  }

  {
    mdc::SamplerConfig cfg;
    cfg.steps = 128;
    std::vector<mdc::TokenSequence> ss, sp;
    const double ts = time_of(
        [&] {
          ss = mdc::batch_sample(pred, kernel, 128, cfg, items, 1,
                                 "bench.sample", 0, mdc::exec::Mode::serial);
        },
        reps);
    const double tp = time_of(
        [&] {
          sp = mdc::batch_sample(pred, kernel, 128, cfg, items, 1,
                                 "bench.sample", 0, mdc::exec::Mode::parallel);
        },
        reps);
    bool match = ss.size() == sp.size();
    for (std::size_t i = 0; match && i < ss.size(); ++i)
      match = ss[i].ids == sp[i].ids;
    row("batch_sample", ts, tp, match);
  }

  {
    mdc::Checkpoint ck;
    ck.schedule = sched;
    ck.vocab = corpus.vocab;
    ck.arch = pred.describe();
    ck.chunk_len = corpus.chunk_len;
    ck.params.assign(pred.params().begin(), pred.params().end());
    ck.ema = ck.params;
    ck.adam_m.assign(pred.param_count(), 0.0f);
    ck.adam_v.assign(pred.param_count(), 0.0f);
    mdc::BpcResult rs, rp;
    const double ts = time_of(
        [&] { rs = mdc::evaluate_bpc(ck, corpus.valid, 4, 1,
                                     mdc::exec::Mode::serial); },
        reps);
    const double tp = time_of(
        [&] { rp = mdc::evaluate_bpc(ck, corpus.valid, 4, 1,
                                     mdc::exec::Mode::parallel); },
        reps);
    row("evaluate_bpc", ts, tp, rs.bpc == rp.bpc);
  }

  return g_mismatches == 0 ? 0 : 1;
}

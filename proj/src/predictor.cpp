#include "mdc/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mdc/rng.hpp"

namespace mdc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void log_softmax(std::span<const double> logits, std::span<double> out) {
  double mx = kNegInf;
  for (double v : logits) mx = std::max(mx, v);
  if (!std::isfinite(mx))
    throw std::runtime_error("predictor: non-finite logits");
  double z = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) z += std::exp(logits[j] - mx);
  const double lz = mx + std::log(z);
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] - lz;
}

}  // namespace

void Predictor::predict(const TokenSequence& xt, double t,
                        std::span<double> probs) const {
  const int m = value_count();
  const int n = xt.size();
  std::vector<double> log_mu(static_cast<std::size_t>(n) * m);
  eval_log_probs(xt, t, log_mu);
  for (int p = 0; p < n; ++p) {
    double* row = probs.data() + static_cast<std::size_t>(p) * m;
    if (xt.ids[p] != xt.vocab.mask_id()) {
      std::fill(row, row + m, 0.0);
      row[xt.ids[p]] = 1.0;  // carry-over
    } else {
      for (int j = 0; j < m; ++j)
        row[j] = std::exp(log_mu[static_cast<std::size_t>(p) * m + j]);
    }
  }
}

// ---------------------------------------------------------------------------
// TabularPredictor

TabularPredictor::TabularPredictor(Vocabulary v, TabularContext ctx,
                                   int max_positions, int neighbor_cap)
    : vocab_(v), ctx_(ctx), max_positions_(max_positions), cap_(neighbor_cap) {
  if (vocab_.m < 1) throw std::invalid_argument("tabular: m must be >= 1");
  switch (ctx_) {
    case TabularContext::shared:
      rows_ = 1;
      break;
    case TabularContext::full_state: {
      double r = max_positions_;
      for (int i = 0; i < max_positions_; ++i) r *= vocab_.m + 1;
      if (r > 2e6) throw std::invalid_argument("tabular: full_state too big");
      rows_ = static_cast<int>(r);
      break;
    }
    case TabularContext::neighbors:
      rows_ = (vocab_.m + 1) * (cap_ + 1) * (vocab_.m + 1) * (cap_ + 1);
      break;
  }
  params_.assign(static_cast<std::size_t>(rows_) * vocab_.m, 0.0);
}

int TabularPredictor::row_key(const TokenSequence& xt, int pos) const {
  switch (ctx_) {
    case TabularContext::shared:
      return 0;
    case TabularContext::full_state: {
      if (xt.size() != max_positions_)
        throw std::invalid_argument("tabular full_state: wrong length");
      long long key = 0, radix = 1;
      for (int i = 0; i < xt.size(); ++i) {
        key += xt.ids[i] * radix;
        radix *= vocab_.m + 1;
      }
      return static_cast<int>(key * max_positions_ + pos);
    }
    case TabularContext::neighbors: {
      int lv = vocab_.m, ld = 0;  // m encodes "no revealed neighbor"
      for (int i = pos - 1; i >= 0; --i) {
        if (xt.ids[i] != vocab_.mask_id()) {
          lv = xt.ids[i];
          ld = std::min(pos - i, cap_);
          break;
        }
      }
      int rv = vocab_.m, rd = 0;
      for (int i = pos + 1; i < xt.size(); ++i) {
        if (xt.ids[i] != vocab_.mask_id()) {
          rv = xt.ids[i];
          rd = std::min(i - pos, cap_);
          break;
        }
      }
      return ((lv * (cap_ + 1) + ld) * (vocab_.m + 1) + rv) * (cap_ + 1) + rd;
    }
  }
  throw std::logic_error("tabular: bad context");
}

void TabularPredictor::eval_log_probs(const TokenSequence& xt, double,
                                      std::span<double> log_mu) const {
  const int m = vocab_.m;
  for (int p = 0; p < xt.size(); ++p) {
    const int row = row_key(xt, p);
    log_softmax({params_.data() + static_cast<std::size_t>(row) * m,
                 static_cast<std::size_t>(m)},
                {log_mu.data() + static_cast<std::size_t>(p) * m,
                 static_cast<std::size_t>(m)});
  }
}

void TabularPredictor::forward(const TokenSequence& xt, double t,
                               std::span<double> log_mu) {
  eval_log_probs(xt, t, log_mu);
  const int m = vocab_.m;
  rec_keys_.resize(xt.size());
  rec_mu_.resize(static_cast<std::size_t>(xt.size()) * m);
  for (int p = 0; p < xt.size(); ++p) {
    rec_keys_[p] = row_key(xt, p);
    for (int j = 0; j < m; ++j)
      rec_mu_[static_cast<std::size_t>(p) * m + j] =
          std::exp(log_mu[static_cast<std::size_t>(p) * m + j]);
  }
  recorded_ = true;
}

void TabularPredictor::backward(std::span<const double> dlog_mu,
                                std::span<double> grad) {
  if (!recorded_) throw std::logic_error("tabular backward without forward");
  const int m = vocab_.m;
  const int n = static_cast<int>(rec_keys_.size());
  for (int p = 0; p < n; ++p) {
    const double* u = dlog_mu.data() + static_cast<std::size_t>(p) * m;
    const double* mu = rec_mu_.data() + static_cast<std::size_t>(p) * m;
    double usum = 0.0;
    for (int j = 0; j < m; ++j) usum += u[j];
    double* g = grad.data() + static_cast<std::size_t>(rec_keys_[p]) * m;
    for (int j = 0; j < m; ++j) g[j] += u[j] - mu[j] * usum;
  }
}

std::unique_ptr<Predictor> TabularPredictor::clone() const {
  return std::make_unique<TabularPredictor>(*this);
}

std::string TabularPredictor::describe() const {
  std::ostringstream os;
  os << "tabular ctx=";
  switch (ctx_) {
    case TabularContext::shared: os << "shared"; break;
    case TabularContext::full_state: os << "full_state"; break;
    case TabularContext::neighbors: os << "neighbors"; break;
  }
  os << " n=" << max_positions_ << " cap=" << cap_;
  return os.str();
}

void TabularPredictor::set_shared_logits(std::span<const double> logits) {
  if (ctx_ != TabularContext::shared || logits.size() != params_.size())
    throw std::invalid_argument("set_shared_logits: shape mismatch");
  std::copy(logits.begin(), logits.end(), params_.begin());
}

// ---------------------------------------------------------------------------
// OneHotPredictor

OneHotPredictor::OneHotPredictor(TokenSequence reference)
    : ref_(std::move(reference)) {
  require_clean(ref_);
}

void OneHotPredictor::eval_log_probs(const TokenSequence& xt, double,
                                     std::span<double> log_mu) const {
  if (xt.size() != ref_.size())
    throw std::invalid_argument("onehot: length mismatch");
  const int m = ref_.vocab.m;
  std::fill(log_mu.begin(), log_mu.end(), kNegInf);
  for (int p = 0; p < xt.size(); ++p)
    log_mu[static_cast<std::size_t>(p) * m + ref_.ids[p]] = 0.0;
}

void OneHotPredictor::forward(const TokenSequence& xt, double t,
                              std::span<double> log_mu) {
  eval_log_probs(xt, t, log_mu);
}

std::unique_ptr<Predictor> OneHotPredictor::clone() const {
  return std::make_unique<OneHotPredictor>(*this);
}

// ---------------------------------------------------------------------------
// MlpPredictor

namespace {

double gelu_act(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
  const double pdf = std::exp(-0.5 * x * x) * 0.39894228040143267794;
  return cdf + x * pdf;
}

}  // namespace

struct MlpPredictor::Trace {
  int n = 0;
  std::vector<double> input;  // n x input_dim
  std::vector<double> z;      // n x layers x hidden (pre-activation)
  std::vector<double> h;      // n x layers x hidden
  std::vector<double> mu;     // n x m
};

MlpPredictor::MlpPredictor(Vocabulary v, MlpConfig cfg, std::uint64_t init_seed,
                           Schedule time_feature_schedule)
    : vocab_(v), cfg_(cfg), time_schedule_(time_feature_schedule) {
  if (cfg_.layers < 1 || cfg_.layers > 4)
    throw std::invalid_argument("mlp: layers must be in [1,4]");
  input_dim_ = (2 * cfg_.window + 1) * cfg_.embed_dim + 2;

  std::size_t total = 0;
  off_embed_ = total;
  total += static_cast<std::size_t>(vocab_.m + 1) * cfg_.embed_dim;
  int prev = input_dim_;
  for (int l = 0; l < cfg_.layers; ++l) {
    off_w_[l] = total;
    total += static_cast<std::size_t>(cfg_.hidden) * prev;
    off_b_[l] = total;
    total += cfg_.hidden;
    prev = cfg_.hidden;
  }
  off_wout_ = total;
  total += static_cast<std::size_t>(vocab_.m) * cfg_.hidden;
  off_bout_ = total;
  total += vocab_.m;
  params_.assign(total, 0.0);

  RngStream rng = derive_stream(init_seed, "mlp.init");
  for (std::size_t i = off_embed_; i < off_w_[0]; ++i)
    params_[i] = 0.1 * rng.next_normal();
  prev = input_dim_;
  for (int l = 0; l < cfg_.layers; ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(prev));
    for (std::size_t i = off_w_[l]; i < off_b_[l]; ++i)
      params_[i] = scale * rng.next_normal();
    prev = cfg_.hidden;
  }
  const double so = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden));
  for (std::size_t i = off_wout_; i < off_bout_; ++i)
    params_[i] = so * rng.next_normal();
}

void MlpPredictor::run(const TokenSequence& xt, double t,
                       std::span<double> log_mu, Trace* trace) const {
  const int m = vocab_.m;
  const int n = xt.size();
  const int H = cfg_.hidden;
  const int E = cfg_.embed_dim;
  const int W = cfg_.window;
  const int L = cfg_.layers;

  double lam = 0.0;
  {
    const double a = alpha(time_schedule_, t);
    if (a > 0.0 && a < 1.0) lam = std::log(a) - std::log1p(-a);
    lam = std::clamp(lam, -cfg_.lambda_clip, cfg_.lambda_clip);
  }

  if (trace) {
    trace->n = n;
    trace->input.assign(static_cast<std::size_t>(n) * input_dim_, 0.0);
    trace->z.assign(static_cast<std::size_t>(n) * L * H, 0.0);
    trace->h.assign(static_cast<std::size_t>(n) * L * H, 0.0);
    trace->mu.assign(static_cast<std::size_t>(n) * m, 0.0);
  }

  std::vector<double> input(input_dim_);
  std::vector<double> hin(std::max(input_dim_, H));
  std::vector<double> hout(H);
  std::vector<double> logits(m);

  for (int p = 0; p < n; ++p) {
    std::fill(input.begin(), input.end(), 0.0);
    for (int o = -W; o <= W; ++o) {
      const int q = p + o;
      if (q < 0 || q >= n) continue;  // zero boundary
      const double* e =
          params_.data() + off_embed_ + static_cast<std::size_t>(xt.ids[q]) * E;
      std::memcpy(input.data() + (o + W) * E, e, sizeof(double) * E);
    }
    input[input_dim_ - 2] = t;
    input[input_dim_ - 1] = lam;
    if (trace)
      std::memcpy(trace->input.data() + static_cast<std::size_t>(p) * input_dim_,
                  input.data(), sizeof(double) * input_dim_);

    int prev = input_dim_;
    std::memcpy(hin.data(), input.data(), sizeof(double) * input_dim_);
    for (int l = 0; l < L; ++l) {
      const double* wl = params_.data() + off_w_[l];
      const double* bl = params_.data() + off_b_[l];
      for (int i = 0; i < H; ++i) {
        double z = bl[i];
        const double* row = wl + static_cast<std::size_t>(i) * prev;
        for (int j = 0; j < prev; ++j) z += row[j] * hin[j];
        if (trace)
          trace->z[(static_cast<std::size_t>(p) * L + l) * H + i] = z;
        hout[i] = gelu_act(z);
      }
      if (trace)
        std::memcpy(trace->h.data() + (static_cast<std::size_t>(p) * L + l) * H,
                    hout.data(), sizeof(double) * H);
      std::memcpy(hin.data(), hout.data(), sizeof(double) * H);
      prev = H;
    }
    const double* wo = params_.data() + off_wout_;
    const double* bo = params_.data() + off_bout_;
    for (int j = 0; j < m; ++j) {
      double z = bo[j];
      const double* row = wo + static_cast<std::size_t>(j) * H;
      for (int i = 0; i < H; ++i) z += row[i] * hin[i];
      logits[j] = z;
    }
    log_softmax(logits, {log_mu.data() + static_cast<std::size_t>(p) * m,
                         static_cast<std::size_t>(m)});
    if (trace)
      for (int j = 0; j < m; ++j)
        trace->mu[static_cast<std::size_t>(p) * m + j] =
            std::exp(log_mu[static_cast<std::size_t>(p) * m + j]);
  }
}

void MlpPredictor::eval_log_probs(const TokenSequence& xt, double t,
                                  std::span<double> log_mu) const {
  run(xt, t, log_mu, nullptr);
}

void MlpPredictor::forward(const TokenSequence& xt, double t,
                           std::span<double> log_mu) {
  if (!rec_) rec_ = std::make_shared<Trace>();
  run(xt, t, log_mu, rec_.get());
  rec_xt_ = xt;
  rec_t_ = t;
}

void MlpPredictor::backward(std::span<const double> dlog_mu,
                            std::span<double> grad) {
  if (!rec_) throw std::logic_error("mlp backward without forward");
  const Trace& tr = *rec_;
  const int m = vocab_.m;
  const int n = tr.n;
  const int H = cfg_.hidden;
  const int E = cfg_.embed_dim;
  const int W = cfg_.window;
  const int L = cfg_.layers;

  std::vector<double> dlogit(m);
  std::vector<double> dh(H), dz(H), dprev(std::max(input_dim_, H));

  for (int p = 0; p < n; ++p) {
    const double* u = dlog_mu.data() + static_cast<std::size_t>(p) * m;
    const double* mu = tr.mu.data() + static_cast<std::size_t>(p) * m;
    double usum = 0.0;
    for (int j = 0; j < m; ++j) usum += u[j];
    for (int j = 0; j < m; ++j) dlogit[j] = u[j] - mu[j] * usum;

    // output layer
    const double* hlast =
        tr.h.data() + (static_cast<std::size_t>(p) * L + (L - 1)) * H;
    double* gwo = grad.data() + off_wout_;
    double* gbo = grad.data() + off_bout_;
    std::fill(dh.begin(), dh.end(), 0.0);
    const double* wo = params_.data() + off_wout_;
    for (int j = 0; j < m; ++j) {
      gbo[j] += dlogit[j];
      double* grow = gwo + static_cast<std::size_t>(j) * H;
      const double* wrow = wo + static_cast<std::size_t>(j) * H;
      for (int i = 0; i < H; ++i) {
        grow[i] += dlogit[j] * hlast[i];
        dh[i] += wrow[i] * dlogit[j];
      }
    }

    // hidden layers, top down
    for (int l = L - 1; l >= 0; --l) {
      const double* zl = tr.z.data() + (static_cast<std::size_t>(p) * L + l) * H;
      for (int i = 0; i < H; ++i) dz[i] = dh[i] * gelu_grad(zl[i]);
      const int prev_dim = (l == 0) ? input_dim_ : H;
      const double* below =
          (l == 0) ? tr.input.data() + static_cast<std::size_t>(p) * input_dim_
                   : tr.h.data() + (static_cast<std::size_t>(p) * L + l - 1) * H;
      double* gw = grad.data() + off_w_[l];
      double* gb = grad.data() + off_b_[l];
      const double* wl = params_.data() + off_w_[l];
      std::fill(dprev.begin(), dprev.begin() + prev_dim, 0.0);
      for (int i = 0; i < H; ++i) {
        gb[i] += dz[i];
        double* grow = gw + static_cast<std::size_t>(i) * prev_dim;
        const double* wrow = wl + static_cast<std::size_t>(i) * prev_dim;
        for (int j = 0; j < prev_dim; ++j) {
          grow[j] += dz[i] * below[j];
          dprev[j] += wrow[j] * dz[i];
        }
      }
      if (l > 0) std::memcpy(dh.data(), dprev.data(), sizeof(double) * H);
    }

    // embedding gradients from the input window
    double* ge = grad.data() + off_embed_;
    for (int o = -W; o <= W; ++o) {
      const int q = p + o;
      if (q < 0 || q >= n) continue;
      double* grow = ge + static_cast<std::size_t>(rec_xt_.ids[q]) * E;
      const double* dslice = dprev.data() + (o + W) * E;
      for (int j = 0; j < E; ++j) grow[j] += dslice[j];
    }
  }
}

std::unique_ptr<Predictor> MlpPredictor::clone() const {
  auto c = std::make_unique<MlpPredictor>(*this);
  c->rec_ = nullptr;  // recordings are per instance
  return c;
}

std::string MlpPredictor::describe() const {
  std::ostringstream os;
  os << "mlp embed=" << cfg_.embed_dim << " hidden=" << cfg_.hidden
     << " layers=" << cfg_.layers << " window=" << cfg_.window
     << " lclip=" << cfg_.lambda_clip;
  return os.str();
}

// ---------------------------------------------------------------------------

std::unique_ptr<Predictor> make_predictor(const std::string& description,
                                          Vocabulary v, Schedule sched,
                                          std::uint64_t init_seed) {
  std::istringstream is(description);
  std::string kind;
  is >> kind;
  auto field = [&](const std::string& tok, const char* name) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || tok.substr(0, eq) != name)
      throw std::invalid_argument("bad predictor description: " + description);
    return tok.substr(eq + 1);
  };
  if (kind == "tabular") {
    std::string c, n, cap;
    is >> c >> n >> cap;
    const std::string ctx = field(c, "ctx");
    TabularContext tc;
    if (ctx == "shared") tc = TabularContext::shared;
    else if (ctx == "full_state") tc = TabularContext::full_state;
    else if (ctx == "neighbors") tc = TabularContext::neighbors;
    else throw std::invalid_argument("bad tabular context: " + ctx);
    return std::make_unique<TabularPredictor>(v, tc, std::stoi(field(n, "n")),
                                              std::stoi(field(cap, "cap")));
  }
  if (kind == "mlp") {
    std::string e, h, l, w, lc;
    is >> e >> h >> l >> w >> lc;
    MlpConfig cfg;
    cfg.embed_dim = std::stoi(field(e, "embed"));
    cfg.hidden = std::stoi(field(h, "hidden"));
    cfg.layers = std::stoi(field(l, "layers"));
    cfg.window = std::stoi(field(w, "window"));
    cfg.lambda_clip = std::stod(field(lc, "lclip"));
    return std::make_unique<MlpPredictor>(v, cfg, init_seed, sched);
  }
  throw std::invalid_argument("unknown predictor kind: " + kind);
}

}  // namespace mdc

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mdc/trainer.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace mdc {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

void put_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), 8);
}

void put_f32_array(std::string& out, const std::vector<float>& a) {
  put_u64(out, a.size());
  out.append(reinterpret_cast<const char*>(a.data()),
             a.size() * sizeof(float));
}

struct Reader {
  const unsigned char* p;
  std::size_t n, off = 0;

  void need(std::size_t k) const {
    if (off + k > n)
      throw CheckpointError(CheckpointErrorKind::truncated,
                            "checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, p + off, 4);
    off += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, p + off, 8);
    off += 8;
    return v;
  }
  std::string bytes(std::size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p + off), k);
    off += k;
    return s;
  }
  std::vector<float> f32_array() {
    const std::uint64_t count = u64();
    need(count * sizeof(float));
    std::vector<float> a(count);
    std::memcpy(a.data(), p + off, count * sizeof(float));
    off += count * sizeof(float);
    return a;
  }
};

std::string build_metadata(const Checkpoint& c) {
  std::ostringstream os;
  os << "arch = " << c.arch << "\n";
  os << "schedule = " << schedule_kind_name(c.schedule.kind) << "\n";
  os << "poly_w = " << fmt_double(c.schedule.poly_w) << "\n";
  os << "beta_min = " << fmt_double(c.schedule.beta_min) << "\n";
  os << "beta_max = " << fmt_double(c.schedule.beta_max) << "\n";
  os << "eps = " << fmt_double(c.schedule.eps) << "\n";
  os << "loss = " << loss_kind_name(c.loss) << "\n";
  os << "chunk_len = " << c.chunk_len << "\n";
  os << "step = " << c.step << "\n";
  os << "adam_step = " << c.adam_step << "\n";
  os << "seed = " << c.seed << "\n";
  os << "vocab_unk = " << c.vocab.unk_id << "\n";
  os << "vocab_chars = ";
  for (std::size_t i = 0; i < c.vocab.id_to_char.size(); ++i)
    os << (i ? "," : "") << static_cast<std::uint32_t>(c.vocab.id_to_char[i]);
  os << "\n";
  return os.str();
}

void parse_metadata(const std::string& text, Checkpoint& c) {
  std::istringstream is(text);
  ConfigMap meta;
  try {
    meta = parse_config(is);
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrorKind::bad_metadata, e.what());
  }
  try {
    c.arch = cfg_str(meta, "arch", "");
    Schedule s;
    s.kind = schedule_kind_from_name(cfg_str(meta, "schedule", "linear"));
    s.poly_w = cfg_double(meta, "poly_w", 2.0);
    s.beta_min = cfg_double(meta, "beta_min", 1e-5);
    s.beta_max = cfg_double(meta, "beta_max", 20.0);
    s.eps = cfg_double(meta, "eps", 0.0);
    c.schedule = s;
    c.loss = loss_kind_from_name(cfg_str(meta, "loss", "L_inf_ce"));
    c.chunk_len = cfg_int(meta, "chunk_len", 0);
    c.step = static_cast<std::int64_t>(cfg_u64(meta, "step", 0));
    c.adam_step = static_cast<std::int64_t>(cfg_u64(meta, "adam_step", 0));
    c.seed = cfg_u64(meta, "seed", 0);
    c.vocab.unk_id = cfg_int(meta, "vocab_unk", -1);
    c.vocab.id_to_char.clear();
    c.vocab.char_to_id.clear();
    const std::string chars = cfg_str(meta, "vocab_chars", "");
    std::istringstream cs(chars);
    std::string tok;
    while (std::getline(cs, tok, ','))
      if (!tok.empty())
        c.vocab.id_to_char.push_back(static_cast<char32_t>(std::stoul(tok)));
    for (int i = 0; i < c.vocab.m(); ++i)
      if (i != c.vocab.unk_id)
        c.vocab.char_to_id.emplace(c.vocab.id_to_char[i], i);
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrorKind::bad_metadata, e.what());
  }
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i)
    c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append("MDCK");
  put_u32(out, ckpt.version);
  const std::string meta = build_metadata(ckpt);
  put_u64(out, meta.size());
  out.append(meta);
  put_f32_array(out, ckpt.params);
  put_f32_array(out, ckpt.ema);
  put_f32_array(out, ckpt.adam_m);
  put_f32_array(out, ckpt.adam_v);
  put_f32_array(out, ckpt.w);
  put_u32(out, crc32(reinterpret_cast<const unsigned char*>(out.data()),
                     out.size()));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  const auto* data = reinterpret_cast<const unsigned char*>(buf.data());

  if (buf.size() < 4 + 4 + 8 + 4)
    throw CheckpointError(CheckpointErrorKind::truncated,
                          "checkpoint: file too short");
  if (std::memcmp(buf.data(), "MDCK", 4) != 0)
    throw CheckpointError(CheckpointErrorKind::bad_magic,
                          "checkpoint: bad magic");

  Reader r{data, buf.size() - 4, 4};
  Checkpoint c;
  c.version = r.u32();
  if (c.version != 1)
    throw CheckpointError(CheckpointErrorKind::bad_version,
                          "checkpoint: unsupported version " +
                              std::to_string(c.version));
  const std::uint64_t meta_len = r.u64();
  const std::string meta = r.bytes(meta_len);
  c.params = r.f32_array();
  c.ema = r.f32_array();
  c.adam_m = r.f32_array();
  c.adam_v = r.f32_array();
  c.w = r.f32_array();
  if (r.off != r.n)
    throw CheckpointError(CheckpointErrorKind::truncated,
                          "checkpoint: trailing or missing bytes");

  std::uint32_t stored;
  std::memcpy(&stored, data + buf.size() - 4, 4);
  if (crc32(data, buf.size() - 4) != stored)
    throw CheckpointError(CheckpointErrorKind::bad_checksum,
                          "checkpoint: checksum failure");

  parse_metadata(meta, c);
  return c;
}

std::unique_ptr<Predictor> Checkpoint::make_predictor(bool use_ema) const {
  auto p = mdc::make_predictor(arch, vocab.vocabulary(), schedule);
  const std::vector<float>& src = use_ema ? ema : params;
  if (src.size() != p->param_count())
    throw CheckpointError(CheckpointErrorKind::bad_metadata,
                          "checkpoint: parameter count mismatch");
  auto dst = p->params();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = static_cast<double>(src[i]);
  return p;
}

}  // namespace mdc

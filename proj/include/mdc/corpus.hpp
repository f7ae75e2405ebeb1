#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdc/types.hpp"

namespace mdc {

// Character-level vocabulary: codepoints mapped to ids 0..m-1 in frequency
// order (ties broken by codepoint). When the text has more distinct
// characters than the cap, the least frequent ones fold into a single `unk`
// id that occupies an ordinary slot, keeping the mask id at m.
struct CorpusVocab {
  std::vector<char32_t> id_to_char;  // size m
  std::unordered_map<char32_t, int> char_to_id;
  int unk_id = -1;  // -1 when every character is in vocabulary

  int m() const { return static_cast<int>(id_to_char.size()); }
  Vocabulary vocabulary() const { return Vocabulary{m()}; }

  std::vector<int> encode(const std::u32string& text) const;
  // Decodes ids; the mask id renders as mask_render, unk as U+FFFD.
  std::string decode(const std::vector<int>& ids,
                     char32_t mask_render = U'?') const;
};

struct CorpusData {
  CorpusVocab vocab;
  int chunk_len = 0;
  std::vector<std::vector<int>> train, valid;
};

// Thrown with the byte offset of the first undecodable input byte.
struct IngestError : std::runtime_error {
  std::size_t byte_offset;
  IngestError(const std::string& msg, std::size_t off)
      : std::runtime_error(msg), byte_offset(off) {}
};

std::u32string decode_utf8(const std::string& bytes);
std::string encode_utf8(const std::u32string& text);

// Builds the vocabulary, splits the text into fixed-length non-overlapping
// chunks and holds out the trailing fraction for validation.
CorpusData ingest_text(const std::string& utf8_text, int vocab_cap,
                       int chunk_len, double valid_frac = 0.02);
CorpusData ingest(const std::string& path, int vocab_cap, int chunk_len,
                  double valid_frac = 0.02);

// Synthetic character sources with a known entropy rate; states map to the
// characters 'a' + i.
struct SyntheticSource {
  int order = 0;               // 0: i.i.d., 1: Markov
  int states = 0;              // number of symbols
  std::vector<double> table;   // order 0: states probs; order 1: states^2 rows

  static SyntheticSource iid(std::vector<double> probs);
  static SyntheticSource markov(int states, std::vector<double> row_stochastic);
};

std::string synth_generate(const SyntheticSource& src, std::size_t total_len,
                           std::uint64_t seed);
// Stationary distribution by power iteration to 1e-12.
std::vector<double> stationary_distribution(const SyntheticSource& src);
// Entropy rate in nats per character.
double synth_entropy(const SyntheticSource& src);

// Chunk fixture files: header "mdc-chunks v1 m=<m> len=<L>", then one chunk
// per line of space-separated ids.
void write_chunks(const std::string& path, int m,
                  const std::vector<std::vector<int>>& chunks);
std::pair<int, std::vector<std::vector<int>>> read_chunks(
    const std::string& path);

}  // namespace mdc

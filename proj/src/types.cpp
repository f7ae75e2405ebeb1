#include "mdc/types.hpp"

#include <stdexcept>

namespace mdc {

TokenSequence::TokenSequence(Vocabulary v, std::vector<int> token_ids)
    : vocab(v), ids(std::move(token_ids)) {
  for (int id : ids)
    if (!vocab.valid_id(id))
      throw std::invalid_argument("TokenSequence: id outside [0, m]");
}

TokenSequence TokenSequence::all_mask(Vocabulary v, int n) {
  TokenSequence x;
  x.vocab = v;
  x.ids.assign(static_cast<std::size_t>(n), v.mask_id());
  return x;
}

bool TokenSequence::is_clean() const {
  for (int id : ids)
    if (id == vocab.mask_id()) return false;
  return true;
}

int TokenSequence::masked_count() const {
  int c = 0;
  for (int id : ids) c += (id == vocab.mask_id());
  return c;
}

void require_clean(const TokenSequence& x0) {
  if (!x0.is_clean())
    throw std::invalid_argument("expected a clean sequence (no mask ids)");
}

}  // namespace mdc

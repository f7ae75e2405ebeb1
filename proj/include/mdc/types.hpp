#pragma once

#include <vector>

namespace mdc {

// Token values are 0..m-1; the mask state is the extra id m.
struct Vocabulary {
  int m = 0;

  int mask_id() const { return m; }
  bool valid_id(int id) const { return id >= 0 && id <= m; }
  bool valid_clean_id(int id) const { return id >= 0 && id < m; }
};

struct TokenSequence {
  Vocabulary vocab;
  std::vector<int> ids;

  TokenSequence() = default;
  TokenSequence(Vocabulary v, std::vector<int> token_ids);

  static TokenSequence all_mask(Vocabulary v, int n);

  int size() const { return static_cast<int>(ids.size()); }
  bool is_clean() const;  // true when no position holds the mask id
  int masked_count() const;
};

void require_clean(const TokenSequence& x0);

}  // namespace mdc

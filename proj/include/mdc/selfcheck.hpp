#pragma once

#include <string>
#include <vector>

namespace mdc {

struct SelfcheckOptions {
  // Negative-control hook: "score-constraint" disables the Prop-1 scale on
  // the score parameterization so the dependent checks must fail.
  std::string fault;
  std::uint64_t seed = 2024;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double tolerance = 0.0;
  std::string note;
};

// Enumeration-oracle property suite: Chapman-Kolmogorov, Bayes posterior,
// the forward/reverse rate relation, Taylor decay, loss equivalences, the
// Prop-1 sum rule, RLOO unbiasedness, sampler marginals and the entropy
// floor. Pure; no filesystem access.
std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opt = {});

}  // namespace mdc

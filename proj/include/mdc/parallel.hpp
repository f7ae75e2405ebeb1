#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace mdc::exec {

// Execution mode for the batch kernels. Every parallel kernel has a serial
// twin with identical results; tests compare the two bit for bit.
enum class Mode { serial, parallel };

int max_threads();
int thread_index();

// Runs body(i) for i in [0, n). In parallel mode iterations are spread over
// OpenMP threads; bodies must only write to per-index slots. Exceptions are
// captured and rethrown after the loop.
void parallel_for(std::size_t n, Mode mode,
                  const std::function<void(std::size_t)>& body);

// Fixed-shape pairwise summation; result does not depend on thread count.
double pairwise_sum(std::span<const double> xs);

// Reduces `count` vectors of length out.size() stored back-to-back in
// `slots` into out, pairwise in index order. Clobbers slots.
void pairwise_sum_vectors(std::span<double> slots, std::size_t count,
                          std::span<double> out);

}  // namespace mdc::exec

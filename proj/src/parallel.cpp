#include "mdc/parallel.hpp"

#include <cstring>
#include <exception>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mdc::exec {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int thread_index() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

void parallel_for(std::size_t n, Mode mode,
                  const std::function<void(std::size_t)>& body) {
  if (mode == Mode::serial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
#ifdef _OPENMP
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
#else
  for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

namespace {

double pairwise_sum_impl(const double* xs, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += xs[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_impl(xs, half) + pairwise_sum_impl(xs + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> xs) {
  return pairwise_sum_impl(xs.data(), xs.size());
}

void pairwise_sum_vectors(std::span<double> slots, std::size_t count,
                          std::span<double> out) {
  const std::size_t p = out.size();
  if (count == 0) {
    std::memset(out.data(), 0, p * sizeof(double));
    return;
  }
  if (slots.size() < count * p)
    throw std::invalid_argument("pairwise_sum_vectors: slots too small");
  for (std::size_t stride = 1; stride < count; stride *= 2) {
    for (std::size_t i = 0; i + stride < count; i += 2 * stride) {
      double* a = slots.data() + i * p;
      const double* b = slots.data() + (i + stride) * p;
      for (std::size_t j = 0; j < p; ++j) a[j] += b[j];
    }
  }
  std::memcpy(out.data(), slots.data(), p * sizeof(double));
}

}  // namespace mdc::exec

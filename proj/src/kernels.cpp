#include "dexforge/kernels.hpp"

#include <exception>
#include <omp.h>

namespace dexforge::kernels {

namespace {

double row_distance(const MatX& rows, Eigen::Index r, const VecX& query) {
  double d = 0.0;
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const double e = rows(r, c) - query[c];
    d += e * e;
  }
  return d;
}

void check(const MatX& rows, const VecX& query) {
  if (rows.cols() != query.size()) throw ContractViolation("squared_distances: dimension mismatch");
}

}  // namespace

std::vector<double> squared_distances(const MatX& rows, const VecX& query) {
  check(rows, query);
  std::vector<double> out(static_cast<size_t>(rows.rows()));
  for (Eigen::Index r = 0; r < rows.rows(); ++r) out[r] = row_distance(rows, r, query);
  return out;
}

std::vector<double> squared_distances_parallel(const MatX& rows, const VecX& query) {
  check(rows, query);
  std::vector<double> out(static_cast<size_t>(rows.rows()));
  const Eigen::Index n = rows.rows();
  // small sets are not worth the fork
#pragma omp parallel for schedule(static) if (n > 4096)
  for (Eigen::Index r = 0; r < n; ++r) out[r] = row_distance(rows, r, query);
  return out;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& job) {
  if (n <= 0) return;
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (int i = 0; i < n; ++i) {
    try {
      job(i);
    } catch (...) {
#pragma omp critical(dexforge_parallel_for)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace dexforge::kernels

#pragma once

// Data-parallel kernels. Each has a serial reference; the OpenMP versions
// produce bit-identical results because every output element is computed
// by a single thread in a fixed order.

#include "dexforge/geometry.hpp"

#include <functional>
#include <vector>

namespace dexforge::kernels {

/// Squared Euclidean distance from `query` to every row of `rows`.
std::vector<double> squared_distances(const MatX& rows, const VecX& query);
std::vector<double> squared_distances_parallel(const MatX& rows, const VecX& query);

/// Calls job(i) for i in [0, n) on up to `jobs` threads (0 = runtime default).
/// Results must be written to per-index slots by the caller.
void parallel_for(int n, int jobs, const std::function<void(int)>& job);

}  // namespace dexforge::kernels

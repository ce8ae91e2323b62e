#pragma once

// Distance kernels behind density clustering and cluster growing.
//
// Each kernel comes in two flavours: a serial reference that walks pairs with
// squared_distance() and nothing else, and an OpenMP version that blocks over a
// dimension-major copy of the points so the inner loop vectorises across
// points. The blocked loop still sums each pair's squared differences in
// dimension order, so both flavours return bit-identical results; the tests
// hold them to exact equality.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stop_token>
#include <vector>

namespace annoclust::kernels {

// Row-major points, n x dim.
struct PointMatrix {
  std::span<const float> values;
  std::size_t dim = 0;

  std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  const float* row(std::size_t i) const { return values.data() + i * dim; }
};

// MST edge over local point indices; a < b. weight_sq is the squared
// mutual-reachability distance.
struct MstEdge {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double weight_sq = 0.0;
};

enum class Backend { serial, parallel };

// Squared distance from every point to its k-th nearest other point.
std::vector<double> core_distances_sq_serial(const PointMatrix& points, std::size_t k,
                                             std::stop_token stop = {});
std::vector<double> core_distances_sq_parallel(const PointMatrix& points, std::size_t k,
                                               std::stop_token stop = {});

// Prim's algorithm on the complete mutual-reachability graph, weights computed
// on the fly. Edges are returned in insertion order. Ties pick the
// lexicographically smallest (a, b) edge.
std::vector<MstEdge> prim_mst_serial(const PointMatrix& points, std::span<const double> core_sq,
                                     std::stop_token stop = {});
std::vector<MstEdge> prim_mst_parallel(const PointMatrix& points, std::span<const double> core_sq,
                                       std::stop_token stop = {});

// Squared distance from a double-precision query (e.g. a centroid) to every point.
std::vector<double> distances_sq_serial(const PointMatrix& points, std::span<const double> query);
std::vector<double> distances_sq_parallel(const PointMatrix& points, std::span<const double> query);

inline std::vector<double> core_distances_sq(Backend backend, const PointMatrix& points,
                                             std::size_t k, std::stop_token stop = {}) {
  return backend == Backend::serial ? core_distances_sq_serial(points, k, stop)
                                    : core_distances_sq_parallel(points, k, stop);
}

inline std::vector<MstEdge> prim_mst(Backend backend, const PointMatrix& points,
                                     std::span<const double> core_sq, std::stop_token stop = {}) {
  return backend == Backend::serial ? prim_mst_serial(points, core_sq, stop)
                                    : prim_mst_parallel(points, core_sq, stop);
}

inline std::vector<double> distances_sq(Backend backend, const PointMatrix& points,
                                        std::span<const double> query) {
  return backend == Backend::serial ? distances_sq_serial(points, query)
                                    : distances_sq_parallel(points, query);
}

int max_threads();

}  // namespace annoclust::kernels

#include "annoclust/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <limits>
#include <tuple>

#include "annoclust/errors.hpp"
#include "annoclust/feature_store.hpp"

namespace annoclust::kernels {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
constexpr std::size_t kBlock = 256;

// Keeps the k smallest values seen, ascending, in a caller-owned slot of size k.
inline void push_smallest(double* slot, std::size_t k, double value) {
  if (value >= slot[k - 1]) return;
  std::size_t pos = k - 1;
  while (pos > 0 && slot[pos - 1] > value) {
    slot[pos] = slot[pos - 1];
    --pos;
  }
  slot[pos] = value;
}

void check_core_args(const PointMatrix& points, std::size_t k) {
  if (k == 0) throw ValueError("neighborhood size k must be positive");
  if (points.size() <= k) {
    throw InsufficientPointsError("need more than k=" + std::to_string(k) + " points, got " +
                                  std::to_string(points.size()));
  }
}

// Dimension-major double copy: column j of dimension d lives at d * n + j.
std::vector<double> transpose(const PointMatrix& points) {
  const std::size_t n = points.size();
  std::vector<double> soa(points.dim * n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* r = points.row(i);
    for (std::size_t d = 0; d < points.dim; ++d) soa[d * n + i] = static_cast<double>(r[d]);
  }
  return soa;
}

// acc[t] = squared distance between query and column (start + t), summed in
// dimension order exactly like squared_distance().
inline void block_distances(const double* soa, std::size_t stride, std::size_t dim,
                            const double* query, std::size_t start, std::size_t len, double* acc) {
  std::fill(acc, acc + len, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    const double* col = soa + d * stride + start;
    const double q = query[d];
#pragma omp simd
    for (std::size_t t = 0; t < len; ++t) {
      const double diff = col[t] - q;
      acc[t] += diff * diff;
    }
  }
}

using EdgeKey = std::tuple<double, std::uint32_t, std::uint32_t>;

inline EdgeKey edge_key(double w, std::uint32_t u, std::uint32_t v) {
  return {w, std::min(u, v), std::max(u, v)};
}

inline bool improves(double w, std::uint32_t u, std::uint32_t j, double best, std::uint32_t parent) {
  if (w < best) return true;
  if (w > best || parent == kNone) return false;
  return std::min(u, j) < std::min(parent, j) ||
         (std::min(u, j) == std::min(parent, j) && std::max(u, j) < std::max(parent, j));
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

std::vector<double> core_distances_sq_serial(const PointMatrix& points, std::size_t k,
                                             std::stop_token stop) {
  check_core_args(points, k);
  const std::size_t n = points.size();
  std::vector<double> core(n);
  std::vector<double> slot(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (stop.stop_requested()) throw Cancelled("core distance computation cancelled");
    std::fill(slot.begin(), slot.end(), kInf);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      push_smallest(slot.data(), k, squared_distance(points.row(i), points.row(j), points.dim));
    }
    core[i] = slot[k - 1];
  }
  return core;
}

std::vector<double> core_distances_sq_parallel(const PointMatrix& points, std::size_t k,
                                               std::stop_token stop) {
  check_core_args(points, k);
  const std::size_t n = points.size();
  const std::size_t dim = points.dim;
  const auto soa = transpose(points);
  const int threads = omp_get_max_threads();
  // One k-slot per point per thread; each pair is evaluated once and offered
  // to both endpoints, then the per-thread slots are merged.
  std::vector<double> slots(static_cast<std::size_t>(threads) * n * k, kInf);
  std::atomic<bool> cancelled = false;

#pragma omp parallel num_threads(threads)
  {
    double* mine = slots.data() + static_cast<std::size_t>(omp_get_thread_num()) * n * k;
    std::vector<double> query(dim);
    std::vector<double> acc(kBlock);
#pragma omp for schedule(dynamic, 16)
    for (std::size_t i = 0; i < n; ++i) {
      if (cancelled.load(std::memory_order_relaxed)) continue;
      if (stop.stop_requested()) {
        cancelled = true;
        continue;
      }
      for (std::size_t d = 0; d < dim; ++d) query[d] = soa[d * n + i];
      for (std::size_t start = i + 1; start < n; start += kBlock) {
        const std::size_t len = std::min(kBlock, n - start);
        block_distances(soa.data(), n, dim, query.data(), start, len, acc.data());
        for (std::size_t t = 0; t < len; ++t) {
          push_smallest(mine + i * k, k, acc[t]);
          push_smallest(mine + (start + t) * k, k, acc[t]);
        }
      }
    }
  }
  if (cancelled) throw Cancelled("core distance computation cancelled");

  std::vector<double> core(n);
  std::vector<double> merged(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(slots.data() + i * k, k, merged.begin());
    for (int t = 1; t < threads; ++t) {
      const double* other = slots.data() + (static_cast<std::size_t>(t) * n + i) * k;
      for (std::size_t c = 0; c < k; ++c) push_smallest(merged.data(), k, other[c]);
    }
    core[i] = merged[k - 1];
  }
  return core;
}

std::vector<MstEdge> prim_mst_serial(const PointMatrix& points, std::span<const double> core_sq,
                                     std::stop_token stop) {
  const std::size_t n = points.size();
  if (n < 2) throw InsufficientPointsError("a spanning tree needs at least 2 points");
  std::vector<double> best(n, kInf);
  std::vector<std::uint32_t> parent(n, kNone);
  std::vector<char> in_tree(n, 0);
  std::vector<MstEdge> edges;
  edges.reserve(n - 1);

  std::uint32_t u = 0;
  in_tree[0] = 1;
  for (std::size_t step = 1; step < n; ++step) {
    if (stop.stop_requested()) throw Cancelled("spanning tree computation cancelled");
    for (std::uint32_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double d = squared_distance(points.row(u), points.row(j), points.dim);
      const double w = std::max({core_sq[u], core_sq[j], d});
      if (improves(w, u, j, best[j], parent[j])) {
        best[j] = w;
        parent[j] = u;
      }
    }
    std::uint32_t next = kNone;
    for (std::uint32_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      if (next == kNone || edge_key(best[j], parent[j], j) < edge_key(best[next], parent[next], next)) {
        next = j;
      }
    }
    in_tree[next] = 1;
    edges.push_back({std::min(parent[next], next), std::max(parent[next], next), best[next]});
    u = next;
  }
  return edges;
}

std::vector<MstEdge> prim_mst_parallel(const PointMatrix& points, std::span<const double> core_sq,
                                       std::stop_token stop) {
  const std::size_t n = points.size();
  if (n < 2) throw InsufficientPointsError("a spanning tree needs at least 2 points");
  const std::size_t dim = points.dim;

  // Out-of-tree points are kept packed in positions [0, remaining) so the
  // update loop runs over a contiguous range; a point joining the tree is
  // swapped with the last live position.
  auto soa = transpose(points);
  std::vector<std::uint32_t> id(n);
  for (std::uint32_t i = 0; i < n; ++i) id[i] = i;
  std::vector<double> best(n, kInf);
  std::vector<std::uint32_t> parent(n, kNone);

  auto swap_out = [&](std::size_t pos, std::size_t last) {
    if (pos == last) return;
    for (std::size_t d = 0; d < dim; ++d) std::swap(soa[d * n + pos], soa[d * n + last]);
    std::swap(id[pos], id[last]);
    std::swap(best[pos], best[last]);
    std::swap(parent[pos], parent[last]);
  };

  std::vector<double> query(dim);
  for (std::size_t d = 0; d < dim; ++d) query[d] = soa[d * n + 0];
  std::uint32_t u = 0;
  std::size_t remaining = n;
  swap_out(0, --remaining);

  std::vector<MstEdge> edges;
  edges.reserve(n - 1);
  const int threads = omp_get_max_threads();
  std::vector<std::size_t> local_pos(static_cast<std::size_t>(threads));

  while (remaining > 0) {
    if (stop.stop_requested()) throw Cancelled("spanning tree computation cancelled");
    const double core_u = core_sq[u];
    const std::size_t live = remaining;
#pragma omp parallel num_threads(threads)
    {
      std::vector<double> acc(kBlock);
      std::size_t arg = live;
#pragma omp for schedule(static)
      for (std::size_t start = 0; start < live; start += kBlock) {
        const std::size_t len = std::min(kBlock, live - start);
        block_distances(soa.data(), n, dim, query.data(), start, len, acc.data());
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t pos = start + t;
          const std::uint32_t j = id[pos];
          const double w = std::max({core_u, core_sq[j], acc[t]});
          if (improves(w, u, j, best[pos], parent[pos])) {
            best[pos] = w;
            parent[pos] = u;
          }
          if (arg == live || edge_key(best[pos], parent[pos], j) <
                                 edge_key(best[arg], parent[arg], id[arg])) {
            arg = pos;
          }
        }
      }
      local_pos[static_cast<std::size_t>(omp_get_thread_num())] = arg;
    }
    std::size_t pick = live;
    for (int t = 0; t < threads; ++t) {
      const std::size_t cand = local_pos[static_cast<std::size_t>(t)];
      if (cand == live) continue;
      if (pick == live || edge_key(best[cand], parent[cand], id[cand]) <
                              edge_key(best[pick], parent[pick], id[pick])) {
        pick = cand;
      }
    }
    const std::uint32_t next = id[pick];
    edges.push_back({std::min(parent[pick], next), std::max(parent[pick], next), best[pick]});
    for (std::size_t d = 0; d < dim; ++d) query[d] = soa[d * n + pick];
    u = next;
    swap_out(pick, --remaining);
  }
  return edges;
}

namespace {

inline double squared_distance_to(const float* row, const double* query, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = static_cast<double>(row[d]) - query[d];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

std::vector<double> distances_sq_serial(const PointMatrix& points, std::span<const double> query) {
  if (query.size() != points.dim) throw ValueError("query dimensionality mismatch");
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = squared_distance_to(points.row(i), query.data(), points.dim);
  }
  return out;
}

std::vector<double> distances_sq_parallel(const PointMatrix& points, std::span<const double> query) {
  if (query.size() != points.dim) throw ValueError("query dimensionality mismatch");
  const std::size_t n = points.size();
  std::vector<double> out(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = squared_distance_to(points.row(i), query.data(), points.dim);
  }
  return out;
}

}  // namespace annoclust::kernels

// Times the serial and OpenMP kernels on the same random points and checks
// that they agree bit for bit.
//
//   bench_kernels [--n 4000] [--dim 32] [--repeats 3]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "annoclust/kernels.hpp"

using namespace annoclust::kernels;

namespace {

template <class F>
double best_seconds(int repeats, F&& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-16s serial %9.4f s  parallel %9.4f s  speedup %5.2fx  %s\n", name, serial, parallel,
              serial / parallel, same ? "identical" : "MISMATCH");
}

bool same_edges(const std::vector<MstEdge>& a, const std::vector<MstEdge>& b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end(), [](const MstEdge& x, const MstEdge& y) {
    return x.a == y.a && x.b == y.b && x.weight_sq == y.weight_sq;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs OpenMP kernel timings"};
  std::size_t n = 4000, dim = 32;
  int repeats = 3;
  app.add_option("--n", n, "points")->check(CLI::Range(2, 1 << 24))->capture_default_str();
  app.add_option("--dim", dim, "dimensionality")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--repeats", repeats, "best of this many runs")->check(CLI::PositiveNumber)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(7);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<float> values(n * dim);
  for (auto& v : values) v = gauss(rng);
  const PointMatrix points{values, dim};
  std::vector<double> query(dim, 0.25);

  std::printf("n=%zu dim=%zu threads=%d repeats=%d\n", n, dim, max_threads(), repeats);

  std::vector<double> cs, cp;
  const double cs_t = best_seconds(repeats, [&] { cs = core_distances_sq_serial(points, 1); });
  const double cp_t = best_seconds(repeats, [&] { cp = core_distances_sq_parallel(points, 1); });
  report("core_distances", cs_t, cp_t, cs == cp);

  std::vector<MstEdge> ms, mp;
  const double ms_t = best_seconds(repeats, [&] { ms = prim_mst_serial(points, cs); });
  const double mp_t = best_seconds(repeats, [&] { mp = prim_mst_parallel(points, cs); });
  report("prim_mst", ms_t, mp_t, same_edges(ms, mp));

  std::vector<double> ds, dp;
  const double ds_t = best_seconds(repeats * 10, [&] { ds = distances_sq_serial(points, query); });
  const double dp_t = best_seconds(repeats * 10, [&] { dp = distances_sq_parallel(points, query); });
  report("distances", ds_t, dp_t, ds == dp);

  return cs == cp && same_edges(ms, mp) && ds == dp ? 0 : 1;
}

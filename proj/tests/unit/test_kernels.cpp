#include <doctest.h>

#include <random>

#include "../oracles/oracles.hpp"
#include "annoclust/errors.hpp"
#include "annoclust/kernels.hpp"

using namespace annoclust::kernels;

namespace {

std::vector<float> random_values(std::size_t n, std::size_t dim, std::uint64_t seed, bool lattice = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::uniform_int_distribution<int> small(0, 3);
  std::vector<float> v(n * dim);
  for (auto& x : v) x = lattice ? static_cast<float>(small(rng)) : g(rng);
  return v;
}

bool same(const std::vector<MstEdge>& a, const std::vector<MstEdge>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].a != b[i].a || a[i].b != b[i].b || a[i].weight_sq != b[i].weight_sq) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("serial and parallel kernels agree bit for bit") {
  for (std::size_t dim : {1u, 2u, 7u, 32u, 33u}) {
    for (std::size_t n : {2u, 3u, 17u, 300u, 700u}) {
      for (bool lattice : {false, true}) {
        CAPTURE(dim);
        CAPTURE(n);
        CAPTURE(lattice);
        const auto values = random_values(n, dim, n * 31 + dim, lattice);
        const PointMatrix pts{values, dim};
        for (std::size_t k : {1u, 2u}) {
          if (k >= n) continue;
          const auto cs = core_distances_sq_serial(pts, k);
          const auto cp = core_distances_sq_parallel(pts, k);
          CHECK(cs == cp);
          CHECK(same(prim_mst_serial(pts, cs), prim_mst_parallel(pts, cp)));
        }
        std::vector<double> q(dim, 0.3);
        CHECK(distances_sq_serial(pts, q) == distances_sq_parallel(pts, q));
      }
    }
  }
}

TEST_CASE("core distance is the k-th nearest other point") {
  const std::vector<float> xs{0.0f, 1.0f, 3.0f};
  const PointMatrix pts{xs, 1};
  const auto core = core_distances_sq_serial(pts, 1);
  CHECK(core == std::vector<double>{1.0, 1.0, 4.0});
  const auto core2 = core_distances_sq_parallel(pts, 2);
  CHECK(core2 == std::vector<double>{9.0, 4.0, 9.0});
}

TEST_CASE("coincident points have core distance zero") {
  const std::vector<float> xs{2.0f, 2.0f, 5.0f};
  const PointMatrix pts{xs, 1};
  CHECK(core_distances_sq_parallel(pts, 1)[0] == 0.0);
  CHECK(core_distances_sq_serial(pts, 1)[1] == 0.0);
}

TEST_CASE("prim returns a spanning tree of minimum mutual-reachability weight") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 2 + seed % 10;
    const auto values = random_values(n, 3, seed);
    const PointMatrix pts{values, 3};
    const auto core = core_distances_sq_parallel(pts, 1);
    const auto edges = prim_mst_parallel(pts, core);
    REQUIRE(edges.size() == n - 1);
    std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double d = 0.0;
        for (std::size_t t = 0; t < 3; ++t) {
          const double diff = static_cast<double>(values[i * 3 + t]) - values[j * 3 + t];
          d += diff * diff;
        }
        w[i][j] = std::max({core[i], core[j], d});
      }
    }
    double total = 0.0;
    for (const auto& e : edges) {
      CHECK(e.a < e.b);
      total += e.weight_sq;
    }
    CHECK(total == doctest::Approx(oracle::mst_weight_subsets(w)).epsilon(1e-12));
  }
}

TEST_CASE("a stop request cancels the kernels") {
  const auto values = random_values(200, 4, 3);
  const PointMatrix pts{values, 4};
  std::stop_source src;
  src.request_stop();
  CHECK_THROWS_AS(core_distances_sq_parallel(pts, 1, src.get_token()), annoclust::Cancelled);
  CHECK_THROWS_AS(core_distances_sq_serial(pts, 1, src.get_token()), annoclust::Cancelled);
  const auto core = core_distances_sq_serial(pts, 1);
  CHECK_THROWS_AS(prim_mst_parallel(pts, core, src.get_token()), annoclust::Cancelled);
  CHECK_THROWS_AS(prim_mst_serial(pts, core, src.get_token()), annoclust::Cancelled);
}

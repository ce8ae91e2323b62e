#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "../oracles/oracles.hpp"
#include "annoclust/density_clustering.hpp"
#include "annoclust/errors.hpp"
#include "helpers.hpp"

using namespace annoclust;

namespace {

std::vector<Row> all_rows(const FeatureStore& store) {
  std::vector<Row> rows(store.count());
  std::iota(rows.begin(), rows.end(), Row{0});
  return rows;
}

oracle::Partition as_partition(const SeedSet& seeds) {
  oracle::Partition p;
  for (const auto& s : seeds.seeds) p.clusters.push_back({s.members.begin(), s.members.end()});
  std::sort(p.clusters.begin(), p.clusters.end());
  p.noise.assign(seeds.noise.begin(), seeds.noise.end());
  return p;
}

oracle::Points points_of(const FeatureStore& store) {
  return {store.matrix(), store.dimensionality()};
}

// Seeds as sets of object ids, for comparing stores with different row orders.
std::vector<std::vector<std::string>> seed_ids(const FeatureStore& store, const SeedSet& seeds) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : seeds.seeds) {
    std::vector<std::string> ids;
    for (Row r : s.members) ids.push_back(store.object_id(r));
    std::sort(ids.begin(), ids.end());
    out.push_back(std::move(ids));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("core distance and mutual reachability on {0, 1, 3}") {
  const auto store = testing::store_1d({0.0f, 1.0f, 3.0f});
  const auto rows = all_rows(store);
  CHECK(core_distance(store, 0, 1, rows) == 1.0);
  CHECK(core_distance(store, 1, 1, rows) == 1.0);
  CHECK(core_distance(store, 2, 1, rows) == 2.0);
  CHECK(mutual_reachability(store, 1, 2, 1, rows) == 2.0);
  CHECK(mutual_reachability(store, 2, 1, 1, rows) == 2.0);
  CHECK(mutual_reachability(store, 0, 0, 1, rows) == core_distance(store, 0, 1, rows));
}

TEST_CASE("core distance preconditions") {
  const auto store = testing::store_1d({0.0f, 0.0f, 3.0f});
  const auto rows = all_rows(store);
  CHECK(core_distance(store, 0, 1, rows) == 0.0);
  CHECK_THROWS(core_distance(store, 0, 3, rows));
  const std::vector<Row> subset{1, 2};
  CHECK_THROWS(core_distance(store, 0, 1, subset));
}

TEST_CASE("two points give one edge weighted by their mutual reachability") {
  const auto store = testing::store_1d({0.0f, 4.0f});
  const auto rows = all_rows(store);
  const auto mst = build_mst(store, rows, 1);
  REQUIRE(mst.size() == 1);
  CHECK(mst[0].weight == 4.0);
  CHECK(mst[0].weight == mutual_reachability(store, 0, 1, 1, rows));
}

TEST_CASE("spanning tree weight equals the exhaustive minimum for up to 12 points") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::size_t n = 2 + seed % 11;
    const auto store = testing::random_store(n, 2 + seed % 3, seed);
    const auto rows = all_rows(store);
    double total = 0.0;
    for (const auto& e : build_mst(store, rows, 1)) total += e.weight;
    const auto w = oracle::mutual_reachability_matrix(points_of(store), 1);
    const double best = oracle::mst_weight_subsets(w);
    CHECK(total == doctest::Approx(best).epsilon(1e-12));
    if (n <= 8) CHECK(oracle::mst_weight_pruefer(w) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("spanning tree over a subset uses store rows") {
  const auto store = testing::store_1d({0.0f, 100.0f, 1.0f, 3.0f});
  const std::vector<Row> rows{0, 2, 3};
  const auto mst = build_mst(store, rows, 1);
  REQUIRE(mst.size() == 2);
  for (const auto& e : mst) {
    CHECK(e.a != 1);
    CHECK(e.b != 1);
  }
}

TEST_CASE("nothing splits when m exceeds the point count") {
  FeatureStore store(3);
  store.add("a", std::vector<float>{1, 0, 0});
  store.add("b", std::vector<float>{0, 1, 0});
  store.add("c", std::vector<float>{0, 0, 1});
  const auto tree = condense_tree(build_mst(store, all_rows(store), 1), 4);
  REQUIRE(tree.nodes.size() == 1);
  CHECK(tree.root().child_nodes.empty());
  CHECK(tree.root().point_members.size() == 3);
  const auto seeds = extract_seeds(tree, 4);
  CHECK(seeds.seeds.empty());
  CHECK(seeds.noise.size() == 3);
}

TEST_CASE("two groups of three split the root into two children") {
  const auto store = testing::store_1d({0, 1, 2, 10, 11, 12});
  const auto tree = condense_tree(build_mst(store, all_rows(store), 1), 3);
  REQUIRE(tree.root().child_nodes.size() == 2);
  for (auto c : tree.root().child_nodes) {
    CHECK(tree.nodes[c].size == 3);
    CHECK(tree.nodes[c].lambda_birth == doctest::Approx(1.0 / 8.0));
  }
  CHECK(tree.subtree_points(tree.root().child_nodes[0]) == std::vector<Row>{0, 1, 2});
  CHECK(tree.subtree_points(tree.root().child_nodes[1]) == std::vector<Row>{3, 4, 5});
}

TEST_CASE("seven points: two seeds and one noise point") {
  const auto store = testing::store_1d({0, 1, 2, 10, 11, 12, 50});
  const auto seeds = cluster_unassigned(store, all_rows(store), {1, 3});
  REQUIRE(seeds.seeds.size() == 2);
  CHECK(seeds.seeds[0].members == std::vector<Row>{0, 1, 2});
  CHECK(seeds.seeds[1].members == std::vector<Row>{3, 4, 5});
  CHECK(seeds.noise == std::vector<Row>{6});
  CHECK(as_partition(seeds) == oracle::brute_hdbscan(points_of(store), 1, 3));
}

TEST_CASE("an evenly spaced blob yields at most one seed, holding every point") {
  std::vector<std::vector<float>> grid;
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 5; ++y) grid.push_back({0.5f * x, 0.5f * y});
  }
  const auto store = testing::store_from(grid);
  const auto seeds = cluster_unassigned(store, all_rows(store), {1, 4});
  CHECK(seeds.seeds.size() <= 1);
  if (seeds.seeds.size() == 1) CHECK(seeds.seeds[0].members.size() == 20);
  CHECK(as_partition(seeds) == oracle::brute_hdbscan(points_of(store), 1, 4));
}

TEST_CASE("seeds from a random blob never overlap") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto store = testing::random_store(20, 2, 100 + seed);
    const auto seeds = cluster_unassigned(store, all_rows(store), {1, 4});
    std::vector<Row> seen = seeds.noise;
    for (const auto& s : seeds.seeds) seen.insert(seen.end(), s.members.begin(), s.members.end());
    std::sort(seen.begin(), seen.end());
    CHECK(seen == all_rows(store));
  }
}

TEST_CASE("fewer unassigned objects than m is an error") {
  const auto store = testing::store_1d({0, 1, 2});
  CHECK_THROWS_AS(cluster_unassigned(store, all_rows(store), {1, 4}), InsufficientPointsError);
  CHECK_THROWS_AS((ClusteringParams{1, 1}.validate()), ValueError);
  CHECK_THROWS_AS((ClusteringParams{0, 4}.validate()), ValueError);
}

TEST_CASE("seeds are disjoint, at least m large, and cover with noise exactly the input") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto store = testing::random_store(150, 3, seed);
    std::vector<Row> rows;
    for (Row r = 0; r < store.count(); r += 1 + seed % 2) rows.push_back(r);
    const std::size_t m = 4 + seed % 3 * 4;
    const auto seeds = cluster_unassigned(store, rows, {1, m});
    std::vector<Row> seen = seeds.noise;
    for (const auto& s : seeds.seeds) {
      CHECK(s.members.size() >= m);
      seen.insert(seen.end(), s.members.begin(), s.members.end());
    }
    std::sort(seen.begin(), seen.end());
    CHECK(seen == rows);
  }
}

TEST_CASE("matches brute-force HDBSCAN* on random instances") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::size_t n = 20 + seed * 3;
    const std::size_t dim = std::vector<std::size_t>{2, 8, 32}[seed % 3];
    const std::size_t m = std::vector<std::size_t>{4, 8, 16}[seed / 3 % 3];
    const auto store = testing::random_store(n, dim, 1000 + seed);
    const auto got = cluster_unassigned(store, all_rows(store), {1, m});
    CAPTURE(seed);
    CHECK(as_partition(got) == oracle::brute_hdbscan(points_of(store), 1, m));
  }
}

TEST_CASE("equal-weight ties on a lattice still match the brute-force oracle") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> cell(0, 6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 40; ++i) {
      rows.push_back({static_cast<float>(cell(rng)), static_cast<float>(cell(rng))});
    }
    const auto store = testing::store_from(rows);
    for (std::size_t m : {3u, 5u}) {
      CAPTURE(trial);
      const auto got = cluster_unassigned(store, all_rows(store), {1, m}, kernels::Backend::serial);
      CHECK(as_partition(got) == oracle::brute_hdbscan(points_of(store), 1, m));
    }
  }
}

TEST_CASE("row order and power-of-two scaling do not change the seeds") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto store = testing::random_store(120, 4, 77 + seed);
    const auto base = seed_ids(store, cluster_unassigned(store, all_rows(store), {1, 8}));

    std::vector<Row> perm = all_rows(store);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed));
    FeatureStore shuffled(4), scaled(4);
    for (Row r : perm) shuffled.add(store.object_id(r), store.features(r));
    for (Row r = 0; r < store.count(); ++r) {
      std::vector<float> f(store.features(r).begin(), store.features(r).end());
      for (auto& x : f) x *= 4.0f;
      scaled.add(store.object_id(r), f);
    }
    CHECK(seed_ids(shuffled, cluster_unassigned(shuffled, all_rows(shuffled), {1, 8})) == base);
    CHECK(seed_ids(scaled, cluster_unassigned(scaled, all_rows(scaled), {1, 8})) == base);
  }
}

TEST_CASE("serial and parallel backends give identical seeds") {
  const auto store = testing::random_store(400, 8, 4);
  const auto a = cluster_unassigned(store, all_rows(store), {1, 8}, kernels::Backend::serial);
  const auto b = cluster_unassigned(store, all_rows(store), {1, 8}, kernels::Backend::parallel);
  CHECK(as_partition(a) == as_partition(b));
}

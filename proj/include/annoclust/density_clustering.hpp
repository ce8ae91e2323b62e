#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stop_token>
#include <vector>

#include "annoclust/feature_store.hpp"
#include "annoclust/kernels.hpp"

namespace annoclust {

struct ClusteringParams {
  std::size_t k = 1;  // neighborhood size; core distance = k-th nearest other point
  std::size_t m = 2;  // minimum cluster size

  void validate() const;
};

// Table-1 style default: start strict, relax after every iteration.
inline const std::vector<std::size_t> kDefaultSchedule = {128, 64, 32, 16, 8, 4};

struct WeightedEdge {
  Row a = 0;
  Row b = 0;
  double weight = 0.0;  // mutual-reachability distance
};

// One node of the condensed cluster hierarchy. Lambdas are inverse distances,
// so they grow as the density threshold tightens; a zero distance maps to +inf.
struct CondensedNode {
  std::size_t node_id = 0;
  std::optional<std::size_t> parent;
  double lambda_birth = 0.0;
  double lambda_death = 0.0;
  std::size_t size = 0;                // points present at birth
  std::vector<Row> point_members;      // points that fell out of this node individually
  std::vector<double> point_lambdas;   // lambda at which each of them fell out
  std::vector<std::size_t> child_nodes;
  double stability = 0.0;
};

struct CondensedTree {
  std::vector<CondensedNode> nodes;  // nodes[0] is the root; children follow parents

  const CondensedNode& root() const { return nodes.front(); }
  // All points in the subtree of node, in ascending row order.
  std::vector<Row> subtree_points(std::size_t node) const;
};

struct Seed {
  std::size_t seed_id = 0;
  std::vector<Row> members;  // ascending
};

struct SeedSet {
  std::vector<Seed> seeds;  // descending size, then ascending first member
  std::vector<Row> noise;   // ascending
};

double core_distance(const FeatureStore& store, Row object, std::size_t k,
                     std::span<const Row> candidates);

double mutual_reachability(const FeatureStore& store, Row a, Row b, std::size_t k,
                           std::span<const Row> candidates);

std::vector<WeightedEdge> build_mst(const FeatureStore& store, std::span<const Row> candidates,
                                    std::size_t k,
                                    kernels::Backend backend = kernels::Backend::parallel,
                                    std::stop_token stop = {});

// Single-linkage hierarchy of the spanning tree, condensed at minimum cluster
// size m. Edges of equal weight are cut simultaneously, so the result does not
// depend on how ties were resolved while building the spanning tree.
CondensedTree condense_tree(std::span<const WeightedEdge> mst, std::size_t m);

// Excess-of-mass selection; the root is never selected.
SeedSet extract_seeds(const CondensedTree& tree, std::size_t m);

SeedSet cluster_unassigned(const FeatureStore& store, std::span<const Row> unassigned,
                           const ClusteringParams& params,
                           kernels::Backend backend = kernels::Backend::parallel,
                           std::stop_token stop = {});

}  // namespace annoclust

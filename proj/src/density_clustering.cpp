#include "annoclust/density_clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "annoclust/errors.hpp"

namespace annoclust {

namespace {

double lambda_of(double distance) {
  return distance > 0.0 ? 1.0 / distance : std::numeric_limits<double>::infinity();
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  std::size_t unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return a;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<unsigned char> rank_;
};

// n-ary single-linkage dendrogram: leaves are points 0..n-1, every internal node
// joins all components connected by edges of one weight.
struct Dendrogram {
  struct Node {
    double weight = 0.0;
    std::size_t size = 1;
    std::size_t rep = 0;  // some point inside
    std::vector<std::size_t> children;
  };
  std::vector<Node> nodes;
  std::size_t root = 0;
};

Dendrogram build_dendrogram(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>>& ends,
                            std::span<const double> weights) {
  Dendrogram dg;
  dg.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) dg.nodes[i].rep = i;
  std::vector<std::size_t> node_of(n);
  std::iota(node_of.begin(), node_of.end(), std::size_t{0});
  DisjointSets sets(n);

  std::vector<std::size_t> touched;
  std::unordered_map<std::size_t, std::size_t> group_node;
  std::size_t i = 0;
  while (i < ends.size()) {
    std::size_t j = i;
    while (j < ends.size() && weights[j] == weights[i]) ++j;

    touched.clear();
    for (std::size_t e = i; e < j; ++e) {
      touched.push_back(node_of[sets.find(ends[e].first)]);
      touched.push_back(node_of[sets.find(ends[e].second)]);
    }
    for (std::size_t e = i; e < j; ++e) sets.unite(ends[e].first, ends[e].second);
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

    group_node.clear();
    for (std::size_t old : touched) {
      const std::size_t root = sets.find(dg.nodes[old].rep);
      auto [it, fresh] = group_node.try_emplace(root, dg.nodes.size());
      if (fresh) {
        Dendrogram::Node node;
        node.weight = weights[i];
        node.size = 0;
        node.rep = dg.nodes[old].rep;
        dg.nodes.push_back(std::move(node));
      }
      auto& parent = dg.nodes[it->second];
      parent.children.push_back(old);
      parent.size += dg.nodes[old].size;
    }
    for (const auto& [root, node] : group_node) node_of[root] = node;
    i = j;
  }
  dg.root = node_of[sets.find(0)];
  return dg;
}

void collect_leaves(const Dendrogram& dg, std::size_t start, std::size_t n,
                    std::vector<std::size_t>& out) {
  std::vector<std::size_t> stack{start};
  while (!stack.empty()) {
    const std::size_t node = stack.back();
    stack.pop_back();
    if (node < n) {
      out.push_back(node);
    } else {
      for (std::size_t c : dg.nodes[node].children) stack.push_back(c);
    }
  }
}

std::vector<Row> candidate_rows(const FeatureStore& store, std::span<const Row> candidates) {
  std::vector<Row> rows(candidates.begin(), candidates.end());
  std::sort(rows.begin(), rows.end());
  if (std::adjacent_find(rows.begin(), rows.end()) != rows.end()) {
    throw ValueError("candidate set contains duplicates");
  }
  for (Row r : rows) {
    if (r >= store.count()) throw NotFoundError("candidate row out of range");
  }
  return rows;
}

// Gathers candidate rows into a contiguous matrix for the kernels.
std::vector<float> gather(const FeatureStore& store, std::span<const Row> rows) {
  std::vector<float> out;
  out.reserve(rows.size() * store.dimensionality());
  for (Row r : rows) {
    auto f = store.features(r);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

}  // namespace

void ClusteringParams::validate() const {
  if (k < 1) throw ValueError("neighborhood size k must be >= 1");
  if (m < 2) throw ValueError("minimum cluster size m must be >= 2");
}

std::vector<Row> CondensedTree::subtree_points(std::size_t node) const {
  std::vector<Row> out;
  std::vector<std::size_t> stack{node};
  while (!stack.empty()) {
    const auto& n = nodes[stack.back()];
    stack.pop_back();
    out.insert(out.end(), n.point_members.begin(), n.point_members.end());
    for (std::size_t c : n.child_nodes) stack.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double core_distance(const FeatureStore& store, Row object, std::size_t k,
                     std::span<const Row> candidates) {
  if (k < 1) throw ValueError("neighborhood size k must be >= 1");
  if (candidates.size() <= k) {
    throw InsufficientPointsError("need more than k candidates for a core distance");
  }
  if (std::find(candidates.begin(), candidates.end(), object) == candidates.end()) {
    throw ValueError("object is not among the candidates");
  }
  std::vector<double> d;
  d.reserve(candidates.size() - 1);
  bool skipped_self = false;
  for (Row c : candidates) {
    if (c == object && !skipped_self) {
      skipped_self = true;
      continue;
    }
    d.push_back(squared_distance(store.features(object).data(), store.features(c).data(),
                                 store.dimensionality()));
  }
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
  return std::sqrt(d[k - 1]);
}

double mutual_reachability(const FeatureStore& store, Row a, Row b, std::size_t k,
                           std::span<const Row> candidates) {
  const double core_a = core_distance(store, a, k, candidates);
  const double core_b = core_distance(store, b, k, candidates);
  if (std::find(candidates.begin(), candidates.end(), b) == candidates.end()) {
    throw ValueError("object is not among the candidates");
  }
  return std::max({core_a, core_b, euclidean_distance(store.features(a), store.features(b))});
}

std::vector<WeightedEdge> build_mst(const FeatureStore& store, std::span<const Row> candidates,
                                    std::size_t k, kernels::Backend backend, std::stop_token stop) {
  const auto rows = candidate_rows(store, candidates);
  if (rows.size() < 2) throw InsufficientPointsError("a spanning tree needs at least 2 points");
  const auto values = gather(store, rows);
  const kernels::PointMatrix points{values, store.dimensionality()};
  const auto core_sq = kernels::core_distances_sq(backend, points, k, stop);
  const auto local = kernels::prim_mst(backend, points, core_sq, stop);

  std::vector<WeightedEdge> edges;
  edges.reserve(local.size());
  for (const auto& e : local) edges.push_back({rows[e.a], rows[e.b], std::sqrt(e.weight_sq)});
  return edges;
}

CondensedTree condense_tree(std::span<const WeightedEdge> mst, std::size_t m) {
  if (m < 2) throw ValueError("minimum cluster size m must be >= 2");
  if (mst.empty()) throw InsufficientPointsError("spanning tree has no edges");

  std::vector<Row> rows;
  rows.reserve(2 * mst.size());
  for (const auto& e : mst) {
    if (!(e.weight >= 0.0) || std::isinf(e.weight)) throw ValueError("invalid edge weight");
    rows.push_back(e.a);
    rows.push_back(e.b);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  const std::size_t n = rows.size();
  if (mst.size() != n - 1) throw ValueError("edge list is not a spanning tree");
  auto local = [&](Row r) {
    return static_cast<std::size_t>(std::lower_bound(rows.begin(), rows.end(), r) - rows.begin());
  };

  std::vector<std::size_t> order(mst.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& ex = mst[x];
    const auto& ey = mst[y];
    if (ex.weight != ey.weight) return ex.weight < ey.weight;
    return std::pair(std::min(ex.a, ex.b), std::max(ex.a, ex.b)) <
           std::pair(std::min(ey.a, ey.b), std::max(ey.a, ey.b));
  });
  std::vector<std::pair<std::size_t, std::size_t>> ends;
  std::vector<double> weights;
  ends.reserve(order.size());
  weights.reserve(order.size());
  for (std::size_t idx : order) {
    ends.emplace_back(local(mst[idx].a), local(mst[idx].b));
    weights.push_back(mst[idx].weight);
  }
  const auto dg = build_dendrogram(n, ends, weights);
  if (dg.nodes[dg.root].size != n) throw ValueError("edge list is not connected");

  CondensedTree tree;
  tree.nodes.push_back(CondensedNode{});
  tree.nodes[0].size = n;

  // Walk down from the root. A condensed node follows its single large child
  // through the dendrogram; small children drop out as points at that level.
  struct Pending {
    std::size_t cnode;
    std::size_t dnode;
  };
  std::vector<Pending> work{{0, dg.root}};
  std::vector<std::size_t> big;
  std::vector<std::size_t> leaves;
  while (!work.empty()) {
    auto [cid, dnode] = work.back();
    work.pop_back();
    std::size_t alive = tree.nodes[cid].size;
    const double birth = tree.nodes[cid].lambda_birth;
    double stability = 0.0;
    while (true) {
      const auto& d = dg.nodes[dnode];
      const double lambda = lambda_of(d.weight);
      big.clear();
      for (std::size_t c : d.children) {
        if (dg.nodes[c].size >= m) {
          big.push_back(c);
        } else {
          leaves.clear();
          collect_leaves(dg, c, n, leaves);
          std::sort(leaves.begin(), leaves.end());
          for (std::size_t p : leaves) {
            tree.nodes[cid].point_members.push_back(rows[p]);
            tree.nodes[cid].point_lambdas.push_back(lambda);
          }
        }
      }
      if (big.size() == 1) {
        const std::size_t leaving = alive - dg.nodes[big[0]].size;
        if (leaving > 0) stability += static_cast<double>(leaving) * (lambda - birth);
        alive = dg.nodes[big[0]].size;
        dnode = big[0];
        continue;
      }
      // The node ends here: everything still alive leaves at this lambda.
      stability += static_cast<double>(alive) * (lambda - birth);
      tree.nodes[cid].lambda_death = lambda;
      std::sort(big.begin(), big.end(), [&](std::size_t x, std::size_t y) {
        return dg.nodes[x].rep < dg.nodes[y].rep;
      });
      for (std::size_t c : big) {
        CondensedNode child;
        child.node_id = tree.nodes.size();
        child.parent = cid;
        child.lambda_birth = lambda;
        child.size = dg.nodes[c].size;
        tree.nodes[cid].child_nodes.push_back(child.node_id);
        work.push_back({child.node_id, c});
        tree.nodes.push_back(std::move(child));
      }
      break;
    }
    tree.nodes[cid].stability = stability;
  }
  return tree;
}

SeedSet extract_seeds(const CondensedTree& tree, std::size_t m) {
  const std::size_t count = tree.nodes.size();
  std::vector<double> propagated(count, 0.0);
  std::vector<char> selected(count, 0);
  std::vector<double> child_values;
  // Children always have larger ids than their parent.
  for (std::size_t i = count; i-- > 1;) {
    const auto& node = tree.nodes[i];
    if (node.child_nodes.empty()) {
      propagated[i] = node.stability;
      selected[i] = 1;
      continue;
    }
    child_values.clear();
    for (std::size_t c : node.child_nodes) child_values.push_back(propagated[c]);
    std::sort(child_values.begin(), child_values.end());
    const double children = std::accumulate(child_values.begin(), child_values.end(), 0.0);
    if (node.stability > children) {
      propagated[i] = node.stability;
      selected[i] = 1;
    } else {
      propagated[i] = children;
    }
  }

  SeedSet out;
  std::vector<char> clustered;
  std::vector<std::size_t> stack(tree.root().child_nodes.rbegin(), tree.root().child_nodes.rend());
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    if (selected[i]) {
      Seed seed;
      seed.members = tree.subtree_points(i);
      if (seed.members.size() < m) throw ValueError("condensed node smaller than m");
      out.seeds.push_back(std::move(seed));
    } else {
      for (auto it = tree.nodes[i].child_nodes.rbegin(); it != tree.nodes[i].child_nodes.rend(); ++it) {
        stack.push_back(*it);
      }
    }
  }
  std::sort(out.seeds.begin(), out.seeds.end(), [](const Seed& a, const Seed& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return a.members.front() < b.members.front();
  });
  for (std::size_t i = 0; i < out.seeds.size(); ++i) out.seeds[i].seed_id = i;

  std::vector<Row> in_seeds;
  for (const auto& s : out.seeds) in_seeds.insert(in_seeds.end(), s.members.begin(), s.members.end());
  std::sort(in_seeds.begin(), in_seeds.end());
  const auto all = tree.subtree_points(0);
  std::set_difference(all.begin(), all.end(), in_seeds.begin(), in_seeds.end(),
                      std::back_inserter(out.noise));
  return out;
}

SeedSet cluster_unassigned(const FeatureStore& store, std::span<const Row> unassigned,
                           const ClusteringParams& params, kernels::Backend backend,
                           std::stop_token stop) {
  params.validate();
  if (unassigned.size() < params.m) {
    throw InsufficientPointsError("only " + std::to_string(unassigned.size()) +
                                  " unassigned objects, fewer than m=" + std::to_string(params.m));
  }
  const auto mst = build_mst(store, unassigned, params.k, backend, stop);
  return extract_seeds(condense_tree(mst, params.m), params.m);
}

}  // namespace annoclust

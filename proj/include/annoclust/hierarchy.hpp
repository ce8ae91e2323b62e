#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "annoclust/cluster_lifecycle.hpp"
#include "annoclust/feature_store.hpp"

namespace annoclust {

using NodeId = std::uint64_t;

struct HierarchyNode {
  NodeId node_id = 0;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  std::vector<ClusterId> cluster_refs;  // one per leaf in a fresh tree; merges can add more
  std::optional<std::string> name;
  double merge_height = 0.0;  // internal nodes of a fresh tree
};

// One agglomeration step: the two merged groups by member cluster id.
struct UpgmaStep {
  std::vector<ClusterId> left;   // group holding the smaller cluster id
  std::vector<ClusterId> right;
  double height = 0.0;
};

struct TreeStats {
  std::size_t node_count = 0;
  std::size_t depth = 0;  // levels; a lone leaf has depth 1
  std::size_t named_count = 0;
};

class HierarchyTree {
 public:
  HierarchyTree() = default;
  HierarchyTree(std::map<NodeId, HierarchyNode> nodes, NodeId root);

  NodeId root() const { return root_; }
  const HierarchyNode& node(NodeId id) const;
  bool contains(NodeId id) const { return nodes_.contains(id); }
  const std::map<NodeId, HierarchyNode>& nodes() const { return nodes_; }

  bool is_ancestor(NodeId ancestor, NodeId node) const;  // strict
  std::size_t depth_of(NodeId id) const;                 // root = 1
  // Clusters referenced anywhere in the subtree of id, ascending.
  std::vector<ClusterId> subtree_clusters(NodeId id) const;
  // Named nodes from the root down to id, joined by '/'; empty if none are named.
  std::string name_path(NodeId id) const;

  void merge_nodes(NodeId into, NodeId from);
  void move_node(NodeId id, NodeId new_parent);
  void rename_node(NodeId id, const std::string& name);

  TreeStats stats() const;

 private:
  HierarchyNode& mutable_node(NodeId id);

  std::map<NodeId, HierarchyNode> nodes_;
  NodeId root_ = 0;
};

// Average-linkage agglomeration over Euclidean centroid distances. Ties go to
// the pair with the lexicographically smallest (min cluster id, min cluster id).
std::vector<UpgmaStep> upgma_steps(const std::map<ClusterId, std::vector<double>>& centroids);

// Leaves get node ids 0..L-1 in cluster-id order, merges L, L+1, ... in order.
HierarchyTree build_upgma(const std::map<ClusterId, std::vector<double>>& centroids);

TreeStats tree_stats(const HierarchyTree& tree);

struct Labeling {
  std::map<std::string, std::string> assignments;  // object_id -> label path
  std::vector<std::string> unassigned;             // ascending object ids
};

// Objects of clusters referenced by the tree get their node's name path
// ("unnamed" when no ancestor is named); every other object is residual.
Labeling export_labeling(const HierarchyTree* tree, const std::map<ClusterId, Cluster>& clusters,
                         const FeatureStore& store);

// CSV object_id,label_path sorted by object id; residuals have an empty path.
std::string labeling_csv(const Labeling& labeling);

}  // namespace annoclust

#include "annoclust/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

#include "annoclust/csv.hpp"
#include "annoclust/errors.hpp"

namespace annoclust {

namespace {

double centroid_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

HierarchyTree::HierarchyTree(std::map<NodeId, HierarchyNode> nodes, NodeId root)
    : nodes_(std::move(nodes)), root_(root) {
  if (!nodes_.contains(root_)) throw StructureError("root node missing");
}

const HierarchyNode& HierarchyTree::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw NotFoundError("unknown node " + std::to_string(id));
  return it->second;
}

HierarchyNode& HierarchyTree::mutable_node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw NotFoundError("unknown node " + std::to_string(id));
  return it->second;
}

bool HierarchyTree::is_ancestor(NodeId ancestor, NodeId id) const {
  auto cur = node(id).parent;
  while (cur) {
    if (*cur == ancestor) return true;
    cur = node(*cur).parent;
  }
  return false;
}

std::size_t HierarchyTree::depth_of(NodeId id) const {
  std::size_t depth = 1;
  for (auto cur = node(id).parent; cur; cur = node(*cur).parent) ++depth;
  return depth;
}

std::vector<ClusterId> HierarchyTree::subtree_clusters(NodeId id) const {
  std::vector<ClusterId> out;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    const auto& n = node(stack.back());
    stack.pop_back();
    out.insert(out.end(), n.cluster_refs.begin(), n.cluster_refs.end());
    stack.insert(stack.end(), n.children.begin(), n.children.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string HierarchyTree::name_path(NodeId id) const {
  std::vector<const std::string*> names;
  for (std::optional<NodeId> cur = id; cur; cur = node(*cur).parent) {
    const auto& n = node(*cur);
    if (n.name) names.push_back(&*n.name);
  }
  std::string path;
  for (auto it = names.rbegin(); it != names.rend(); ++it) {
    if (!path.empty()) path.push_back('/');
    path += **it;
  }
  return path;
}

void HierarchyTree::merge_nodes(NodeId into, NodeId from) {
  if (into == from) throw StructureError("cannot merge a node into itself");
  node(into);
  node(from);
  if (is_ancestor(into, from) || is_ancestor(from, into)) {
    throw StructureError("cannot merge nodes on the same root path");
  }
  HierarchyNode victim = std::move(mutable_node(from));
  nodes_.erase(from);
  auto& target = mutable_node(into);
  target.cluster_refs.insert(target.cluster_refs.end(), victim.cluster_refs.begin(),
                             victim.cluster_refs.end());
  std::sort(target.cluster_refs.begin(), target.cluster_refs.end());
  for (NodeId c : victim.children) {
    mutable_node(c).parent = into;
    mutable_node(into).children.push_back(c);
  }
  if (victim.parent) {
    auto& siblings = mutable_node(*victim.parent).children;
    siblings.erase(std::remove(siblings.begin(), siblings.end(), from), siblings.end());
  }
}

void HierarchyTree::move_node(NodeId id, NodeId new_parent) {
  node(new_parent);
  if (id == new_parent || is_ancestor(id, new_parent)) {
    throw StructureError("cannot move a node under itself or its descendants");
  }
  auto& n = mutable_node(id);
  if (!n.parent) throw StructureError("cannot move the root");
  if (*n.parent == new_parent) return;
  auto& siblings = mutable_node(*n.parent).children;
  siblings.erase(std::remove(siblings.begin(), siblings.end(), id), siblings.end());
  n.parent = new_parent;
  mutable_node(new_parent).children.push_back(id);
}

void HierarchyTree::rename_node(NodeId id, const std::string& name) {
  if (name.empty()) throw ValueError("node name must not be empty");
  if (name.find('/') != std::string::npos) throw ValueError("node name must not contain '/'");
  mutable_node(id).name = name;
}

TreeStats HierarchyTree::stats() const {
  TreeStats s;
  s.node_count = nodes_.size();
  if (nodes_.empty()) return s;
  std::vector<std::pair<NodeId, std::size_t>> stack{{root_, 1}};
  while (!stack.empty()) {
    auto [id, depth] = stack.back();
    stack.pop_back();
    const auto& n = node(id);
    s.depth = std::max(s.depth, depth);
    if (n.name) ++s.named_count;
    for (NodeId c : n.children) stack.emplace_back(c, depth + 1);
  }
  return s;
}

TreeStats tree_stats(const HierarchyTree& tree) { return tree.stats(); }

std::vector<UpgmaStep> upgma_steps(const std::map<ClusterId, std::vector<double>>& centroids) {
  if (centroids.empty()) throw ValueError("UPGMA needs at least one centroid");
  const std::size_t n = centroids.size();
  std::vector<const std::vector<double>*> points;
  std::vector<std::vector<ClusterId>> groups;
  for (const auto& [id, c] : centroids) {
    if (!points.empty() && c.size() != points.front()->size()) {
      throw ValueError("centroids differ in dimensionality");
    }
    points.push_back(&c);
    groups.push_back({id});
  }
  // sums[i][j]: total pairwise distance between groups i and j.
  std::vector<std::vector<double>> sums(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      sums[i][j] = sums[j][i] = centroid_distance(*points[i], *points[j]);
    }
  }
  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;

  std::vector<UpgmaStep> steps;
  while (active.size() > 1) {
    using Key = std::tuple<double, ClusterId, ClusterId>;
    Key best{std::numeric_limits<double>::infinity(), 0, 0};
    std::size_t bi = 0, bj = 0;
    bool found = false;
    for (std::size_t x = 0; x < active.size(); ++x) {
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        const std::size_t i = active[x], j = active[y];
        const double h = sums[i][j] / (static_cast<double>(groups[i].size()) *
                                       static_cast<double>(groups[j].size()));
        const ClusterId ki = groups[i].front(), kj = groups[j].front();
        Key key{h, std::min(ki, kj), std::max(ki, kj)};
        if (!found || key < best) {
          best = key;
          bi = i;
          bj = j;
          found = true;
        }
      }
    }
    if (groups[bj].front() < groups[bi].front()) std::swap(bi, bj);
    steps.push_back({groups[bi], groups[bj], std::get<0>(best)});
    for (std::size_t k : active) {
      if (k == bi || k == bj) continue;
      sums[bi][k] = sums[k][bi] = sums[bi][k] + sums[bj][k];
    }
    groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
    std::sort(groups[bi].begin(), groups[bi].end());
    active.erase(std::find(active.begin(), active.end(), bj));
  }
  return steps;
}

HierarchyTree build_upgma(const std::map<ClusterId, std::vector<double>>& centroids) {
  const auto steps = upgma_steps(centroids);
  std::map<NodeId, HierarchyNode> nodes;
  std::map<ClusterId, NodeId> group_node;  // keyed by a group's smallest cluster id
  NodeId next = 0;
  for (const auto& [id, c] : centroids) {
    HierarchyNode leaf;
    leaf.node_id = next;
    leaf.cluster_refs = {id};
    nodes.emplace(next, std::move(leaf));
    group_node[id] = next++;
  }
  NodeId root = 0;
  for (const auto& step : steps) {
    HierarchyNode merged;
    merged.node_id = next;
    merged.merge_height = step.height;
    const NodeId left = group_node.at(step.left.front());
    const NodeId right = group_node.at(step.right.front());
    merged.children = {left, right};
    nodes.at(left).parent = next;
    nodes.at(right).parent = next;
    group_node.erase(step.right.front());
    group_node[step.left.front()] = next;
    nodes.emplace(next, std::move(merged));
    root = next++;
  }
  return HierarchyTree(std::move(nodes), root);
}

Labeling export_labeling(const HierarchyTree* tree, const std::map<ClusterId, Cluster>& clusters,
                         const FeatureStore& store) {
  Labeling out;
  if (tree != nullptr) {
    for (const auto& [id, node] : tree->nodes()) {
      if (node.cluster_refs.empty()) continue;
      std::string path = tree->name_path(id);
      if (path.empty()) path = "unnamed";
      for (ClusterId cid : node.cluster_refs) {
        auto it = clusters.find(cid);
        if (it == clusters.end()) continue;
        for (Row r : it->second.seed_members) out.assignments[store.object_id(r)] = path;
        for (Row r : it->second.grown_members) out.assignments[store.object_id(r)] = path;
      }
    }
  }
  for (const auto& id : store.object_ids()) {
    if (!out.assignments.contains(id)) out.unassigned.push_back(id);
  }
  std::sort(out.unassigned.begin(), out.unassigned.end());
  return out;
}

std::string labeling_csv(const Labeling& labeling) {
  std::vector<std::pair<const std::string*, const std::string*>> rows;
  static const std::string kEmpty;
  for (const auto& [id, path] : labeling.assignments) rows.emplace_back(&id, &path);
  for (const auto& id : labeling.unassigned) rows.emplace_back(&id, &kEmpty);
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return *a.first < *b.first; });
  std::ostringstream out;
  out << "object_id,label_path\n";
  for (const auto& [id, path] : rows) out << csv::field(*id) << ',' << csv::field(*path) << '\n';
  return out.str();
}

}  // namespace annoclust

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "annoclust/feature_store.hpp"

namespace annoclust {

using ClusterId = std::uint64_t;

enum class ClusterStatus { proposed, validated, rejected, grown };
enum class ValidationVerdict { approve, approve_flag, reject };

std::string_view to_string(ClusterStatus status);
ClusterStatus parse_cluster_status(std::string_view text);

// Objects that belong to no cluster. Kept as a membership bitmap over store
// rows so that add/remove/contains are O(1).
class UnassignedPool {
 public:
  UnassignedPool() = default;
  explicit UnassignedPool(std::size_t object_count, bool all_unassigned = true);

  bool contains(Row row) const { return row < member_.size() && member_[row] != 0; }
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return member_.size(); }

  void insert(std::span<const Row> rows);  // rows must currently be assigned
  void erase(std::span<const Row> rows);   // rows must currently be unassigned
  std::vector<Row> rows() const;           // ascending

  friend bool operator==(const UnassignedPool&, const UnassignedPool&) = default;

 private:
  std::vector<char> member_;
  std::size_t size_ = 0;
};

struct Cluster {
  ClusterId cluster_id = 0;
  std::vector<Row> seed_members;   // ascending
  std::vector<Row> grown_members;  // in order of acceptance
  std::vector<double> centroid;    // mean of the seed, frozen at creation
  ClusterStatus status = ClusterStatus::proposed;
  bool flagged = false;
  std::size_t created_iteration = 0;

  std::size_t size() const { return seed_members.size() + grown_members.size(); }
};

Cluster make_cluster(const FeatureStore& store, ClusterId id, std::vector<Row> seed_members,
                     std::size_t iteration);
std::vector<double> centroid_of(const FeatureStore& store, std::span<const Row> members);

// Seed presentation order: start at the member nearest the centroid, then keep
// jumping to the remaining member farthest from the previous one.
std::vector<Row> dissimilar_display_order(const FeatureStore& store, std::span<const Row> members);

void validate_cluster(Cluster& cluster, ValidationVerdict verdict, UnassignedPool& pool);

// Validated clusters in growth order: flagged first, then larger seeds, then id.
std::vector<ClusterId> growth_queue(std::span<const Cluster> clusters);

enum class PageVerdict { unseen, match, no_match };
enum class GrowMode { search, turtle };

inline constexpr std::size_t kPageSize = 50;

// Interactive boundary search over centroid-ordered candidates.
//
// Search mode gallops over pages 0, 1, 3, 7, ... (2^j - 1, clamped to the last
// page) until a page fails, then bisects between the last matching and first
// failing page. Removing a single object switches to turtle mode for the rest
// of the session: pages before the current one count as matched and every
// later page is reviewed one at a time.
class GrowSession {
 public:
  GrowSession(ClusterId cluster, std::vector<Row> candidate_order, std::size_t page_size = kPageSize);

  ClusterId cluster_id() const { return cluster_id_; }
  const std::vector<Row>& candidate_order() const { return candidates_; }
  std::size_t page_size() const { return page_size_; }
  std::size_t page_count() const { return verdicts_.size(); }
  std::span<const Row> page(std::size_t index) const;
  PageVerdict verdict(std::size_t page) const { return verdicts_.at(page); }
  const std::vector<PageVerdict>& page_verdicts() const { return verdicts_; }
  GrowMode mode() const { return mode_; }
  const std::set<Row>& turtle_removed() const { return removed_; }
  bool committed() const { return committed_; }
  std::size_t judged_pages() const { return judged_; }

  // Page the annotator should look at next; nullopt once the boundary is
  // pinned (search) or the session has been ended (turtle).
  std::optional<std::size_t> current_page() const;
  // Search-mode only; throws StateError in turtle mode.
  std::optional<std::size_t> next_probe() const;
  bool committable() const;
  // Last page whose objects are taken in full; nullopt = none. Search mode only.
  std::optional<std::size_t> threshold() const;

  void record_page_verdict(std::size_t page, PageVerdict verdict);
  void remove_candidate(Row object);
  // Objects the session would add on commit, in candidate order.
  std::vector<Row> accepted_objects() const;
  void mark_committed() { committed_ = true; }

 private:
  ClusterId cluster_id_;
  std::vector<Row> candidates_;
  std::size_t page_size_;
  std::vector<PageVerdict> verdicts_;
  GrowMode mode_ = GrowMode::search;
  std::set<Row> removed_;
  bool committed_ = false;
  std::size_t judged_ = 0;

  // Search state: lo_ = last known matching page (-1 none), hi_ = first known
  // failing page (page_count() = end of list).
  long long lo_ = -1;
  long long hi_ = 0;
  unsigned gallop_step_ = 0;
  bool galloping_ = true;

  // Turtle state: pages < implied_ are taken whole, turtle_page_ is current.
  std::size_t implied_ = 0;
  std::size_t turtle_page_ = 0;
  bool turtle_ended_ = false;
};

GrowSession open_grow_session(const FeatureStore& store, const Cluster& cluster,
                              const UnassignedPool& pool,
                              std::size_t page_size = kPageSize);

// Moves the accepted candidates that are still unassigned into the cluster.
// Returns the rows actually added.
std::vector<Row> commit_grow(GrowSession& session, Cluster& cluster, UnassignedPool& pool);

}  // namespace annoclust

#include "annoclust/cluster_lifecycle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

#include "annoclust/errors.hpp"
#include "annoclust/kernels.hpp"

namespace annoclust {

std::string_view to_string(ClusterStatus status) {
  switch (status) {
    case ClusterStatus::proposed: return "proposed";
    case ClusterStatus::validated: return "validated";
    case ClusterStatus::rejected: return "rejected";
    case ClusterStatus::grown: return "grown";
  }
  return "proposed";
}

ClusterStatus parse_cluster_status(std::string_view text) {
  if (text == "proposed") return ClusterStatus::proposed;
  if (text == "validated") return ClusterStatus::validated;
  if (text == "rejected") return ClusterStatus::rejected;
  if (text == "grown") return ClusterStatus::grown;
  throw ValueError("unknown cluster status: " + std::string(text));
}

UnassignedPool::UnassignedPool(std::size_t object_count, bool all_unassigned)
    : member_(object_count, all_unassigned ? 1 : 0), size_(all_unassigned ? object_count : 0) {}

void UnassignedPool::insert(std::span<const Row> rows) {
  for (Row r : rows) {
    if (r >= member_.size()) throw NotFoundError("row out of range");
    if (member_[r]) throw StateError("object is already unassigned");
  }
  for (Row r : rows) {
    member_[r] = 1;
    ++size_;
  }
}

void UnassignedPool::erase(std::span<const Row> rows) {
  for (Row r : rows) {
    if (r >= member_.size()) throw NotFoundError("row out of range");
    if (!member_[r]) throw StateError("object is already assigned");
  }
  for (Row r : rows) {
    member_[r] = 0;
    --size_;
  }
}

std::vector<Row> UnassignedPool::rows() const {
  std::vector<Row> out;
  out.reserve(size_);
  for (Row r = 0; r < member_.size(); ++r) {
    if (member_[r]) out.push_back(r);
  }
  return out;
}

std::vector<double> centroid_of(const FeatureStore& store, std::span<const Row> members) {
  if (members.empty()) throw ValueError("centroid of an empty member list");
  std::vector<double> sum(store.dimensionality(), 0.0);
  for (Row r : members) {
    auto f = store.features(r);
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += static_cast<double>(f[d]);
  }
  for (double& v : sum) v /= static_cast<double>(members.size());
  return sum;
}

Cluster make_cluster(const FeatureStore& store, ClusterId id, std::vector<Row> seed_members,
                     std::size_t iteration) {
  std::sort(seed_members.begin(), seed_members.end());
  Cluster c;
  c.cluster_id = id;
  c.centroid = centroid_of(store, seed_members);
  c.seed_members = std::move(seed_members);
  c.created_iteration = iteration;
  return c;
}

std::vector<Row> dissimilar_display_order(const FeatureStore& store, std::span<const Row> members) {
  if (members.empty()) throw ValueError("cannot order an empty member list");
  const std::size_t n = members.size();
  const std::size_t dim = store.dimensionality();
  const auto centroid = centroid_of(store, members);

  auto id_less = [&](Row a, Row b) { return store.object_id(a) < store.object_id(b); };

  std::vector<Row> remaining(members.begin(), members.end());
  std::vector<Row> order;
  order.reserve(n);

  std::size_t first = 0;
  double first_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    auto f = store.features(remaining[i]);
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(f[d]) - centroid[d];
      acc += diff * diff;
    }
    if (acc < first_d || (acc == first_d && id_less(remaining[i], remaining[first]))) {
      first = i;
      first_d = acc;
    }
  }
  order.push_back(remaining[first]);
  remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(first));

  while (!remaining.empty()) {
    const float* prev = store.features(order.back()).data();
    std::size_t pick = 0;
    double pick_d = -1.0;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      const double d = squared_distance(prev, store.features(remaining[i]).data(), dim);
      if (d > pick_d || (d == pick_d && id_less(remaining[i], remaining[pick]))) {
        pick = i;
        pick_d = d;
      }
    }
    order.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return order;
}

void validate_cluster(Cluster& cluster, ValidationVerdict verdict, UnassignedPool& pool) {
  if (cluster.status != ClusterStatus::proposed) {
    throw StateError("cluster " + std::to_string(cluster.cluster_id) + " is " +
                     std::string(to_string(cluster.status)) + ", not proposed");
  }
  switch (verdict) {
    case ValidationVerdict::approve:
      cluster.status = ClusterStatus::validated;
      break;
    case ValidationVerdict::approve_flag:
      cluster.status = ClusterStatus::validated;
      cluster.flagged = true;
      break;
    case ValidationVerdict::reject:
      pool.insert(cluster.seed_members);
      cluster.status = ClusterStatus::rejected;
      break;
  }
}

std::vector<ClusterId> growth_queue(std::span<const Cluster> clusters) {
  std::vector<const Cluster*> ready;
  for (const auto& c : clusters) {
    if (c.status == ClusterStatus::validated) ready.push_back(&c);
  }
  std::sort(ready.begin(), ready.end(), [](const Cluster* a, const Cluster* b) {
    return std::tuple(!a->flagged, b->seed_members.size(), a->cluster_id) <
           std::tuple(!b->flagged, a->seed_members.size(), b->cluster_id);
  });
  std::vector<ClusterId> out;
  for (const auto* c : ready) out.push_back(c->cluster_id);
  return out;
}

GrowSession::GrowSession(ClusterId cluster, std::vector<Row> candidate_order, std::size_t page_size)
    : cluster_id_(cluster), candidates_(std::move(candidate_order)), page_size_(page_size) {
  if (page_size_ == 0) throw ValueError("page size must be positive");
  verdicts_.assign((candidates_.size() + page_size_ - 1) / page_size_, PageVerdict::unseen);
  hi_ = static_cast<long long>(verdicts_.size());
}

std::span<const Row> GrowSession::page(std::size_t index) const {
  if (index >= page_count()) throw NotFoundError("page " + std::to_string(index) + " out of range");
  const std::size_t begin = index * page_size_;
  const std::size_t end = std::min(begin + page_size_, candidates_.size());
  return std::span<const Row>(candidates_).subspan(begin, end - begin);
}

std::optional<std::size_t> GrowSession::current_page() const {
  if (committed_) return std::nullopt;
  if (mode_ == GrowMode::turtle) {
    if (turtle_ended_) return std::nullopt;
    return turtle_page_;
  }
  const long long pages = static_cast<long long>(page_count());
  if (galloping_) {
    if (pages == 0 || lo_ == pages - 1) return std::nullopt;
    const long long probe = std::min((1LL << gallop_step_) - 1, pages - 1);
    return static_cast<std::size_t>(probe);
  }
  if (hi_ <= lo_ + 1) return std::nullopt;
  // Floor division; lo_ is never -1 here because a failing page 0 ends the search.
  return static_cast<std::size_t>((lo_ + hi_) / 2);
}

std::optional<std::size_t> GrowSession::next_probe() const {
  if (committed_) throw StateError("grow session already committed");
  if (mode_ == GrowMode::turtle) throw StateError("binary search is disabled in turtle mode");
  return current_page();
}

bool GrowSession::committable() const {
  if (committed_) return false;
  if (mode_ == GrowMode::turtle) return true;
  return !current_page().has_value();
}

std::optional<std::size_t> GrowSession::threshold() const {
  if (mode_ == GrowMode::turtle) throw StateError("turtle sessions have no page threshold");
  if (current_page().has_value() && !committed_) return std::nullopt;
  if (lo_ < 0) return std::nullopt;
  return static_cast<std::size_t>(lo_);
}

void GrowSession::record_page_verdict(std::size_t page, PageVerdict verdict) {
  if (committed_) throw StateError("grow session already committed");
  if (verdict == PageVerdict::unseen) throw ValueError("a page verdict must be match or no_match");
  const auto expected = current_page();
  // turtle review may revisit a page the search already failed
  if (mode_ == GrowMode::search && page < page_count() && verdicts_[page] != PageVerdict::unseen) {
    throw ProtocolError("page " + std::to_string(page) + " already judged");
  }
  if (!expected || *expected != page) {
    throw ProtocolError("page " + std::to_string(page) + " is not the page under review");
  }
  verdicts_[page] = verdict;
  ++judged_;
  const auto p = static_cast<long long>(page);

  if (mode_ == GrowMode::turtle) {
    if (verdict == PageVerdict::match) {
      ++turtle_page_;
      if (turtle_page_ == page_count()) turtle_ended_ = true;
    } else {
      turtle_ended_ = true;
    }
    return;
  }
  if (verdict == PageVerdict::match) {
    lo_ = p;
    if (galloping_) ++gallop_step_;
  } else {
    hi_ = p;
    galloping_ = false;
  }
}

void GrowSession::remove_candidate(Row object) {
  if (committed_) throw StateError("grow session already committed");
  const auto current = current_page();
  if (!current) throw ProtocolError("no page is under review");
  const auto rows = page(*current);
  if (std::find(rows.begin(), rows.end(), object) == rows.end()) {
    throw ProtocolError("object is not on the current page");
  }
  if (removed_.contains(object)) throw ProtocolError("object already removed");
  if (mode_ == GrowMode::search) {
    mode_ = GrowMode::turtle;
    implied_ = *current;
    turtle_page_ = *current;
  }
  removed_.insert(object);
}

std::vector<Row> GrowSession::accepted_objects() const {
  std::vector<Row> out;
  auto take_page = [&](std::size_t p) {
    for (Row r : page(p)) {
      if (!removed_.contains(r)) out.push_back(r);
    }
  };
  if (mode_ == GrowMode::search) {
    if (lo_ >= 0) {
      for (std::size_t p = 0; p <= static_cast<std::size_t>(lo_); ++p) take_page(p);
    }
    return out;
  }
  for (std::size_t p = 0; p < implied_; ++p) take_page(p);
  for (std::size_t p = implied_; p < page_count(); ++p) {
    if (verdicts_[p] == PageVerdict::match) take_page(p);
  }
  return out;
}

GrowSession open_grow_session(const FeatureStore& store, const Cluster& cluster,
                              const UnassignedPool& pool, std::size_t page_size) {
  if (cluster.status != ClusterStatus::validated) {
    throw StateError("cluster " + std::to_string(cluster.cluster_id) + " is not validated");
  }
  auto rows = pool.rows();
  std::vector<float> values;
  values.reserve(rows.size() * store.dimensionality());
  for (Row r : rows) {
    auto f = store.features(r);
    values.insert(values.end(), f.begin(), f.end());
  }
  const auto dist = kernels::distances_sq_parallel({values, store.dimensionality()}, cluster.centroid);
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return store.object_id(rows[a]) < store.object_id(rows[b]);
  });
  std::vector<Row> order;
  order.reserve(rows.size());
  for (std::size_t i : idx) order.push_back(rows[i]);
  return GrowSession(cluster.cluster_id, std::move(order), page_size);
}

std::vector<Row> commit_grow(GrowSession& session, Cluster& cluster, UnassignedPool& pool) {
  if (session.cluster_id() != cluster.cluster_id) throw ValueError("session belongs to another cluster");
  if (cluster.status != ClusterStatus::validated) {
    throw StateError("cluster " + std::to_string(cluster.cluster_id) + " is not validated");
  }
  if (!session.committable()) throw StateError("grow session boundary is not pinned yet");
  std::vector<Row> added;
  for (Row r : session.accepted_objects()) {
    if (pool.contains(r)) added.push_back(r);
  }
  pool.erase(added);
  cluster.grown_members.insert(cluster.grown_members.end(), added.begin(), added.end());
  cluster.status = ClusterStatus::grown;
  session.mark_committed();
  return added;
}

}  // namespace annoclust

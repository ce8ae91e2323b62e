#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "annoclust/cluster_lifecycle.hpp"
#include "annoclust/density_clustering.hpp"
#include "annoclust/events.hpp"
#include "annoclust/feature_store.hpp"
#include "annoclust/hierarchy.hpp"
#include "annoclust/metrics.hpp"

namespace annoclust {

using SessionId = std::uint64_t;

struct ProjectConfig {
  std::string project_id = "default";
  std::filesystem::path feature_file;
  std::optional<std::filesystem::path> labels_file;
  std::vector<std::size_t> schedule = kDefaultSchedule;
  std::size_t k = 1;

  nlohmann::json to_json() const;
  static ProjectConfig from_json(const nlohmann::json& j);
};

struct IterationOutcome {
  std::size_t iteration = 0;  // 1-based
  std::size_t m = 0;
  std::vector<ClusterId> proposed;
  std::size_t noise = 0;
};

struct CommitOutcome {
  ClusterId cluster_id = 0;
  std::vector<Row> added;
};

enum class JobState { idle, running, failed };

// One annotation project: the feature store, every cluster, the unassigned
// pool, the naming tree and the event log that all of them are derived from.
//
// State changes only by applying events, live or during replay, so reopening a
// project from its log reproduces it exactly. Mutations are serialised by one
// writer lock; readers share it. At most one clustering job runs at a time and
// it computes outside the lock.
class Project {
 public:
  using Clock = std::function<double()>;

  // Creates dir/project.json and an empty dir/events.jsonl.
  static std::unique_ptr<Project> create(const std::filesystem::path& dir, ProjectConfig config);
  // Loads the config and rebuilds state by replaying dir/events.jsonl.
  static std::unique_ptr<Project> open(const std::filesystem::path& dir);
  // No files; the log lives in memory only.
  static std::unique_ptr<Project> in_memory(ProjectConfig config,
                                            std::shared_ptr<const FeatureStore> store);
  // State rebuilt from an explicit event list (used to check replay).
  static std::unique_ptr<Project> replay(ProjectConfig config, std::shared_ptr<const FeatureStore> store,
                                         const std::vector<AnnotationEvent>& events);

  ~Project();
  Project(const Project&) = delete;
  Project& operator=(const Project&) = delete;

  void set_clock(Clock clock);
  void set_backend(kernels::Backend backend) { backend_ = backend; }

  const ProjectConfig& config() const { return config_; }
  const FeatureStore& store() const { return *store_; }
  std::shared_ptr<const FeatureStore> store_ptr() const { return store_; }

  // Snapshots, taken under the shared lock.
  std::vector<Cluster> clusters(std::optional<ClusterStatus> status = std::nullopt) const;
  Cluster cluster(ClusterId id) const;
  std::size_t unassigned_count() const;
  std::vector<Row> unassigned_rows() const;
  std::size_t completed_iterations() const;
  std::optional<HierarchyTree> tree() const;
  std::vector<AnnotationEvent> events() const;
  std::vector<ClusterId> growth_queue() const;
  JobState job_state() const { return job_state_.load(); }
  std::string job_error() const;

  // Runs the next m of the schedule on the unassigned objects. Throws
  // ScheduleDone, BusyError, or StateError while earlier clusters are
  // still proposed or validated.
  IterationOutcome start_iteration(const std::string& actor = "system");
  // Same, on a background thread. Poll job_state().
  void start_iteration_async(const std::string& actor = "system");
  void wait_for_job();
  void cancel_job();

  void validate(ClusterId id, ValidationVerdict verdict, const std::string& actor = "annotator");

  // Returns the open session for this cluster if one exists.
  SessionId open_grow_session(ClusterId id, const std::string& actor = "annotator");
  // Read-only copy of a session.
  GrowSession session(SessionId id) const;
  std::optional<std::size_t> next_probe(SessionId id) const;
  std::vector<Row> session_page(SessionId id, std::size_t page) const;
  void record_page_verdict(SessionId id, std::size_t page, PageVerdict verdict,
                           const std::string& actor = "annotator");
  void remove_candidate(SessionId id, const std::string& object_id,
                        const std::string& actor = "annotator");
  // Repeating a commit on the same session returns the original outcome.
  CommitOutcome commit_grow(SessionId id, const std::string& actor = "annotator");

  HierarchyTree build_tree(const std::string& actor = "annotator");
  void merge_nodes(NodeId into, NodeId from, const std::string& actor = "annotator");
  void move_node(NodeId id, NodeId new_parent, const std::string& actor = "annotator");
  void rename_node(NodeId id, const std::string& name, const std::string& actor = "annotator");

  Labeling labeling() const;
  std::string labeling_csv() const;
  // Throughput, tree statistics and (when the store carries labels) agreement
  // with those labels.
  nlohmann::json metrics() const;

 private:
  struct SessionRecord {
    GrowSession session;
    std::optional<CommitOutcome> outcome;
  };

  Project(ProjectConfig config, std::shared_ptr<const FeatureStore> store);

  double now();
  // Caller holds the writer lock.
  void record(Action action, nlohmann::json payload, std::size_t objects, const std::string& actor);
  void apply(const AnnotationEvent& event);
  Cluster& mutable_cluster(ClusterId id);
  SessionRecord& mutable_session(SessionId id);
  const SessionRecord& session_record(SessionId id) const;
  void require_tree() const;
  std::size_t objects_under(NodeId id) const;
  IterationOutcome run_iteration(const std::string& actor, std::stop_token stop);

  ProjectConfig config_;
  std::shared_ptr<const FeatureStore> store_;
  kernels::Backend backend_ = kernels::Backend::parallel;
  Clock clock_;

  mutable std::shared_mutex mutex_;
  EventLog log_;
  std::map<ClusterId, Cluster> clusters_;
  UnassignedPool pool_;
  std::size_t iterations_done_ = 0;
  ClusterId next_cluster_ = 1;
  std::optional<HierarchyTree> tree_;
  std::map<SessionId, SessionRecord> sessions_;
  std::map<ClusterId, SessionId> open_sessions_;
  SessionId next_session_ = 1;

  std::atomic<JobState> job_state_ = JobState::idle;
  std::atomic<bool> job_claimed_ = false;
  mutable std::mutex job_mutex_;
  std::string job_error_;
  std::jthread job_;
};

}  // namespace annoclust

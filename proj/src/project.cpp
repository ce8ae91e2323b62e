#include "annoclust/project.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "annoclust/errors.hpp"

namespace annoclust {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kConfigFile = "project.json";
constexpr const char* kEventFile = "events.jsonl";

double system_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::shared_ptr<const FeatureStore> load_store(const ProjectConfig& config) {
  auto store = std::make_shared<FeatureStore>(load_features(config.feature_file));
  if (config.labels_file) store->apply_sidecar(load_sidecar(*config.labels_file));
  return store;
}

std::string_view verdict_name(PageVerdict v) {
  return v == PageVerdict::match ? "match" : v == PageVerdict::no_match ? "no_match" : "unseen";
}

ClassAssignment prior_labels(const FeatureStore& store) {
  ClassAssignment out;
  for (Row r = 0; r < store.count(); ++r) {
    if (const auto& label = store.prior_label(r)) out.emplace(store.object_id(r), *label);
  }
  return out;
}

// Releases the single clustering-job slot on scope exit.
class JobClaim {
 public:
  explicit JobClaim(std::atomic<bool>& flag) : flag_(&flag) {
    if (flag_->exchange(true)) throw BusyError("a clustering job is already running");
  }
  JobClaim(JobClaim&& other) noexcept : flag_(std::exchange(other.flag_, nullptr)) {}
  ~JobClaim() {
    if (flag_) flag_->store(false);
  }

 private:
  std::atomic<bool>* flag_;
};

}  // namespace

json ProjectConfig::to_json() const {
  json j{{"project_id", project_id},
         {"feature_file", feature_file.string()},
         {"schedule", schedule},
         {"k", k}};
  j["labels_file"] = labels_file ? json(labels_file->string()) : json(nullptr);
  return j;
}

ProjectConfig ProjectConfig::from_json(const json& j) {
  ProjectConfig c;
  try {
    c.project_id = j.value("project_id", std::string("default"));
    c.feature_file = j.at("feature_file").get<std::string>();
    if (j.contains("labels_file") && !j["labels_file"].is_null()) {
      c.labels_file = j["labels_file"].get<std::string>();
    }
    if (j.contains("schedule")) c.schedule = j["schedule"].get<std::vector<std::size_t>>();
    c.k = j.value("k", std::size_t{1});
  } catch (const json::exception& e) {
    throw ValueError(std::string("invalid project config: ") + e.what());
  }
  if (c.schedule.empty()) throw ValueError("schedule must list at least one m");
  for (std::size_t m : c.schedule) ClusteringParams{c.k, m}.validate();
  return c;
}

Project::Project(ProjectConfig config, std::shared_ptr<const FeatureStore> store)
    : config_(std::move(config)),
      store_(std::move(store)),
      clock_(system_seconds),
      pool_(store_->count()) {}

Project::~Project() { cancel_job(); }

std::unique_ptr<Project> Project::create(const fs::path& dir, ProjectConfig config) {
  fs::create_directories(dir);
  if (fs::exists(dir / kConfigFile)) throw StateError("project already exists in " + dir.string());
  config.feature_file = fs::absolute(config.feature_file);
  if (config.labels_file) config.labels_file = fs::absolute(*config.labels_file);
  config = ProjectConfig::from_json(config.to_json());
  auto store = load_store(config);
  {
    std::ofstream out(dir / kConfigFile, std::ios::trunc);
    out << config.to_json().dump(2) << '\n';
    if (!out) throw Error("cannot write " + (dir / kConfigFile).string());
  }
  std::ofstream(dir / kEventFile, std::ios::trunc);
  std::unique_ptr<Project> p(new Project(std::move(config), std::move(store)));
  p->log_ = EventLog(dir / kEventFile);
  return p;
}

std::unique_ptr<Project> Project::open(const fs::path& dir) {
  std::ifstream in(dir / kConfigFile);
  if (!in) throw NotFoundError("no project in " + dir.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt project config: ") + e.what());
  }
  auto config = ProjectConfig::from_json(j);
  auto store = load_store(config);
  std::unique_ptr<Project> p(new Project(std::move(config), std::move(store)));
  p->log_ = EventLog(dir / kEventFile);
  for (const auto& e : p->log_.events()) p->apply(e);
  return p;
}

std::unique_ptr<Project> Project::in_memory(ProjectConfig config,
                                            std::shared_ptr<const FeatureStore> store) {
  config = ProjectConfig::from_json(config.to_json());
  return std::unique_ptr<Project>(new Project(std::move(config), std::move(store)));
}

std::unique_ptr<Project> Project::replay(ProjectConfig config,
                                         std::shared_ptr<const FeatureStore> store,
                                         const std::vector<AnnotationEvent>& events) {
  auto p = in_memory(std::move(config), std::move(store));
  for (const auto& e : events) p->apply(p->log_.append(e));
  return p;
}

void Project::set_clock(Clock clock) {
  std::unique_lock lock(mutex_);
  clock_ = std::move(clock);
}

double Project::now() { return clock_(); }

void Project::record(Action action, json payload, std::size_t objects, const std::string& actor) {
  AnnotationEvent e;
  e.timestamp = now();
  e.actor = actor;
  e.action = action;
  e.payload = std::move(payload);
  e.objects_affected = objects;
  apply(log_.append(std::move(e)));
}

void Project::apply(const AnnotationEvent& e) {
  const auto& p = e.payload;
  auto rows_of = [&](const json& ids) {
    std::vector<Row> rows;
    rows.reserve(ids.size());
    for (const auto& id : ids) rows.push_back(store_->row_of(id.get<std::string>()));
    return rows;
  };
  switch (e.action) {
    case Action::iteration_started: {
      iterations_done_ = p.at("iteration").get<std::size_t>();
      for (const auto& seed : p.at("seeds")) {
        const auto id = seed.at("cluster_id").get<ClusterId>();
        auto rows = rows_of(seed.at("members"));
        pool_.erase(rows);
        clusters_.emplace(id, make_cluster(*store_, id, std::move(rows), iterations_done_));
        next_cluster_ = std::max(next_cluster_, id + 1);
      }
      break;
    }
    case Action::cluster_approved:
      validate_cluster(mutable_cluster(p.at("cluster_id")), ValidationVerdict::approve, pool_);
      break;
    case Action::cluster_flagged:
      validate_cluster(mutable_cluster(p.at("cluster_id")), ValidationVerdict::approve_flag, pool_);
      break;
    case Action::cluster_rejected:
      validate_cluster(mutable_cluster(p.at("cluster_id")), ValidationVerdict::reject, pool_);
      break;
    case Action::grow_committed: {
      auto& c = mutable_cluster(p.at("cluster_id"));
      if (c.status != ClusterStatus::validated) throw StateError("grow commit on unvalidated cluster");
      const auto rows = rows_of(p.at("added"));
      pool_.erase(rows);
      c.grown_members.insert(c.grown_members.end(), rows.begin(), rows.end());
      c.status = ClusterStatus::grown;
      next_session_ = std::max(next_session_, p.value("session", SessionId{0}) + 1);
      break;
    }
    case Action::page_verdict:
    case Action::candidate_removed:
      next_session_ = std::max(next_session_, p.value("session", SessionId{0}) + 1);
      break;
    case Action::tree_built: {
      std::map<ClusterId, std::vector<double>> centroids;
      for (const auto& id : p.at("clusters")) {
        const auto cid = id.get<ClusterId>();
        centroids.emplace(cid, mutable_cluster(cid).centroid);
      }
      tree_ = build_upgma(centroids);
      break;
    }
    case Action::node_merged:
      require_tree();
      tree_->merge_nodes(p.at("into").get<NodeId>(), p.at("from").get<NodeId>());
      break;
    case Action::node_moved:
      require_tree();
      tree_->move_node(p.at("node").get<NodeId>(), p.at("parent").get<NodeId>());
      break;
    case Action::node_named:
      require_tree();
      tree_->rename_node(p.at("node").get<NodeId>(), p.at("name").get<std::string>());
      break;
  }
}

Cluster& Project::mutable_cluster(ClusterId id) {
  auto it = clusters_.find(id);
  if (it == clusters_.end()) throw NotFoundError("unknown cluster " + std::to_string(id));
  return it->second;
}

Project::SessionRecord& Project::mutable_session(SessionId id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown grow session " + std::to_string(id));
  return it->second;
}

const Project::SessionRecord& Project::session_record(SessionId id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown grow session " + std::to_string(id));
  return it->second;
}

void Project::require_tree() const {
  if (!tree_) throw StateError("no hierarchy has been built yet");
}

std::vector<Cluster> Project::clusters(std::optional<ClusterStatus> status) const {
  std::shared_lock lock(mutex_);
  std::vector<Cluster> out;
  for (const auto& [id, c] : clusters_) {
    if (!status || c.status == *status) out.push_back(c);
  }
  return out;
}

Cluster Project::cluster(ClusterId id) const {
  std::shared_lock lock(mutex_);
  auto it = clusters_.find(id);
  if (it == clusters_.end()) throw NotFoundError("unknown cluster " + std::to_string(id));
  return it->second;
}

std::size_t Project::unassigned_count() const {
  std::shared_lock lock(mutex_);
  return pool_.size();
}

std::vector<Row> Project::unassigned_rows() const {
  std::shared_lock lock(mutex_);
  return pool_.rows();
}

std::size_t Project::completed_iterations() const {
  std::shared_lock lock(mutex_);
  return iterations_done_;
}

std::optional<HierarchyTree> Project::tree() const {
  std::shared_lock lock(mutex_);
  return tree_;
}

std::vector<AnnotationEvent> Project::events() const {
  std::shared_lock lock(mutex_);
  return log_.events();
}

std::vector<ClusterId> Project::growth_queue() const {
  std::shared_lock lock(mutex_);
  std::vector<Cluster> all;
  for (const auto& [id, c] : clusters_) all.push_back(c);
  return annoclust::growth_queue(all);
}

std::string Project::job_error() const {
  std::lock_guard lock(job_mutex_);
  return job_error_;
}

IterationOutcome Project::run_iteration(const std::string& actor, std::stop_token stop) {
  std::vector<Row> rows;
  std::size_t m = 0;
  std::size_t iteration = 0;
  {
    std::shared_lock lock(mutex_);
    if (iterations_done_ >= config_.schedule.size()) throw ScheduleDone("schedule exhausted");
    for (const auto& [id, c] : clusters_) {
      if (c.status == ClusterStatus::proposed || c.status == ClusterStatus::validated) {
        throw StateError("cluster " + std::to_string(id) + " is still " +
                         std::string(to_string(c.status)));
      }
    }
    m = config_.schedule[iterations_done_];
    iteration = iterations_done_ + 1;
    rows = pool_.rows();
  }

  // Only this job can change the pool while no cluster is proposed or
  // validated, so the snapshot stays valid without holding the lock.
  SeedSet seeds;
  if (rows.size() >= m && rows.size() > config_.k) {
    seeds = cluster_unassigned(*store_, rows, ClusteringParams{config_.k, m}, backend_, stop);
  } else {
    seeds.noise = rows;
  }

  std::unique_lock lock(mutex_);
  IterationOutcome out;
  out.iteration = iteration;
  out.m = m;
  out.noise = seeds.noise.size();
  json seed_list = json::array();
  std::size_t objects = 0;
  ClusterId id = next_cluster_;
  for (const auto& s : seeds.seeds) {
    json members = json::array();
    for (Row r : s.members) members.push_back(store_->object_id(r));
    seed_list.push_back({{"cluster_id", id}, {"members", std::move(members)}});
    out.proposed.push_back(id++);
    objects += s.members.size();
  }
  record(Action::iteration_started,
         {{"iteration", iteration}, {"m", m}, {"k", config_.k}, {"seeds", std::move(seed_list)},
          {"noise", seeds.noise.size()}},
         objects, actor);
  return out;
}

IterationOutcome Project::start_iteration(const std::string& actor) {
  JobClaim claim(job_claimed_);
  job_state_ = JobState::running;
  try {
    auto out = run_iteration(actor, {});
    job_state_ = JobState::idle;
    return out;
  } catch (...) {
    job_state_ = JobState::idle;
    throw;
  }
}

void Project::start_iteration_async(const std::string& actor) {
  JobClaim claim(job_claimed_);
  {
    std::shared_lock lock(mutex_);
    if (iterations_done_ >= config_.schedule.size()) throw ScheduleDone("schedule exhausted");
  }
  if (job_.joinable()) job_.join();
  {
    std::lock_guard lock(job_mutex_);
    job_error_.clear();
  }
  job_state_ = JobState::running;
  job_ = std::jthread([this, actor, claim = std::move(claim)](std::stop_token stop) {
    try {
      run_iteration(actor, stop);
      job_state_ = JobState::idle;
    } catch (const std::exception& e) {
      std::lock_guard lock(job_mutex_);
      job_error_ = e.what();
      job_state_ = JobState::failed;
    }
  });
}

void Project::wait_for_job() {
  if (job_.joinable()) job_.join();
}

void Project::cancel_job() {
  if (job_.joinable()) {
    job_.request_stop();
    job_.join();
  }
}

void Project::validate(ClusterId id, ValidationVerdict verdict, const std::string& actor) {
  std::unique_lock lock(mutex_);
  const auto& c = mutable_cluster(id);
  if (c.status != ClusterStatus::proposed) {
    throw StateError("cluster " + std::to_string(id) + " is " + std::string(to_string(c.status)) +
                     ", not proposed");
  }
  const Action action = verdict == ValidationVerdict::approve        ? Action::cluster_approved
                        : verdict == ValidationVerdict::approve_flag ? Action::cluster_flagged
                                                                     : Action::cluster_rejected;
  record(action, {{"cluster_id", id}}, c.seed_members.size(), actor);
}

SessionId Project::open_grow_session(ClusterId id, const std::string&) {
  std::unique_lock lock(mutex_);
  if (auto it = open_sessions_.find(id); it != open_sessions_.end()) return it->second;
  const auto& c = mutable_cluster(id);
  auto session = annoclust::open_grow_session(*store_, c, pool_);
  const SessionId sid = next_session_++;
  sessions_.emplace(sid, SessionRecord{std::move(session), std::nullopt});
  open_sessions_[id] = sid;
  return sid;
}

GrowSession Project::session(SessionId id) const {
  std::shared_lock lock(mutex_);
  return session_record(id).session;
}

std::optional<std::size_t> Project::next_probe(SessionId id) const {
  std::shared_lock lock(mutex_);
  return session_record(id).session.next_probe();
}

std::vector<Row> Project::session_page(SessionId id, std::size_t page) const {
  std::shared_lock lock(mutex_);
  auto rows = session_record(id).session.page(page);
  return {rows.begin(), rows.end()};
}

void Project::record_page_verdict(SessionId id, std::size_t page, PageVerdict verdict,
                                  const std::string& actor) {
  std::unique_lock lock(mutex_);
  auto& rec = mutable_session(id);
  rec.session.record_page_verdict(page, verdict);
  record(Action::page_verdict,
         {{"session", id},
          {"cluster_id", rec.session.cluster_id()},
          {"page", page},
          {"verdict", std::string(verdict_name(verdict))},
          {"mode", rec.session.mode() == GrowMode::search ? "search" : "turtle"}},
         rec.session.page(page).size(), actor);
}

void Project::remove_candidate(SessionId id, const std::string& object_id, const std::string& actor) {
  std::unique_lock lock(mutex_);
  auto& rec = mutable_session(id);
  rec.session.remove_candidate(store_->row_of(object_id));
  record(Action::candidate_removed,
         {{"session", id}, {"cluster_id", rec.session.cluster_id()}, {"object_id", object_id}}, 1,
         actor);
}

CommitOutcome Project::commit_grow(SessionId id, const std::string& actor) {
  std::unique_lock lock(mutex_);
  auto& rec = mutable_session(id);
  if (rec.outcome) return *rec.outcome;
  auto& c = mutable_cluster(rec.session.cluster_id());
  if (c.status != ClusterStatus::validated) {
    throw StateError("cluster " + std::to_string(c.cluster_id) + " is not validated");
  }
  if (!rec.session.committable()) throw StateError("grow session boundary is not pinned yet");
  CommitOutcome out{c.cluster_id, {}};
  json added = json::array();
  for (Row r : rec.session.accepted_objects()) {
    if (!pool_.contains(r)) continue;
    out.added.push_back(r);
    added.push_back(store_->object_id(r));
  }
  json payload{{"session", id},
               {"cluster_id", c.cluster_id},
               {"added", std::move(added)},
               {"mode", rec.session.mode() == GrowMode::search ? "search" : "turtle"},
               {"judged_pages", rec.session.judged_pages()}};
  if (rec.session.mode() == GrowMode::search) {
    const auto t = rec.session.threshold();
    payload["threshold"] = t ? json(*t) : json(nullptr);
  }
  record(Action::grow_committed, std::move(payload), out.added.size(), actor);
  rec.session.mark_committed();
  rec.outcome = out;
  open_sessions_.erase(c.cluster_id);
  return out;
}

HierarchyTree Project::build_tree(const std::string& actor) {
  std::unique_lock lock(mutex_);
  json ids = json::array();
  std::size_t objects = 0;
  for (const auto& [id, c] : clusters_) {
    if (c.status != ClusterStatus::grown) continue;
    ids.push_back(id);
    objects += c.size();
  }
  if (ids.empty()) throw StateError("no grown clusters to arrange");
  record(Action::tree_built, {{"clusters", std::move(ids)}}, objects, actor);
  return *tree_;
}

std::size_t Project::objects_under(NodeId id) const {
  std::size_t n = 0;
  for (ClusterId c : tree_->subtree_clusters(id)) {
    if (auto it = clusters_.find(c); it != clusters_.end()) n += it->second.size();
  }
  return n;
}

void Project::merge_nodes(NodeId into, NodeId from, const std::string& actor) {
  std::unique_lock lock(mutex_);
  require_tree();
  HierarchyTree trial = *tree_;
  trial.merge_nodes(into, from);
  const std::size_t objects = objects_under(into) + objects_under(from);
  record(Action::node_merged, {{"into", into}, {"from", from}}, objects, actor);
}

void Project::move_node(NodeId id, NodeId new_parent, const std::string& actor) {
  std::unique_lock lock(mutex_);
  require_tree();
  HierarchyTree trial = *tree_;
  trial.move_node(id, new_parent);
  record(Action::node_moved, {{"node", id}, {"parent", new_parent}}, objects_under(id), actor);
}

void Project::rename_node(NodeId id, const std::string& name, const std::string& actor) {
  std::unique_lock lock(mutex_);
  require_tree();
  HierarchyTree trial = *tree_;
  trial.rename_node(id, name);
  record(Action::node_named, {{"node", id}, {"name", name}}, objects_under(id), actor);
}

Labeling Project::labeling() const {
  std::shared_lock lock(mutex_);
  return export_labeling(tree_ ? &*tree_ : nullptr, clusters_, *store_);
}

std::string Project::labeling_csv() const { return annoclust::labeling_csv(labeling()); }

json Project::metrics() const {
  const auto labels = labeling();
  std::shared_lock lock(mutex_);
  json out;
  out["project_id"] = config_.project_id;
  out["objects"] = store_->count();
  out["unassigned"] = pool_.size();
  out["iterations_completed"] = iterations_done_;
  out["schedule"] = config_.schedule;

  json status_counts = json::object();
  for (auto s : {ClusterStatus::proposed, ClusterStatus::validated, ClusterStatus::rejected,
                 ClusterStatus::grown}) {
    status_counts[std::string(to_string(s))] = 0;
  }
  for (const auto& [id, c] : clusters_) {
    status_counts[std::string(to_string(c.status))] = status_counts[std::string(to_string(c.status))].get<int>() + 1;
  }
  out["clusters"] = status_counts;

  try {
    const auto t = throughput(log_.events());
    out["throughput"] = to_json(t);
    out["objects_per_hour"] = t.objects_per_hour;
  } catch (const UndefinedError&) {
    out["throughput"] = nullptr;
    out["objects_per_hour"] = nullptr;
  }

  if (tree_) {
    const auto s = tree_->stats();
    out["tree"] = {{"node_count", s.node_count}, {"depth", s.depth}, {"named_count", s.named_count}};
  } else {
    out["tree"] = nullptr;
  }

  std::map<std::string, std::size_t> class_sizes;
  for (const auto& [object, path] : labels.assignments) ++class_sizes[path];
  out["class_sizes"] = class_sizes;
  out["residual_objects"] = labels.unassigned.size();

  const auto truth = prior_labels(*store_);
  out["per_class_precision"] = json::object();
  out["macro_precision"] = nullptr;
  out["precision_q10"] = nullptr;
  out["relative_overlap_matrix"] = json::array();
  if (!truth.empty() && !labels.assignments.empty()) {
    try {
      const auto agreement = predominant_label_agreement(labels.assignments, truth);
      out["agreement"] = to_json(agreement);
      out["per_class_precision"] = agreement.per_class_precision;
      out["macro_precision"] = agreement.macro_precision;
      out["precision_q10"] = agreement.precision_q10;
    } catch (const UndefinedError&) {
      out["agreement"] = nullptr;
    }
    out["relative_overlap_matrix"] = to_json(correspondence_matrix(truth, labels.assignments));
  }
  return out;
}

}  // namespace annoclust

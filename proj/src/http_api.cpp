#include "annoclust/http_api.hpp"

#include <httplib.h>

#include <charconv>
#include <regex>

#include "annoclust/errors.hpp"

namespace annoclust {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool valid_project_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id, pattern);
}

std::uint64_t parse_number(std::string_view text) {
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw NotFoundError("malformed id: " + std::string(text));
  }
  return value;
}

std::string_view verdict_name(PageVerdict v) {
  return v == PageVerdict::match ? "match" : v == PageVerdict::no_match ? "no_match" : "unseen";
}

json id_list(const FeatureStore& store, std::span<const Row> rows) {
  json out = json::array();
  for (Row r : rows) out.push_back(store.object_id(r));
  return out;
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ValueError(std::string("request body is not JSON: ") + e.what());
  }
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", kind}, {"message", message}}.dump(), "application/json");
}

using Handler = std::function<std::optional<json>(const httplib::Request&, httplib::Response&)>;

// Maps library errors onto status codes; handlers returning nullopt have
// already filled in the response themselves.
httplib::Server::Handler guarded(Handler handler) {
  return [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
    try {
      if (auto body = handler(req, res)) {
        if (res.status == -1) res.status = 200;
        res.set_content(body->dump(), "application/json");
      }
    } catch (const ScheduleDone& e) {
      res.status = 200;
      res.set_content(json{{"done", true}, {"message", e.what()}}.dump(), "application/json");
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const StateError& e) {
      send_error(res, 409, "state", e.what());
    } catch (const ProtocolError& e) {
      send_error(res, 409, "protocol", e.what());
    } catch (const BusyError& e) {
      send_error(res, 409, "busy", e.what());
    } catch (const UndefinedError& e) {
      send_error(res, 409, "undefined", e.what());
    } catch (const ValueError& e) {
      send_error(res, 400, "value", e.what());
    } catch (const FormatError& e) {
      send_error(res, 400, "format", e.what());
    } catch (const StructureError& e) {
      send_error(res, 400, "structure", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "value", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "project.json")) continue;
    auto project = Project::open(entry.path());
    const std::string id = project->config().project_id;
    projects_.emplace(id, std::move(project));
  }
}

Project& Workspace::get(const std::string& project_id) {
  std::lock_guard lock(mutex_);
  auto it = projects_.find(project_id);
  if (it == projects_.end()) throw NotFoundError("unknown project " + project_id);
  return *it->second;
}

Project& Workspace::create(ProjectConfig config) {
  if (!valid_project_id(config.project_id)) {
    throw ValueError("project id must be 1-64 letters, digits, '-' or '_'");
  }
  std::lock_guard lock(mutex_);
  if (projects_.contains(config.project_id)) {
    throw StateError("project " + config.project_id + " already exists");
  }
  const std::string id = config.project_id;
  auto project = Project::create(root_ / id, std::move(config));
  return *projects_.emplace(id, std::move(project)).first->second;
}

std::vector<std::string> Workspace::project_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, p] : projects_) out.push_back(id);
  return out;
}

QualifiedId parse_qualified_id(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) return {"default", parse_number(text)};
  return {text.substr(0, colon), parse_number(std::string_view(text).substr(colon + 1))};
}

std::string qualified_id(const std::string& project, std::uint64_t id) {
  return project + ":" + std::to_string(id);
}

json cluster_json(const std::string& project, const Cluster& c) {
  return {{"id", qualified_id(project, c.cluster_id)},
          {"cluster_id", c.cluster_id},
          {"status", std::string(to_string(c.status))},
          {"flagged", c.flagged},
          {"size", c.size()},
          {"seed_size", c.seed_members.size()},
          {"grown_size", c.grown_members.size()},
          {"created_iteration", c.created_iteration}};
}

json session_json(const std::string& project, SessionId id, const GrowSession& s) {
  json verdicts = json::array();
  for (auto v : s.page_verdicts()) verdicts.push_back(std::string(verdict_name(v)));
  json out{{"id", qualified_id(project, id)},
           {"cluster", qualified_id(project, s.cluster_id())},
           {"mode", s.mode() == GrowMode::search ? "search" : "turtle"},
           {"page_size", s.page_size()},
           {"page_count", s.page_count()},
           {"candidate_count", s.candidate_order().size()},
           {"judged_pages", s.judged_pages()},
           {"committed", s.committed()},
           {"committable", s.committable()},
           {"verdicts", std::move(verdicts)}};
  const auto current = s.current_page();
  out["current_page"] = current ? json(*current) : json(nullptr);
  if (s.mode() == GrowMode::search) {
    const auto t = s.threshold();
    out["threshold"] = t ? json(*t) : json(nullptr);
  }
  return out;
}

json tree_json(const std::string& project, const HierarchyTree& tree) {
  json nodes = json::array();
  for (const auto& [id, n] : tree.nodes()) {
    json children = json::array();
    for (NodeId c : n.children) children.push_back(qualified_id(project, c));
    json clusters = json::array();
    for (ClusterId c : n.cluster_refs) clusters.push_back(qualified_id(project, c));
    nodes.push_back({{"id", qualified_id(project, id)},
                     {"node_id", id},
                     {"parent", n.parent ? json(qualified_id(project, *n.parent)) : json(nullptr)},
                     {"children", std::move(children)},
                     {"clusters", std::move(clusters)},
                     {"name", n.name ? json(*n.name) : json(nullptr)},
                     {"merge_height", n.merge_height},
                     {"path", tree.name_path(id)}});
  }
  const auto stats = tree.stats();
  return {{"root", qualified_id(project, tree.root())},
          {"nodes", std::move(nodes)},
          {"stats",
           {{"node_count", stats.node_count}, {"depth", stats.depth}, {"named_count", stats.named_count}}}};
}

HttpApi::HttpApi(Workspace& workspace)
    : workspace_(workspace), server_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpApi::~HttpApi() { stop(); }

int HttpApi::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpApi::listen_after_bind() { return server_->listen_after_bind(); }

void HttpApi::stop() {
  if (server_->is_running()) server_->stop();
}

void HttpApi::wait_until_ready() const { server_->wait_until_ready(); }

void HttpApi::routes() {
  auto& s = *server_;
  Workspace& ws = workspace_;

  auto project_of = [&ws](const httplib::Request& req) -> std::pair<std::string, Project*> {
    const std::string id = req.matches[1];
    return {id, &ws.get(id)};
  };
  auto resolve = [&ws](const std::string& text) -> std::pair<QualifiedId, Project*> {
    auto q = parse_qualified_id(text);
    return {q, &ws.get(q.project)};
  };

  s.Get("/projects", guarded([&ws](const auto&, auto&) -> std::optional<json> {
          return json{{"projects", ws.project_ids()}};
        }));

  s.Post("/projects", guarded([&ws](const auto& req, auto& res) -> std::optional<json> {
           const auto body = parse_body(req);
           if (!body.contains("feature_file")) throw ValueError("feature_file is required");
           auto config = ProjectConfig::from_json(body);
           Project& p = ws.create(std::move(config));
           res.status = 201;
           return json{{"project_id", p.config().project_id},
                       {"config", p.config().to_json()},
                       {"objects", p.store().count()}};
         }));

  s.Get(R"(/projects/([^/]+))", guarded([project_of](const auto& req, auto&) -> std::optional<json> {
          auto [id, p] = project_of(req);
          const auto state = p->job_state();
          json out{{"project_id", id},
                   {"config", p->config().to_json()},
                   {"objects", p->store().count()},
                   {"unassigned", p->unassigned_count()},
                   {"iterations_completed", p->completed_iterations()},
                   {"job", state == JobState::idle ? "idle" : state == JobState::running ? "running" : "failed"}};
          if (state == JobState::failed) out["job_error"] = p->job_error();
          return out;
        }));

  s.Post(R"(/projects/([^/]+)/iterations)",
         guarded([project_of](const auto& req, auto& res) -> std::optional<json> {
           auto [id, p] = project_of(req);
           const auto body = parse_body(req);
           const std::string actor = body.value("actor", std::string("system"));
           if (req.get_param_value("wait") == "true") {
             const auto out = p->start_iteration(actor);
             json proposed = json::array();
             for (ClusterId c : out.proposed) proposed.push_back(qualified_id(id, c));
             return json{{"done", false},
                         {"iteration", out.iteration},
                         {"m", out.m},
                         {"proposed", std::move(proposed)},
                         {"noise", out.noise}};
           }
           p->start_iteration_async(actor);
           res.status = 202;
           return json{{"done", false}, {"job", "running"}};
         }));

  s.Get(R"(/projects/([^/]+)/clusters)", guarded([project_of](const auto& req, auto&) -> std::optional<json> {
          auto [id, p] = project_of(req);
          std::optional<ClusterStatus> status;
          if (req.has_param("status")) status = parse_cluster_status(req.get_param_value("status"));
          json out = json::array();
          for (const auto& c : p->clusters(status)) out.push_back(cluster_json(id, c));
          json queue = json::array();
          for (ClusterId c : p->growth_queue()) queue.push_back(qualified_id(id, c));
          return json{{"clusters", std::move(out)}, {"growth_queue", std::move(queue)}};
        }));

  s.Get(R"(/clusters/([^/]+))", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
          auto [q, p] = resolve(req.matches[1]);
          return cluster_json(q.project, p->cluster(q.id));
        }));

  s.Get(R"(/clusters/([^/]+)/members)", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
          auto [q, p] = resolve(req.matches[1]);
          const auto c = p->cluster(q.id);
          std::vector<Row> members = c.seed_members;
          members.insert(members.end(), c.grown_members.begin(), c.grown_members.end());
          const std::string order = req.has_param("order") ? req.get_param_value("order") : "stored";
          if (order == "dissimilar") {
            members = dissimilar_display_order(p->store(), members);
          } else if (order != "stored") {
            throw ValueError("unknown member order " + order);
          }
          return json{{"cluster", qualified_id(q.project, q.id)},
                      {"order", order},
                      {"members", id_list(p->store(), members)}};
        }));

  auto validation = [resolve](ValidationVerdict verdict) {
    return guarded([resolve, verdict](const auto& req, auto&) -> std::optional<json> {
      auto [q, p] = resolve(req.matches[1]);
      const auto body = parse_body(req);
      p->validate(q.id, verdict, body.value("actor", std::string("annotator")));
      return cluster_json(q.project, p->cluster(q.id));
    });
  };
  s.Post(R"(/clusters/([^/]+)/approve)", validation(ValidationVerdict::approve));
  s.Post(R"(/clusters/([^/]+)/approve-flag)", validation(ValidationVerdict::approve_flag));
  s.Post(R"(/clusters/([^/]+)/reject)", validation(ValidationVerdict::reject));

  s.Post(R"(/clusters/([^/]+)/grow-sessions)", guarded([resolve](const auto& req, auto& res) -> std::optional<json> {
           auto [q, p] = resolve(req.matches[1]);
           const SessionId sid = p->open_grow_session(q.id);
           res.status = 201;
           return session_json(q.project, sid, p->session(sid));
         }));

  s.Get(R"(/grow-sessions/([^/]+))", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
          auto [q, p] = resolve(req.matches[1]);
          return session_json(q.project, q.id, p->session(q.id));
        }));

  s.Get(R"(/grow-sessions/([^/]+)/next-probe)", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
          auto [q, p] = resolve(req.matches[1]);
          const auto probe = p->next_probe(q.id);
          return json{{"session", qualified_id(q.project, q.id)},
                      {"page", probe ? json(*probe) : json(nullptr)},
                      {"done", !probe.has_value()}};
        }));

  s.Get(R"(/grow-sessions/([^/]+)/pages/(\d+))", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
          auto [q, p] = resolve(req.matches[1]);
          const auto page = parse_number(req.matches[2].str());
          const auto session = p->session(q.id);
          json objects = id_list(p->store(), session.page(page));
          return json{{"session", qualified_id(q.project, q.id)},
                      {"page", page},
                      {"page_count", session.page_count()},
                      {"verdict", std::string(verdict_name(session.verdict(page)))},
                      {"objects", std::move(objects)}};
        }));

  s.Post(R"(/grow-sessions/([^/]+)/pages/(\d+)/verdict)",
         guarded([resolve](const auto& req, auto&) -> std::optional<json> {
           auto [q, p] = resolve(req.matches[1]);
           const auto page = parse_number(req.matches[2].str());
           const auto body = parse_body(req);
           const std::string v = body.at("verdict").template get<std::string>();
           PageVerdict verdict;
           if (v == "match") {
             verdict = PageVerdict::match;
           } else if (v == "no_match") {
             verdict = PageVerdict::no_match;
           } else {
             throw ValueError("verdict must be match or no_match");
           }
           if (page >= p->session(q.id).page_count()) throw NotFoundError("page out of range");
           p->record_page_verdict(q.id, page, verdict, body.value("actor", std::string("annotator")));
           return session_json(q.project, q.id, p->session(q.id));
         }));

  s.Post(R"(/grow-sessions/([^/]+)/remove/(.+))", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
           auto [q, p] = resolve(req.matches[1]);
           p->remove_candidate(q.id, req.matches[2].str());
           return session_json(q.project, q.id, p->session(q.id));
         }));

  s.Post(R"(/grow-sessions/([^/]+)/commit)", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
           auto [q, p] = resolve(req.matches[1]);
           const auto body = parse_body(req);
           const auto out = p->commit_grow(q.id, body.value("actor", std::string("annotator")));
           return json{{"session", qualified_id(q.project, q.id)},
                       {"cluster", cluster_json(q.project, p->cluster(out.cluster_id))},
                       {"added", id_list(p->store(), out.added)}};
         }));

  s.Post(R"(/projects/([^/]+)/tree)", guarded([project_of](const auto& req, auto& res) -> std::optional<json> {
           auto [id, p] = project_of(req);
           const auto tree = p->build_tree();
           res.status = 201;
           return tree_json(id, tree);
         }));

  s.Get(R"(/projects/([^/]+)/tree)", guarded([project_of](const auto& req, auto&) -> std::optional<json> {
          auto [id, p] = project_of(req);
          const auto tree = p->tree();
          if (!tree) throw NotFoundError("no tree built yet");
          return tree_json(id, *tree);
        }));

  s.Post(R"(/nodes/([^/]+)/merge-into/([^/]+))", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
           auto [from, p] = resolve(req.matches[1]);
           const auto into = parse_qualified_id(req.matches[2]);
           if (into.project != from.project) throw ValueError("nodes belong to different projects");
           p->merge_nodes(into.id, from.id);
           return tree_json(from.project, *p->tree());
         }));

  s.Post(R"(/nodes/([^/]+)/move/([^/]+))", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
           auto [node, p] = resolve(req.matches[1]);
           const auto parent = parse_qualified_id(req.matches[2]);
           if (parent.project != node.project) throw ValueError("nodes belong to different projects");
           p->move_node(node.id, parent.id);
           return tree_json(node.project, *p->tree());
         }));

  s.Post(R"(/nodes/([^/]+)/name)", guarded([resolve](const auto& req, auto&) -> std::optional<json> {
           auto [node, p] = resolve(req.matches[1]);
           const auto body = parse_body(req);
           p->rename_node(node.id, body.at("name").template get<std::string>());
           return tree_json(node.project, *p->tree());
         }));

  s.Get(R"(/projects/([^/]+)/labeling)", guarded([project_of](const auto& req, auto& res) -> std::optional<json> {
          auto [id, p] = project_of(req);
          res.set_content(p->labeling_csv(), "text/csv");
          return std::nullopt;
        }));

  s.Get(R"(/projects/([^/]+)/metrics)", guarded([project_of](const auto& req, auto&) -> std::optional<json> {
          auto [id, p] = project_of(req);
          return p->metrics();
        }));
}

}  // namespace annoclust

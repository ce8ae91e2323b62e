#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "annoclust/project.hpp"

namespace httplib {
class Server;
}

namespace annoclust {

// The set of projects served from one directory, one subdirectory each.
class Workspace {
 public:
  // Opens every subdirectory of root that holds a project.
  explicit Workspace(std::filesystem::path root);

  Project& get(const std::string& project_id);  // throws NotFoundError
  Project& create(ProjectConfig config);        // throws ValueError on a taken or bad id
  std::vector<std::string> project_ids() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Project>> projects_;
};

// Ids handed out over HTTP are "<project>:<number>"; a bare number refers to
// the project named "default".
struct QualifiedId {
  std::string project;
  std::uint64_t id = 0;
};
QualifiedId parse_qualified_id(const std::string& text);
std::string qualified_id(const std::string& project, std::uint64_t id);

nlohmann::json cluster_json(const std::string& project, const Cluster& cluster);
nlohmann::json session_json(const std::string& project, SessionId id, const GrowSession& session);
nlohmann::json tree_json(const std::string& project, const HierarchyTree& tree);

class HttpApi {
 public:
  explicit HttpApi(Workspace& workspace);
  ~HttpApi();
  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  // Port 0 picks a free port. Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  void routes();

  Workspace& workspace_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace annoclust

#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace annoclust {

enum class Action {
  iteration_started,
  cluster_approved,
  cluster_flagged,  // approved and flagged in one step
  cluster_rejected,
  page_verdict,
  candidate_removed,
  grow_committed,
  tree_built,
  node_merged,
  node_moved,
  node_named,
};

std::string_view to_string(Action action);
Action parse_action(std::string_view text);

struct AnnotationEvent {
  double timestamp = 0.0;  // UTC seconds
  std::string actor;
  Action action = Action::iteration_started;
  nlohmann::json payload = nlohmann::json::object();
  std::size_t objects_affected = 0;

  nlohmann::json to_json() const;
  static AnnotationEvent from_json(const nlohmann::json& j);
};

// Append-only, timestamp-ordered event list, optionally mirrored line by line
// into a JSON-lines file.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(std::filesystem::path file);

  // Clamps the timestamp so the log stays non-decreasing.
  const AnnotationEvent& append(AnnotationEvent event);
  const std::vector<AnnotationEvent>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }

  static std::vector<AnnotationEvent> read(const std::filesystem::path& file);

 private:
  std::vector<AnnotationEvent> events_;
  std::filesystem::path file_;
  std::ofstream out_;
};

}  // namespace annoclust

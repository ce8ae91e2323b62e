#include "annoclust/events.hpp"

#include <array>
#include <utility>

#include "annoclust/errors.hpp"

namespace annoclust {

namespace {

constexpr std::array<std::pair<Action, std::string_view>, 11> kActions{{
    {Action::iteration_started, "iteration_started"},
    {Action::cluster_approved, "cluster_approved"},
    {Action::cluster_flagged, "cluster_flagged"},
    {Action::cluster_rejected, "cluster_rejected"},
    {Action::page_verdict, "page_verdict"},
    {Action::candidate_removed, "candidate_removed"},
    {Action::grow_committed, "grow_committed"},
    {Action::tree_built, "tree_built"},
    {Action::node_merged, "node_merged"},
    {Action::node_moved, "node_moved"},
    {Action::node_named, "node_named"},
}};

}  // namespace

std::string_view to_string(Action action) {
  for (const auto& [a, name] : kActions) {
    if (a == action) return name;
  }
  return "unknown";
}

Action parse_action(std::string_view text) {
  for (const auto& [a, name] : kActions) {
    if (name == text) return a;
  }
  throw FormatError("unknown event action: " + std::string(text));
}

nlohmann::json AnnotationEvent::to_json() const {
  return nlohmann::json{{"timestamp", timestamp},
                        {"actor", actor},
                        {"action", std::string(to_string(action))},
                        {"payload", payload},
                        {"objects_affected", objects_affected}};
}

AnnotationEvent AnnotationEvent::from_json(const nlohmann::json& j) {
  try {
    AnnotationEvent e;
    e.timestamp = j.at("timestamp").get<double>();
    e.actor = j.at("actor").get<std::string>();
    e.action = parse_action(j.at("action").get<std::string>());
    e.payload = j.value("payload", nlohmann::json::object());
    e.objects_affected = j.at("objects_affected").get<std::size_t>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("malformed event: ") + ex.what());
  }
}

EventLog::EventLog(std::filesystem::path file) : file_(std::move(file)) {
  if (std::filesystem::exists(file_)) events_ = read(file_);
  out_.open(file_, std::ios::binary | std::ios::app);
  if (!out_) throw Error("cannot open event log " + file_.string());
}

const AnnotationEvent& EventLog::append(AnnotationEvent event) {
  if (!events_.empty() && event.timestamp < events_.back().timestamp) {
    event.timestamp = events_.back().timestamp;
  }
  if (out_.is_open()) {
    out_ << event.to_json().dump() << '\n';
    out_.flush();
    if (!out_) throw Error("I/O failure appending to " + file_.string());
  }
  events_.push_back(std::move(event));
  return events_.back();
}

std::vector<AnnotationEvent> EventLog::read(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open event log " + file.string());
  std::vector<AnnotationEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      // A torn final line from a crash mid-append; everything before it stands.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw FormatError("corrupt event log line in " + file.string());
    }
    out.push_back(AnnotationEvent::from_json(j));
  }
  return out;
}

}  // namespace annoclust

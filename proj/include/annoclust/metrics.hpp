#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "annoclust/events.hpp"

namespace annoclust {

// object id -> class name
using ClassAssignment = std::map<std::string, std::string>;

double precision(std::size_t true_positives, std::size_t false_positives);
double macro_precision(const std::map<std::string, double>& per_class);
// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);
double relative_overlap(const std::set<std::string>& a, const std::set<std::string>& b);

struct CorrespondenceEntry {
  std::string class_a;
  std::string class_b;
  std::size_t intersection = 0;
  std::size_t size_a = 0;
  std::size_t size_b = 0;
  double relative_overlap = 0.0;
};

// Relative overlap for every class pair sharing at least one object, computed
// over the objects both labelings cover. Grouped by class_a (largest first),
// descending overlap within a group.
std::vector<CorrespondenceEntry> correspondence_matrix(const ClassAssignment& a,
                                                       const ClassAssignment& b);

struct AgreementReport {
  std::map<std::string, double> per_class_precision;
  std::map<std::string, std::string> predominant_label;
  std::map<std::string, std::size_t> spiked_counts;
  std::vector<std::string> excluded_classes;  // no spiked members
  double macro_precision = 0.0;
  double precision_q10 = 0.0;
};

// Each class gets the most frequent truth label among its spiked members (ties:
// smallest label); its precision is that label's share.
AgreementReport predominant_label_agreement(const ClassAssignment& labeling,
                                            const ClassAssignment& spiked_truth);

inline constexpr double kSessionGapSeconds = 600.0;

struct Session {
  std::size_t first = 0;  // index into the event slice
  std::size_t last = 0;   // inclusive
  double start = 0.0;
  double end = 0.0;
  double duration() const { return end - start; }
};

// Splits wherever consecutive events are more than ten minutes apart.
std::vector<Session> segment_sessions(std::span<const AnnotationEvent> events);

bool counts_as_sorting(Action action);  // approval and growth events
bool is_naming(Action action);

struct IterationThroughput {
  std::size_t iteration = 0;
  std::size_t m = 0;
  std::size_t new_clusters = 0;
  std::size_t validated_clusters = 0;
  std::size_t objects = 0;
  double hours = 0.0;
  std::optional<double> objects_per_hour;
};

struct ThroughputReport {
  double objects_per_hour = 0.0;  // approval + growth, naming excluded
  double sorting_hours = 0.0;
  std::size_t sorted_objects = 0;
  std::optional<double> objects_per_hour_with_naming;
  double naming_hours = 0.0;
  std::size_t session_count = 0;
  std::vector<IterationThroughput> iterations;
};

// Throws UndefinedError when the approval/growth sessions span zero time.
ThroughputReport throughput(std::span<const AnnotationEvent> events);

nlohmann::json to_json(const ThroughputReport& report);
nlohmann::json to_json(const AgreementReport& report);
nlohmann::json to_json(const std::vector<CorrespondenceEntry>& entries);

// iteration,m,new_clusters,validated_clusters,objects_per_hour
std::string iteration_table_csv(const ThroughputReport& report);
// labeling,macro_precision,precision_q10,class_count
std::string precision_table_csv(const std::map<std::string, AgreementReport>& rows);

}  // namespace annoclust

#include "annoclust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "annoclust/errors.hpp"

namespace annoclust {

double precision(std::size_t true_positives, std::size_t false_positives) {
  const std::size_t total = true_positives + false_positives;
  if (total == 0) throw UndefinedError("precision of an empty class");
  return static_cast<double>(true_positives) / static_cast<double>(total);
}

double macro_precision(const std::map<std::string, double>& per_class) {
  if (per_class.empty()) throw UndefinedError("macro precision over zero classes");
  double sum = 0.0;
  for (const auto& [name, value] : per_class) sum += value;
  return sum / static_cast<double>(per_class.size());
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw UndefinedError("quantile of an empty sample");
  if (q < 0.0 || q > 1.0) throw ValueError("quantile level outside [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double relative_overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) throw UndefinedError("relative overlap of two empty classes");
  std::size_t common = 0;
  for (const auto& x : a) common += b.count(x);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

std::vector<CorrespondenceEntry> correspondence_matrix(const ClassAssignment& a,
                                                       const ClassAssignment& b) {
  std::map<std::string, std::size_t> size_a, size_b;
  std::map<std::pair<std::string, std::string>, std::size_t> joint;
  for (const auto& [object, class_a] : a) {
    auto it = b.find(object);
    if (it == b.end()) continue;
    ++size_a[class_a];
    ++size_b[it->second];
    ++joint[{class_a, it->second}];
  }
  std::vector<CorrespondenceEntry> out;
  for (const auto& [key, common] : joint) {
    CorrespondenceEntry e;
    e.class_a = key.first;
    e.class_b = key.second;
    e.intersection = common;
    e.size_a = size_a[key.first];
    e.size_b = size_b[key.second];
    e.relative_overlap =
        static_cast<double>(common) / static_cast<double>(e.size_a + e.size_b - common);
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const CorrespondenceEntry& x, const CorrespondenceEntry& y) {
    if (x.size_a != y.size_a) return x.size_a > y.size_a;
    if (x.class_a != y.class_a) return x.class_a < y.class_a;
    if (x.relative_overlap != y.relative_overlap) return x.relative_overlap > y.relative_overlap;
    return x.class_b < y.class_b;
  });
  return out;
}

AgreementReport predominant_label_agreement(const ClassAssignment& labeling,
                                            const ClassAssignment& spiked_truth) {
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  std::set<std::string> classes;
  for (const auto& [object, cls] : labeling) {
    classes.insert(cls);
    auto it = spiked_truth.find(object);
    if (it != spiked_truth.end()) ++counts[cls][it->second];
  }
  AgreementReport report;
  for (const auto& cls : classes) {
    auto it = counts.find(cls);
    if (it == counts.end()) {
      report.excluded_classes.push_back(cls);
      continue;
    }
    std::size_t total = 0, best = 0;
    const std::string* label = nullptr;
    // std::map iterates labels in ascending order, so strict > keeps the smallest on ties.
    for (const auto& [truth, n] : it->second) {
      total += n;
      if (n > best) {
        best = n;
        label = &truth;
      }
    }
    report.predominant_label[cls] = *label;
    report.spiked_counts[cls] = total;
    report.per_class_precision[cls] = precision(best, total - best);
  }
  report.macro_precision = macro_precision(report.per_class_precision);
  std::vector<double> values;
  for (const auto& [cls, p] : report.per_class_precision) values.push_back(p);
  report.precision_q10 = quantile(std::move(values), 0.10);
  return report;
}

std::vector<Session> segment_sessions(std::span<const AnnotationEvent> events) {
  std::vector<Session> out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const double t = events[i].timestamp;
    if (out.empty() || t - out.back().end > kSessionGapSeconds) {
      out.push_back({i, i, t, t});
    } else {
      out.back().last = i;
      out.back().end = t;
    }
  }
  return out;
}

bool counts_as_sorting(Action action) {
  return action == Action::cluster_approved || action == Action::cluster_flagged ||
         action == Action::grow_committed;
}

bool is_naming(Action action) {
  return action == Action::tree_built || action == Action::node_merged ||
         action == Action::node_moved || action == Action::node_named;
}

namespace {

double session_hours(const std::vector<AnnotationEvent>& events) {
  double seconds = 0.0;
  for (const auto& s : segment_sessions(events)) seconds += s.duration();
  return seconds / 3600.0;
}

}  // namespace

ThroughputReport throughput(std::span<const AnnotationEvent> events) {
  ThroughputReport report;
  std::vector<AnnotationEvent> sorting, naming;
  std::size_t naming_objects = 0;
  for (const auto& e : events) {
    if (is_naming(e.action)) {
      naming.push_back(e);
      naming_objects += e.objects_affected;
    } else {
      sorting.push_back(e);
      if (counts_as_sorting(e.action)) report.sorted_objects += e.objects_affected;
    }
  }
  report.session_count = segment_sessions(events).size();
  report.sorting_hours = session_hours(sorting);
  report.naming_hours = session_hours(naming);
  if (report.sorting_hours <= 0.0) throw UndefinedError("approval and growth span zero time");
  report.objects_per_hour = static_cast<double>(report.sorted_objects) / report.sorting_hours;
  const double all_hours = session_hours({events.begin(), events.end()});
  if (all_hours > 0.0) {
    report.objects_per_hour_with_naming =
        static_cast<double>(report.sorted_objects + naming_objects) / all_hours;
  }

  std::vector<AnnotationEvent> slice;
  auto flush = [&](IterationThroughput row) {
    row.hours = session_hours(slice);
    if (row.hours > 0.0) row.objects_per_hour = static_cast<double>(row.objects) / row.hours;
    report.iterations.push_back(row);
  };
  std::optional<IterationThroughput> current;
  for (const auto& e : events) {
    if (e.action == Action::iteration_started) {
      if (current) flush(*current);
      slice.clear();
      current = IterationThroughput{};
      current->iteration = e.payload.value("iteration", report.iterations.size() + 1);
      current->m = e.payload.value("m", std::size_t{0});
      if (e.payload.contains("seeds")) current->new_clusters = e.payload["seeds"].size();
    }
    if (!current || is_naming(e.action)) continue;
    slice.push_back(e);
    if (e.action == Action::cluster_approved || e.action == Action::cluster_flagged) {
      ++current->validated_clusters;
    }
    if (counts_as_sorting(e.action)) current->objects += e.objects_affected;
  }
  if (current) flush(*current);
  return report;
}

nlohmann::json to_json(const ThroughputReport& report) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& row : report.iterations) {
    iterations.push_back({{"iteration", row.iteration},
                          {"m", row.m},
                          {"new_clusters", row.new_clusters},
                          {"validated_clusters", row.validated_clusters},
                          {"objects", row.objects},
                          {"hours", row.hours},
                          {"objects_per_hour", row.objects_per_hour
                                                   ? nlohmann::json(*row.objects_per_hour)
                                                   : nlohmann::json(nullptr)}});
  }
  return {{"objects_per_hour", report.objects_per_hour},
          {"sorting_hours", report.sorting_hours},
          {"sorted_objects", report.sorted_objects},
          {"objects_per_hour_with_naming", report.objects_per_hour_with_naming
                                               ? nlohmann::json(*report.objects_per_hour_with_naming)
                                               : nlohmann::json(nullptr)},
          {"naming_hours", report.naming_hours},
          {"session_count", report.session_count},
          {"iterations", iterations}};
}

nlohmann::json to_json(const AgreementReport& report) {
  return {{"per_class_precision", report.per_class_precision},
          {"predominant_label", report.predominant_label},
          {"spiked_counts", report.spiked_counts},
          {"excluded_classes", report.excluded_classes},
          {"macro_precision", report.macro_precision},
          {"precision_q10", report.precision_q10},
          {"class_count", report.per_class_precision.size()}};
}

nlohmann::json to_json(const std::vector<CorrespondenceEntry>& entries) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : entries) {
    out.push_back({{"class_a", e.class_a},
                   {"class_b", e.class_b},
                   {"intersection", e.intersection},
                   {"size_a", e.size_a},
                   {"size_b", e.size_b},
                   {"relative_overlap", e.relative_overlap}});
  }
  return out;
}

std::string iteration_table_csv(const ThroughputReport& report) {
  std::ostringstream out;
  out << "iteration,m,new_clusters,validated_clusters,objects_per_hour\n";
  for (const auto& row : report.iterations) {
    out << row.iteration << ',' << row.m << ',' << row.new_clusters << ',' << row.validated_clusters
        << ',';
    if (row.objects_per_hour) out << *row.objects_per_hour;
    out << '\n';
  }
  out << "total,," << [&] {
    std::size_t n = 0;
    for (const auto& row : report.iterations) n += row.new_clusters;
    return n;
  }() << ',' << [&] {
    std::size_t n = 0;
    for (const auto& row : report.iterations) n += row.validated_clusters;
    return n;
  }() << ',' << report.objects_per_hour << '\n';
  return out.str();
}

std::string precision_table_csv(const std::map<std::string, AgreementReport>& rows) {
  std::ostringstream out;
  out.precision(6);
  out << "labeling,macro_precision,precision_q10,class_count\n";
  for (const auto& [name, r] : rows) {
    out << name << ',' << r.macro_precision << ',' << r.precision_q10 << ','
        << r.per_class_precision.size() << '\n';
  }
  return out.str();
}

}  // namespace annoclust

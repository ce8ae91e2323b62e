#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "annoclust/feature_store.hpp"
#include "annoclust/metrics.hpp"
#include "annoclust/project.hpp"

namespace annoclust::sim {

// Label carried by background objects when scoring against the truth.
inline constexpr const char* kNoiseLabel = "noise";

struct SyntheticSpec {
  std::size_t object_count = 50000;
  std::size_t class_count = 20;
  double zipf_exponent = 1.2;
  std::size_t dim = 32;
  double cluster_sigma = 1.0;
  double noise_fraction = 0.02;
  std::set<std::size_t> holdout_classes;  // class indices
  double holdout_fraction = 0.005;        // share of object_count per holdout class
  double separation = 8.0;                // minimum centre distance, in sigmas
  std::uint64_t rng_seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

// Zipf rank sizes for the non-holdout classes: share proportional to 1/r^s,
// rounded, remainder to the largest class so the sizes sum to total.
std::vector<std::size_t> zipf_sizes(std::size_t total, std::size_t classes, double exponent);

struct SyntheticData {
  FeatureStore store{1};  // replaced by generate_synthetic
  std::vector<SidecarEntry> truth;          // one per object; noise has an empty label
  std::vector<std::string> class_labels;    // index -> label
  std::vector<std::size_t> class_sizes;     // index -> object count
  std::size_t noise_count = 0;
};

std::string class_label(std::size_t index);
SyntheticData generate_synthetic(const SyntheticSpec& spec);
// Writes features.mcft and truth.csv into dir.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

// Truth as object -> label, with unlabeled objects mapped to kNoiseLabel.
ClassAssignment truth_assignment(std::span<const SidecarEntry> truth);

enum class PageRule { all_match, majority };

struct OraclePolicy {
  double cluster_purity_threshold = 0.90;
  PageRule page_accept_rule = PageRule::all_match;
  double page_majority = 0.90;  // used by PageRule::majority
  bool turtle_enabled = false;

  void validate() const;
  nlohmann::json to_json() const;
  static OraclePolicy from_json(const nlohmann::json& j);
};

struct OracleIteration {
  std::size_t iteration = 0;
  std::size_t m = 0;
  std::size_t new_clusters = 0;
  std::size_t validated_clusters = 0;
  std::size_t rejected_clusters = 0;
  std::size_t sorted_objects = 0;  // seeds approved + objects grown
  std::size_t judgments = 0;
};

struct OracleReport {
  std::vector<OracleIteration> iterations;
  std::size_t cluster_judgments = 0;
  std::size_t page_judgments = 0;
  std::size_t removal_judgments = 0;
  std::size_t naming_judgments = 0;
  // Dominant label of each approved cluster and the iteration it was proposed in.
  std::map<ClusterId, std::pair<std::string, std::size_t>> discoveries;

  std::size_t total_judgments() const {
    return cluster_judgments + page_judgments + removal_judgments + naming_judgments;
  }
};

// Most frequent label among rows (ties: smallest label) and its share.
std::pair<std::string, double> dominant_label(const FeatureStore& store, std::span<const Row> rows,
                                              const ClassAssignment& truth);

// Plays the annotator: runs every scheduled iteration, validates seeds by
// purity, answers page probes, grows, builds the tree and names each leaf by
// its dominant label.
OracleReport oracle_annotate(Project& project, const ClassAssignment& truth,
                             const OraclePolicy& policy);

// Spearman correlation with average ranks for ties; NaN when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct RecoveryScore {
  std::string label;
  std::optional<ClusterId> cluster;
  double recall = 0.0;
  double precision = 0.0;
  std::size_t iteration = 0;
};

// Best single cluster for label by min(recall, precision).
RecoveryScore recovery(const Project& project, const ClassAssignment& truth, const std::string& label);

// Full report: per-iteration table, judgment counts, agreement with the truth,
// discovery order and holdout recovery.
nlohmann::json simulation_report(const Project& project, const OracleReport& oracle,
                                 const ClassAssignment& truth, const std::set<std::string>& holdout_labels);

}  // namespace annoclust::sim

#include "annoclust/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "annoclust/errors.hpp"

namespace annoclust::sim {

using nlohmann::json;

void SyntheticSpec::validate() const {
  if (class_count == 0) throw ValueError("class_count must be positive");
  if (object_count == 0) throw ValueError("object_count must be positive");
  if (dim == 0) throw ValueError("dim must be positive");
  if (!(cluster_sigma > 0.0)) throw ValueError("cluster_sigma must be positive");
  if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) throw ValueError("noise_fraction must be in [0,1)");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ValueError("holdout_fraction must be in [0,1)");
  if (!(separation >= 0.0)) throw ValueError("separation must be non-negative");
  if (!(zipf_exponent >= 0.0)) throw ValueError("zipf_exponent must be non-negative");
  for (std::size_t c : holdout_classes) {
    if (c >= class_count) throw ValueError("holdout class index out of range");
  }
  if (holdout_classes.size() == class_count) throw ValueError("at least one class must not be held out");
  const double reserved = noise_fraction + holdout_fraction * static_cast<double>(holdout_classes.size());
  if (reserved >= 1.0) throw ValueError("noise and holdout classes leave no room for the others");
}

json SyntheticSpec::to_json() const {
  return {{"object_count", object_count},   {"class_count", class_count},
          {"zipf_exponent", zipf_exponent}, {"dim", dim},
          {"cluster_sigma", cluster_sigma}, {"noise_fraction", noise_fraction},
          {"holdout_classes", holdout_classes}, {"holdout_fraction", holdout_fraction},
          {"separation", separation},       {"rng_seed", rng_seed}};
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  SyntheticSpec s;
  try {
    s.object_count = j.value("object_count", s.object_count);
    s.class_count = j.value("class_count", s.class_count);
    s.zipf_exponent = j.value("zipf_exponent", s.zipf_exponent);
    s.dim = j.value("dim", s.dim);
    s.cluster_sigma = j.value("cluster_sigma", s.cluster_sigma);
    s.noise_fraction = j.value("noise_fraction", s.noise_fraction);
    if (j.contains("holdout_classes")) s.holdout_classes = j["holdout_classes"].get<std::set<std::size_t>>();
    s.holdout_fraction = j.value("holdout_fraction", s.holdout_fraction);
    s.separation = j.value("separation", s.separation);
    s.rng_seed = j.value("rng_seed", s.rng_seed);
  } catch (const json::exception& e) {
    throw ValueError(std::string("invalid synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<std::size_t> zipf_sizes(std::size_t total, std::size_t classes, double exponent) {
  if (classes == 0) throw ValueError("class_count must be positive");
  std::vector<double> share(classes);
  for (std::size_t r = 0; r < classes; ++r) share[r] = 1.0 / std::pow(static_cast<double>(r + 1), exponent);
  const double sum = std::accumulate(share.begin(), share.end(), 0.0);
  std::vector<std::size_t> sizes(classes);
  std::size_t used = 0;
  for (std::size_t r = 1; r < classes; ++r) {
    sizes[r] = static_cast<std::size_t>(std::llround(static_cast<double>(total) * share[r] / sum));
    used += sizes[r];
  }
  if (used > total) throw ValueError("too few objects for the requested classes");
  sizes[0] = total - used;
  return sizes;
}

std::string class_label(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%02zu", index);
  return buf;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  const std::size_t n = spec.object_count;
  const auto noise = static_cast<std::size_t>(std::llround(spec.noise_fraction * static_cast<double>(n)));
  const auto holdout_size =
      static_cast<std::size_t>(std::llround(spec.holdout_fraction * static_cast<double>(n)));
  const std::size_t zipf_total = n - noise - holdout_size * spec.holdout_classes.size();
  const auto zipf = zipf_sizes(zipf_total, spec.class_count - spec.holdout_classes.size(), spec.zipf_exponent);

  SyntheticData data;
  data.noise_count = noise;
  for (std::size_t c = 0, rank = 0; c < spec.class_count; ++c) {
    data.class_labels.push_back(class_label(c));
    data.class_sizes.push_back(spec.holdout_classes.contains(c) ? holdout_size : zipf[rank++]);
  }

  // Centres uniform in a cube, resampled until far enough from earlier ones.
  const double half_width = std::max(spec.separation, 1.0) * spec.cluster_sigma;
  std::uniform_real_distribution<double> coord(-half_width, half_width);
  const double min_sq = std::pow(spec.separation * spec.cluster_sigma, 2);
  std::vector<std::vector<double>> centres;
  while (centres.size() < spec.class_count) {
    std::vector<double> c(spec.dim);
    for (auto& x : c) x = coord(rng);
    bool ok = true;
    for (const auto& other : centres) {
      double d = 0.0;
      for (std::size_t i = 0; i < spec.dim; ++i) d += (c[i] - other[i]) * (c[i] - other[i]);
      if (d < min_sq) ok = false;
    }
    if (ok) centres.push_back(std::move(c));
  }

  struct Pending {
    std::vector<float> features;
    std::optional<std::size_t> cls;
  };
  std::vector<Pending> objects;
  objects.reserve(n);
  std::normal_distribution<double> gauss(0.0, spec.cluster_sigma);
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    for (std::size_t i = 0; i < data.class_sizes[c]; ++i) {
      Pending p{std::vector<float>(spec.dim), c};
      for (std::size_t d = 0; d < spec.dim; ++d) p.features[d] = static_cast<float>(centres[c][d] + gauss(rng));
      objects.push_back(std::move(p));
    }
  }
  const double box = half_width + 3.0 * spec.cluster_sigma;
  std::uniform_real_distribution<double> background(-box, box);
  for (std::size_t i = 0; i < noise; ++i) {
    Pending p{std::vector<float>(spec.dim), std::nullopt};
    for (auto& x : p.features) x = static_cast<float>(background(rng));
    objects.push_back(std::move(p));
  }
  std::shuffle(objects.begin(), objects.end(), rng);

  data.store = FeatureStore(spec.dim);
  data.truth.reserve(n);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "obj%07zu", i);
    data.store.add(id, objects[i].features);
    SidecarEntry e{id, DatasetRole::unlabeled, ""};
    if (objects[i].cls) {
      e.label = data.class_labels[*objects[i].cls];
      if (spec.holdout_classes.contains(*objects[i].cls)) e.role = DatasetRole::indicator;
    }
    data.truth.push_back(std::move(e));
  }
  return data;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_features(data.store, dir / "features.mcft");
  save_sidecar(data.truth, dir / "truth.csv");
}

ClassAssignment truth_assignment(std::span<const SidecarEntry> truth) {
  ClassAssignment out;
  for (const auto& e : truth) out.emplace(e.object_id, e.label.empty() ? kNoiseLabel : e.label);
  return out;
}

void OraclePolicy::validate() const {
  if (!(cluster_purity_threshold >= 0.0 && cluster_purity_threshold <= 1.0)) {
    throw ValueError("cluster_purity_threshold must be in [0,1]");
  }
  if (!(page_majority >= 0.0 && page_majority <= 1.0)) throw ValueError("page_majority must be in [0,1]");
}

json OraclePolicy::to_json() const {
  return {{"cluster_purity_threshold", cluster_purity_threshold},
          {"page_accept_rule", page_accept_rule == PageRule::all_match ? "all_match" : "majority"},
          {"page_majority", page_majority},
          {"turtle_enabled", turtle_enabled}};
}

OraclePolicy OraclePolicy::from_json(const json& j) {
  OraclePolicy p;
  try {
    p.cluster_purity_threshold = j.value("cluster_purity_threshold", p.cluster_purity_threshold);
    const std::string rule = j.value("page_accept_rule", std::string("all_match"));
    if (rule == "all_match") {
      p.page_accept_rule = PageRule::all_match;
    } else if (rule == "majority") {
      p.page_accept_rule = PageRule::majority;
    } else {
      throw ValueError("page_accept_rule must be all_match or majority");
    }
    p.page_majority = j.value("page_majority", p.page_majority);
    p.turtle_enabled = j.value("turtle_enabled", p.turtle_enabled);
  } catch (const json::exception& e) {
    throw ValueError(std::string("invalid oracle policy: ") + e.what());
  }
  p.validate();
  return p;
}

namespace {

const std::string& label_of(const FeatureStore& store, Row r, const ClassAssignment& truth) {
  static const std::string noise = kNoiseLabel;
  auto it = truth.find(store.object_id(r));
  return it == truth.end() ? noise : it->second;
}

bool page_accepted(const FeatureStore& store, std::span<const Row> page, const std::string& label,
                   const ClassAssignment& truth, const OraclePolicy& policy) {
  std::size_t hits = 0;
  for (Row r : page) hits += label_of(store, r, truth) == label;
  if (policy.page_accept_rule == PageRule::all_match) return hits == page.size();
  return static_cast<double>(hits) >= policy.page_majority * static_cast<double>(page.size());
}

// Removes every off-label object from the current page; false when nothing on
// it carries the label.
bool weed_page(Project& project, SessionId sid, std::span<const Row> page, const std::string& label,
               const ClassAssignment& truth, OracleReport& report, std::size_t& judgments) {
  const auto& store = project.store();
  std::size_t hits = 0;
  for (Row r : page) hits += label_of(store, r, truth) == label;
  if (hits == 0) return false;
  for (Row r : page) {
    if (label_of(store, r, truth) == label) continue;
    project.remove_candidate(sid, store.object_id(r), "oracle");
    ++report.removal_judgments;
    ++judgments;
  }
  return true;
}

void grow(Project& project, ClusterId id, const std::string& label, const ClassAssignment& truth,
          const OraclePolicy& policy, OracleReport& report, OracleIteration& row) {
  const auto& store = project.store();
  const SessionId sid = project.open_grow_session(id, "oracle");
  auto judge = [&](std::size_t page, PageVerdict v) {
    project.record_page_verdict(sid, page, v, "oracle");
    ++report.page_judgments;
    ++row.judgments;
  };
  while (auto probe = project.next_probe(sid)) {
    const auto rows = project.session_page(sid, *probe);
    if (page_accepted(store, rows, label, truth, policy)) {
      judge(*probe, PageVerdict::match);
      continue;
    }
    if (policy.turtle_enabled && weed_page(project, sid, rows, label, truth, report, row.judgments)) {
      judge(*probe, PageVerdict::match);
      break;
    }
    judge(*probe, PageVerdict::no_match);
  }
  if (project.session(sid).mode() == GrowMode::turtle) {
    while (auto page = project.session(sid).current_page()) {
      const auto rows = project.session_page(sid, *page);
      if (weed_page(project, sid, rows, label, truth, report, row.judgments)) {
        judge(*page, PageVerdict::match);
      } else {
        judge(*page, PageVerdict::no_match);
      }
    }
  }
  row.sorted_objects += project.commit_grow(sid, "oracle").added.size();
}

}  // namespace

std::pair<std::string, double> dominant_label(const FeatureStore& store, std::span<const Row> rows,
                                              const ClassAssignment& truth) {
  if (rows.empty()) throw ValueError("dominant label of an empty set");
  std::map<std::string, std::size_t> counts;
  for (Row r : rows) ++counts[label_of(store, r, truth)];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return {best->first, static_cast<double>(best->second) / static_cast<double>(rows.size())};
}

OracleReport oracle_annotate(Project& project, const ClassAssignment& truth, const OraclePolicy& policy) {
  policy.validate();
  const auto& store = project.store();
  OracleReport report;
  std::map<ClusterId, std::string> cluster_label;
  for (;;) {
    IterationOutcome outcome;
    try {
      outcome = project.start_iteration("oracle");
    } catch (const ScheduleDone&) {
      break;
    }
    OracleIteration row;
    row.iteration = outcome.iteration;
    row.m = outcome.m;
    row.new_clusters = outcome.proposed.size();
    for (ClusterId id : outcome.proposed) {
      const auto c = project.cluster(id);
      const auto [label, purity] = dominant_label(store, c.seed_members, truth);
      // Background objects never form a class, however pure the seed.
      const bool approve = label != kNoiseLabel && purity >= policy.cluster_purity_threshold;
      project.validate(id, approve ? ValidationVerdict::approve : ValidationVerdict::reject, "oracle");
      ++report.cluster_judgments;
      ++row.judgments;
      if (approve) {
        ++row.validated_clusters;
        row.sorted_objects += c.seed_members.size();
        cluster_label[id] = label;
        report.discoveries[id] = {label, outcome.iteration};
      } else {
        ++row.rejected_clusters;
      }
    }
    for (ClusterId id : project.growth_queue()) grow(project, id, cluster_label.at(id), truth, policy, report, row);
    report.iterations.push_back(row);
  }

  if (project.clusters(ClusterStatus::grown).empty()) return report;
  const auto tree = project.build_tree("oracle");
  for (const auto& [node_id, node] : tree.nodes()) {
    if (!node.children.empty() || node.cluster_refs.empty()) continue;
    std::vector<Row> rows;
    for (ClusterId c : node.cluster_refs) {
      const auto cluster = project.cluster(c);
      rows.insert(rows.end(), cluster.seed_members.begin(), cluster.seed_members.end());
      rows.insert(rows.end(), cluster.grown_members.begin(), cluster.grown_members.end());
    }
    const auto label = dominant_label(store, rows, truth).first;
    if (label == kNoiseLabel) continue;
    project.rename_node(node_id, label, "oracle");
    ++report.naming_judgments;
  }
  return report;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValueError("spearman inputs differ in length");
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mean = (static_cast<double>(x.size()) + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

RecoveryScore recovery(const Project& project, const ClassAssignment& truth, const std::string& label) {
  const auto& store = project.store();
  std::size_t class_size = 0;
  for (const auto& [object, l] : truth) class_size += l == label;
  RecoveryScore best{label, std::nullopt, 0.0, 0.0, 0};
  if (class_size == 0) return best;
  for (const auto& c : project.clusters()) {
    if (c.status != ClusterStatus::grown) continue;
    std::size_t hits = 0;
    for (Row r : c.seed_members) hits += label_of(store, r, truth) == label;
    for (Row r : c.grown_members) hits += label_of(store, r, truth) == label;
    if (hits == 0) continue;
    RecoveryScore s{label, c.cluster_id, static_cast<double>(hits) / static_cast<double>(class_size),
                    static_cast<double>(hits) / static_cast<double>(c.size()), c.created_iteration};
    if (!best.cluster || std::min(s.recall, s.precision) > std::min(best.recall, best.precision)) best = s;
  }
  return best;
}

json simulation_report(const Project& project, const OracleReport& oracle, const ClassAssignment& truth,
                       const std::set<std::string>& holdout_labels) {
  const std::size_t n = project.store().count();
  json out;
  out["objects"] = n;

  json iterations = json::array();
  for (const auto& row : oracle.iterations) {
    iterations.push_back({{"iteration", row.iteration},
                          {"m", row.m},
                          {"new_clusters", row.new_clusters},
                          {"validated_clusters", row.validated_clusters},
                          {"rejected_clusters", row.rejected_clusters},
                          {"sorted_objects", row.sorted_objects},
                          {"judgments", row.judgments},
                          {"objects_per_judgment",
                           row.judgments ? json(static_cast<double>(row.sorted_objects) / row.judgments)
                                         : json(nullptr)}});
  }
  out["iterations"] = std::move(iterations);
  out["judgments"] = {{"cluster", oracle.cluster_judgments},
                      {"page", oracle.page_judgments},
                      {"removal", oracle.removal_judgments},
                      {"naming", oracle.naming_judgments},
                      {"total", oracle.total_judgments()},
                      {"fraction_of_objects", static_cast<double>(oracle.total_judgments()) / static_cast<double>(n)}};

  const auto labeling = project.labeling();
  out["assigned_objects"] = labeling.assignments.size();
  out["assigned_fraction"] = static_cast<double>(labeling.assignments.size()) / static_cast<double>(n);
  if (!labeling.assignments.empty()) {
    const auto agreement = predominant_label_agreement(labeling.assignments, truth);
    out["macro_precision"] = agreement.macro_precision;
    out["precision_q10"] = agreement.precision_q10;
    out["agreement"] = to_json(agreement);
  } else {
    out["macro_precision"] = nullptr;
    out["precision_q10"] = nullptr;
  }

  // Discovery iteration per class; undiscovered classes rank after the schedule.
  std::map<std::string, std::size_t> sizes;
  for (const auto& [object, label] : truth) {
    if (label != kNoiseLabel) ++sizes[label];
  }
  std::map<std::string, std::size_t> first_seen;
  for (const auto& [id, d] : oracle.discoveries) {
    auto [it, inserted] = first_seen.emplace(d.first, d.second);
    if (!inserted) it->second = std::min(it->second, d.second);
  }
  const std::size_t never = oracle.iterations.size() + 1;
  std::vector<double> xs, ys;
  json classes = json::array();
  for (const auto& [label, size] : sizes) {
    auto it = first_seen.find(label);
    classes.push_back({{"label", label},
                       {"size", size},
                       {"holdout", holdout_labels.contains(label)},
                       {"discovery_iteration", it == first_seen.end() ? json(nullptr) : json(it->second)}});
    xs.push_back(static_cast<double>(size));
    ys.push_back(static_cast<double>(it == first_seen.end() ? never : it->second));
  }
  out["classes"] = std::move(classes);
  const double rho = spearman(xs, ys);
  out["size_discovery_spearman"] = std::isnan(rho) ? json(nullptr) : json(rho);

  json holdout = json::array();
  for (const auto& label : holdout_labels) {
    const auto r = recovery(project, truth, label);
    holdout.push_back({{"label", label},
                       {"cluster", r.cluster ? json(*r.cluster) : json(nullptr)},
                       {"recall", r.recall},
                       {"precision", r.precision},
                       {"iteration", r.iteration}});
  }
  out["holdout"] = std::move(holdout);
  return out;
}

}  // namespace annoclust::sim

// Command-line driver: project setup, iterations, the simulator and the HTTP server.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "annoclust/errors.hpp"
#include "annoclust/http_api.hpp"
#include "annoclust/project.hpp"
#include "annoclust/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace annoclust;

namespace {

std::vector<std::size_t> parse_schedule(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValueError("bad schedule entry '" + item + "'");
    }
  }
  if (out.empty()) throw ValueError("empty schedule");
  return out;
}

// A JSON document given inline or as a path to a file.
json read_json_arg(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && arg[first] == '{') return json::parse(arg);
  std::ifstream in(arg);
  if (!in) throw ValueError("cannot read " + arg);
  return json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

HttpApi* running_server = nullptr;

void stop_server(int) {
  if (running_server) running_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-driven annotation engine"};
  app.require_subcommand(1);

  std::string features, labels, schedule_text, out_dir, project_dir, policy_arg = "default", spec_arg,
      against, addr = "127.0.0.1:8080", project_id = "default";
  std::size_t k = 1;
  std::optional<std::uint64_t> seed;

  auto* ingest = app.add_subcommand("ingest", "Create a project from a feature file");
  ingest->add_option("--features", features, "MCFT feature file")->required();
  ingest->add_option("--labels", labels, "labels sidecar CSV");
  ingest->add_option("--schedule", schedule_text, "comma-separated m values")->default_str("128,64,32,16,8,4");
  ingest->add_option("--k", k, "core-distance neighbour rank")->default_val(1);
  ingest->add_option("--id", project_id, "project id");
  ingest->add_option("--out", out_dir, "project directory")->required();

  auto* iterate = app.add_subcommand("iterate", "Run the next clustering iteration");
  iterate->add_option("--project", project_dir, "project directory")->required();

  auto* simulate = app.add_subcommand("simulate", "Generate synthetic data and annotate it with the oracle");
  simulate->add_option("--spec", spec_arg, "synthetic spec JSON (file or inline)")->required();
  simulate->add_option("--policy", policy_arg, "oracle policy JSON (file, inline or 'default')");
  simulate->add_option("--schedule", schedule_text, "comma-separated m values");
  simulate->add_option("--k", k, "core-distance neighbour rank")->default_val(1);
  simulate->add_option("--seed", seed, "overrides the spec's rng_seed");
  simulate->add_option("--out", out_dir, "output directory")->required();

  auto* tree = app.add_subcommand("tree", "Build the naming tree over grown clusters");
  tree->add_option("--project", project_dir, "project directory")->required();

  auto* exporter = app.add_subcommand("export", "Write the labeling CSV");
  exporter->add_option("--project", project_dir, "project directory")->required();
  exporter->add_option("--out", out_dir, "output file (default: stdout)");

  auto* metrics = app.add_subcommand("metrics", "Print project metrics as JSON");
  metrics->add_option("--project", project_dir, "project directory")->required();
  metrics->add_option("--against", against, "truth labels sidecar to score the labeling against");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API for every project under a directory");
  serve->add_option("--out", out_dir, "workspace directory")->required();
  serve->add_option("--addr", addr, "host:port")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      ProjectConfig config;
      config.project_id = project_id;
      config.feature_file = features;
      if (!labels.empty()) config.labels_file = labels;
      if (!schedule_text.empty()) config.schedule = parse_schedule(schedule_text);
      config.k = k;
      auto p = Project::create(out_dir, config);
      std::cout << json{{"project", out_dir}, {"objects", p->store().count()},
                        {"dimensionality", p->store().dimensionality()}}
                       .dump(2)
                << '\n';
    } else if (*iterate) {
      auto p = Project::open(project_dir);
      try {
        const auto outcome = p->start_iteration("cli");
        std::cout << json{{"done", false}, {"iteration", outcome.iteration}, {"m", outcome.m},
                          {"proposed", outcome.proposed}, {"noise", outcome.noise}}
                         .dump(2)
                  << '\n';
      } catch (const ScheduleDone&) {
        std::cout << json{{"done", true}}.dump(2) << '\n';
      }
    } else if (*simulate) {
      auto spec = sim::SyntheticSpec::from_json(read_json_arg(spec_arg));
      if (seed) spec.rng_seed = *seed;
      const auto policy =
          policy_arg == "default" ? sim::OraclePolicy{} : sim::OraclePolicy::from_json(read_json_arg(policy_arg));
      const fs::path out = out_dir;
      const auto data = sim::generate_synthetic(spec);
      sim::write_synthetic(data, out / "data");

      ProjectConfig config;
      config.project_id = "simulation";
      config.feature_file = out / "data" / "features.mcft";
      if (!schedule_text.empty()) config.schedule = parse_schedule(schedule_text);
      config.k = k;
      if (fs::exists(out / "project")) fs::remove_all(out / "project");
      auto project = Project::create(out / "project", config);

      const auto truth = sim::truth_assignment(data.truth);
      const auto oracle = sim::oracle_annotate(*project, truth, policy);
      std::set<std::string> holdout;
      for (std::size_t c : spec.holdout_classes) holdout.insert(data.class_labels[c]);
      auto report = sim::simulation_report(*project, oracle, truth, holdout);
      report["spec"] = spec.to_json();
      report["policy"] = policy.to_json();
      report["schedule"] = project->config().schedule;
      write_text(out / "labeling.csv", project->labeling_csv());
      write_text(out / "report.json", report.dump(2) + "\n");
      std::cout << report.dump(2) << '\n';
    } else if (*tree) {
      auto p = Project::open(project_dir);
      std::cout << tree_json(p->config().project_id, p->build_tree("cli")).dump(2) << '\n';
    } else if (*exporter) {
      auto p = Project::open(project_dir);
      if (out_dir.empty()) {
        std::cout << p->labeling_csv();
      } else {
        write_text(out_dir, p->labeling_csv());
      }
    } else if (*metrics) {
      auto p = Project::open(project_dir);
      auto report = p->metrics();
      if (!against.empty()) {
        const auto truth = sim::truth_assignment(load_sidecar(against));
        const auto labeling = p->labeling();
        report["against"] = against;
        report["agreement_against"] = to_json(predominant_label_agreement(labeling.assignments, truth));
      }
      std::cout << report.dump(2) << '\n';
    } else if (*serve) {
      const auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw ValueError("--addr must be host:port");
      const std::string host = addr.substr(0, colon);
      const int port = std::stoi(addr.substr(colon + 1));
      Workspace workspace(out_dir);
      HttpApi api(workspace);
      const int bound = api.bind(host, port);
      if (bound < 0) throw Error("cannot bind " + addr);
      running_server = &api;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << "listening on " << host << ':' << bound << '\n';
      api.listen_after_bind();
      running_server = nullptr;
    }
  } catch (const ScheduleDone& e) {
    std::cerr << "done: " << e.what() << '\n';
    return 0;
  } catch (const NotFoundError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

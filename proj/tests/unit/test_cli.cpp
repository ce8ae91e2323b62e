#include <doctest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "annoclust/feature_store.hpp"
#include "helpers.hpp"

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(ANNOCLUST_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::vector<std::string>> rows_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    rows.push_back(fields);
  }
  return rows;
}

const char* kSpec = R"('{"object_count":4000,"class_count":5,"zipf_exponent":1.0,"dim":8,"noise_fraction":0.02,"rng_seed":4}')";

}  // namespace

TEST_CASE("simulate, export and score against the truth") {
  testing::TempDir dir;
  const auto sim = run(std::string("simulate --spec ") + kSpec + " --policy default --schedule 64,16 --out " +
                       (dir / "sim").string());
  REQUIRE(sim.code == 0);
  const auto report = nlohmann::json::parse(sim.out);
  CHECK(report.contains("macro_precision"));
  CHECK(report["objects"] == 4000);
  CHECK(std::filesystem::exists(dir / "sim" / "data" / "features.mcft"));
  CHECK(std::filesystem::exists(dir / "sim" / "labeling.csv"));

  const auto exported = run("export --project " + (dir / "sim" / "project").string());
  CHECK(exported.code == 0);
  std::ifstream labeling(dir / "sim" / "labeling.csv");
  std::stringstream expected;
  expected << labeling.rdbuf();
  CHECK(exported.out == expected.str());

  const auto truth_path = dir / "sim" / "data" / "truth.csv";
  const auto scored = run("metrics --project " + (dir / "sim" / "project").string() + " --against " +
                          truth_path.string());
  REQUIRE(scored.code == 0);
  const auto metrics = nlohmann::json::parse(scored.out);

  std::map<std::string, std::string> truth;
  for (const auto& r : rows_of(truth_path)) truth[r[0]] = r[2].empty() ? "noise" : r[2];
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& r : rows_of(dir / "sim" / "labeling.csv")) {
    if (r.size() > 1 && !r[1].empty()) ++counts[r[1]][truth.at(r[0])];
  }
  REQUIRE_FALSE(counts.empty());
  double sum = 0.0;
  for (const auto& [cls, by] : counts) {
    std::size_t best = 0, total = 0;
    for (const auto& [label, n] : by) {
      best = std::max(best, n);
      total += n;
    }
    sum += double(best) / double(total);
  }
  CHECK(metrics["agreement_against"]["macro_precision"].get<double>() ==
        doctest::Approx(sum / double(counts.size())).epsilon(1e-12));
}

TEST_CASE("ingest, iterate and export an empty project") {
  testing::TempDir dir;
  annoclust::save_features(annoclust::FeatureStore(32), dir / "empty.mcft");
  const auto ingest = run("ingest --features " + (dir / "empty.mcft").string() + " --out " + (dir / "p").string());
  REQUIRE(ingest.code == 0);
  CHECK(nlohmann::json::parse(ingest.out)["objects"] == 0);
  const auto exported = run("export --project " + (dir / "p").string());
  CHECK(exported.code == 0);
  CHECK(exported.out == "object_id,label_path\n");
  CHECK(run("metrics --project " + (dir / "p").string()).code == 0);
}

TEST_CASE("usage errors exit non-zero") {
  testing::TempDir dir;
  CHECK(run("").code != 0);
  CHECK(run("export --project " + (dir / "missing").string()).code == 3);
  CHECK(run("ingest --features " + (dir / "none.mcft").string() + " --out " + (dir / "p").string()).code != 0);
  CHECK(run(std::string("simulate --spec '{\"class_count\":0}' --out ") + (dir / "s").string()).code == 2);
}

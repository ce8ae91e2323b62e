#include <doctest.h>
#include <httplib.h>

#include <chrono>
#include <thread>

#include "annoclust/errors.hpp"
#include "annoclust/http_api.hpp"
#include "annoclust/sim.hpp"
#include "helpers.hpp"

using namespace annoclust;
using json = nlohmann::json;

namespace {

struct Server {
  testing::TempDir dir;
  std::unique_ptr<Workspace> workspace;
  std::unique_ptr<HttpApi> api;
  std::thread thread;
  int port = -1;

  Server() {
    sim::SyntheticSpec spec;
    spec.object_count = 1200;
    spec.class_count = 3;
    spec.zipf_exponent = 0.3;
    spec.dim = 8;
    sim::write_synthetic(sim::generate_synthetic(spec), dir / "data");
    std::filesystem::create_directories(dir / "ws");
    workspace = std::make_unique<Workspace>(dir / "ws");
    api = std::make_unique<HttpApi>(*workspace);
    port = api->bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    thread = std::thread([this] { api->listen_after_bind(); });
    api->wait_until_ready();
  }
  ~Server() {
    api->stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }
  std::string data(const std::string& name) const { return (dir / "data" / name).string(); }
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

httplib::Result post(httplib::Client& c, const std::string& path, const json& body = json::object()) {
  return c.Post(path, body.dump(), "application/json");
}

}  // namespace

TEST_CASE("qualified ids") {
  const auto q = parse_qualified_id("proj:42");
  CHECK(q.project == "proj");
  CHECK(q.id == 42);
  CHECK(parse_qualified_id("7").project == "default");
  CHECK(qualified_id("a", 3) == "a:3");
  CHECK_THROWS_AS(parse_qualified_id("proj:x"), NotFoundError);
  CHECK_THROWS_AS(parse_qualified_id(""), NotFoundError);
}

TEST_CASE("full annotation round over HTTP") {
  Server server;
  auto c = server.client();

  auto r = post(c, "/projects",
                {{"project_id", "demo"}, {"feature_file", server.data("features.mcft")}, {"schedule", {64, 16}}});
  REQUIRE(r);
  CHECK(r->status == 201);
  CHECK(body_of(r)["objects"] == 1200);
  CHECK(post(c, "/projects", {{"project_id", "demo"}, {"feature_file", server.data("features.mcft")}})->status ==
        409);
  CHECK(post(c, "/projects", {{"project_id", "bad id!"}, {"feature_file", server.data("features.mcft")}})->status ==
        400);
  CHECK(c.Post("/projects", "{not json", "application/json")->status == 400);
  CHECK(body_of(c.Get("/projects"))["projects"] == json::array({"demo"}));
  CHECK(c.Get("/projects/nope")->status == 404);

  r = post(c, "/projects/demo/iterations?wait=true");
  REQUIRE(r->status == 200);
  const auto proposed = body_of(r)["proposed"];
  REQUIRE(proposed.size() >= 2);
  const std::string first = proposed[0], second = proposed[1];
  CHECK(first.rfind("demo:", 0) == 0);

  CHECK(body_of(c.Get("/projects/demo/clusters?status=proposed"))["clusters"].size() == proposed.size());
  CHECK(c.Get("/projects/demo/clusters?status=bogus")->status == 400);

  const auto members = body_of(c.Get("/clusters/" + first + "/members?order=dissimilar"))["members"];
  CHECK(members.size() == body_of(c.Get("/clusters/" + first))["size"]);

  r = post(c, "/clusters/" + first + "/approve");
  CHECK(r->status == 200);
  CHECK(body_of(r)["status"] == "validated");
  CHECK(post(c, "/clusters/" + first + "/approve")->status == 409);
  CHECK(post(c, "/clusters/demo:999/approve")->status == 404);
  for (std::size_t i = 1; i < proposed.size(); ++i) {
    CHECK(post(c, "/clusters/" + proposed[i].get<std::string>() + "/approve-flag")->status == 200);
  }
  CHECK(body_of(c.Get("/projects/demo/clusters"))["growth_queue"][0] == second);

  r = post(c, "/clusters/" + first + "/grow-sessions");
  CHECK(r->status == 201);
  const std::string session = body_of(r)["id"];
  const std::size_t pages = body_of(r)["page_count"];
  CHECK(c.Get("/grow-sessions/" + session + "/pages/" + std::to_string(pages))->status == 404);
  CHECK(post(c, "/grow-sessions/" + session + "/pages/" + std::to_string(pages) + "/verdict",
             {{"verdict", "match"}})
            ->status == 404);
  CHECK(post(c, "/grow-sessions/" + session + "/commit")->status == 409);
  CHECK(post(c, "/grow-sessions/" + session + "/pages/0/verdict", {{"verdict", "maybe"}})->status == 400);

  std::size_t judged = 0;
  while (true) {
    const auto probe = body_of(c.Get("/grow-sessions/" + session + "/next-probe"));
    if (probe["done"]) break;
    const std::size_t page = probe["page"];
    CHECK(body_of(c.Get("/grow-sessions/" + session + "/pages/" + std::to_string(page)))["objects"].size() > 0);
    r = post(c, "/grow-sessions/" + session + "/pages/" + std::to_string(page) + "/verdict",
             {{"verdict", page == 0 ? "match" : "no_match"}});
    REQUIRE(r->status == 200);
    ++judged;
  }
  CHECK(judged >= 1);
  CHECK(post(c, "/grow-sessions/" + session + "/pages/0/verdict", {{"verdict", "match"}})->status == 409);

  r = post(c, "/grow-sessions/" + session + "/commit");
  REQUIRE(r->status == 200);
  const auto added = body_of(r)["added"];
  CHECK_FALSE(added.empty());
  CHECK(added.size() <= 50);
  CHECK(body_of(post(c, "/grow-sessions/" + session + "/commit"))["added"] == added);

  // second cluster: remove one object, which switches to turtle review
  r = post(c, "/clusters/" + second + "/grow-sessions");
  const std::string s2 = body_of(r)["id"];
  const auto probe = body_of(c.Get("/grow-sessions/" + s2 + "/next-probe"));
  if (!probe["done"]) {
    const auto page = body_of(c.Get("/grow-sessions/" + s2 + "/pages/" + probe["page"].dump()));
    const std::string victim = page["objects"][0];
    CHECK(post(c, "/grow-sessions/" + s2 + "/remove/" + victim)->status == 200);
    CHECK(body_of(c.Get("/grow-sessions/" + s2))["mode"] == "turtle");
    CHECK(c.Get("/grow-sessions/" + s2 + "/next-probe")->status == 409);
    CHECK(post(c, "/grow-sessions/" + s2 + "/remove/nobody")->status >= 400);
  }
  CHECK(post(c, "/grow-sessions/" + s2 + "/commit")->status == 200);

  const auto queue = body_of(c.Get("/projects/demo/clusters"))["growth_queue"];
  for (const auto& id : queue) {
    const std::string s = body_of(post(c, "/clusters/" + id.get<std::string>() + "/grow-sessions"))["id"];
    while (!body_of(c.Get("/grow-sessions/" + s + "/next-probe"))["done"]) {
      const auto p = body_of(c.Get("/grow-sessions/" + s + "/next-probe"))["page"].dump();
      post(c, "/grow-sessions/" + s + "/pages/" + p + "/verdict", {{"verdict", "no_match"}});
    }
    CHECK(post(c, "/grow-sessions/" + s + "/commit")->status == 200);
  }

  CHECK(c.Get("/projects/demo/tree")->status == 404);
  r = post(c, "/projects/demo/tree");
  REQUIRE(r->status == 201);
  const auto tree = body_of(r);
  const std::string root = tree["root"];
  CHECK(post(c, "/nodes/" + root + "/name", {{"name", "everything"}})->status == 200);
  CHECK(post(c, "/nodes/" + root + "/name", {{"name", "a/b"}})->status == 400);
  CHECK(post(c, "/nodes/" + root + "/merge-into/demo:0")->status == 400);
  CHECK(body_of(c.Get("/projects/demo/tree"))["nodes"].size() == tree["nodes"].size());

  r = c.Get("/projects/demo/labeling");
  REQUIRE(r->status == 200);
  CHECK(r->get_header_value("Content-Type").rfind("text/csv", 0) == 0);
  CHECK(r->body.rfind("object_id,label_path\n", 0) == 0);
  CHECK(r->body.find(",everything") != std::string::npos);

  const auto metrics = body_of(c.Get("/projects/demo/metrics"));
  CHECK(metrics.contains("objects_per_hour"));

  r = post(c, "/projects/demo/iterations?wait=true");
  REQUIRE(r->status == 200);
  for (const auto& id : body_of(r)["proposed"]) post(c, "/clusters/" + id.get<std::string>() + "/reject");
  r = post(c, "/projects/demo/iterations?wait=true");
  CHECK(r->status == 200);
  CHECK(body_of(r)["done"] == true);
}

TEST_CASE("asynchronous iterations report through the project status") {
  Server server;
  auto c = server.client();
  post(c, "/projects", {{"project_id", "default"}, {"feature_file", server.data("features.mcft")}, {"schedule", {32}}});
  auto r = post(c, "/projects/default/iterations");
  CHECK(r->status == 202);
  std::string job = "running";
  for (int i = 0; i < 600 && job == "running"; ++i) {
    job = body_of(c.Get("/projects/default"))["job"];
    if (job == "running") std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  CHECK(job == "idle");
  CHECK(body_of(c.Get("/projects/default"))["iterations_completed"] == 1);
  const auto clusters = body_of(c.Get("/projects/default/clusters"))["clusters"];
  REQUIRE_FALSE(clusters.empty());
  const std::string bare = std::to_string(clusters[0]["cluster_id"].get<std::uint64_t>());
  CHECK(body_of(c.Get("/clusters/" + bare))["id"] == "default:" + bare);
}

TEST_CASE("a workspace reopens the projects on disk") {
  testing::TempDir dir;
  sim::SyntheticSpec spec;
  spec.object_count = 300;
  spec.class_count = 2;
  spec.dim = 4;
  sim::write_synthetic(sim::generate_synthetic(spec), dir / "data");
  {
    Workspace ws(dir / "ws");
    ProjectConfig config;
    config.project_id = "keep";
    config.feature_file = dir / "data" / "features.mcft";
    config.schedule = {16};
    ws.create(config).start_iteration();
    CHECK_THROWS_AS(ws.create(config), StateError);
  }
  Workspace again(dir / "ws");
  CHECK(again.project_ids() == std::vector<std::string>{"keep"});
  CHECK(again.get("keep").completed_iterations() == 1);
  CHECK_THROWS_AS(again.get("other"), NotFoundError);
}

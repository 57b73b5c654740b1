#include <doctest.h>

#include <httplib.h>

#include <fstream>
#include <thread>

#include "coldstart/error.hpp"
#include "coldstart/service.hpp"
#include "synthetic.hpp"

using namespace coldstart;
using nlohmann::json;

namespace {

struct Fixture {
  std::shared_ptr<const ModelBundle> bundle;
  std::vector<MovieInfo> catalog;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const auto w = coldstart::testing::small_world();
    Fixture out;
    out.bundle = std::make_shared<const ModelBundle>(
        create_bundle(coldstart::testing::quick_train_config(ModelKind::q_rating), w.dataset, w.factors));
    for (int m = 0; m < w.dataset.movie_count(); ++m) out.catalog.push_back(w.dataset.movie(m));
    return out;
  }();
  return f;
}

struct FakeClock {
  double t = 1000.0;
  std::function<double()> fn() {
    return [this] { return t; };
  }
};

InterviewService make_service(FakeClock* clock = nullptr, std::optional<std::filesystem::path> journal = {}) {
  ServiceOptions o;
  o.session_ttl_seconds = 60;
  o.id_seed = 1;
  if (clock) o.clock = clock->fn();
  o.journal = std::move(journal);
  return InterviewService(fixture().bundle, fixture().catalog, o);
}

std::string finish(InterviewService& s, int k, int rating) {
  const auto created = s.create_session({{"k", k}});
  REQUIRE(created.status == 200);
  const std::string id = created.body["session_id"];
  for (int i = 0; i < k; ++i) REQUIRE(s.answer(id, {{"rating", rating}}).status == 200);
  return id;
}

}  // namespace

TEST_CASE("new sessions start with the same first question and k defaults to 3") {
  auto s = make_service();
  const auto a = s.create_session(json::object());
  const auto b = s.create_session(json());
  REQUIRE(a.status == 200);
  REQUIRE(b.status == 200);
  CHECK(a.body["question"]["movie_id"] == b.body["question"]["movie_id"]);
  CHECK(a.body["session_id"] != b.body["session_id"]);
  CHECK(a.body["session_id"].get<std::string>().size() == 32);
  CHECK(a.body["progress"] == json{{"asked", 0}, {"total", 3}});
  CHECK(a.body["question"].contains("title"));
  CHECK(a.body["question"]["genres"].is_array());
}

TEST_CASE("k and rating are validated") {
  auto s = make_service();
  CHECK(s.create_session({{"k", 0}}).status == 400);
  CHECK(s.create_session({{"k", 101}}).status == 400);
  CHECK(s.create_session({{"k", "3"}}).status == 400);
  CHECK(s.create_session({{"k", 100}}).status == 200);
  const std::string id = s.create_session({{"k", 2}}).body["session_id"];
  CHECK(s.answer(id, {{"rating", 6}}).status == 400);
  CHECK(s.answer(id, {{"rating", -1}}).status == 400);
  CHECK(s.answer(id, {{"rating", 2.5}}).status == 400);
  CHECK(s.answer(id, json::object()).status == 400);
  CHECK(s.answer("nope", {{"rating", 3}}).status == 404);
}

TEST_CASE("a full interview ends with recommendations") {
  auto s = make_service();
  const std::string id = s.create_session({{"k", 2}}).body["session_id"];
  const auto first = s.answer(id, {{"rating", 4}});
  CHECK(first.body["finished"] == false);
  CHECK(first.body["progress"]["asked"] == 1);
  CHECK(s.recommendations(id, 10).status == 409);
  const auto last = s.answer(id, {{"rating", 0}});
  CHECK(last.body["finished"] == true);
  CHECK(last.body["recommendations"].size() == 10);
  CHECK(s.answer(id, {{"rating", 3}}).status == 409);

  const auto snap = s.snapshot(id);
  REQUIRE(snap);
  const int unseen_slot = snap->asked[1].slot;
  CHECK(snap->state.values()[2 * static_cast<std::size_t>(unseen_slot)] == 1.0);
  CHECK(snap->state.values()[2 * static_cast<std::size_t>(unseen_slot) + 1] == 0.0);
  CHECK(snap->state.encoded_answer(snap->asked[0].slot) == doctest::Approx(0.8));
}

TEST_CASE("recommendations are sorted, on scale, and skip rated movies") {
  auto s = make_service();
  const std::string id = finish(s, 3, 5);
  CHECK(s.recommendations(id, 0).status == 400);
  const auto r = s.recommendations(id, 10);
  REQUIRE(r.status == 200);
  const json& items = r.body["recommendations"];
  REQUIRE(items.size() == 10);
  const auto snap = s.snapshot(id);
  std::set<std::int64_t> rated;
  for (const auto& q : snap->asked) rated.insert(fixture().catalog[static_cast<std::size_t>(q.movie)].external_id);
  double previous = 6.0;
  for (const auto& item : items) {
    const double p = item["predicted_rating"];
    CHECK((p >= 1.0 && p <= 5.0));
    CHECK(p <= previous);
    previous = p;
    CHECK_FALSE(rated.contains(item["movie_id"].get<std::int64_t>()));
  }
  CHECK(s.recommendations(id, 100000).body["recommendations"].size() == fixture().catalog.size() - 3);
}

TEST_CASE("sessions expire after the idle timeout") {
  FakeClock clock;
  auto s = make_service(&clock);
  const std::string id = s.create_session(json::object()).body["session_id"];
  clock.t += 59;
  CHECK(s.answer(id, {{"rating", 3}}).status == 200);
  clock.t += 59;
  CHECK(s.q_values(id).status == 200);
  clock.t += 61;
  CHECK(s.answer(id, {{"rating", 3}}).status == 404);
  CHECK(s.session_count() == 0);
}

TEST_CASE("without a bundle every session call is unavailable") {
  InterviewService s(nullptr, {});
  CHECK(s.health().body["status"] == "no_model");
  CHECK(s.create_session(json::object()).status == 503);
  CHECK(s.answer("x", {{"rating", 1}}).status == 503);
  CHECK(s.recommendations("x", 3).status == 503);
  auto h = make_service().health();
  CHECK(h.body["status"] == "ok");
  CHECK(h.body["action_space_size"] == 100);
}

TEST_CASE("a catalog that does not match the bundle is rejected") {
  std::vector<MovieInfo> short_catalog(fixture().catalog.begin(), fixture().catalog.begin() + 5);
  CHECK_THROWS_AS(InterviewService(fixture().bundle, short_catalog), ArtifactError);
}

TEST_CASE("q-values are non-negative and flag asked slots") {
  auto s = make_service();
  const std::string id = s.create_session(json::object()).body["session_id"];
  s.answer(id, {{"rating", 2}});
  const auto r = s.q_values(id);
  REQUIRE(r.body["q_values"].size() == 100);
  int asked = 0;
  for (const auto& e : r.body["q_values"]) {
    CHECK(e["q_value"].get<double>() >= 0.0);
    asked += e["asked"].get<bool>();
  }
  CHECK(asked == 1);
}

TEST_CASE("the journal restores sessions after a restart") {
  coldstart::testing::TempDir dir;
  const auto path = dir.path() / "sessions.jsonl";
  std::string done, open;
  std::optional<SessionSnapshot> done_before, open_before;
  {
    auto s = make_service(nullptr, path);
    done = finish(s, 3, 4);
    open = s.create_session({{"k", 4}}).body["session_id"];
    s.answer(open, {{"rating", 1}});
    done_before = s.snapshot(done);
    open_before = s.snapshot(open);
  }
  {
    std::ofstream torn(path, std::ios::app);
    torn << R"({"event":"answer","sess)";
  }
  auto s = make_service(nullptr, path);
  CHECK(s.session_count() == 2);
  const auto done_after = s.snapshot(done);
  const auto open_after = s.snapshot(open);
  REQUIRE(done_after);
  REQUIRE(open_after);
  CHECK(done_after->state == done_before->state);
  CHECK(done_after->finished);
  CHECK(open_after->state == open_before->state);
  CHECK(open_after->asked.back().movie == open_before->asked.back().movie);
  CHECK(s.answer(open, {{"rating", 2}}).status == 200);
  CHECK(s.recommendations(done, 5).status == 200);
}

TEST_CASE("concurrent sessions do not interfere") {
  auto s = make_service();
  std::vector<std::thread> threads;
  std::vector<json> results(4);
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&, i] {
      const std::string id = s.create_session(json::object()).body["session_id"];
      for (int q = 0; q < 3; ++q) s.answer(id, {{"rating", 5}});
      results[static_cast<std::size_t>(i)] = s.recommendations(id, 5).body;
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& r : results) CHECK(r["recommendations"] == results[0]["recommendations"]);
}

TEST_CASE("http round trip with CORS headers") {
  auto s = make_service();
  HttpFrontend http(s, "http://localhost:5173");
  const int port = http.bind("127.0.0.1", 0);
  std::thread server([&] { http.listen(); });
  httplib::Client client("127.0.0.1", port);

  auto health = client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

  auto pre = client.Options("/api/sessions");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  auto created = client.Post("/api/sessions", R"({"k": 1})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 200);
  const std::string id = json::parse(created->body)["session_id"];
  CHECK(client.Post("/api/sessions", "{", "application/json")->status == 400);
  auto answered = client.Post("/api/sessions/" + id + "/answer", R"({"rating": 5})", "application/json");
  REQUIRE(answered);
  CHECK(json::parse(answered->body)["finished"] == true);
  auto recs = client.Get("/api/sessions/" + id + "/recommendations?n=4");
  REQUIRE(recs);
  CHECK(json::parse(recs->body)["recommendations"].size() == 4);
  CHECK(client.Get("/api/sessions/" + id + "/recommendations?n=abc")->status == 400);
  CHECK(client.Get("/api/sessions/missing/q_values")->status == 404);

  http.stop();
  server.join();
}

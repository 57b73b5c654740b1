#include "coldstart/service.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "coldstart/binary_io.hpp"
#include "coldstart/error.hpp"

namespace coldstart {

namespace {

using nlohmann::json;

ServiceResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

std::uint64_t random_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace

InterviewService::InterviewService(std::shared_ptr<const ModelBundle> bundle, std::vector<MovieInfo> catalog,
                                   ServiceOptions options)
    : bundle_(std::move(bundle)),
      catalog_(std::move(catalog)),
      options_(std::move(options)),
      id_rng_(options_.id_seed.value_or(random_seed())) {
  if (bundle_ && static_cast<int>(catalog_.size()) != bundle_->movie_count()) {
    throw ArtifactError("movie catalog does not match the model bundle");
  }
  if (options_.journal) {
    replay_journal();
    journal_out_.open(*options_.journal, std::ios::app);
    if (!journal_out_) throw ArtifactError("cannot append to journal " + options_.journal->string());
  }
}

double InterviewService::now() const {
  if (options_.clock) return options_.clock();
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string InterviewService::new_id() {
  std::lock_guard lock(id_mutex_);
  return hex64(id_rng_()) + hex64(id_rng_());
}

std::shared_ptr<InterviewService::Session> InterviewService::find(const std::string& id) {
  std::shared_ptr<Session> session;
  {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return nullptr;
    session = it->second;
  }
  bool expired = false;
  {
    std::lock_guard lock(session->mutex);
    expired = now() - session->data.last_active > options_.session_ttl_seconds;
  }
  if (expired) {
    std::unique_lock lock(sessions_mutex_);
    sessions_.erase(id);
    return nullptr;
  }
  return session;
}

void InterviewService::purge_expired() {
  const double t = now();
  std::unique_lock lock(sessions_mutex_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::lock_guard session_lock(it->second->mutex);
    if (t - it->second->data.last_active > options_.session_ttl_seconds) {
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::size_t InterviewService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

json InterviewService::question_json(int movie) const {
  const MovieInfo& info = catalog_.at(static_cast<std::size_t>(movie));
  return {{"movie_id", info.external_id}, {"title", info.title}, {"genres", info.genres}};
}

json InterviewService::progress_json(const SessionSnapshot& s) const {
  int answered = 0;
  for (const AskedQuestion& q : s.asked) answered += q.answer.has_value();
  return {{"asked", answered}, {"total", s.k_target}};
}

void InterviewService::ask_next(SessionSnapshot& s) const {
  const int slot = bundle_->greedy_action(s.state);
  s.asked.push_back({slot, bundle_->action_space.movie_at(slot), std::nullopt});
}

json InterviewService::top_recommendations(const SessionSnapshot& s, int n) const {
  std::vector<bool> excluded(catalog_.size(), false);
  for (const AskedQuestion& q : s.asked)
    if (q.answer.value_or(0) >= 1) excluded[static_cast<std::size_t>(q.movie)] = true;
  const Vector profile = bundle_->user_profile(s.state);
  std::vector<std::pair<double, int>> scored;
  scored.reserve(catalog_.size());
  for (int m = 0; m < static_cast<int>(catalog_.size()); ++m) {
    if (!excluded[static_cast<std::size_t>(m)]) scored.emplace_back(bundle_->predict(profile, m), m);
  }
  const auto external = [this](int m) { return catalog_[static_cast<std::size_t>(m)].external_id; };
  const std::size_t count = std::min(scored.size(), static_cast<std::size_t>(n));
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(count), scored.end(),
                    [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return external(a.second) < external(b.second);
                    });
  json out = json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const MovieInfo& info = catalog_[static_cast<std::size_t>(scored[i].second)];
    out.push_back({{"movie_id", info.external_id}, {"title", info.title}, {"predicted_rating", scored[i].first}});
  }
  return out;
}

ServiceResponse InterviewService::create_session(const json& body) {
  if (!bundle_) return error(503, "no model bundle loaded");
  if (!body.is_null() && !body.is_object()) return error(400, "request body must be a JSON object");
  int k = 3;
  if (body.is_object() && body.contains("k") && !body.at("k").is_null()) {
    const json& v = body.at("k");
    if (!v.is_number_integer()) return error(400, "k must be an integer");
    const auto requested = v.get<std::int64_t>();
    if (requested < 1 || requested > bundle_->action_space.size()) {
      return error(400, "k must lie in [1, " + std::to_string(bundle_->action_space.size()) + "]");
    }
    k = static_cast<int>(requested);
  }
  purge_expired();

  auto session = std::make_shared<Session>();
  SessionSnapshot& s = session->data;
  s.id = new_id();
  s.state = initial_state(bundle_->action_space.size());
  s.k_target = k;
  s.created_at = s.last_active = now();
  ask_next(s);
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(s.id, session);
  }
  journal({{"event", "create"}, {"session_id", s.id}, {"k", k}});
  return {200,
          {{"session_id", s.id}, {"question", question_json(s.asked.back().movie)}, {"progress", progress_json(s)}}};
}

ServiceResponse InterviewService::answer(const std::string& id, const json& body) {
  if (!bundle_) return error(503, "no model bundle loaded");
  const auto session = find(id);
  if (!session) return error(404, "unknown or expired session");
  if (!body.is_object() || !body.contains("rating")) return error(400, "body must contain an integer rating");
  const json& r = body.at("rating");
  if (!r.is_number_integer()) return error(400, "rating must be an integer in 0..5");
  const auto rating = r.get<std::int64_t>();
  if (rating < 0 || rating > 5) return error(400, "rating must be an integer in 0..5");

  std::lock_guard lock(session->mutex);
  SessionSnapshot& s = session->data;
  if (s.finished) return error(409, "interview already finished");
  AskedQuestion& pending = s.asked.back();
  s.state = s.state.step(pending.slot, static_cast<int>(rating));
  pending.answer = static_cast<int>(rating);
  s.last_active = now();
  journal({{"event", "answer"}, {"session_id", s.id}, {"rating", rating}});

  json out = {{"session_id", s.id}};
  if (s.state.asked_count() >= s.k_target) {
    s.finished = true;
    out["finished"] = true;
    out["progress"] = progress_json(s);
    out["recommendations"] = top_recommendations(s, 10);
    return {200, out};
  }
  ask_next(s);
  out["finished"] = false;
  out["question"] = question_json(s.asked.back().movie);
  out["progress"] = progress_json(s);
  return {200, out};
}

ServiceResponse InterviewService::recommendations(const std::string& id, int n) {
  if (!bundle_) return error(503, "no model bundle loaded");
  if (n < 1) return error(400, "n must be a positive integer");
  const auto session = find(id);
  if (!session) return error(404, "unknown or expired session");
  std::lock_guard lock(session->mutex);
  SessionSnapshot& s = session->data;
  if (!s.finished) return error(409, "interview not finished");
  s.last_active = now();
  return {200, {{"session_id", s.id}, {"recommendations", top_recommendations(s, n)}}};
}

ServiceResponse InterviewService::q_values(const std::string& id) {
  if (!bundle_) return error(503, "no model bundle loaded");
  const auto session = find(id);
  if (!session) return error(404, "unknown or expired session");
  std::lock_guard lock(session->mutex);
  const SessionSnapshot& s = session->data;
  const Vector q = bundle_->q_values(s.state);
  json slots = json::array();
  for (int slot = 0; slot < bundle_->action_space.size(); ++slot) {
    const int movie = bundle_->action_space.movie_at(slot);
    slots.push_back({{"slot", slot},
                     {"movie_id", catalog_[static_cast<std::size_t>(movie)].external_id},
                     {"title", catalog_[static_cast<std::size_t>(movie)].title},
                     {"q_value", q[static_cast<std::size_t>(slot)]},
                     {"asked", s.state.asked(slot)}});
  }
  return {200, {{"session_id", s.id}, {"q_values", slots}}};
}

ServiceResponse InterviewService::health() const {
  if (!bundle_) return {200, {{"status", "no_model"}, {"model", nullptr}, {"action_space_size", 0}}};
  return {200,
          {{"status", "ok"},
           {"model", to_string(bundle_->kind())},
           {"action_space_size", bundle_->action_space.size()}}};
}

std::optional<SessionSnapshot> InterviewService::snapshot(const std::string& id) {
  const auto session = find(id);
  if (!session) return std::nullopt;
  std::lock_guard lock(session->mutex);
  return session->data;
}

void InterviewService::journal(const json& event) {
  if (!journal_out_.is_open()) return;
  std::lock_guard lock(journal_mutex_);
  journal_out_ << event.dump() << '\n' << std::flush;
}

void InterviewService::replay_journal() {
  std::ifstream in(*options_.journal);
  if (!in || !bundle_) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json event;
    try {
      event = json::parse(line);
    } catch (const json::parse_error&) {
      continue;  // torn final line after a crash
    }
    const std::string type = event.value("event", "");
    const std::string id = event.value("session_id", "");
    if (type == "create") {
      auto session = std::make_shared<Session>();
      SessionSnapshot& s = session->data;
      s.id = id;
      s.state = initial_state(bundle_->action_space.size());
      s.k_target = event.value("k", 3);
      s.created_at = s.last_active = now();
      ask_next(s);
      sessions_[id] = session;
    } else if (type == "answer") {
      const auto it = sessions_.find(id);
      if (it == sessions_.end() || it->second->data.finished) continue;
      SessionSnapshot& s = it->second->data;
      AskedQuestion& pending = s.asked.back();
      const int rating = event.value("rating", 0);
      s.state = s.state.step(pending.slot, rating);
      pending.answer = rating;
      if (s.state.asked_count() >= s.k_target) {
        s.finished = true;
      } else {
        ask_next(s);
      }
    }
  }
}

}  // namespace coldstart

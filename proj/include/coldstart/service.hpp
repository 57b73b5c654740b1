#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "coldstart/bundle.hpp"
#include "coldstart/dataset.hpp"
#include "coldstart/interview.hpp"

namespace coldstart {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  double session_ttl_seconds = 3600.0;
  std::optional<std::filesystem::path> journal;
  // Seconds on any monotonic scale; steady_clock when empty.
  std::function<double()> clock;
  // Seeds session-id generation; random_device when empty.
  std::optional<std::uint64_t> id_seed;
};

struct AskedQuestion {
  int slot = 0;
  int movie = 0;
  std::optional<int> answer;
};

struct SessionSnapshot {
  std::string id;
  InterviewState state;
  std::vector<AskedQuestion> asked;
  int k_target = 0;
  bool finished = false;
  double created_at = 0.0;
  double last_active = 0.0;
};

// Live interviews against one immutable bundle. Every public method is safe to
// call concurrently; operations on one session are serialised.
class InterviewService {
 public:
  // `bundle` may be null: sessions then fail with 503.
  InterviewService(std::shared_ptr<const ModelBundle> bundle, std::vector<MovieInfo> catalog,
                   ServiceOptions options = {});

  ServiceResponse create_session(const nlohmann::json& body);
  ServiceResponse answer(const std::string& id, const nlohmann::json& body);
  ServiceResponse recommendations(const std::string& id, int n);
  ServiceResponse q_values(const std::string& id);
  ServiceResponse health() const;

  std::optional<SessionSnapshot> snapshot(const std::string& id);
  std::size_t session_count() const;
  void purge_expired();

 private:
  struct Session {
    std::mutex mutex;
    SessionSnapshot data;
  };

  double now() const;
  std::shared_ptr<Session> find(const std::string& id);
  std::string new_id();
  nlohmann::json question_json(int movie) const;
  nlohmann::json progress_json(const SessionSnapshot& s) const;
  nlohmann::json top_recommendations(const SessionSnapshot& s, int n) const;
  void ask_next(SessionSnapshot& s) const;
  void journal(const nlohmann::json& event);
  void replay_journal();

  std::shared_ptr<const ModelBundle> bundle_;
  std::vector<MovieInfo> catalog_;
  ServiceOptions options_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;

  std::mutex id_mutex_;
  Rng id_rng_;

  std::mutex journal_mutex_;
  std::ofstream journal_out_;
};

// cpp-httplib front end with CORS headers on every response.
class HttpFrontend {
 public:
  HttpFrontend(InterviewService& service, std::string cors_origin = "*");
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coldstart

#include "coldstart/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "coldstart/binary_io.hpp"
#include "coldstart/error.hpp"

namespace coldstart {

namespace {

constexpr char kBundleMagic[8] = {'C', 'S', 'B', 'U', 'N', 'D', 'L', 'E'};
constexpr std::uint32_t kBundleVersion = 1;

std::string normalize(std::string_view text) {
  std::string s(text);
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

void write_layer(BinaryWriter& w, const DenseLayer& layer) {
  w.u64(layer.weights.rows());
  w.u64(layer.weights.cols());
  w.string(to_string(layer.activation));
  w.doubles(layer.weights.values());
  w.doubles(layer.bias);
}

DenseLayer read_layer(BinaryReader& r) {
  DenseLayer layer;
  const auto rows = r.u64();
  const auto cols = r.u64();
  layer.activation = parse_activation(r.string());
  layer.weights = Matrix(rows, cols);
  r.doubles_into(layer.weights.values());
  layer.bias = r.doubles();
  if (layer.bias.size() != rows) throw ArtifactError("bundle: bias length does not match layer");
  return layer;
}

void write_adam(BinaryWriter& w, const AdamState& a) {
  w.f64(a.learning_rate);
  w.f64(a.beta1);
  w.f64(a.beta2);
  w.f64(a.epsilon);
  w.i64(a.step_count);
  w.u64(a.first_moment.size());
  for (std::size_t g = 0; g < a.first_moment.size(); ++g) {
    w.doubles(a.first_moment[g]);
    w.doubles(a.second_moment[g]);
  }
}

AdamState read_adam(BinaryReader& r) {
  AdamState a;
  a.learning_rate = r.f64();
  a.beta1 = r.f64();
  a.beta2 = r.f64();
  a.epsilon = r.f64();
  a.step_count = r.i64();
  const auto groups = r.u64();
  if (groups > 64) throw ArtifactError("bundle: implausible optimizer state");
  for (std::uint64_t g = 0; g < groups; ++g) {
    a.first_moment.push_back(r.doubles());
    a.second_moment.push_back(r.doubles());
  }
  return a;
}

void write_tower(BinaryWriter& w, const UserTower& t) {
  w.f64(t.dropout_rate);
  write_layer(w, t.hidden1);
  write_layer(w, t.hidden2);
  write_layer(w, t.output);
}

UserTower read_tower(BinaryReader& r) {
  UserTower t;
  t.dropout_rate = r.f64();
  t.hidden1 = read_layer(r);
  t.hidden2 = read_layer(r);
  t.output = read_layer(r);
  return t;
}

void check_adam_shape(const AdamState& a, const ParameterList& params) {
  if (a.first_moment.size() != params.size()) throw ArtifactError("bundle: optimizer state does not match network");
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (a.first_moment[g].size() != params[g].size() || a.second_moment[g].size() != params[g].size()) {
      throw ArtifactError("bundle: optimizer state does not match network");
    }
  }
}

Rng& inference_rng() {
  // Never drawn from: every forward below runs with training = false.
  thread_local Rng rng(0);
  return rng;
}

}  // namespace

std::string to_string(ModelKind m) { return m == ModelKind::q_embedding ? "q_embedding" : "q_rating"; }

ModelKind parse_model_kind(std::string_view text) {
  const std::string s = normalize(text);
  if (s == "q_embedding") return ModelKind::q_embedding;
  if (s == "q_rating") return ModelKind::q_rating;
  throw ConfigError("model must be q-embedding or q-rating, got '" + std::string(text) + "'");
}

std::string to_string(PolicyKind p) { return p == PolicyKind::dqn ? "dqn" : "random"; }

PolicyKind parse_policy_kind(std::string_view text) {
  if (text == "dqn") return PolicyKind::dqn;
  if (text == "random") return PolicyKind::random;
  throw ConfigError("policy must be dqn or random, got '" + std::string(text) + "'");
}

std::string to_string(RewardSet r) { return r == RewardSet::non_interviewed ? "non_interviewed" : "all_observed"; }

RewardSet parse_reward_set(std::string_view text) {
  const std::string s = normalize(text);
  if (s == "non_interviewed") return RewardSet::non_interviewed;
  if (s == "all_observed") return RewardSet::all_observed;
  throw ConfigError("reward set must be non_interviewed or all_observed, got '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (k < 1 || k > action_count) throw ConfigError("train.k must lie in [1, action_count]");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (users_per_batch < 1) throw ConfigError("train.users_per_batch must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train.gamma must lie in (0, 1]");
  if (dqn_lr < 0.0 || dqn_restart_lr < 0.0 || head_lr < 0.0) throw ConfigError("learning rates must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_epsilon > 0.0)) {
    throw ConfigError("adam betas must lie in [0, 1) and adam epsilon must be positive");
  }
  if (retrain_patience < 0) throw ConfigError("train.retrain_patience must be >= 0");
  if (eval_stride < 1) throw ConfigError("train.eval_stride must be positive");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (rating_samples < 1) throw ConfigError("train.rating_samples must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train.dropout must lie in [0, 1)");
  if (action_count < 1) throw ConfigError("train.action_count must be positive");
  if (!(epsilon.floor >= 0.0 && epsilon.start <= 1.0 && epsilon.floor <= epsilon.start && epsilon.decrement >= 0.0)) {
    throw ConfigError("epsilon schedule must satisfy 0 <= floor <= start <= 1 and decrement >= 0");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"model", to_string(model)},
          {"policy", to_string(policy)},
          {"k", k},
          {"epochs", epochs},
          {"users_per_batch", users_per_batch},
          {"gamma", gamma},
          {"epsilon_start", epsilon.start},
          {"epsilon_decrement", epsilon.decrement},
          {"epsilon_floor", epsilon.floor},
          {"dqn_lr", dqn_lr},
          {"dqn_restart_lr", dqn_restart_lr},
          {"head_lr", head_lr},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon},
          {"retrain_patience", retrain_patience},
          {"eval_stride", eval_stride},
          {"checkpoint_every", checkpoint_every},
          {"rating_samples", rating_samples},
          {"reward_set", to_string(reward_set)},
          {"dqn_loss", std::string(to_string(dqn_loss))},
          {"dropout", dropout},
          {"action_count", action_count},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.model = parse_model_kind(j.at("model").get<std::string>());
  c.policy = parse_policy_kind(j.at("policy").get<std::string>());
  c.k = j.at("k").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.users_per_batch = j.at("users_per_batch").get<int>();
  c.gamma = j.at("gamma").get<double>();
  c.epsilon.start = j.at("epsilon_start").get<double>();
  c.epsilon.decrement = j.at("epsilon_decrement").get<double>();
  c.epsilon.floor = j.at("epsilon_floor").get<double>();
  c.dqn_lr = j.at("dqn_lr").get<double>();
  c.dqn_restart_lr = j.at("dqn_restart_lr").get<double>();
  c.head_lr = j.at("head_lr").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.retrain_patience = j.at("retrain_patience").get<int>();
  c.eval_stride = j.at("eval_stride").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.rating_samples = j.at("rating_samples").get<int>();
  c.reward_set = parse_reward_set(j.at("reward_set").get<std::string>());
  c.dqn_loss = parse_qloss(j.at("dqn_loss").get<std::string>());
  c.dropout = j.at("dropout").get<double>();
  c.action_count = j.at("action_count").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

Vector ModelBundle::q_values(const InterviewState& state) const {
  return q_forward(dqn, state.values(), false, inference_rng());
}

int ModelBundle::greedy_action(const InterviewState& state) const {
  return select_action(q_values(state), state.asked_mask(), 0.0, inference_rng());
}

Vector ModelBundle::user_profile(const InterviewState& terminal_state) const {
  if (const auto* e = std::get_if<EmbeddingHead>(&head)) return embed_user(*e, terminal_state.values(), false, inference_rng());
  const auto& r = std::get<RatingHead>(head);
  return tower_forward(r.tower, terminal_state.values(), false, inference_rng()).embedding;
}

double ModelBundle::predict(std::span<const double> profile, int movie) const {
  if (std::holds_alternative<EmbeddingHead>(head)) return predict_rating_qembedding(profile, factors, movie);
  return clip_rating(rating_from_embedding(std::get<RatingHead>(head), profile, movie));
}

ModelBundle create_bundle(const TrainConfig& config, const RatingsDataset& dataset, FactorSet factors) {
  config.validate();
  if (factors.movie_count() != dataset.movie_count() || factors.user_count() != dataset.user_count()) {
    throw ArtifactError("factor checkpoint does not match the dataset dimensions");
  }
  ModelBundle b;
  b.config = config;
  b.action_space = build_action_space(dataset, config.action_count);
  b.mean_rating = dataset.global_mean();
  b.dataset_fingerprint = dataset.fingerprint();
  Rng rng(config.seed);
  const Activation hidden = config.model == ModelKind::q_embedding ? Activation::relu : Activation::tanh;
  b.dqn = QNetwork::create(config.action_count, hidden, rng, config.dqn_lr, config.dropout);
  if (config.model == ModelKind::q_embedding) {
    b.head = EmbeddingHead::create(config.action_count, factors.dim, rng, config.head_lr, config.dropout);
  } else {
    b.head = RatingHead::create(config.action_count, factors, dataset.global_mean(), rng, config.head_lr, config.dropout);
  }
  auto tune = [&config](AdamState& a) {
    a.beta1 = config.adam_beta1;
    a.beta2 = config.adam_beta2;
    a.epsilon = config.adam_epsilon;
  };
  tune(b.dqn.adam);
  std::visit([&](auto& head) { tune(head.adam); }, b.head);
  b.factors = std::move(factors);
  return b;
}

std::uint64_t parameter_hash(const ModelBundle& bundle) {
  Fnv1a h;
  auto layer = [&h](const DenseLayer& l) {
    h.values(l.weights.values());
    h.values(l.bias);
  };
  layer(bundle.dqn.hidden1);
  layer(bundle.dqn.hidden2);
  layer(bundle.dqn.output);
  if (const auto* e = std::get_if<EmbeddingHead>(&bundle.head)) {
    layer(e->tower.hidden1);
    layer(e->tower.hidden2);
    layer(e->tower.output);
  } else {
    const auto& r = std::get<RatingHead>(bundle.head);
    layer(r.tower.hidden1);
    layer(r.tower.hidden2);
    layer(r.tower.output);
    h.values(r.movie_table.values());
  }
  return h.digest();
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "coldstart-bundle";
  header["model"] = to_string(bundle.kind());
  header["config"] = bundle.config.to_json();
  header["action_space"] = bundle.action_space.movies();
  header["dataset_fingerprint"] = hex64(bundle.dataset_fingerprint);
  header["mean_rating"] = bundle.mean_rating;
  header["best_test_rmse"] = std::isfinite(bundle.best_test_rmse) ? nlohmann::json(bundle.best_test_rmse) : nlohmann::json();
  header["epoch_of_best"] = bundle.epoch_of_best;
  header["bpmf"] = bpmf_config_to_json(bundle.factors.config);
  header["embedding_dim"] = bundle.factors.dim;
  header["user_count"] = bundle.factors.user_count();
  header["movie_count"] = bundle.factors.movie_count();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ArtifactError("cannot write " + tmp.string());
    BinaryWriter w(out);
    w.raw(std::string_view(kBundleMagic, sizeof kBundleMagic));
    w.u32(kBundleVersion);
    w.string(header.dump());

    const FactorSet& f = bundle.factors;
    w.f64(f.user_scale);
    w.string(std::string(f.user_trained.begin(), f.user_trained.end()));
    w.doubles(f.user_factors.values());
    w.doubles(f.movie_factors.values());

    w.f64(bundle.dqn.dropout_rate);
    write_layer(w, bundle.dqn.hidden1);
    write_layer(w, bundle.dqn.hidden2);
    write_layer(w, bundle.dqn.output);
    write_adam(w, bundle.dqn.adam);

    if (const auto* e = std::get_if<EmbeddingHead>(&bundle.head)) {
      write_tower(w, e->tower);
      write_adam(w, e->adam);
    } else {
      const auto& r = std::get<RatingHead>(bundle.head);
      write_tower(w, r.tower);
      w.f64(r.mean_rating);
      w.u64(r.movie_table.rows());
      w.u64(r.movie_table.cols());
      w.doubles(r.movie_table.values());
      write_adam(w, r.adam);
    }
    if (!out) throw ArtifactError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("model bundle " + path.string() + " not found (run `coldstart train`)");
  BinaryReader r(in, path.string());
  if (r.raw(sizeof kBundleMagic) != std::string_view(kBundleMagic, sizeof kBundleMagic)) {
    throw ArtifactError(path.string() + ": not a model bundle");
  }
  if (const auto v = r.u32(); v != kBundleVersion) {
    throw ArtifactError(path.string() + ": unsupported bundle version " + std::to_string(v));
  }
  const nlohmann::json header = nlohmann::json::parse(r.string());
  ModelBundle b;
  b.config = TrainConfig::from_json(header.at("config"));
  b.action_space = ActionSpace(header.at("action_space").get<std::vector<int>>());
  b.mean_rating = header.at("mean_rating").get<double>();
  b.dataset_fingerprint = std::stoull(header.at("dataset_fingerprint").get<std::string>(), nullptr, 16);
  b.best_test_rmse = header.at("best_test_rmse").is_null() ? std::numeric_limits<double>::infinity()
                                                             : header.at("best_test_rmse").get<double>();
  b.epoch_of_best = header.at("epoch_of_best").get<int>();

  FactorSet& f = b.factors;
  f.dim = header.at("embedding_dim").get<int>();
  f.config = bpmf_config_from_json(header.at("bpmf"));
  const auto users = header.at("user_count").get<std::size_t>();
  const auto movies = header.at("movie_count").get<std::size_t>();
  f.user_scale = r.f64();
  const std::string trained = r.string();
  f.user_trained.assign(trained.begin(), trained.end());
  f.user_factors = Matrix(users, static_cast<std::size_t>(f.dim));
  f.movie_factors = Matrix(movies, static_cast<std::size_t>(f.dim));
  r.doubles_into(f.user_factors.values());
  r.doubles_into(f.movie_factors.values());

  b.dqn.dropout_rate = r.f64();
  b.dqn.hidden1 = read_layer(r);
  b.dqn.hidden2 = read_layer(r);
  b.dqn.output = read_layer(r);
  b.dqn.adam = read_adam(r);
  check_adam_shape(b.dqn.adam, b.dqn.parameters());

  const ModelKind kind = parse_model_kind(header.at("model").get<std::string>());
  if (kind == ModelKind::q_embedding) {
    EmbeddingHead e;
    e.tower = read_tower(r);
    e.adam = read_adam(r);
    check_adam_shape(e.adam, e.parameters());
    b.head = std::move(e);
  } else {
    RatingHead h;
    h.tower = read_tower(r);
    h.mean_rating = r.f64();
    const auto rows = r.u64();
    const auto cols = r.u64();
    h.movie_table = Matrix(rows, cols);
    r.doubles_into(h.movie_table.values());
    h.adam = read_adam(r);
    check_adam_shape(h.adam, h.parameters());
    b.head = std::move(h);
  }
  if (b.action_space.size() != b.dqn.action_count()) throw ArtifactError(path.string() + ": action space size mismatch");
  return b;
}

}  // namespace coldstart

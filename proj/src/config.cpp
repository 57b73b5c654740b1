#include "coldstart/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "coldstart/binary_io.hpp"
#include "coldstart/error.hpp"

namespace coldstart {

namespace {

using nlohmann::json;

std::vector<ConfigKey> build_keys() {
  const TrainConfig t;
  const BpmfConfig b;
  std::vector<ConfigKey> keys = {
      {"data_dir", "", "MovieLens 1M directory (falls back to COLDSTART_DATA_DIR)", false},
      {"ratings_file", "ratings.dat", "ratings file name inside data_dir", true},
      {"movies_file", "movies.dat", "movies file name inside data_dir", true},
      {"runs_root", "runs", "parent of the timestamped run directories", false},
      {"seed", t.seed, "seed for the split, BPMF and training", true},
      {"split.user_fraction", 0.75, "fraction of users in the training set", true},
      {"split.movie_fraction", 0.75, "fraction of movies in the interview set", true},
      {"bpmf.dim", b.dim, "latent dimension D", true},
      {"bpmf.gibbs_iterations", b.gibbs_iterations, "Gibbs sweeps", true},
      {"bpmf.burn_in", b.burn_in, "sweeps discarded before averaging", true},
      {"bpmf.beta0", b.beta0, "Normal-Wishart mean precision scale", true},
      {"bpmf.nu0", b.nu0, "Wishart degrees of freedom (0 = dim)", true},
      {"bpmf.observation_precision", b.observation_precision, "rating noise precision alpha", true},
      {"bpmf.init", to_string(b.init), "factor initialisation: map or noise", true},
      {"bpmf.init_sigma", b.init_sigma, "standard deviation of noise initialisation", true},
      {"bpmf.map_sweeps", b.map_sweeps, "alternating ridge sweeps for map initialisation", true},
      {"bpmf.map_lambda", b.map_lambda, "ridge penalty for map initialisation", true},
  };
  const json train = t.to_json();
  const std::vector<std::pair<std::string, std::string>> train_docs = {
      {"model", "head: q_embedding or q_rating"},
      {"policy", "question policy: dqn or random"},
      {"k", "questions per training interview"},
      {"epochs", "training epochs"},
      {"users_per_batch", "users per head/DQN update"},
      {"gamma", "discount of the Monte-Carlo target"},
      {"epsilon_start", "initial exploration rate"},
      {"epsilon_decrement", "exploration decrease per epoch"},
      {"epsilon_floor", "lowest exploration rate"},
      {"dqn_lr", "DQN Adam learning rate"},
      {"dqn_restart_lr", "DQN learning rate after a restart"},
      {"head_lr", "head Adam learning rate"},
      {"adam_beta1", "Adam first-moment decay"},
      {"adam_beta2", "Adam second-moment decay"},
      {"adam_epsilon", "Adam denominator constant"},
      {"retrain_patience", "non-improving evaluations tolerated before a restart"},
      {"eval_stride", "evaluate test RMSE every this many epochs"},
      {"checkpoint_every", "write last.bundle every this many epochs (0 = never)"},
      {"rating_samples", "ratings sampled per user for the Q-Rating head"},
      {"reward_set", "reward ratings: non_interviewed or all_observed"},
      {"dqn_loss", "DQN loss: mse or softmax_cross_entropy"},
      {"dropout", "dropout rate on hidden layers"},
      {"action_count", "number of most-rated movies the interviewer may ask"},
  };
  for (const auto& [name, doc] : train_docs) keys.push_back({"train." + name, train.at(name), doc, true});
  keys.push_back({"eval.questions", 3, "questions per evaluation interview", false});
  keys.push_back({"eval.sample_users", 5, "test users shown in sample interviews", false});
  keys.push_back({"interview.questions", 3, "questions asked by the interview command", false});
  keys.push_back({"interview.top_n", 10, "recommendations printed by the interview command", false});
  keys.push_back({"service.port", 8080, "HTTP port", false});
  keys.push_back({"service.host", "0.0.0.0", "HTTP bind address", false});
  keys.push_back({"service.session_ttl_seconds", 3600, "idle time before a session expires", false});
  keys.push_back({"service.journal", "", "append-only session journal path (empty = none)", false});
  keys.push_back({"service.cors_origin", "*", "Access-Control-Allow-Origin value", false});
  return keys;
}

const ConfigKey* find_key(const std::string& name) {
  for (const ConfigKey& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

void flatten(const json& node, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (const auto& [key, value] : node.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flatten(value, name, out);
    } else {
      out.emplace_back(name, value);
    }
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

Config::Config() : values_(json::object()) {
  for (const ConfigKey& k : config_keys()) values_[k.name] = k.default_value;
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(path.string() + ": expected a JSON object");
  merge_json(doc);
}

void Config::merge_json(const json& document) {
  std::vector<std::pair<std::string, json>> entries;
  flatten(document, "", entries);
  for (const auto& [key, value] : entries) set(key, value);
}

void Config::set(const std::string& key, const json& value) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  const json& d = k->default_value;
  bool ok = false;
  if (d.is_string()) {
    ok = value.is_string();
  } else if (d.is_number_integer()) {
    ok = value.is_number_integer() || (value.is_number_float() && value.get<double>() == std::floor(value.get<double>()));
  } else if (d.is_number_float()) {
    ok = value.is_number();
  }
  if (!ok) throw ConfigError("config key '" + key + "' expects a " + std::string(d.type_name()) + ", got " + value.dump());
  if (d.is_number_integer() && value.is_number_float()) {
    values_[key] = static_cast<std::int64_t>(value.get<double>());
  } else if (d.is_number_float()) {
    values_[key] = value.get<double>();
  } else {
    values_[key] = value;
  }
}

void Config::set_text(const std::string& key, const std::string& text) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  if (k->default_value.is_string()) {
    set(key, text);
    return;
  }
  json parsed;
  try {
    parsed = json::parse(text);
  } catch (const json::parse_error&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + text + "'");
  }
  set(key, parsed);
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + assignment + "'");
  set_text(assignment.substr(0, eq), assignment.substr(eq + 1));
}

const json& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return *it;
}

TrainConfig Config::train_config() const {
  json t = json::object();
  for (const ConfigKey& k : config_keys())
    if (k.name.starts_with("train.")) t[k.name.substr(6)] = get(k.name);
  t["seed"] = seed();
  try {
    TrainConfig c = TrainConfig::from_json(t);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

BpmfConfig Config::bpmf_config() const {
  BpmfConfig b;
  b.dim = get_int("bpmf.dim");
  b.gibbs_iterations = get_int("bpmf.gibbs_iterations");
  b.burn_in = get_int("bpmf.burn_in");
  b.beta0 = get_double("bpmf.beta0");
  b.nu0 = get_double("bpmf.nu0");
  b.observation_precision = get_double("bpmf.observation_precision");
  b.init = parse_bpmf_init(get_string("bpmf.init"));
  b.init_sigma = get_double("bpmf.init_sigma");
  b.map_sweeps = get_int("bpmf.map_sweeps");
  b.map_lambda = get_double("bpmf.map_lambda");
  b.seed = seed();
  b.validate();
  return b;
}

namespace {

std::string digest_of(const Config& c, bool training) {
  json relevant = json::object();
  for (const ConfigKey& k : config_keys()) {
    const bool is_train = k.name.starts_with("train.") || k.name == "seed";
    const bool is_pipeline = !k.name.starts_with("train.");
    if (k.affects_artifacts && (training ? is_train : is_pipeline)) relevant[k.name] = c.get(k.name);
  }
  Fnv1a h;
  h.text(relevant.dump());
  return hex64(h.digest()).substr(0, 8);
}

}  // namespace

std::string Config::pipeline_hash() const { return digest_of(*this, false); }
std::string Config::training_hash() const { return digest_of(*this, true); }

json Config::to_json() const { return values_; }

std::string config_help() {
  std::ostringstream out;
  out << "Config keys (JSON file via --config, or --set key=value):\n";
  for (const ConfigKey& k : config_keys()) {
    std::string name = "  " + k.name;
    name.resize(std::max<std::size_t>(name.size() + 1, 34), ' ');
    std::string def = k.default_value.dump();
    def.resize(std::max<std::size_t>(def.size() + 1, 14), ' ');
    out << name << def << k.description << '\n';
  }
  return out.str();
}

}  // namespace coldstart

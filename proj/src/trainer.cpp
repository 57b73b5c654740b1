#include "coldstart/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "coldstart/error.hpp"
#include "coldstart/eval.hpp"

namespace coldstart {

namespace {

struct Rollout {
  int user = 0;
  Trajectory trajectory;
  std::vector<Vector> q;
  std::vector<MovieRating> eligible;
};

std::vector<MovieRating> eligible_ratings(const RatingsDataset& dataset, int user, const Trajectory& trajectory,
                                          const ActionSpace& actions, RewardSet set) {
  std::unordered_set<int> asked;
  if (set == RewardSet::non_interviewed)
    for (const auto& step : trajectory.steps) asked.insert(actions.movie_at(step.slot));
  std::vector<MovieRating> out;
  for (const RatingRecord& r : dataset.user_ratings(user))
    if (!asked.contains(r.movie)) out.push_back({r.movie, r.rating});
  return out;
}

double rmse_over(std::span<const MovieRating> ratings, const std::function<double(int)>& predict) {
  double se = 0.0;
  for (const MovieRating& r : ratings) {
    const double d = predict(r.movie) - r.rating;
    se += d * d;
  }
  return std::max(std::sqrt(se / static_cast<double>(ratings.size())), kRmseFloor);
}

std::vector<MovieRating> sample_without_replacement(std::vector<MovieRating> pool, int count, Rng& rng) {
  const std::size_t n = std::min(pool.size(), static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(n);
  return pool;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

void MetricsLog::append(const EpochMetrics& m) {
  if (!records.empty() && m.epoch <= records.back().epoch) {
    throw TrainingError("metrics log: epoch " + std::to_string(m.epoch) + " does not follow " +
                        std::to_string(records.back().epoch));
  }
  records.push_back(m);
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw ArtifactError("cannot write " + path.string());
  out_ << kMetricsHeader << '\n' << std::flush;
}

void MetricsWriter::write(const EpochMetrics& m) { out_ << metrics_row(m) << '\n' << std::flush; }

std::string metrics_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + ',' + format_double(m.test_rmse) + ',' + format_double(m.train_reward_mean) + ',' +
         format_double(m.epsilon) + ',' + format_double(m.dqn_lr) + ',' + format_double(m.wall_seconds);
}

MetricsLog read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("metrics file " + path.string() + " not found (run `coldstart train`)");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw ArtifactError(path.string() + ": unexpected header");
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ArtifactError(path.string() + ": malformed row '" + line + "'");
    EpochMetrics m;
    try {
      m.epoch = std::stoi(cells[0]);
      m.test_rmse = std::stod(cells[1]);
      m.train_reward_mean = std::stod(cells[2]);
      m.epsilon = std::stod(cells[3]);
      m.dqn_lr = std::stod(cells[4]);
      m.wall_seconds = std::stod(cells[5]);
    } catch (const std::exception&) {
      throw ArtifactError(path.string() + ": malformed row '" + line + "'");
    }
    log.append(m);
  }
  return log;
}

double reward_rmse(const RatingsDataset& dataset, int user, const Trajectory& trajectory, const ActionSpace& actions,
                   const std::function<double(int movie)>& predict, RewardSet set) {
  const auto eligible = eligible_ratings(dataset, user, trajectory, actions, set);
  if (eligible.empty()) throw TrainingError("user " + std::to_string(user) + " has no ratings left to score");
  return rmse_over(eligible, predict);
}

double training_reward(const RatingsDataset& dataset, const EvaluationSplit& split, int user,
                       const Trajectory& trajectory, const ActionSpace& actions,
                       const std::function<double(int movie)>& predict, RewardSet set) {
  if (!split.is_train_user(user)) throw TrainingError("user " + std::to_string(user) + " is not a training user");
  return 1.0 / reward_rmse(dataset, user, trajectory, actions, predict, set);
}

EpochMetrics train_epoch(ModelBundle& bundle, const RatingsDataset& dataset, const EvaluationSplit& split, int epoch,
                         double epsilon, Rng& rng) {
  const TrainConfig& cfg = bundle.config;
  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.epsilon = epsilon;
  metrics.dqn_lr = bundle.dqn.adam.learning_rate;

  std::vector<int> users = split.train_users;
  std::shuffle(users.begin(), users.end(), rng);

  const bool use_dqn = cfg.policy == PolicyKind::dqn;
  const std::size_t batch_size = static_cast<std::size_t>(cfg.users_per_batch);
  double reward_sum = 0.0;
  double head_loss_sum = 0.0;
  double dqn_loss_sum = 0.0;
  int head_updates = 0;
  int dqn_updates = 0;

  for (std::size_t start = 0; start < users.size(); start += batch_size) {
    const std::size_t end = std::min(users.size(), start + batch_size);
    std::vector<Rollout> rollouts;
    rollouts.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      Rollout r;
      r.user = users[i];
      const Policy policy = [&](const InterviewState& s) {
        if (!use_dqn) return select_action(Vector(s.action_count(), 0.0), s.asked_mask(), 1.0, rng);
        Vector q = q_forward(bundle.dqn, s.values(), false, rng);
        const int slot = select_action(q, s.asked_mask(), epsilon, rng);
        r.q.push_back(std::move(q));
        return slot;
      };
      r.trajectory = run_interview(
          bundle.action_space, policy,
          [&](int movie) { return simulate_answer(dataset, split, r.user, movie, AnswerMode::train); }, cfg.k);
      ++metrics.interviews;
      r.eligible = eligible_ratings(dataset, r.user, r.trajectory, bundle.action_space, cfg.reward_set);
      if (r.eligible.empty()) {
        ++metrics.skipped_users;
        continue;
      }
      rollouts.push_back(std::move(r));
    }
    if (rollouts.empty()) continue;

    if (auto* head = std::get_if<EmbeddingHead>(&bundle.head)) {
      std::vector<EmbeddingSample> samples;
      samples.reserve(rollouts.size());
      for (const Rollout& r : rollouts) {
        const auto state = r.trajectory.terminal_state.values();
        samples.push_back({Vector(state.begin(), state.end()), scaled_user_target(bundle.factors, r.user)});
      }
      head_loss_sum += update_embedding_head(*head, samples, rng);
    } else {
      auto& rating_head = std::get<RatingHead>(bundle.head);
      std::vector<RatingSample> samples;
      samples.reserve(rollouts.size());
      for (const Rollout& r : rollouts) {
        const auto state = r.trajectory.terminal_state.values();
        samples.push_back({Vector(state.begin(), state.end()), sample_without_replacement(r.eligible, cfg.rating_samples, rng)});
      }
      head_loss_sum += update_rating_head(rating_head, samples, rng);
    }
    ++head_updates;

    std::vector<QSample> q_samples;
    for (const Rollout& r : rollouts) {
      const Vector profile = bundle.user_profile(r.trajectory.terminal_state);
      const double rmse = rmse_over(r.eligible, [&](int movie) { return bundle.predict(profile, movie); });
      reward_sum += 1.0 / rmse;
      if (!use_dqn) continue;
      const std::vector<QTarget> targets = build_targets(r.trajectory, rmse, cfg.gamma, r.q);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto state = r.trajectory.steps[t].before.values();
        q_samples.push_back({Vector(state.begin(), state.end()), targets[t]});
      }
    }
    if (use_dqn && !q_samples.empty()) {
      dqn_loss_sum += dqn_update(bundle.dqn, q_samples, cfg.dqn_loss, rng);
      ++dqn_updates;
    }
  }

  const int scored = metrics.interviews - metrics.skipped_users;
  metrics.train_reward_mean = scored > 0 ? reward_sum / scored : 0.0;
  metrics.head_loss = head_updates > 0 ? head_loss_sum / head_updates : 0.0;
  metrics.dqn_loss = dqn_updates > 0 ? dqn_loss_sum / dqn_updates : 0.0;
  return metrics;
}

TrainResult train(const TrainConfig& config, const RatingsDataset& dataset, const EvaluationSplit& split,
                  FactorSet factors, const TrainOptions& options) {
  config.validate();
  TrainResult result;
  ModelBundle bundle = create_bundle(config, dataset, std::move(factors));
  Rng rng(config.seed ^ 0x7261696eULL);
  const int eval_k = options.eval_questions.value_or(config.k);

  std::optional<MetricsWriter> writer;
  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir);
    writer.emplace(*options.output_dir / "metrics.csv");
  }

  ModelBundle best = bundle;
  int stale = 0;
  int cycle_start = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochMetrics m = train_epoch(bundle, dataset, split, epoch, config.epsilon.at(epoch - cycle_start), rng);

    const bool evaluated = epoch % config.eval_stride == 0 || epoch + 1 == config.epochs;
    m.test_rmse = std::numeric_limits<double>::quiet_NaN();
    if (evaluated) {
      m.test_rmse = evaluate(bundle, dataset, split, eval_k).pooled_rmse;
      if (m.test_rmse < bundle.best_test_rmse) {
        bundle.best_test_rmse = m.test_rmse;
        bundle.epoch_of_best = epoch;
        best = bundle;
        stale = 0;
        if (options.output_dir) save_bundle(best, *options.output_dir / "best.bundle");
      } else {
        ++stale;
      }
    }
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (stale > config.retrain_patience) {
      const double best_rmse = bundle.best_test_rmse;
      bundle = best;
      bundle.best_test_rmse = best_rmse;
      bundle.dqn.adam.learning_rate = config.dqn_restart_lr;
      cycle_start = epoch + 1;
      stale = 0;
      ++result.restarts;
      m.restarted_after = true;
    }

    result.log.append(m);
    if (writer) writer->write(m);
    if (options.output_dir && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      save_bundle(bundle, *options.output_dir / "last.bundle");
    }
    if (options.on_epoch) options.on_epoch(m, bundle);
  }
  result.best = std::move(best);
  return result;
}

}  // namespace coldstart

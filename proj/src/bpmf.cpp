#include "coldstart/bpmf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "coldstart/binary_io.hpp"
#include "coldstart/error.hpp"

namespace coldstart {

namespace {

struct Entry {
  int other;
  double rating;
};

// Compressed adjacency: entries of row r are entries[offsets[r] .. offsets[r+1]).
struct Adjacency {
  std::vector<std::size_t> offsets;
  std::vector<Entry> entries;

  std::span<const Entry> of(int r) const {
    const auto b = offsets[static_cast<std::size_t>(r)];
    const auto e = offsets[static_cast<std::size_t>(r) + 1];
    return std::span<const Entry>(entries).subspan(b, e - b);
  }
  bool empty_row(int r) const {
    return offsets[static_cast<std::size_t>(r)] == offsets[static_cast<std::size_t>(r) + 1];
  }
};

Adjacency build_adjacency(std::span<const RatingRecord> ratings, int rows, bool by_user) {
  Adjacency a;
  a.offsets.assign(static_cast<std::size_t>(rows) + 1, 0);
  for (const auto& r : ratings) ++a.offsets[static_cast<std::size_t>(by_user ? r.user : r.movie) + 1];
  for (std::size_t i = 1; i < a.offsets.size(); ++i) a.offsets[i] += a.offsets[i - 1];
  a.entries.resize(ratings.size());
  std::vector<std::size_t> cursor(a.offsets.begin(), a.offsets.end() - 1);
  for (const auto& r : ratings) {
    const int row = by_user ? r.user : r.movie;
    const int other = by_user ? r.movie : r.user;
    a.entries[cursor[static_cast<std::size_t>(row)]++] = {other, static_cast<double>(r.rating)};
  }
  return a;
}

struct Hyper {
  Vector mean;
  Matrix precision;
};

// Cholesky with the 1e-8 diagonal fallback for numerically non-SPD precisions.
Matrix regularized_cholesky(Matrix m, int& regularized) {
  try {
    return cholesky(m);
  } catch (const NumericsError&) {
    ++regularized;
    for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += 1e-8;
    return cholesky(m);
  }
}

Hyper sample_hyper(const Matrix& factors, const std::vector<int>& active, const BpmfConfig& cfg, Rng& rng) {
  const auto d = static_cast<std::size_t>(cfg.dim);
  const double n = static_cast<double>(active.size());
  Vector mean(d, 0.0);
  for (int r : active) {
    auto row = factors.row(static_cast<std::size_t>(r));
    for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
  }
  if (n > 0)
    for (double& v : mean) v /= n;

  // W_n⁻¹ = W₀⁻¹ + N·S + β₀N/(β₀+N)·x̄x̄ᵀ with W₀ = I, μ₀ = 0 (N·S is the scatter matrix).
  Matrix w_inv = Matrix::identity(d);
  for (int r : active) {
    auto row = factors.row(static_cast<std::size_t>(r));
    for (std::size_t i = 0; i < d; ++i) {
      const double di = row[i] - mean[i];
      for (std::size_t j = 0; j < d; ++j) w_inv(i, j) += di * (row[j] - mean[j]);
    }
  }
  const double shrink = cfg.beta0 * n / (cfg.beta0 + n);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) w_inv(i, j) += shrink * mean[i] * mean[j];

  const double beta_n = cfg.beta0 + n;
  const double nu_n = cfg.effective_nu0() + n;
  Vector mu_n(d);
  for (std::size_t k = 0; k < d; ++k) mu_n[k] = n * mean[k] / beta_n;

  Hyper h;
  h.precision = sample_wishart(spd_inverse(w_inv), nu_n, rng);
  const Matrix mean_chol = cholesky(beta_n * h.precision);
  h.mean = sample_mvn_precision(mu_n, mean_chol, rng);
  return h;
}

// Draws every non-empty row of `target` from its Gaussian conditional given `other`.
void sample_rows(Matrix& target, const Matrix& other, const Adjacency& adj, const Hyper& hyper,
                 const BpmfConfig& cfg, Rng& rng, int& regularized) {
  const auto d = static_cast<std::size_t>(cfg.dim);
  const Vector prior_b = matvec(hyper.precision, hyper.mean);
  const double alpha = cfg.observation_precision;
  for (int r = 0; r < static_cast<int>(target.rows()); ++r) {
    if (adj.empty_row(r)) continue;
    Matrix prec = hyper.precision;
    Vector b = prior_b;
    for (const Entry& e : adj.of(r)) {
      auto v = other.row(static_cast<std::size_t>(e.other));
      for (std::size_t i = 0; i < d; ++i) {
        const double avi = alpha * v[i];
        b[i] += avi * e.rating;
        for (std::size_t j = 0; j <= i; ++j) prec(i, j) += avi * v[j];
      }
    }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < i; ++j) prec(j, i) = prec(i, j);
    const Matrix l = regularized_cholesky(std::move(prec), regularized);
    const Vector mean = back_substitute_transposed(l, forward_substitute(l, b));
    const Vector draw = sample_mvn_precision(mean, l, rng);
    std::copy(draw.begin(), draw.end(), target.row(static_cast<std::size_t>(r)).begin());
  }
}

void ridge_rows(Matrix& target, const Matrix& other, const Adjacency& adj, const BpmfConfig& cfg,
                int& regularized) {
  const auto d = static_cast<std::size_t>(cfg.dim);
  for (int r = 0; r < static_cast<int>(target.rows()); ++r) {
    if (adj.empty_row(r)) continue;
    Matrix prec = cfg.map_lambda * Matrix::identity(d);
    Vector b(d, 0.0);
    for (const Entry& e : adj.of(r)) {
      auto v = other.row(static_cast<std::size_t>(e.other));
      for (std::size_t i = 0; i < d; ++i) {
        b[i] += v[i] * e.rating;
        for (std::size_t j = 0; j < d; ++j) prec(i, j) += v[i] * v[j];
      }
    }
    const Matrix l = regularized_cholesky(std::move(prec), regularized);
    const Vector sol = back_substitute_transposed(l, forward_substitute(l, b));
    std::copy(sol.begin(), sol.end(), target.row(static_cast<std::size_t>(r)).begin());
  }
}

double train_rmse(std::span<const RatingRecord> ratings, const Matrix& users, const Matrix& movies) {
  double se = 0.0;
  for (const auto& r : ratings) {
    const double p = clip_rating(dot(users.row(static_cast<std::size_t>(r.user)),
                                     movies.row(static_cast<std::size_t>(r.movie))));
    se += (p - r.rating) * (p - r.rating);
  }
  return ratings.empty() ? 0.0 : std::sqrt(se / static_cast<double>(ratings.size()));
}

constexpr char kFactorMagic[8] = {'C', 'S', 'F', 'A', 'C', 'T', 'O', 'R'};
constexpr std::uint32_t kFactorVersion = 1;

}  // namespace

nlohmann::json bpmf_config_to_json(const BpmfConfig& c) {
  return {{"dim", c.dim},
          {"gibbs_iterations", c.gibbs_iterations},
          {"burn_in", c.burn_in},
          {"beta0", c.beta0},
          {"nu0", c.nu0},
          {"observation_precision", c.observation_precision},
          {"init", to_string(c.init)},
          {"init_sigma", c.init_sigma},
          {"map_sweeps", c.map_sweeps},
          {"map_lambda", c.map_lambda},
          {"seed", c.seed}};
}

BpmfConfig bpmf_config_from_json(const nlohmann::json& j) {
  BpmfConfig c;
  c.dim = j.at("dim").get<int>();
  c.gibbs_iterations = j.at("gibbs_iterations").get<int>();
  c.burn_in = j.at("burn_in").get<int>();
  c.beta0 = j.at("beta0").get<double>();
  c.nu0 = j.at("nu0").get<double>();
  c.observation_precision = j.at("observation_precision").get<double>();
  c.init = parse_bpmf_init(j.at("init").get<std::string>());
  c.init_sigma = j.at("init_sigma").get<double>();
  c.map_sweeps = j.at("map_sweeps").get<int>();
  c.map_lambda = j.at("map_lambda").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string to_string(BpmfInit init) { return init == BpmfInit::map ? "map" : "noise"; }

BpmfInit parse_bpmf_init(std::string_view text) {
  if (text == "map") return BpmfInit::map;
  if (text == "noise") return BpmfInit::noise;
  throw ConfigError("bpmf init must be 'map' or 'noise', got '" + std::string(text) + "'");
}

void BpmfConfig::validate() const {
  if (dim < 1) throw ConfigError("bpmf dim must be positive");
  if (gibbs_iterations < 1) throw ConfigError("bpmf gibbs_iterations must be positive");
  if (burn_in < 0 || burn_in >= gibbs_iterations) throw ConfigError("bpmf burn_in must lie in [0, gibbs_iterations)");
  if (!(beta0 > 0.0)) throw ConfigError("bpmf beta0 must be positive");
  if (effective_nu0() < dim) throw ConfigError("bpmf nu0 must be >= dim");
  if (!(observation_precision > 0.0)) throw ConfigError("bpmf observation_precision must be positive");
  if (!(init_sigma > 0.0)) throw ConfigError("bpmf init_sigma must be positive");
}

double clip_rating(double r) { return std::clamp(r, 1.0, 5.0); }

FactorSet train_bpmf(std::span<const RatingRecord> ratings, int user_count, int movie_count, const BpmfConfig& config,
                     BpmfStats* stats) {
  config.validate();
  if (user_count < 1 || movie_count < 1) throw DataError("train_bpmf: empty rating matrix");
  for (const auto& r : ratings) {
    if (r.user < 0 || r.user >= user_count || r.movie < 0 || r.movie >= movie_count) {
      throw DataError("train_bpmf: rating index out of range");
    }
  }
  const auto d = static_cast<std::size_t>(config.dim);
  Rng rng(config.seed);
  const Adjacency by_user = build_adjacency(ratings, user_count, true);
  const Adjacency by_movie = build_adjacency(ratings, movie_count, false);

  std::vector<int> active_users;
  std::vector<int> active_movies;
  for (int u = 0; u < user_count; ++u)
    if (!by_user.empty_row(u)) active_users.push_back(u);
  for (int m = 0; m < movie_count; ++m)
    if (!by_movie.empty_row(m)) active_movies.push_back(m);

  Matrix users(static_cast<std::size_t>(user_count), d);
  Matrix movies(static_cast<std::size_t>(movie_count), d);
  for (int u : active_users)
    for (double& v : users.row(static_cast<std::size_t>(u))) v = config.init_sigma * standard_normal(rng);
  for (int m : active_movies)
    for (double& v : movies.row(static_cast<std::size_t>(m))) v = config.init_sigma * standard_normal(rng);

  int regularized = 0;
  if (config.init == BpmfInit::map) {
    for (int s = 0; s < config.map_sweeps; ++s) {
      ridge_rows(users, movies, by_user, config, regularized);
      ridge_rows(movies, users, by_movie, config, regularized);
    }
  }

  Matrix user_sum(static_cast<std::size_t>(user_count), d);
  Matrix movie_sum(static_cast<std::size_t>(movie_count), d);
  int kept = 0;
  if (stats) stats->sample_train_rmse.clear();
  for (int it = 0; it < config.gibbs_iterations; ++it) {
    const Hyper user_hyper = sample_hyper(users, active_users, config, rng);
    const Hyper movie_hyper = sample_hyper(movies, active_movies, config, rng);
    sample_rows(users, movies, by_user, user_hyper, config, rng, regularized);
    sample_rows(movies, users, by_movie, movie_hyper, config, rng, regularized);
    if (it >= config.burn_in) {
      for (std::size_t i = 0; i < users.size(); ++i) user_sum.values()[i] += users.values()[i];
      for (std::size_t i = 0; i < movies.size(); ++i) movie_sum.values()[i] += movies.values()[i];
      ++kept;
    }
    if (stats) stats->sample_train_rmse.push_back(train_rmse(ratings, users, movies));
  }

  FactorSet fs;
  fs.dim = config.dim;
  fs.config = config;
  fs.user_factors = (1.0 / kept) * user_sum;
  fs.movie_factors = (1.0 / kept) * movie_sum;
  if (!fs.user_factors.all_finite() || !fs.movie_factors.all_finite()) {
    throw NumericsError("train_bpmf: non-finite factors");
  }
  fs.user_trained.assign(static_cast<std::size_t>(user_count), 0);
  double scale = 0.0;
  for (int u : active_users) {
    fs.user_trained[static_cast<std::size_t>(u)] = 1;
    for (double v : fs.user_factors.row(static_cast<std::size_t>(u))) scale = std::max(scale, std::abs(v));
  }
  fs.user_scale = scale > 0.0 ? scale : 1.0;
  if (stats) {
    stats->regularized_draws = regularized;
    stats->averaged_train_rmse = train_rmse(ratings, fs.user_factors, fs.movie_factors);
  }
  return fs;
}

FactorSet train_bpmf(const RatingsDataset& dataset, const EvaluationSplit& split, const BpmfConfig& config,
                     BpmfStats* stats) {
  std::vector<RatingRecord> train;
  for (int u : split.train_users) {
    const auto rs = dataset.user_ratings(u);
    train.insert(train.end(), rs.begin(), rs.end());
  }
  return train_bpmf(train, dataset.user_count(), dataset.movie_count(), config, stats);
}

double predict_rating(const FactorSet& factors, std::span<const double> user_vector, int movie) {
  if (movie < 0 || movie >= factors.movie_count()) {
    throw DataError("predict_rating: unknown movie index " + std::to_string(movie));
  }
  return clip_rating(dot(user_vector, factors.movie_factors.row(static_cast<std::size_t>(movie))));
}

Vector scaled_user_target(const FactorSet& factors, int user) {
  if (user < 0 || user >= factors.user_count() || !factors.user_trained[static_cast<std::size_t>(user)]) {
    throw DataError("scaled_user_target: user " + std::to_string(user) + " has no trained factor");
  }
  auto row = factors.user_factors.row(static_cast<std::size_t>(user));
  Vector out(row.begin(), row.end());
  for (double& v : out) v /= factors.user_scale;
  return out;
}

void save_factors(const FactorSet& factors, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  BinaryWriter w(out);
  w.raw(std::string_view(kFactorMagic, sizeof kFactorMagic));
  w.u32(kFactorVersion);
  w.string(bpmf_config_to_json(factors.config).dump());
  w.u64(static_cast<std::uint64_t>(factors.dim));
  w.u64(static_cast<std::uint64_t>(factors.user_count()));
  w.u64(static_cast<std::uint64_t>(factors.movie_count()));
  w.f64(factors.user_scale);
  std::string trained(factors.user_trained.begin(), factors.user_trained.end());
  w.string(trained);
  w.doubles(factors.user_factors.values());
  w.doubles(factors.movie_factors.values());
  if (!out) throw ArtifactError("failed writing " + path.string());
}

FactorSet load_factors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("factor checkpoint " + path.string() + " not found (run `coldstart bpmf-train`)");
  BinaryReader r(in, path.string());
  if (r.raw(sizeof kFactorMagic) != std::string_view(kFactorMagic, sizeof kFactorMagic)) {
    throw ArtifactError(path.string() + ": not a factor checkpoint");
  }
  if (const auto v = r.u32(); v != kFactorVersion) {
    throw ArtifactError(path.string() + ": unsupported factor checkpoint version " + std::to_string(v));
  }
  FactorSet fs;
  fs.config = bpmf_config_from_json(nlohmann::json::parse(r.string()));
  fs.dim = static_cast<int>(r.u64());
  const auto users = r.u64();
  const auto movies = r.u64();
  fs.user_scale = r.f64();
  const std::string trained = r.string();
  fs.user_trained.assign(trained.begin(), trained.end());
  if (fs.user_trained.size() != users) throw ArtifactError(path.string() + ": corrupt user table");
  fs.user_factors = Matrix(users, static_cast<std::size_t>(fs.dim));
  fs.movie_factors = Matrix(movies, static_cast<std::size_t>(fs.dim));
  r.doubles_into(fs.user_factors.values());
  r.doubles_into(fs.movie_factors.values());
  return fs;
}

}  // namespace coldstart

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coldstart {

// One observation in dense index space.
struct RatingRecord {
  int user = 0;
  int movie = 0;
  int rating = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const RatingRecord&, const RatingRecord&) = default;
};

// One observation keyed by the original (sparse) MovieLens identifiers.
struct RawRating {
  std::int64_t user_id = 0;
  std::int64_t movie_id = 0;
  int rating = 0;
  std::int64_t timestamp = 0;
  std::size_t line = 0;  // source line for diagnostics, 0 if synthetic
};

struct MovieInfo {
  std::int64_t external_id = 0;
  std::string title;  // UTF-8
  std::vector<std::string> genres;

  friend bool operator==(const MovieInfo&, const MovieInfo&) = default;
};

struct MovieRating {
  int movie = 0;
  int rating = 0;

  friend bool operator==(const MovieRating&, const MovieRating&) = default;
};

// Immutable ratings table with dense 0-based user and movie indices. Users and
// movies are numbered in ascending order of their original identifiers; ratings
// are stored sorted by (user, movie).
class RatingsDataset {
 public:
  RatingsDataset() = default;

  // Validates (rating range, duplicate pairs) and remaps identifiers. Movies
  // without metadata get a placeholder title.
  static RatingsDataset from_raw(std::vector<RawRating> raw, const std::vector<MovieInfo>& catalog);

  int user_count() const { return static_cast<int>(user_ids_.size()); }
  int movie_count() const { return static_cast<int>(movies_.size()); }
  std::size_t rating_count() const { return ratings_.size(); }
  double global_mean() const { return global_mean_; }

  std::span<const RatingRecord> ratings() const { return ratings_; }
  std::span<const RatingRecord> user_ratings(int user) const;
  std::optional<int> rating(int user, int movie) const;

  const MovieInfo& movie(int index) const;
  std::int64_t user_external_id(int index) const;
  std::optional<int> movie_index(std::int64_t external_id) const;
  std::span<const int> rating_counts_per_movie() const { return movie_rating_counts_; }

  // Dataset restricted to the given users; movies left without ratings are dropped
  // and everything is re-indexed.
  RatingsDataset subsample_users(std::span<const int> users) const;

  // FNV-1a over the original-identifier triples; stable across re-indexing.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::int64_t> user_ids_;
  std::vector<MovieInfo> movies_;
  std::vector<RatingRecord> ratings_;
  std::vector<std::size_t> user_offsets_;
  std::vector<int> movie_rating_counts_;
  double global_mean_ = 0.0;
};

// Parses MovieLens 1M `ratings.dat` (UserID::MovieID::Rating::Timestamp) and,
// when `movies_path` is non-empty, `movies.dat` (MovieID::Title::Genres, ISO-8859-1).
RatingsDataset load_movielens(const std::filesystem::path& ratings_path,
                              const std::filesystem::path& movies_path);

// Returns the user's ratings sorted by movie index, optionally filtered.
std::vector<MovieRating> ratings_of(const RatingsDataset& dataset, int user,
                                    std::optional<std::span<const int>> restrict_to = std::nullopt);

// Text record stream, format "coldstart-dataset 1". See docs/formats.md.
void save_dataset_cache(const RatingsDataset& dataset, const std::filesystem::path& path);
RatingsDataset load_dataset_cache(const std::filesystem::path& path);
// kind<TAB>dense_index<TAB>original_id, one line per user and movie.
void save_index_mapping(const RatingsDataset& dataset, const std::filesystem::path& path);

// Latin-1 bytes to UTF-8; input that already is valid UTF-8 passes through.
std::string latin1_to_utf8(std::string_view text);

struct EvaluationSplit {
  std::vector<int> train_users;  // all vectors sorted ascending
  std::vector<int> test_users;
  std::vector<int> interview_movies;
  std::vector<int> test_movies;
  std::uint64_t seed = 0;
  double user_fraction = 0.75;
  double movie_fraction = 0.75;

  bool is_train_user(int user) const { return user_is_train_[static_cast<std::size_t>(user)] != 0; }
  bool is_test_movie(int movie) const { return movie_is_test_[static_cast<std::size_t>(movie)] != 0; }
  int user_count() const { return static_cast<int>(user_is_train_.size()); }
  int movie_count() const { return static_cast<int>(movie_is_test_.size()); }

  // Rebuilds membership tables from the four lists; validates the partitions.
  void index(int user_count, int movie_count);

 private:
  std::vector<std::uint8_t> user_is_train_;
  std::vector<std::uint8_t> movie_is_test_;
};

// Seeded shuffle of users and of movies; the first floor(fraction·n) entries of
// each shuffle become the train users / interview movies.
EvaluationSplit make_split(int user_count, int movie_count, std::uint64_t seed,
                           double user_fraction = 0.75, double movie_fraction = 0.75);
EvaluationSplit make_split(const RatingsDataset& dataset, std::uint64_t seed,
                           double user_fraction = 0.75, double movie_fraction = 0.75);

void save_split(const EvaluationSplit& split, std::uint64_t dataset_fingerprint,
                const std::filesystem::path& path);
EvaluationSplit load_split(const std::filesystem::path& path, const RatingsDataset& dataset);

}  // namespace coldstart

#include "coldstart/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "coldstart/binary_io.hpp"
#include "coldstart/error.hpp"
#include "coldstart/numerics.hpp"

namespace coldstart {

namespace {

std::vector<std::string_view> split_on(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  while (!text.empty() && (text.front() == ' ')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    if (c < 0x80) extra = 0;
    else if ((c & 0xE0) == 0xC0) extra = 1;
    else if ((c & 0xF0) == 0xE0) extra = 2;
    else if ((c & 0xF8) == 0xF0) extra = 3;
    else return false;
    if (i + extra >= s.size() && extra > 0) return false;
    for (std::size_t k = 1; k <= extra; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    i += extra + 1;
  }
  return true;
}

}  // namespace

std::string latin1_to_utf8(std::string_view text) {
  if (valid_utf8(text)) return std::string(text);
  std::string out;
  out.reserve(text.size() + 8);
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80) {
      out.push_back(ch);
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

RatingsDataset RatingsDataset::from_raw(std::vector<RawRating> raw, const std::vector<MovieInfo>& catalog) {
  if (raw.empty()) throw DataError("dataset contains no ratings");

  std::vector<std::int64_t> users;
  std::vector<std::int64_t> movies;
  users.reserve(raw.size());
  movies.reserve(raw.size());
  for (const RawRating& r : raw) {
    if (r.rating < 1 || r.rating > 5) {
      throw DataError("rating " + std::to_string(r.rating) + " outside 1..5 (line " + std::to_string(r.line) + ")");
    }
    users.push_back(r.user_id);
    movies.push_back(r.movie_id);
  }
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::sort(movies.begin(), movies.end());
  movies.erase(std::unique(movies.begin(), movies.end()), movies.end());

  auto index_of = [](const std::vector<std::int64_t>& ids, std::int64_t id) {
    return static_cast<int>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };

  RatingsDataset ds;
  ds.user_ids_ = users;
  std::unordered_map<std::int64_t, const MovieInfo*> by_id;
  for (const MovieInfo& m : catalog) by_id.emplace(m.external_id, &m);
  ds.movies_.reserve(movies.size());
  for (std::int64_t id : movies) {
    auto it = by_id.find(id);
    if (it != by_id.end()) {
      ds.movies_.push_back(*it->second);
    } else {
      ds.movies_.push_back(MovieInfo{id, "movie " + std::to_string(id), {}});
    }
  }

  ds.ratings_.reserve(raw.size());
  std::vector<std::size_t> lines;
  lines.reserve(raw.size());
  for (const RawRating& r : raw) {
    ds.ratings_.push_back({index_of(users, r.user_id), index_of(movies, r.movie_id), r.rating, r.timestamp});
    lines.push_back(r.line);
  }
  std::vector<std::size_t> order(ds.ratings_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = ds.ratings_[a];
    const auto& y = ds.ratings_[b];
    return std::tie(x.user, x.movie) < std::tie(y.user, y.movie);
  });
  std::vector<RatingRecord> sorted;
  sorted.reserve(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const RatingRecord& rec = ds.ratings_[order[k]];
    if (!sorted.empty() && sorted.back().user == rec.user && sorted.back().movie == rec.movie) {
      throw DataError("duplicate rating for user " + std::to_string(users[rec.user]) + ", movie " +
                      std::to_string(movies[rec.movie]) + " (line " + std::to_string(lines[order[k]]) + ")");
    }
    sorted.push_back(rec);
  }
  ds.ratings_ = std::move(sorted);

  ds.user_offsets_.assign(users.size() + 1, 0);
  ds.movie_rating_counts_.assign(movies.size(), 0);
  double sum = 0.0;
  for (const RatingRecord& r : ds.ratings_) {
    ++ds.user_offsets_[static_cast<std::size_t>(r.user) + 1];
    ++ds.movie_rating_counts_[static_cast<std::size_t>(r.movie)];
    sum += r.rating;
  }
  std::partial_sum(ds.user_offsets_.begin(), ds.user_offsets_.end(), ds.user_offsets_.begin());
  ds.global_mean_ = sum / static_cast<double>(ds.ratings_.size());
  return ds;
}

std::span<const RatingRecord> RatingsDataset::user_ratings(int user) const {
  if (user < 0 || user >= user_count()) throw DataError("unknown user index " + std::to_string(user));
  const auto begin = user_offsets_[static_cast<std::size_t>(user)];
  const auto end = user_offsets_[static_cast<std::size_t>(user) + 1];
  return std::span<const RatingRecord>(ratings_).subspan(begin, end - begin);
}

std::optional<int> RatingsDataset::rating(int user, int movie) const {
  const auto rs = user_ratings(user);
  auto it = std::lower_bound(rs.begin(), rs.end(), movie,
                             [](const RatingRecord& r, int m) { return r.movie < m; });
  if (it != rs.end() && it->movie == movie) return it->rating;
  return std::nullopt;
}

const MovieInfo& RatingsDataset::movie(int index) const {
  if (index < 0 || index >= movie_count()) throw DataError("unknown movie index " + std::to_string(index));
  return movies_[static_cast<std::size_t>(index)];
}

std::int64_t RatingsDataset::user_external_id(int index) const {
  if (index < 0 || index >= user_count()) throw DataError("unknown user index " + std::to_string(index));
  return user_ids_[static_cast<std::size_t>(index)];
}

std::optional<int> RatingsDataset::movie_index(std::int64_t external_id) const {
  auto it = std::lower_bound(movies_.begin(), movies_.end(), external_id,
                             [](const MovieInfo& m, std::int64_t id) { return m.external_id < id; });
  if (it != movies_.end() && it->external_id == external_id) return static_cast<int>(it - movies_.begin());
  return std::nullopt;
}

RatingsDataset RatingsDataset::subsample_users(std::span<const int> users) const {
  std::vector<RawRating> raw;
  for (int u : users) {
    for (const RatingRecord& r : user_ratings(u)) {
      raw.push_back({user_ids_[static_cast<std::size_t>(u)], movies_[static_cast<std::size_t>(r.movie)].external_id,
                     r.rating, r.timestamp, 0});
    }
  }
  return from_raw(std::move(raw), movies_);
}

std::uint64_t RatingsDataset::fingerprint() const {
  Fnv1a h;
  for (const RatingRecord& r : ratings_) {
    h.value(user_ids_[static_cast<std::size_t>(r.user)]);
    h.value(movies_[static_cast<std::size_t>(r.movie)].external_id);
    h.value(static_cast<std::int64_t>(r.rating));
    h.value(r.timestamp);
  }
  return h.digest();
}

RatingsDataset load_movielens(const std::filesystem::path& ratings_path, const std::filesystem::path& movies_path) {
  std::vector<MovieInfo> catalog;
  if (!movies_path.empty()) {
    std::ifstream in = open_input(movies_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto fields = split_on(line, "::");
      if (fields.size() != 3) {
        throw DataError(location(movies_path, line_no) + ": expected MovieID::Title::Genres");
      }
      MovieInfo info;
      if (!parse_int(fields[0], info.external_id)) {
        throw DataError(location(movies_path, line_no) + ": bad movie id");
      }
      info.title = latin1_to_utf8(fields[1]);
      if (!fields[2].empty())
        for (auto g : split_on(fields[2], "|")) info.genres.emplace_back(latin1_to_utf8(g));
      catalog.push_back(std::move(info));
    }
  }

  std::ifstream in = open_input(ratings_path);
  std::vector<RawRating> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_on(line, "::");
    RawRating r;
    r.line = line_no;
    if (fields.size() != 4 || !parse_int(fields[0], r.user_id) || !parse_int(fields[1], r.movie_id) ||
        !parse_int(fields[2], r.rating) || !parse_int(fields[3], r.timestamp)) {
      throw DataError(location(ratings_path, line_no) + ": malformed line, expected UserID::MovieID::Rating::Timestamp");
    }
    if (r.rating < 1 || r.rating > 5) {
      throw DataError(location(ratings_path, line_no) + ": rating " + std::to_string(r.rating) + " outside 1..5");
    }
    raw.push_back(r);
  }
  try {
    return RatingsDataset::from_raw(std::move(raw), catalog);
  } catch (const DataError& e) {
    throw DataError(ratings_path.filename().string() + ": " + e.what());
  }
}

std::vector<MovieRating> ratings_of(const RatingsDataset& dataset, int user,
                                    std::optional<std::span<const int>> restrict_to) {
  std::vector<MovieRating> out;
  const auto rs = dataset.user_ratings(user);
  if (restrict_to) {
    const std::unordered_set<int> keep(restrict_to->begin(), restrict_to->end());
    for (const RatingRecord& r : rs)
      if (keep.contains(r.movie)) out.push_back({r.movie, r.rating});
  } else {
    for (const RatingRecord& r : rs) out.push_back({r.movie, r.rating});
  }
  return out;  // storage order is already by movie index
}

void save_dataset_cache(const RatingsDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << "coldstart-dataset\t1\n";
  out << "counts\t" << dataset.user_count() << '\t' << dataset.movie_count() << '\t' << dataset.rating_count()
      << '\n';
  for (int u = 0; u < dataset.user_count(); ++u) out << "user\t" << u << '\t' << dataset.user_external_id(u) << '\n';
  for (int m = 0; m < dataset.movie_count(); ++m) {
    const MovieInfo& info = dataset.movie(m);
    if (info.title.find_first_of("\t\n") != std::string::npos) {
      throw ArtifactError("movie title contains a tab or newline: " + info.title);
    }
    out << "movie\t" << m << '\t' << info.external_id << '\t' << info.title << '\t';
    for (std::size_t g = 0; g < info.genres.size(); ++g) out << (g ? "|" : "") << info.genres[g];
    out << '\n';
  }
  for (const RatingRecord& r : dataset.ratings()) {
    out << "rating\t" << r.user << '\t' << r.movie << '\t' << r.rating << '\t' << r.timestamp << '\n';
  }
  if (!out) throw ArtifactError("failed writing " + path.string());
}

RatingsDataset load_dataset_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("dataset cache " + path.string() + " not found (run `coldstart ingest`)");
  std::string line;
  if (!std::getline(in, line) || line != "coldstart-dataset\t1") {
    throw ArtifactError(path.string() + ": not a version-1 dataset cache");
  }
  std::size_t line_no = 1;
  long long users = -1, movies = -1, count = -1;
  std::vector<std::int64_t> user_ids;
  std::vector<MovieInfo> catalog;
  std::vector<RawRating> raw;
  auto bad = [&](const std::string& why) { return ArtifactError(location(path, line_no) + ": " + why); };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_on(line, "\t");
    if (f[0] == "counts" && f.size() == 4) {
      if (!parse_int(f[1], users) || !parse_int(f[2], movies) || !parse_int(f[3], count)) throw bad("bad counts");
      user_ids.resize(static_cast<std::size_t>(users));
      catalog.resize(static_cast<std::size_t>(movies));
    } else if (f[0] == "user" && f.size() == 3) {
      int idx;
      std::int64_t id;
      if (!parse_int(f[1], idx) || !parse_int(f[2], id) || idx < 0 || idx >= users) throw bad("bad user row");
      user_ids[static_cast<std::size_t>(idx)] = id;
    } else if (f[0] == "movie" && f.size() == 5) {
      int idx;
      MovieInfo info;
      if (!parse_int(f[1], idx) || !parse_int(f[2], info.external_id) || idx < 0 || idx >= movies) {
        throw bad("bad movie row");
      }
      info.title = std::string(f[3]);
      if (!f[4].empty())
        for (auto g : split_on(f[4], "|")) info.genres.emplace_back(g);
      catalog[static_cast<std::size_t>(idx)] = std::move(info);
    } else if (f[0] == "rating" && f.size() == 5) {
      int u, m;
      RawRating r;
      if (!parse_int(f[1], u) || !parse_int(f[2], m) || !parse_int(f[3], r.rating) || !parse_int(f[4], r.timestamp) ||
          u < 0 || u >= users || m < 0 || m >= movies) {
        throw bad("bad rating row");
      }
      r.user_id = user_ids[static_cast<std::size_t>(u)];
      r.movie_id = catalog[static_cast<std::size_t>(m)].external_id;
      r.line = line_no;
      raw.push_back(r);
    } else {
      throw bad("unrecognized record");
    }
  }
  if (count < 0 || static_cast<long long>(raw.size()) != count) throw ArtifactError(path.string() + ": rating count mismatch");
  RatingsDataset ds = RatingsDataset::from_raw(std::move(raw), catalog);
  if (ds.user_count() != users || ds.movie_count() != movies) {
    throw ArtifactError(path.string() + ": user/movie count mismatch after reload");
  }
  return ds;
}

void save_index_mapping(const RatingsDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << "kind\tindex\toriginal_id\n";
  for (int u = 0; u < dataset.user_count(); ++u) out << "user\t" << u << '\t' << dataset.user_external_id(u) << '\n';
  for (int m = 0; m < dataset.movie_count(); ++m)
    out << "movie\t" << m << '\t' << dataset.movie(m).external_id << '\n';
}

void EvaluationSplit::index(int user_count, int movie_count) {
  user_is_train_.assign(static_cast<std::size_t>(user_count), 2);
  movie_is_test_.assign(static_cast<std::size_t>(movie_count), 2);
  auto mark = [](std::vector<std::uint8_t>& table, const std::vector<int>& items, std::uint8_t value,
                 const char* what) {
    for (int i : items) {
      if (i < 0 || static_cast<std::size_t>(i) >= table.size()) {
        throw DataError(std::string("split: ") + what + " index out of range");
      }
      if (table[static_cast<std::size_t>(i)] != 2) throw DataError(std::string("split: ") + what + " listed twice");
      table[static_cast<std::size_t>(i)] = value;
    }
  };
  mark(user_is_train_, train_users, 1, "user");
  mark(user_is_train_, test_users, 0, "user");
  mark(movie_is_test_, interview_movies, 0, "movie");
  mark(movie_is_test_, test_movies, 1, "movie");
  for (auto v : user_is_train_)
    if (v == 2) throw DataError("split: users do not cover the dataset");
  for (auto v : movie_is_test_)
    if (v == 2) throw DataError("split: movies do not cover the dataset");
}

EvaluationSplit make_split(int user_count, int movie_count, std::uint64_t seed, double user_fraction,
                           double movie_fraction) {
  if (user_count < 2 || movie_count < 2) throw DataError("make_split: need at least 2 users and 2 movies");
  if (!(user_fraction > 0.0 && user_fraction < 1.0) || !(movie_fraction > 0.0 && movie_fraction < 1.0)) {
    throw DataError("make_split: fractions must lie in (0, 1)");
  }
  Rng rng(seed);
  auto partition = [&rng](int n, double fraction, std::vector<int>& head, std::vector<int>& tail) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto take = static_cast<std::size_t>(std::floor(fraction * n));
    take = std::clamp<std::size_t>(take, 1, static_cast<std::size_t>(n) - 1);
    head.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    tail.assign(order.begin() + static_cast<std::ptrdiff_t>(take), order.end());
    std::sort(head.begin(), head.end());
    std::sort(tail.begin(), tail.end());
  };
  EvaluationSplit split;
  split.seed = seed;
  split.user_fraction = user_fraction;
  split.movie_fraction = movie_fraction;
  partition(user_count, user_fraction, split.train_users, split.test_users);
  partition(movie_count, movie_fraction, split.interview_movies, split.test_movies);
  split.index(user_count, movie_count);
  return split;
}

EvaluationSplit make_split(const RatingsDataset& dataset, std::uint64_t seed, double user_fraction,
                           double movie_fraction) {
  return make_split(dataset.user_count(), dataset.movie_count(), seed, user_fraction, movie_fraction);
}

void save_split(const EvaluationSplit& split, std::uint64_t dataset_fingerprint, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "coldstart-split";
  j["version"] = 1;
  j["dataset_fingerprint"] = hex64(dataset_fingerprint);
  j["seed"] = split.seed;
  j["user_fraction"] = split.user_fraction;
  j["movie_fraction"] = split.movie_fraction;
  j["train_users"] = split.train_users;
  j["test_users"] = split.test_users;
  j["interview_movies"] = split.interview_movies;
  j["test_movies"] = split.test_movies;
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << j.dump() << '\n';
}

EvaluationSplit load_split(const std::filesystem::path& path, const RatingsDataset& dataset) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("split file " + path.string() + " not found (run `coldstart split`)");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "coldstart-split" || j.value("version", 0) != 1) {
    throw ArtifactError(path.string() + ": not a version-1 split file");
  }
  if (j.value("dataset_fingerprint", "") != hex64(dataset.fingerprint())) {
    throw ArtifactError(path.string() + ": split was made for a different dataset (re-run `coldstart split`)");
  }
  EvaluationSplit split;
  split.seed = j.at("seed").get<std::uint64_t>();
  split.user_fraction = j.at("user_fraction").get<double>();
  split.movie_fraction = j.at("movie_fraction").get<double>();
  split.train_users = j.at("train_users").get<std::vector<int>>();
  split.test_users = j.at("test_users").get<std::vector<int>>();
  split.interview_movies = j.at("interview_movies").get<std::vector<int>>();
  split.test_movies = j.at("test_movies").get<std::vector<int>>();
  split.index(dataset.user_count(), dataset.movie_count());
  return split;
}

}  // namespace coldstart

#pragma once

// Reference computations written independently of the library code paths they
// check: plain loops over raw records, no shared helpers.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <tuple>
#include <vector>

#include "coldstart/layers.hpp"

namespace coldstart::testing {

struct RawCounts {
  std::size_t users = 0;
  std::size_t movies = 0;
  std::size_t ratings = 0;
  double mean = 0.0;
};

// One pass over a `::`-separated ratings file with sscanf.
RawCounts scan_ratings_file(const std::filesystem::path& path);

using Triple = std::tuple<std::int64_t, std::int64_t, int>;  // user id, movie id, rating

// RMSE of predicting each held-out rating by the user's mean training rating
// (global training mean for users with no training ratings).
double per_user_mean_rmse(const std::vector<Triple>& train, const std::vector<Triple>& holdout);

// sqrt(mean squared error) over all triples whose user is in `users` and movie
// in `movies`, accumulated in long double.
double brute_force_rmse(const std::vector<Triple>& ratings, const std::set<std::int64_t>& users,
                        const std::set<std::int64_t>& movies,
                        const std::function<double(std::int64_t user, std::int64_t movie)>& predict);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

// Central differences (step h) on up to `per_group` random coordinates of every
// parameter group, every coordinate when the group is smaller. Relative error
// is |a − n| / max(|a|, |n|, floor).
GradientCheck check_gradients(const ParameterList& params, const GradientList& analytic,
                              const std::function<double()>& loss, std::uint64_t seed, std::size_t per_group,
                              double h = 1e-5, double floor = 1e-6);

}  // namespace coldstart::testing

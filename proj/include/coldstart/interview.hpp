#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "coldstart/dataset.hpp"
#include "coldstart/numerics.hpp"

namespace coldstart {

inline constexpr int kDefaultActionCount = 100;

// The fixed set of movies the interviewer may ask about, ordered by descending
// rating count with ties broken by ascending movie index.
class ActionSpace {
 public:
  ActionSpace() = default;
  explicit ActionSpace(std::vector<int> movies);

  int size() const { return static_cast<int>(movies_.size()); }
  int movie_at(int slot) const { return movies_.at(static_cast<std::size_t>(slot)); }
  // -1 when the movie is not an action.
  int slot_of(int movie) const;
  const std::vector<int>& movies() const { return movies_; }

  friend bool operator==(const ActionSpace& a, const ActionSpace& b) { return a.movies_ == b.movies_; }

 private:
  std::vector<int> movies_;
  std::unordered_map<int, int> position_of_;
};

ActionSpace build_action_space(const RatingsDataset& dataset, int size = kDefaultActionCount);

// Question-answer encoding over the action space: entry 2i is the asked flag
// of slot i, entry 2i+1 its answer divided by 5 (0 for "not seen" and for
// slots not asked yet). Question order is not represented.
class InterviewState {
 public:
  InterviewState() = default;
  explicit InterviewState(int action_count) : values_(2 * static_cast<std::size_t>(action_count), 0.0) {}

  int action_count() const { return static_cast<int>(values_.size() / 2); }
  std::span<const double> values() const { return values_; }
  bool asked(int slot) const { return values_.at(2 * static_cast<std::size_t>(slot)) != 0.0; }
  double encoded_answer(int slot) const { return values_.at(2 * static_cast<std::size_t>(slot) + 1); }
  int asked_count() const;
  std::vector<bool> asked_mask() const;

  // Throws InterviewError on a repeated slot or a rating outside 0..5.
  InterviewState step(int slot, int rating) const;

  friend bool operator==(const InterviewState&, const InterviewState&) = default;

 private:
  std::vector<double> values_;
};

InterviewState initial_state(int action_count = kDefaultActionCount);
inline InterviewState step(const InterviewState& state, int slot, int rating) { return state.step(slot, rating); }

enum class AnswerMode { train, test };

// Test mode hides every test-set movie (answered as unseen); otherwise the
// user's rating, or 0 when the user has not rated the movie.
int simulate_answer(const RatingsDataset& dataset, const EvaluationSplit& split, int user, int movie, AnswerMode mode);

struct TrajectoryStep {
  InterviewState before;
  int slot = 0;
  int rating = 0;
  InterviewState after;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  InterviewState terminal_state;
  int k = 0;

  std::vector<int> slots() const;
};

// Chooses a slot given the current state.
using Policy = std::function<int(const InterviewState&)>;
// Answers a question about the given movie index with a rating in 0..5.
using AnswerSource = std::function<int(int movie)>;

// Runs k questions. A policy that proposes an already-asked slot is redirected
// to the lowest unasked slot, so questions never repeat.
Trajectory run_interview(const ActionSpace& actions, const Policy& policy, const AnswerSource& answers, int k);

}  // namespace coldstart

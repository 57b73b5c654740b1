#include "coldstart/interview.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "coldstart/error.hpp"

namespace coldstart {

ActionSpace::ActionSpace(std::vector<int> movies) : movies_(std::move(movies)) {
  for (std::size_t i = 0; i < movies_.size(); ++i) {
    if (!position_of_.emplace(movies_[i], static_cast<int>(i)).second) {
      throw InterviewError("action space lists movie " + std::to_string(movies_[i]) + " twice");
    }
  }
}

int ActionSpace::slot_of(int movie) const {
  auto it = position_of_.find(movie);
  return it == position_of_.end() ? -1 : it->second;
}

ActionSpace build_action_space(const RatingsDataset& dataset, int size) {
  if (size < 1) throw InterviewError("action space size must be positive");
  if (dataset.movie_count() < size) {
    throw InterviewError("action space needs " + std::to_string(size) + " movies, dataset has " +
                         std::to_string(dataset.movie_count()));
  }
  const auto counts = dataset.rating_counts_per_movie();
  std::vector<int> order(static_cast<std::size_t>(dataset.movie_count()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const int ca = counts[static_cast<std::size_t>(a)];
    const int cb = counts[static_cast<std::size_t>(b)];
    return ca != cb ? ca > cb : a < b;
  });
  order.resize(static_cast<std::size_t>(size));
  return ActionSpace(std::move(order));
}

int InterviewState::asked_count() const {
  int n = 0;
  for (std::size_t i = 0; i < values_.size(); i += 2) n += values_[i] != 0.0 ? 1 : 0;
  return n;
}

std::vector<bool> InterviewState::asked_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(action_count()));
  for (int s = 0; s < action_count(); ++s) mask[static_cast<std::size_t>(s)] = asked(s);
  return mask;
}

InterviewState InterviewState::step(int slot, int rating) const {
  if (slot < 0 || slot >= action_count()) throw InterviewError("slot " + std::to_string(slot) + " out of range");
  if (rating < 0 || rating > 5) throw InterviewError("rating " + std::to_string(rating) + " outside 0..5");
  if (asked(slot)) throw InterviewError("slot " + std::to_string(slot) + " was already asked");
  InterviewState next = *this;
  next.values_[2 * static_cast<std::size_t>(slot)] = 1.0;
  next.values_[2 * static_cast<std::size_t>(slot) + 1] = static_cast<double>(rating) / 5.0;
  return next;
}

InterviewState initial_state(int action_count) { return InterviewState(action_count); }

int simulate_answer(const RatingsDataset& dataset, const EvaluationSplit& split, int user, int movie,
                    AnswerMode mode) {
  if (mode == AnswerMode::test && split.is_test_movie(movie)) return 0;
  return dataset.rating(user, movie).value_or(0);
}

std::vector<int> Trajectory::slots() const {
  std::vector<int> s;
  s.reserve(steps.size());
  for (const auto& st : steps) s.push_back(st.slot);
  return s;
}

Trajectory run_interview(const ActionSpace& actions, const Policy& policy, const AnswerSource& answers, int k) {
  if (k < 0 || k > actions.size()) {
    throw InterviewError("interview length " + std::to_string(k) + " must lie in [0, " +
                         std::to_string(actions.size()) + "]");
  }
  Trajectory t;
  t.k = k;
  InterviewState state = initial_state(actions.size());
  for (int q = 0; q < k; ++q) {
    int slot = policy(state);
    if (slot < 0 || slot >= actions.size()) throw InterviewError("policy returned invalid slot " + std::to_string(slot));
    if (state.asked(slot)) {
      slot = 0;
      while (state.asked(slot)) ++slot;
    }
    const int rating = answers(actions.movie_at(slot));
    InterviewState next = state.step(slot, rating);
    t.steps.push_back({state, slot, rating, next});
    state = std::move(next);
  }
  t.terminal_state = state;
  return t;
}

}  // namespace coldstart

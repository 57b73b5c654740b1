#include <doctest.h>

#include <set>

#include "coldstart/error.hpp"
#include "coldstart/interview.hpp"
#include "synthetic.hpp"

using namespace coldstart;

namespace {

// movie index m gets `counts[m]` ratings from distinct users
RatingsDataset with_counts(const std::vector<int>& counts) {
  std::vector<RawRating> raw;
  for (std::size_t m = 0; m < counts.size(); ++m)
    for (int u = 0; u < counts[m]; ++u) raw.push_back({u, static_cast<std::int64_t>(m), 3, 0, 0});
  return RatingsDataset::from_raw(raw, {});
}

}  // namespace

TEST_CASE("action space orders movies by rating count") {
  const RatingsDataset d = with_counts({2, 1, 3, 1, 4, 9, 1});
  const ActionSpace a = build_action_space(d, 4);
  CHECK(a.size() == 4);
  CHECK(a.movie_at(0) == 5);
  CHECK(a.movies() == std::vector<int>{5, 4, 2, 0});
  CHECK(a.slot_of(2) == 2);
  CHECK(a.slot_of(1) == -1);
}

TEST_CASE("ties on rating count go to the lower movie index") {
  const RatingsDataset d = with_counts({1, 5, 2, 5});
  const ActionSpace a = build_action_space(d, 3);
  CHECK(a.movies() == std::vector<int>{1, 3, 2});
}

TEST_CASE("initial state") {
  const InterviewState s = initial_state();
  CHECK(s.values().size() == 200);
  for (double v : s.values()) CHECK(v == 0.0);
  CHECK(s.asked_count() == 0);
  for (int slot = 0; slot < 100; ++slot) CHECK_FALSE(s.step(slot, 3) == s);
}

TEST_CASE("step encodes the asked flag and the scaled answer") {
  const InterviewState s = initial_state().step(7, 5);
  CHECK(s.values()[14] == 1.0);
  CHECK(s.values()[15] == 1.0);
  CHECK(s.asked(7));
  CHECK(s.asked_count() == 1);

  const InterviewState unseen = initial_state().step(7, 0);
  CHECK(unseen.values()[14] == 1.0);
  CHECK(unseen.values()[15] == 0.0);

  CHECK(initial_state().step(3, 2).encoded_answer(3) == doctest::Approx(0.4));
}

TEST_CASE("step rejects repeats and out-of-range answers") {
  const InterviewState s = initial_state().step(7, 5);
  CHECK_THROWS_AS(s.step(7, 3), InterviewError);
  CHECK_THROWS_AS(initial_state().step(1, 6), InterviewError);
  CHECK_THROWS_AS(initial_state().step(1, -1), InterviewError);
  CHECK_THROWS_AS(initial_state().step(100, 1), std::exception);
}

TEST_CASE("state does not depend on question order") {
  const InterviewState a = initial_state().step(3, 4).step(9, 0).step(50, 2);
  const InterviewState b = initial_state().step(50, 2).step(3, 4).step(9, 0);
  CHECK(a == b);
}

TEST_CASE("simulated answers hide test movies in test mode") {
  // user 0 rates movies 0..3
  std::vector<RawRating> raw = {{0, 0, 4, 0, 0}, {0, 1, 5, 0, 0}, {0, 2, 2, 0, 0}, {0, 3, 1, 0, 0},
                                {1, 0, 3, 0, 0}, {1, 4, 3, 0, 0}, {2, 1, 1, 0, 0}, {3, 2, 5, 0, 0}};
  const RatingsDataset d = RatingsDataset::from_raw(raw, {});
  EvaluationSplit s;
  s.train_users = {1, 2, 3};
  s.test_users = {0};
  s.interview_movies = {0, 2, 3, 4};
  s.test_movies = {1};
  s.index(4, 5);
  CHECK(simulate_answer(d, s, 0, 0, AnswerMode::test) == 4);
  CHECK(simulate_answer(d, s, 0, 1, AnswerMode::test) == 0);
  CHECK(simulate_answer(d, s, 0, 1, AnswerMode::train) == 5);
  CHECK(simulate_answer(d, s, 0, 4, AnswerMode::test) == 0);
}

TEST_CASE("run_interview asks k distinct questions") {
  const ActionSpace actions(std::vector<int>{10, 11, 12, 13, 14});
  std::vector<int> asked_movies;
  const Trajectory t = run_interview(
      actions, [](const InterviewState&) { return 0; },
      [&](int movie) {
        asked_movies.push_back(movie);
        return 2;
      },
      3);
  CHECK(t.steps.size() == 3);
  CHECK(t.terminal_state.asked_count() == 3);
  CHECK(t.slots() == std::vector<int>{0, 1, 2});
  CHECK(asked_movies == std::vector<int>{10, 11, 12});
  CHECK(t.steps[1].before == t.steps[0].after);

  const Trajectory longer = run_interview(actions, [](const InterviewState&) { return 4; }, [](int) { return 0; }, 4);
  CHECK(longer.slots() == std::vector<int>{4, 0, 1, 2});
  CHECK_THROWS_AS(run_interview(actions, [](const InterviewState&) { return 0; }, [](int) { return 0; }, 6),
                  InterviewError);
}

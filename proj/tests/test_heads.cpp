#include <doctest.h>

#include <cmath>

#include "coldstart/bpmf.hpp"
#include "coldstart/heads.hpp"
#include "coldstart/interview.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace coldstart;

namespace {

FactorSet small_factors(int users, int movies, int dim, Rng& rng) {
  FactorSet f;
  f.dim = dim;
  f.user_factors = Matrix(static_cast<std::size_t>(users), static_cast<std::size_t>(dim));
  f.movie_factors = Matrix(static_cast<std::size_t>(movies), static_cast<std::size_t>(dim));
  for (double& v : f.user_factors.values()) v = standard_normal(rng);
  for (double& v : f.movie_factors.values()) v = 0.5 * standard_normal(rng);
  f.user_trained.assign(static_cast<std::size_t>(users), 1);
  double scale = 0.0;
  for (double v : f.user_factors.values()) scale = std::max(scale, std::abs(v));
  f.user_scale = scale;
  return f;
}

InterviewState random_terminal(Rng& rng, int k = 3) {
  InterviewState s = initial_state();
  while (s.asked_count() < k) {
    const int slot = static_cast<int>(uniform_index(rng, 100));
    if (!s.asked(slot)) s = s.step(slot, static_cast<int>(uniform_index(rng, 6)));
  }
  return s;
}

Vector as_vector(std::span<const double> s) { return Vector(s.begin(), s.end()); }

}  // namespace

TEST_CASE("tower outputs stay inside (-1, 1) and zero weights give zero") {
  Rng rng(1);
  EmbeddingHead head = EmbeddingHead::create(100, 10, rng);
  for (int i = 0; i < 50; ++i) {
    const Vector e = embed_user(head, random_terminal(rng).values(), i % 2 == 0, rng);
    REQUIRE(e.size() == 10);
    for (double v : e) CHECK((v > -1.0 && v < 1.0));
  }
  const InterviewState s = random_terminal(rng);
  Rng a(3), b(4);
  CHECK(embed_user(head, s.values(), false, a) == embed_user(head, s.values(), false, b));
  for (DenseLayer* l : {&head.tower.hidden1, &head.tower.hidden2, &head.tower.output}) {
    for (double& w : l->weights.values()) w = 0.0;
    for (double& v : l->bias) v = 0.0;
  }
  CHECK(embed_user(head, s.values(), true, a) == Vector(10, 0.0));
}

TEST_CASE("embedding loss arithmetic") {
  const Vector t{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  CHECK(embedding_loss(t, t) == 0.0);
  Vector p = t;
  p[4] += 0.1;
  CHECK(embedding_loss(p, t) == doctest::Approx(0.001));
  CHECK(embedding_loss(p, t) == embedding_loss(t, p));
}

TEST_CASE("q-embedding rating prediction") {
  FactorSet f;
  f.dim = 2;
  f.user_scale = 2.0;
  f.user_factors = Matrix(1, 2);
  f.movie_factors = Matrix(1, 2);
  f.movie_factors(0, 0) = 1.0;
  CHECK(predict_rating_qembedding(Vector{0.0, 0.0}, f, 0) == 1.0);
  CHECK(predict_rating_qembedding(Vector{2.1, 0.0}, f, 0) == doctest::Approx(4.2));
}

TEST_CASE("the scaled BPMF target reproduces the BPMF prediction") {
  Rng rng(2);
  const FactorSet f = small_factors(5, 8, 4, rng);
  for (int u = 0; u < 5; ++u) {
    const Vector target = scaled_user_target(f, u);
    for (int m = 0; m < 8; ++m) {
      CHECK(predict_rating_qembedding(target, f, m) ==
            doctest::Approx(predict_rating(f, f.user_factors.row(static_cast<std::size_t>(u)), m)).epsilon(1e-14));
    }
  }
}

TEST_CASE("q-rating prediction is the mean plus an inner product") {
  Rng rng(3);
  FactorSet f = small_factors(2, 3, 10, rng);
  for (double& v : f.movie_factors.values()) v = 0.0;
  f.movie_factors(1, 0) = 0.5;
  const RatingHead head = RatingHead::create(100, f, 3.58, rng);
  Vector user(10, 0.0);
  CHECK(rating_from_embedding(head, user, 1) == 3.58);
  user[0] = 1.0;
  CHECK(rating_from_embedding(head, user, 1) == doctest::Approx(4.08));
}

TEST_CASE("clipped rating loss") {
  CHECK(clipped_rating_loss(5.7, 5) == 0.0);
  CHECK(clipped_rating_loss(0.3, 1) == 0.0);
  CHECK(clipped_rating_loss(3.0, 4) == 1.0);
  CHECK(clipped_rating_loss(6.0, 3) == 4.0);
  CHECK(clipped_rating_loss_gradient(3.0, 4) == -2.0);
  CHECK(clipped_rating_loss_gradient(5.5, 3) == 0.0);
  CHECK(clipped_rating_loss_gradient(0.5, 3) == 0.0);
}

TEST_CASE("embedding head gradients match central differences") {
  for (int instance = 0; instance < 3; ++instance) {
    Rng rng(100 + instance);
    EmbeddingHead head = EmbeddingHead::create(100, 10, rng);
    const FactorSet f = small_factors(6, 5, 10, rng);
    std::vector<EmbeddingSample> batch;
    for (int u = 0; u < 4; ++u) batch.push_back({as_vector(random_terminal(rng).values()), scaled_user_target(f, u)});
    auto loss = [&] {
      Rng mask(55);
      return embedding_head_loss_and_gradients(head, batch, true, mask, nullptr);
    };
    GradientList analytic;
    Rng mask(55);
    embedding_head_loss_and_gradients(head, batch, true, mask, &analytic);
    const auto check = coldstart::testing::check_gradients(head.parameters(), analytic, loss, 7, 200);
    CHECK(check.max_relative_error < 1e-4);
  }
}

TEST_CASE("rating head gradients match central differences through lookup, product and clip") {
  for (int instance = 0; instance < 3; ++instance) {
    Rng rng(200 + instance);
    const FactorSet f = small_factors(4, 30, 10, rng);
    RatingHead head = RatingHead::create(100, f, 3.5, rng);
    std::vector<RatingSample> batch;
    for (int u = 0; u < 4; ++u) {
      RatingSample s{as_vector(random_terminal(rng).values()), {}};
      for (int j = 0; j < 6; ++j) s.ratings.push_back({static_cast<int>(uniform_index(rng, 30)), 1 + static_cast<int>(uniform_index(rng, 5))});
      batch.push_back(s);
    }
    auto loss = [&] {
      Rng mask(66);
      return rating_head_loss_and_gradients(head, batch, true, mask, nullptr);
    };
    GradientList analytic;
    Rng mask(66);
    rating_head_loss_and_gradients(head, batch, true, mask, &analytic);
    const auto check = coldstart::testing::check_gradients(head.parameters(), analytic, loss, 8, 400);
    CHECK(check.max_relative_error < 1e-4);
  }
}

TEST_CASE("head updates lower their training loss") {
  Rng rng(9);
  const FactorSet f = small_factors(8, 20, 10, rng);
  EmbeddingHead e = EmbeddingHead::create(100, 10, rng, 1e-3, 0.0);
  RatingHead r = RatingHead::create(100, f, 3.5, rng, 1e-3, 0.0);
  std::vector<EmbeddingSample> eb;
  std::vector<RatingSample> rb;
  for (int u = 0; u < 8; ++u) {
    const Vector s = as_vector(random_terminal(rng).values());
    eb.push_back({s, scaled_user_target(f, u)});
    rb.push_back({s, {{u, 5}, {u + 8, 1}}});
  }
  const double e0 = embedding_head_loss_and_gradients(e, eb, false, rng, nullptr);
  const double r0 = rating_head_loss_and_gradients(r, rb, false, rng, nullptr);
  for (int i = 0; i < 200; ++i) {
    update_embedding_head(e, eb, rng);
    update_rating_head(r, rb, rng);
  }
  CHECK(embedding_head_loss_and_gradients(e, eb, false, rng, nullptr) < e0);
  CHECK(rating_head_loss_and_gradients(r, rb, false, rng, nullptr) < r0);
}

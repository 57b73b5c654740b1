#include <doctest.h>

#include <cmath>

#include "coldstart/error.hpp"
#include "coldstart/qnet.hpp"
#include "oracles.hpp"

using namespace coldstart;

namespace {

InterviewState random_state(Rng& rng, int asked) {
  InterviewState s = initial_state();
  while (s.asked_count() < asked) {
    const int slot = static_cast<int>(uniform_index(rng, 100));
    if (!s.asked(slot)) s = s.step(slot, static_cast<int>(uniform_index(rng, 6)));
  }
  return s;
}

Trajectory trajectory_of(const std::vector<int>& slots) {
  const ActionSpace actions([] {
    std::vector<int> m(100);
    for (int i = 0; i < 100; ++i) m[static_cast<std::size_t>(i)] = i;
    return m;
  }());
  std::size_t next = 0;
  return run_interview(
      actions, [&](const InterviewState&) { return slots[next++]; }, [](int) { return 3; },
      static_cast<int>(slots.size()));
}

}  // namespace

TEST_CASE("q-values are non-negative and have one entry per action") {
  Rng rng(1);
  for (Activation act : {Activation::relu, Activation::tanh}) {
    const QNetwork net = QNetwork::create(100, act, rng);
    CHECK(net.state_dim() == 200);
    for (int i = 0; i < 20; ++i) {
      const Vector q = q_forward(net, random_state(rng, i % 5).values(), i % 2 == 0, rng);
      CHECK(q.size() == 100);
      for (double v : q) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("inference is deterministic and zero weights give zero q") {
  Rng rng(2);
  QNetwork net = QNetwork::create(100, Activation::tanh, rng);
  const InterviewState s = random_state(rng, 3);
  Rng a(5), b(6);
  CHECK(q_forward(net, s.values(), false, a) == q_forward(net, s.values(), false, b));
  for (DenseLayer* l : {&net.hidden1, &net.hidden2, &net.output}) {
    for (double& w : l->weights.values()) w = 0.0;
    for (double& v : l->bias) v = 0.0;
  }
  CHECK(q_forward(net, s.values(), true, a) == Vector(100, 0.0));
}

TEST_CASE("epsilon schedule") {
  const EpsilonSchedule e;
  CHECK(e.at(0) == 1.0);
  CHECK(e.at(5) == doctest::Approx(0.75));
  CHECK(e.at(8) == doctest::Approx(0.6));
  CHECK(e.at(16) == 0.2);
  CHECK(e.at(100) == 0.2);
}

TEST_CASE("greedy selection skips asked slots and breaks ties low") {
  Rng rng(3);
  Vector q(100, 0.1);
  std::vector<bool> mask(100, false);
  q[12] = 9.0;
  q[40] = 5.0;
  mask[12] = true;
  CHECK(select_action(q, mask, 0.0, rng) == 40);
  Vector tie(100, 0.0);
  tie[4] = tie[9] = 1.0;
  CHECK(select_action(tie, std::vector<bool>(100, false), 0.0, rng) == 4);
}

TEST_CASE("full exploration is uniform over unasked slots") {
  Rng rng(4);
  std::vector<bool> mask(100, false);
  mask[0] = mask[50] = mask[99] = true;
  const Vector q(100, 0.0);
  std::vector<int> counts(100, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_action(q, mask, 1.0, rng))];
  CHECK(counts[0] == 0);
  CHECK(counts[50] == 0);
  CHECK(counts[99] == 0);
  const double p = 1.0 / 97.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  double chi2 = 0.0;
  for (int s = 0; s < 100; ++s) {
    if (mask[static_cast<std::size_t>(s)]) continue;
    const double c = counts[static_cast<std::size_t>(s)];
    CHECK(std::abs(c - n * p) < 4.0 * sigma);
    chi2 += (c - n * p) * (c - n * p) / (n * p);
  }
  // 96 degrees of freedom; the 0.999 quantile is about 145
  CHECK(chi2 < 145.0);
}

TEST_CASE("targets with gamma 1") {
  const Trajectory t = trajectory_of({0, 7, 3});
  const std::vector<Vector> q(3, Vector(100, 0.25));
  const auto targets = build_targets(t, 0.95, 1.0, q);
  REQUIRE(targets.size() == 3);
  for (std::size_t step = 0; step < 3; ++step) {
    const auto slot = static_cast<std::size_t>(t.steps[step].slot);
    CHECK(std::abs(targets[step].values[slot] - 1.0 / 0.95) < 1e-12);
    CHECK(targets[step].supervised[slot]);
  }
  CHECK(targets[2].values[0] == 0.0);
  CHECK(targets[2].values[7] == 0.0);
  CHECK(targets[2].supervised[0]);
  CHECK(targets[1].values[0] == 0.0);
  CHECK(targets[0].values[7] == 0.25);
  CHECK_FALSE(targets[0].supervised[7]);
}

TEST_CASE("targets with gamma 0.9 discount earlier steps") {
  const Trajectory t = trajectory_of({5, 6, 8});
  const auto targets = build_targets(t, 0.8, 0.9, std::vector<Vector>(3, Vector(100, 0.0)));
  CHECK(targets[0].values[5] == doctest::Approx(0.81 / 0.8));
  CHECK(targets[1].values[6] == doctest::Approx(0.9 / 0.8));
  CHECK(targets[2].values[8] == doctest::Approx(1.0 / 0.8));
  CHECK_THROWS_AS(build_targets(t, 0.0, 1.0, std::vector<Vector>(3, Vector(100, 0.0))), TrainingError);
}

TEST_CASE("a target equal to the prediction leaves the network unchanged") {
  Rng rng(5);
  QNetwork net = QNetwork::create(100, Activation::relu, rng, 1e-3, 0.0);
  const InterviewState s = random_state(rng, 2);
  const Vector q = q_forward(net, s.values(), false, rng);
  const std::vector<QSample> batch{{Vector(s.values().begin(), s.values().end()), {q, std::vector<bool>(100, true)}}};
  const QNetwork before = net;
  const double loss = dqn_update(net, batch, QLoss::mse, rng);
  CHECK(loss == 0.0);
  CHECK(net.hidden1 == before.hidden1);
  CHECK(net.hidden2 == before.hidden2);
  CHECK(net.output == before.output);
}

TEST_CASE("mse loss averages over actions") {
  Rng rng(6);
  const QNetwork net = QNetwork::create(100, Activation::relu, rng, 1e-3, 0.0);
  const InterviewState s = random_state(rng, 1);
  Vector target = q_forward(net, s.values(), false, rng);
  target[17] += 0.3;
  const std::vector<QSample> batch{{Vector(s.values().begin(), s.values().end()), {target, std::vector<bool>(100, true)}}};
  CHECK(dqn_loss_and_gradients(net, batch, QLoss::mse, false, rng, nullptr) == doctest::Approx(0.09 / 100));
}

TEST_CASE("repeated updates on one pair reduce the loss") {
  Rng rng(7);
  QNetwork net = QNetwork::create(100, Activation::tanh, rng, 1e-4, 0.0);
  // keep every output unit active so the taken slot can move
  for (double& b : net.output.bias) b = 0.5;
  const InterviewState s = random_state(rng, 2);
  const Trajectory t = trajectory_of({1, 2, 3});
  const auto targets = build_targets(t, 0.9, 1.0, std::vector<Vector>(3, q_forward(net, s.values(), false, rng)));
  const std::vector<QSample> batch{{Vector(s.values().begin(), s.values().end()), targets[2]}};
  const double initial = dqn_loss_and_gradients(net, batch, QLoss::mse, false, rng, nullptr);
  double previous = initial;
  for (int i = 0; i < 100; ++i) {
    dqn_update(net, batch, QLoss::mse, rng);
    const double now = dqn_loss_and_gradients(net, batch, QLoss::mse, false, rng, nullptr);
    CHECK(now < previous);
    previous = now;
  }
  CHECK(previous < 0.5 * initial);
}

TEST_CASE("dqn gradients match central differences") {
  for (QLoss loss : {QLoss::mse, QLoss::softmax_cross_entropy}) {
    for (Activation act : {Activation::relu, Activation::tanh}) {
      CAPTURE(to_string(loss));
      Rng rng(8);
      QNetwork net = QNetwork::create(100, act, rng);
      for (DenseLayer* l : {&net.hidden1, &net.hidden2, &net.output})
        for (double& b : l->bias) b = 0.05 + 0.05 * uniform01(rng);
      std::vector<QSample> batch;
      const Trajectory t = trajectory_of({4, 9, 2});
      for (int i = 0; i < 3; ++i) {
        const Vector q = q_forward(net, t.steps[static_cast<std::size_t>(i)].before.values(), false, rng);
        const auto targets = build_targets(t, 0.9, 1.0, std::vector<Vector>(3, q));
        const auto st = t.steps[static_cast<std::size_t>(i)].before.values();
        batch.push_back({Vector(st.begin(), st.end()), targets[static_cast<std::size_t>(i)]});
      }
      auto eval = [&] {
        Rng mask(31);
        return dqn_loss_and_gradients(net, batch, loss, true, mask, nullptr);
      };
      GradientList analytic;
      Rng mask(31);
      dqn_loss_and_gradients(net, batch, loss, true, mask, &analytic);
      const auto check = coldstart::testing::check_gradients(net.parameters(), analytic, eval, 9, 150);
      CHECK(check.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("non-finite targets abort the update before any change") {
  Rng rng(9);
  QNetwork net = QNetwork::create(100, Activation::relu, rng);
  const QNetwork before = net;
  Vector bad(100, 0.0);
  bad[3] = std::nan("");
  std::vector<bool> sup(100, false);
  sup[3] = true;
  const std::vector<QSample> batch{{Vector(200, 0.0), {bad, sup}}};
  CHECK_THROWS_AS(dqn_update(net, batch, QLoss::mse, rng), TrainingError);
  CHECK(net == before);
}

TEST_CASE("loss names round trip") {
  CHECK(parse_qloss("mse") == QLoss::mse);
  CHECK(parse_qloss(to_string(QLoss::softmax_cross_entropy)) == QLoss::softmax_cross_entropy);
  CHECK_THROWS_AS(parse_qloss("hinge"), ConfigError);
}

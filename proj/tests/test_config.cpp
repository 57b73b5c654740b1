#include <doctest.h>

#include <fstream>

#include "coldstart/config.hpp"
#include "coldstart/error.hpp"
#include "synthetic.hpp"

using namespace coldstart;

TEST_CASE("defaults") {
  const Config c;
  CHECK(c.get_int("train.k") == 3);
  CHECK(c.get_int("train.epochs") == 600);
  CHECK(c.get_double("split.user_fraction") == 0.75);
  CHECK(c.get_int("bpmf.dim") == 10);
  const TrainConfig t = c.train_config();
  CHECK(t.model == ModelKind::q_rating);
  CHECK(t.seed == c.seed());
  CHECK(t.epsilon.at(0) == 1.0);
}

TEST_CASE("nested and dotted forms are equivalent") {
  Config a, b;
  a.merge_json({{"train", {{"k", 4}, {"model", "q_embedding"}}}});
  b.merge_json({{"train.k", 4}, {"train.model", "q_embedding"}});
  CHECK(a.to_json() == b.to_json());
  CHECK(a.train_config().k == 4);
  CHECK(a.train_config().model == ModelKind::q_embedding);
}

TEST_CASE("unknown keys and wrong types are rejected") {
  Config c;
  CHECK_THROWS_AS(c.merge_json({{"train", {{"kk", 4}}}}), ConfigError);
  CHECK_THROWS_AS(c.set("train.k", "three"), ConfigError);
  CHECK_THROWS_AS(c.set("train.gamma", true), ConfigError);
  CHECK_THROWS_AS(c.set_text("train.epochs", "1.5"), ConfigError);
  CHECK_THROWS_AS(c.set_assignment("train.k"), ConfigError);
  CHECK_NOTHROW(c.set("train.gamma", 1));
  CHECK(c.get_double("train.gamma") == 1.0);
}

TEST_CASE("text assignments follow the key type") {
  Config c;
  c.set_assignment("train.dqn_lr=1e-3");
  c.set_assignment("train.model=q-embedding");
  c.set_assignment("seed=11");
  CHECK(c.get_double("train.dqn_lr") == 1e-3);
  CHECK(c.train_config().model == ModelKind::q_embedding);
  CHECK(c.seed() == 11);
  CHECK(c.train_config().seed == 11);
}

TEST_CASE("files merge over defaults") {
  coldstart::testing::TempDir dir;
  {
    std::ofstream out(dir.path() / "c.json");
    out << R"({"bpmf": {"dim": 6}, "train.epochs": 5})";
  }
  Config c;
  c.merge_file(dir.path() / "c.json");
  CHECK(c.bpmf_config().dim == 6);
  CHECK(c.train_config().epochs == 5);
  {
    std::ofstream out(dir.path() / "bad.json");
    out << "{";
  }
  CHECK_THROWS_AS(c.merge_file(dir.path() / "bad.json"), ConfigError);
  CHECK_THROWS_AS(c.merge_file(dir.path() / "missing.json"), ConfigError);
}

TEST_CASE("hashes separate pipeline keys from training keys") {
  Config a;
  Config b = a;
  CHECK(a.pipeline_hash() == b.pipeline_hash());
  b.set("train.k", 4);
  CHECK(a.pipeline_hash() == b.pipeline_hash());
  CHECK(a.training_hash() != b.training_hash());
  b.set("bpmf.dim", 8);
  CHECK(a.pipeline_hash() != b.pipeline_hash());
  Config c;
  c.set("service.port", 9000);
  CHECK(a.pipeline_hash() == c.pipeline_hash());
  CHECK(a.training_hash() == c.training_hash());
  Config d;
  d.set("seed", 8);
  CHECK(a.pipeline_hash() != d.pipeline_hash());
  CHECK(a.training_hash() != d.training_hash());
}

TEST_CASE("invalid values fail when a typed config is built") {
  Config c;
  c.set("train.dropout", 1.5);
  CHECK_THROWS_AS(c.train_config(), ConfigError);
  Config d;
  d.set("train.model", "tree");
  CHECK_THROWS_AS(d.train_config(), ConfigError);
}

TEST_CASE("help lists every key") {
  const std::string help = config_help();
  for (const ConfigKey& k : config_keys()) CHECK(help.find(k.name) != std::string::npos);
}

#include <filesystem>

#include "causalshift/errors.hpp"
#include "causalshift/serialization.hpp"
#include "causalshift/training.hpp"
#include "doctest.h"

using namespace causalshift;

TEST_CASE("model checkpoints round-trip bit-exactly") {
  ModelStack s = ModelStack::initialized(4, 3, 42);
  Rng rng(1);
  s.set_masks(generate_er(4, 1.5, rng).adjacency());
  s.module(1).params().b2[0] = 1.0 / 3.0;
  const ModelCheckpoint in{s, OptimizerConfig::Kind::sgd};
  const ModelCheckpoint out = checkpoint_from_json(checkpoint_to_json(in));
  CHECK(out.stack == s);
  CHECK(out.optimizer == OptimizerConfig::Kind::sgd);
}

TEST_CASE("SCM round-trip preserves sampling") {
  Rng rng(2);
  const GroundTruthScm scm = init_scm(generate_er(5, 1.0, rng), 4, rng);
  const GroundTruthScm back = scm_from_json(scm_to_json(scm));
  CHECK(back == scm);
  Rng a(7), b(7);
  CHECK(sample_observational(scm, 50, a) == sample_observational(back, 50, b));
}

TEST_CASE("DAG and gamma round trips") {
  const Dag dag = generate_preset(Preset::jungle, 6);
  CHECK(dag_from_json(dag_to_json(dag)) == dag);
  SoftAdjacency g(3, 0.25);
  g.u(0, 2) = -1.5;
  g.v(1, 0) = 3.0 / 7.0;
  CHECK(gamma_from_json(gamma_to_json(g)) == g);
}

TEST_CASE("malformed documents are rejected") {
  CHECK_THROWS_AS(checkpoint_from_json("{"), ParameterError);
  CHECK_THROWS_AS(checkpoint_from_json("{\"format\":\"causalshift.scm\",\"version\":1}"), ParameterError);
  CHECK_THROWS_AS(checkpoint_from_json("{\"format\":\"causalshift.model\",\"version\":99}"), ParameterError);
  CHECK_THROWS_AS(dag_from_json("{\"n\":2,\"adjacency\":[[0,1],[1,0]]}"), ParameterError);
  CHECK_THROWS_AS(dag_from_json("{\"n\":2,\"adjacency\":[[0,2],[0,0]]}"), ParameterError);
}

TEST_CASE("file helpers") {
  const auto dir = std::filesystem::temp_directory_path() / "causalshift_unit_io" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  write_text_file(dir / "x.txt", "hello");
  CHECK(read_text_file(dir / "x.txt") == "hello");
  CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), IoError);
  std::filesystem::remove_all(dir.parent_path());
}

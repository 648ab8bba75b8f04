#include "doctest.h"

#include <set>
#include <sstream>

#include "corap/core.hpp"

using namespace corap;

TEST_CASE("load_dataset parses well-formed lines in order") {
  std::istringstream in(
      R"({"id":"q1","query":"how many","reasoning_steps":["count"],"answer":"3"})"
      "\n"
      R"({"id":"q2","query":"what color","reasoning_steps":["look","compare"],"answer":"red","image_ref":"img/2.png"})"
      "\n");
  Dataset ds = load_dataset(in, DatasetRole::calibration);
  REQUIRE(ds.examples.size() == 2);
  CHECK(ds.examples[0].id == "q1");
  CHECK(ds.examples[1].id == "q2");
  CHECK(ds.examples[1].image_ref == "img/2.png");
  CHECK(ds.examples[1].reference_steps.size() == 2);
  CHECK(ds.role == DatasetRole::calibration);
}

TEST_CASE("load_dataset reports the missing field and the line") {
  std::istringstream in(
      R"({"id":"q1","query":"x","reasoning_steps":[],"answer":"1"})"
      "\n"
      R"({"id":"q2","query":"y","reasoning_steps":[]})"
      "\n");
  try {
    load_dataset(in, DatasetRole::test);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("answer") != std::string::npos);
  }
}

TEST_CASE("load_dataset rejects duplicate ids citing both lines") {
  std::istringstream in(
      R"({"id":"q1","query":"a","reasoning_steps":[],"answer":"1"})"
      "\n"
      R"({"id":"q7","query":"b","reasoning_steps":[],"answer":"2"})"
      "\n"
      R"({"id":"q1","query":"c","reasoning_steps":[],"answer":"3"})"
      "\n");
  try {
    load_dataset(in, DatasetRole::test);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("q1") != std::string::npos);
    CHECK(msg.find("lines 1 and 3") != std::string::npos);
  }
}

TEST_CASE("load_dataset flags malformed JSON with the line number") {
  std::istringstream in("{\"id\":\"q1\"  this is not json\n");
  CHECK_THROWS_AS(load_dataset(in, DatasetRole::test), ParseError);
}

TEST_CASE("load_dataset warns about unknown fields") {
  std::istringstream in(
      R"({"id":"q1","query":"a","reasoning_steps":[],"answer":"1","bonus":7})"
      "\n");
  std::vector<std::string> warnings;
  load_dataset(in, DatasetRole::test, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("bonus") != std::string::npos);
}

TEST_CASE("load_dataset rejects empty reasoning steps") {
  std::istringstream in(
      R"({"id":"q1","query":"a","reasoning_steps":["ok",""],"answer":"1"})"
      "\n");
  CHECK_THROWS_AS(load_dataset(in, DatasetRole::test), ParseError);
}

TEST_CASE("ingestion round-trip reparses to an equal dataset") {
  std::istringstream in(
      R"({"id":"q1","query":"how many","reasoning_steps":["count"],"answer":"3"})"
      "\n"
      R"({"id":"q2","query":"color?","reasoning_steps":["look"],"answer":"red","image_ref":"u"})"
      "\n");
  Dataset ds = load_dataset(in, DatasetRole::training);
  std::istringstream again(serialize_dataset(ds));
  Dataset ds2 = load_dataset(again, DatasetRole::training);
  CHECK(ds == ds2);
}

TEST_CASE("derive_stream is deterministic") {
  SeedTree root(7);
  SeedTree a = root.child("perm", 0);
  SeedTree b = root.child("perm", 0);
  Rng ra = a.stream(), rb = b.stream();
  for (int i = 0; i < 64; ++i) CHECK(ra.next_u64() == rb.next_u64());
}

TEST_CASE("sibling streams differ") {
  SeedTree root(7);
  Rng a = root.child("perm", 0).stream();
  Rng b = root.child("perm", 1).stream();
  int differing = 0;
  for (int i = 0; i < 64; ++i) {
    if (a.next_u64() != b.next_u64()) ++differing;
  }
  CHECK(differing > 0);
}

TEST_CASE("different roots give different streams on the same path") {
  Rng a = SeedTree(7).child("perm", 0).stream();
  Rng b = SeedTree(8).child("perm", 0).stream();
  int differing = 0;
  for (int i = 0; i < 64; ++i) {
    if (a.next_u64() != b.next_u64()) ++differing;
  }
  CHECK(differing > 0);
}

TEST_CASE("label changes the stream even with equal index") {
  Rng a = SeedTree(3).child("alpha", 5).stream();
  Rng b = SeedTree(3).child("beta", 5).stream();
  CHECK(a.next_u64() != b.next_u64());
}

TEST_CASE("child derivation keeps the path for provenance") {
  SeedTree node = SeedTree(9).child("example", 4).child("candidate", 2);
  REQUIRE(node.path().size() == 2);
  CHECK(node.path()[0].first == "example");
  CHECK(node.path()[1].second == 2);
  CHECK(node.root_seed() == 9);
}

TEST_CASE("rng uniform and bernoulli stay in range") {
  Rng rng = SeedTree(11).child("draws", 0).stream();
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.uniform(-2.0, -1.0);
    CHECK(v >= -2.0);
    CHECK(v < -1.0);
  }
  CHECK_THROWS_AS(rng.next_below(0), std::invalid_argument);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) seen.insert(rng.next_below(5));
  CHECK(seen.size() == 5);
}

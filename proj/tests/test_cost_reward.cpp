#include <doctest.h>

#include "fixtures.hpp"
#include "ragrl/cost_reward.hpp"
#include "test_util.hpp"

using namespace ragrl;
using ragrl::test::make_vocab;

namespace {

// Builds a rollout whose stream has `generated` mask-1 tokens and `injected`
// mask-0 tokens, marker accounting included.
Rollout synthetic_rollout(int generated, int injected, const Vocabulary& vocab) {
  Rollout rollout;
  if (generated > 0) {
    REQUIRE(generated >= 2);
    std::vector<Token> content(static_cast<size_t>(generated - 2),
                               tokenize("w", vocab)[0]);
    rollout.stream.segments.push_back(make_segment(SegmentKind::Think, content));
  }
  if (injected > 0) {
    REQUIRE(injected >= 2);
    std::vector<Token> content(static_cast<size_t>(injected - 2),
                               tokenize("d", vocab)[0]);
    rollout.stream.segments.push_back(
        make_segment(SegmentKind::Information, content));
  }
  rollout.mask = build_mask(rollout.stream);
  return rollout;
}

}  // namespace

TEST_CASE("normalize_answer lowercases and strips punctuation and articles") {
  CHECK(normalize_answer("Musician.") == "musician");
  CHECK(normalize_answer("the Canary Islands, Spain") == "canary islands spain");
  CHECK(normalize_answer("") == "");
  CHECK(normalize_answer("  A  An THE  ") == "");
  CHECK(normalize_answer("Paris") == normalize_answer("paris!"));
}

TEST_CASE("exact_match handles presence, absence, and gold lists") {
  std::vector<std::string> musician = {"musician"};
  CHECK(exact_match(std::optional<std::string>("musician"), musician) == 1.0);
  CHECK(exact_match(std::nullopt, std::vector<std::string>{"x"}) == 0.0);
  CHECK(exact_match(std::optional<std::string>("Paris"),
                    std::vector<std::string>{"paris", "Paris, France"}) == 1.0);
  CHECK(exact_match(std::optional<std::string>("london"),
                    std::vector<std::string>{"paris"}) == 0.0);
  CHECK_THROWS_AS(exact_match(std::optional<std::string>("x"),
                              std::vector<std::string>{}),
                  EmptyGoldsError);
}

TEST_CASE("exact_match is symmetric under normalization") {
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"Musician.", "musician"},
      {"the Canary Islands, Spain", "canary islands spain"},
      {"A Big Answer", "big answer"},
  };
  for (const auto& [a, g] : pairs) {
    CHECK(exact_match(std::optional<std::string>(a), std::vector<std::string>{g}) ==
          exact_match(std::optional<std::string>(g), std::vector<std::string>{a}));
  }
}

TEST_CASE("memory_cost counts all serialized output tokens") {
  Vocabulary vocab = make_vocab({"w d"});
  CHECK(memory_cost(synthetic_rollout(10, 100, vocab)) == 110.0);
  CHECK(memory_cost(synthetic_rollout(0, 0, vocab)) == 0.0);

  Rollout base = synthetic_rollout(10, 0, vocab);
  Rollout extra = synthetic_rollout(11, 0, vocab);
  CHECK(memory_cost(extra) - memory_cost(base) == 1.0);
}

TEST_CASE("latency_cost applies the measured per-token constants") {
  Vocabulary vocab = make_vocab({"w d"});
  CostParams params;
  params.mode = CostMode::Latency;

  // 100 generated, 0 injected: 100 * 0.4098 ms.
  CHECK(latency_cost(synthetic_rollout(100, 0, vocab), params) ==
        doctest::Approx(40.98).epsilon(1e-12));
  // 10 generated + 100 injected: 10 * 0.4098 + 100 * 0.0568.
  CHECK(latency_cost(synthetic_rollout(10, 100, vocab), params) ==
        doctest::Approx(9.778).epsilon(1e-12));
  CHECK(latency_cost(synthetic_rollout(0, 0, vocab), params) == 0.0);
}

TEST_CASE("generated/injected latency ratio matches the reported slowdown") {
  CostParams params;
  CHECK(params.c_g / params.c_e == doctest::Approx(7.2148).epsilon(1.5e-5));
}

TEST_CASE("latency with unit constants equals memory cost") {
  Vocabulary vocab = make_vocab({"w d"});
  CostParams unit;
  unit.mode = CostMode::Latency;
  unit.c_g = 1.0;
  unit.c_e = 1.0;
  for (auto [g, i] : {std::pair{2, 2}, {8, 30}, {0, 12}, {16, 0}}) {
    Rollout r = synthetic_rollout(g, i, vocab);
    CHECK(latency_cost(r, unit) == memory_cost(r));
  }
}

TEST_CASE("appending a segment never decreases either cost") {
  Vocabulary vocab = make_vocab({"w d extra"});
  CostParams latency;
  latency.mode = CostMode::Latency;
  Rollout r = synthetic_rollout(6, 10, vocab);
  double mem_before = memory_cost(r);
  double lat_before = latency_cost(r, latency);

  for (SegmentKind kind : {SegmentKind::Think, SegmentKind::Information,
                           SegmentKind::Rethink, SegmentKind::Answer}) {
    Rollout grown = r;
    grown.stream.segments.push_back(
        make_segment(kind, tokenize("extra", vocab)));
    grown.mask = build_mask(grown.stream);
    CHECK(memory_cost(grown) >= mem_before);
    CHECK(latency_cost(grown, latency) >= lat_before);
  }
}

TEST_CASE("score_rollout composes reward and the configured cost") {
  Vocabulary vocab = make_vocab({"w d musician"});
  Rollout r = synthetic_rollout(10, 100, vocab);
  r.final_answer = "musician";

  CostParams memory;
  memory.mode = CostMode::Memory;
  RewardOutcome m = score_rollout(r, std::vector<std::string>{"musician"}, memory);
  CHECK(m.r == 1.0);
  CHECK(m.cost == 110.0);

  CostParams latency;
  latency.mode = CostMode::Latency;
  RewardOutcome l = score_rollout(r, std::vector<std::string>{"wrong"}, latency);
  CHECK(l.r == 0.0);
  CHECK(l.cost > 0.0);
}

TEST_CASE("teide replay scores exact match with per-mode costs") {
  test::ReplayFixture f = test::teide_fixture();
  Vocabulary vocab = test::fixture_vocab(f);
  Index index = build_index(f.corpus);
  ScriptedPolicy policy(tokenize(f.script, vocab), vocab.size());
  std::mt19937_64 rng(1);
  Rollout rollout = run_episode(policy, index, vocab, f.question, {}, rng);

  CostParams memory;
  RewardOutcome m = score_rollout(rollout, f.golds, memory);
  CHECK(m.r == 1.0);
  CHECK(m.cost == memory_cost(rollout));

  CostParams latency;
  latency.mode = CostMode::Latency;
  RewardOutcome l = score_rollout(rollout, f.golds, latency);
  CHECK(l.r == 1.0);
  size_t ones = 0;
  for (uint8_t b : rollout.mask) ones += b;
  const size_t zeros = rollout.mask.size() - ones;
  CHECK(l.cost == doctest::Approx(ones * 0.4098 + zeros * 0.0568).epsilon(1e-12));
}

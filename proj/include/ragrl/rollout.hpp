#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragrl/policy.hpp"
#include "ragrl/retrieval.hpp"
#include "ragrl/tag_stream.hpp"

namespace ragrl {

struct EpisodeConfig {
  int budget = 8;                // maximum actions per episode
  int max_tokens_per_turn = 256;
  bool strict_parsing = false;
};

enum class DecodeMode { Sample, Greedy };

struct ActionRecord {
  int turn = 0;
  std::string kind;      // search | more_info | answer | rethink
  std::string argument;  // query text, k, answer text, or rethink reason
  std::vector<std::string> delivered_doc_ids;
  // The answer branch returns before the final increment in some readings;
  // both counting conventions are recorded.
  int actions_including_answer = 0;
  int actions_excluding_answer = 0;
};

struct Rollout {
  std::string question;
  TaggedStream stream;
  MaskVector mask;
  int action_count = 0;  // answer action included
  std::optional<std::string> final_answer;
  std::vector<ActionRecord> trace;
};

// Prompt template, version 1. {question} is substituted verbatim. The same
// text lives at resources/prompt_v1.txt.
extern const std::string kPromptTemplateV1;

std::string render_prompt(const std::string& question);
std::vector<Token> prompt_tokens(const std::string& question, const Vocabulary& vocab);

// Samples tokens until one of </search>, </more info>, </answer>, <eos> is
// emitted (stop token included in the result) or `limit` tokens are reached.
std::vector<Token> generate_turn(Policy& policy, std::span<const Token> context,
                                 int limit, const Vocabulary& vocab,
                                 std::mt19937_64& rng,
                                 DecodeMode mode = DecodeMode::Sample);

// One full budget-bounded episode: interleaves policy turns with injected
// retrieval results, pages the per-episode cache on more-info requests, and
// falls back to the rethink insertion on anything that is not a clean action.
Rollout run_episode(Policy& policy, const Index& index, const Vocabulary& vocab,
                    const std::string& question, const EpisodeConfig& cfg,
                    std::mt19937_64& rng, DecodeMode mode = DecodeMode::Sample);

nlohmann::json rollout_to_json(const Rollout& rollout);

}  // namespace ragrl

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragrl/policy.hpp"
#include "ragrl/retrieval.hpp"
#include "ragrl/rollout.hpp"

namespace ragrl {

class InfeasibleSpecError : public std::runtime_error {
 public:
  explicit InfeasibleSpecError(const std::string& what) : std::runtime_error(what) {}
};

// Desk-scale world generator. Each entity gets one fact document covering
// four attributes; depth entities additionally get a distractor document
// engineered to outrank the fact document for "entity attribute" queries, so
// answering those questions requires paging past rank 1.
struct WorldSpec {
  uint64_t seed = 1;
  int n_entities = 15;
  int n_docs = 42;
  double two_hop_fraction = 0.25;  // hop mix: (1 - x) single-hop, x two-hop
  double depth_fraction = 0.5;     // fraction of entities behind a distractor
};

struct SynthQuestion {
  std::string question;
  std::vector<std::string> golds;
  std::vector<std::string> provenance_doc_ids;
  bool is_two_hop = false;
  bool is_depth = false;   // final query's answer document ranks below 1
  int answer_doc_rank = 1;  // rank of the fact document for the final query
  std::string entity;      // entity named in the question (first hop)
  std::string attribute;
};

struct SynthWorld {
  std::vector<Document> docs;
  std::vector<SynthQuestion> questions;
};

SynthWorld generate_world(const WorldSpec& spec);

// Vocabulary covering the prompt, the tag protocol scaffold (information
// blocks, rethink sentence, digits, "unknown"), a corpus, and extra texts
// (questions and golds).
Vocabulary build_experiment_vocab(std::span<const Document> docs,
                                  std::span<const std::string> texts);

// Question shape the scripted strategies understand; parsed back from the
// question text so priming also works on worlds loaded from files.
struct QuestionPlan {
  bool two_hop = false;
  std::string entity;
  std::string attribute;
  std::string gold;
};

std::optional<QuestionPlan> derive_plan(const std::string& question,
                                        std::span<const std::string> golds);

enum class StrategyMode {
  Certified,   // search, page deeper only when extraction fails
  Deep,        // always over-fetches one extra page
  Direct,      // answers from memory, no retrieval
  Premature,   // answers "unknown" immediately
  WrongQuery,  // searches an unrelated query, then answers "unknown"
};

// Reactive scripted policy: emits point-mass token sequences and reads the
// injected information blocks to extract answers. Single-episode state;
// begin_episode resets it.
std::unique_ptr<Policy> make_strategy_policy(const QuestionPlan& plan,
                                             StrategyMode mode,
                                             const Vocabulary& vocab);

struct OracleStrategies {
  std::function<std::unique_ptr<Policy>()> certified;
  std::function<std::unique_ptr<Policy>()> deep;
  std::function<std::unique_ptr<Policy>()> direct;
  std::function<std::unique_ptr<Policy>()> premature;
  std::function<std::unique_ptr<Policy>()> wrong_query;
};

OracleStrategies oracle_strategies(const SynthQuestion& question,
                                   const Vocabulary& vocab);

}  // namespace ragrl

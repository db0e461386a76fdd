#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ragrl/rollout.hpp"

namespace ragrl {

enum class CostMode { Memory, Latency };

// alpha weighs the cost term in the advantage; c_g / c_e are the modeled
// per-token latencies (ms) for generated and encoded (injected) tokens.
struct CostParams {
  CostMode mode = CostMode::Memory;
  double alpha = 0.2;
  double c_g = 0.4098;
  double c_e = 0.0568;
};

struct RewardOutcome {
  double r = 0.0;  // exact-match outcome, 0 or 1
  double cost = 0.0;  // tokens (Memory) or ms (Latency)
};

class EmptyGoldsError : public std::runtime_error {
 public:
  EmptyGoldsError() : std::runtime_error("gold answer list is empty") {}
};

// Open-domain QA exact-match normalization: lowercase, drop punctuation,
// drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

double exact_match(const std::optional<std::string>& answer,
                   std::span<const std::string> golds);

// Total serialized output tokens, injected content and markers included;
// prompt tokens excluded.
double memory_cost(const Rollout& rollout);

// Eq-style latency model: generated tokens at c_g, injected tokens at c_e.
double latency_cost(const Rollout& rollout, const CostParams& params);

RewardOutcome score_rollout(const Rollout& rollout, std::span<const std::string> golds,
                            const CostParams& params);

}  // namespace ragrl

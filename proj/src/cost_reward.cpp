#include "ragrl/cost_reward.hpp"

#include <cctype>
#include <sstream>

namespace ragrl {

std::string normalize_answer(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    lowered.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
  }
  std::istringstream words(lowered);
  std::string word;
  std::string out;
  while (words >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

double exact_match(const std::optional<std::string>& answer,
                   std::span<const std::string> golds) {
  if (golds.empty()) throw EmptyGoldsError();
  if (!answer.has_value()) return 0.0;
  std::string norm = normalize_answer(*answer);
  for (const std::string& gold : golds) {
    if (norm == normalize_answer(gold)) return 1.0;
  }
  return 0.0;
}

double memory_cost(const Rollout& rollout) {
  size_t total = rollout.stream.trailing_eos ? 1 : 0;
  for (const Segment& seg : rollout.stream.segments) total += seg.token_count();
  return static_cast<double>(total);
}

double latency_cost(const Rollout& rollout, const CostParams& params) {
  size_t generated = 0;
  size_t injected = 0;
  for (uint8_t bit : rollout.mask) {
    if (bit) {
      ++generated;
    } else {
      ++injected;
    }
  }
  return static_cast<double>(generated) * params.c_g +
         static_cast<double>(injected) * params.c_e;
}

RewardOutcome score_rollout(const Rollout& rollout, std::span<const std::string> golds,
                            const CostParams& params) {
  RewardOutcome outcome;
  outcome.r = exact_match(rollout.final_answer, golds);
  outcome.cost = params.mode == CostMode::Memory ? memory_cost(rollout)
                                                 : latency_cost(rollout, params);
  return outcome;
}

}  // namespace ragrl

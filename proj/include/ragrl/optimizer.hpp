#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragrl/cost_reward.hpp"
#include "ragrl/policy.hpp"
#include "ragrl/rollout.hpp"

namespace ragrl {

class GroupTooSmallError : public std::runtime_error {
 public:
  explicit GroupTooSmallError(size_t g)
      : std::runtime_error("group size " + std::to_string(g) + " < 2") {}
};

class EmptyBatchError : public std::runtime_error {
 public:
  EmptyBatchError() : std::runtime_error("empty rollout batch") {}
};

class NonFiniteGradientError : public std::runtime_error {
 public:
  explicit NonFiniteGradientError(const std::string& what)
      : std::runtime_error(what) {}
};

struct OptimizerConfig {
  double eps_clip = 0.2;       // PPO/GRPO ratio clip range
  double beta = 1e-3;          // KL weight
  double gamma = 1.0;          // return discount
  double lambda = 1.0;         // GAE parameter; 1 reproduces plain returns
  double eps_floor = 0.2;      // terminal-reward floor for correct answers
  int group_size = 8;          // G
  double learning_rate = 1.0;
  double std_epsilon = 1e-8;   // z-score std guard
  double value_learning_rate = 0.1;
  int inner_epochs = 1;
  int ref_refresh_interval = 0;  // 0 = reference fixed at the initial snapshot
  enum class KlTarget { Old, Ref };
  KlTarget ppo_kl_target = KlTarget::Old;  // Eq-as-written default
};

struct GroupSample {
  std::string question;
  std::vector<Rollout> rollouts;
  std::vector<RewardOutcome> outcomes;
};

// Group-relative cost-aware advantages: A_i = z(r)_i - alpha * z(c)_i with
// population statistics. A term whose values are all identical contributes 0
// for every member. The std guard is max(sigma, std_epsilon), which keeps
// z-scores exactly shift- and positive-scale-invariant for non-degenerate
// groups.
std::vector<double> grpo_advantages(std::span<const RewardOutcome> outcomes,
                                    double alpha, double std_epsilon);

// GRPO advantages straight from a sampled group.
std::vector<double> grpo_advantages(const GroupSample& group, double alpha,
                                    double std_epsilon);

// Token-aligned view of a rollout: ids, conditioning states, and mask bits
// for every serialized stream token, states reconstructed exactly as the
// rollout engine built them (prompt + stream prefix, hashed window).
struct RolloutTokens {
  std::vector<int> token_ids;
  std::vector<ContextKey> states;
  std::vector<uint8_t> mask;

  size_t size() const { return token_ids.size(); }
};

RolloutTokens tokenize_rollout(const Rollout& rollout, const Vocabulary& vocab,
                               int window);

// Per-token advantages aligned to a rollout's serialized stream; entries at
// masked positions exist but never enter the objective.
using AdvantageVector = std::vector<double>;

AdvantageVector broadcast_group_advantage(double advantage, size_t n_tokens);

struct BatchItem {
  RolloutTokens tokens;
  AdvantageVector advantages;
};

// Sparse gradient over logit rows; std::map keeps application order
// deterministic.
using Gradient = std::map<ContextKey, std::vector<double>>;

struct ObjectiveResult {
  double value = 0.0;
  Gradient gradient;
};

// Clipped surrogate with masked normalization:
//   mean over rollouts of (1/sum_t I_t) * sum_{t:I=1} min(rho_t A_t,
//   clip(rho_t, 1-eps, 1+eps) A_t).
// Rollouts with no unmasked tokens contribute 0. Gradient is analytic for
// the tabular softmax policy.
ObjectiveResult masked_surrogate(std::span<const BatchItem> batch,
                                 const TabularSoftmaxPolicy& policy,
                                 const PolicySnapshot& old_policy,
                                 const OptimizerConfig& cfg);

// k3 estimator of KL(pi_theta || pi_ref), averaged over unmasked tokens per
// rollout and then over rollouts. Non-negative by construction.
ObjectiveResult grpo_kl(const TabularSoftmaxPolicy& policy,
                        const PolicySnapshot& ref,
                        std::span<const BatchItem> batch);

// Token-level PPO rewards: -beta * (logpi_theta - logpi_old) on every
// unmasked token; the last token additionally receives
// max(r * eps_floor, r - alpha * c); masked tokens get 0.
std::vector<double> token_rewards_ppo(const RolloutTokens& tokens,
                                      const TabularSoftmaxPolicy& policy,
                                      const PolicySnapshot& old_policy,
                                      const RewardOutcome& outcome,
                                      const OptimizerConfig& cfg, double alpha);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // discounted suffix sums G_t
};

// lambda = 1 gives A_t = G_t - V(s_t) exactly; lambda < 1 the generalized
// estimator with terminal V = 0.
GaeResult return_advantages(const RolloutTokens& tokens,
                            std::span<const double> rewards,
                            const ValueTable& values, const OptimizerConfig& cfg);

// Plain gradient ascent on the logits. Throws NonFiniteGradient.
void update_policy(TabularSoftmaxPolicy& policy, const Gradient& gradient,
                   const OptimizerConfig& cfg);

// One batched MSE step: v[s] <- v[s] - lr * sum_visits 2 * (v[s] - G_t).
void update_value(ValueTable& values, std::span<const BatchItem> batch,
                  std::span<const std::vector<double>> returns, double lr);

// Central-difference verification of the analytic gradients of both
// masked_surrogate and grpo_kl over every materialized parameter; returns
// max |g_analytic - g_fd| / max(1, |g_fd|).
double finite_difference_check(TabularSoftmaxPolicy& policy,
                               std::span<const BatchItem> batch,
                               const PolicySnapshot& old_policy,
                               const PolicySnapshot& ref,
                               const OptimizerConfig& cfg, double h);

// Merges: out += scale * grad.
void accumulate_gradient(Gradient& out, const Gradient& grad, double scale);

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON dump of policy, value table, config and step.
// Context keys are written as hex strings (doubles survive the JSON round
// trip bit-exactly; 64-bit keys would not as numbers).
// ---------------------------------------------------------------------------

struct Checkpoint {
  TabularSoftmaxPolicy policy;
  ValueTable values;
  OptimizerConfig config;
  int64_t step = 0;
  std::vector<std::string> vocab_words;
};

void save_checkpoint(const std::string& path, const TabularSoftmaxPolicy& policy,
                     const ValueTable& values, const OptimizerConfig& cfg,
                     int64_t step, const Vocabulary& vocab);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ragrl

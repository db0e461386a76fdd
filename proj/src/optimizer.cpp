#include "ragrl/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace ragrl {

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  bool degenerate = false;
};

MeanStd population_stats(std::span<const double> xs) {
  MeanStd out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  var /= static_cast<double>(xs.size());
  out.std = std::sqrt(var);
  out.degenerate = std::all_of(xs.begin(), xs.end(),
                               [&](double x) { return x == xs[0]; });
  return out;
}

size_t unmasked_count(const RolloutTokens& tokens) {
  size_t n = 0;
  for (uint8_t bit : tokens.mask) n += bit;
  return n;
}

// Per-state distribution cache; states repeat heavily within a batch.
class DistCache {
 public:
  explicit DistCache(const TabularSoftmaxPolicy& policy) : policy_(policy) {}

  const std::vector<double>& dist(ContextKey key) {
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, policy_.dist_for_key(key)).first;
    return it->second;
  }

  double logprob(ContextKey key, int token_id) {
    return std::log(std::max(dist(key)[static_cast<size_t>(token_id)], kProbFloor));
  }

 private:
  const TabularSoftmaxPolicy& policy_;
  std::unordered_map<ContextKey, std::vector<double>> cache_;
};

// d logp(v|s) / d logits[s][u] = (1/tau) * (1[u==v] - p_u); contribution is
// zero when the probability floor is active for the queried token.
void add_logprob_grad(Gradient& grad, ContextKey state, int token_id,
                      const std::vector<double>& probs, double coef, double tau,
                      int vocab_size) {
  if (coef == 0.0) return;
  if (probs[static_cast<size_t>(token_id)] <= kProbFloor) return;
  auto it = grad.find(state);
  if (it == grad.end()) {
    it = grad.emplace(state, std::vector<double>(static_cast<size_t>(vocab_size), 0.0))
             .first;
  }
  std::vector<double>& row = it->second;
  const double c = coef / tau;
  for (int u = 0; u < vocab_size; ++u) {
    row[static_cast<size_t>(u)] -= c * probs[static_cast<size_t>(u)];
  }
  row[static_cast<size_t>(token_id)] += c;
}

}  // namespace

std::vector<double> grpo_advantages(std::span<const RewardOutcome> outcomes,
                                    double alpha, double std_epsilon) {
  const size_t g = outcomes.size();
  if (g < 2) throw GroupTooSmallError(g);
  std::vector<double> rewards(g), costs(g);
  for (size_t i = 0; i < g; ++i) {
    rewards[i] = outcomes[i].r;
    costs[i] = outcomes[i].cost;
  }
  MeanStd rs = population_stats(rewards);
  MeanStd cs = population_stats(costs);
  std::vector<double> advantages(g, 0.0);
  for (size_t i = 0; i < g; ++i) {
    double zr = rs.degenerate ? 0.0 : (rewards[i] - rs.mean) / std::max(rs.std, std_epsilon);
    double zc = cs.degenerate ? 0.0 : (costs[i] - cs.mean) / std::max(cs.std, std_epsilon);
    advantages[i] = zr - alpha * zc;
  }
  return advantages;
}

std::vector<double> grpo_advantages(const GroupSample& group, double alpha,
                                    double std_epsilon) {
  return grpo_advantages(group.outcomes, alpha, std_epsilon);
}

RolloutTokens tokenize_rollout(const Rollout& rollout, const Vocabulary& vocab,
                               int window) {
  RolloutTokens out;
  std::vector<Token> context = prompt_tokens(rollout.question, vocab);
  std::vector<Token> stream = serialize_tokens(rollout.stream);
  out.mask = rollout.mask;
  out.token_ids.reserve(stream.size());
  out.states.reserve(stream.size());
  for (Token& tok : stream) {
    out.states.push_back(context_key_of(context, window));
    out.token_ids.push_back(tok.id);
    context.push_back(std::move(tok));
  }
  return out;
}

AdvantageVector broadcast_group_advantage(double advantage, size_t n_tokens) {
  return AdvantageVector(n_tokens, advantage);
}

ObjectiveResult masked_surrogate(std::span<const BatchItem> batch,
                                 const TabularSoftmaxPolicy& policy,
                                 const PolicySnapshot& old_policy,
                                 const OptimizerConfig& cfg) {
  if (batch.empty()) throw EmptyBatchError();
  ObjectiveResult result;
  DistCache dists(policy);
  DistCache old_dists(old_policy.policy());
  const double tau = policy.temperature();
  const int vocab = policy.vocab_size();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const double lo = 1.0 - cfg.eps_clip;
  const double hi = 1.0 + cfg.eps_clip;

  for (const BatchItem& item : batch) {
    const size_t n_unmasked = unmasked_count(item.tokens);
    if (n_unmasked == 0) continue;
    const double coef = inv_batch / static_cast<double>(n_unmasked);
    for (size_t t = 0; t < item.tokens.size(); ++t) {
      if (!item.tokens.mask[t]) continue;
      // A zero advantage contributes zero value and zero gradient.
      if (item.advantages[t] == 0.0) continue;
      const ContextKey state = item.tokens.states[t];
      const int token_id = item.tokens.token_ids[t];
      const std::vector<double>& probs = dists.dist(state);
      const double lp_new =
          std::log(std::max(probs[static_cast<size_t>(token_id)], kProbFloor));
      const double lp_old = old_dists.logprob(state, token_id);
      const double rho = std::exp(lp_new - lp_old);
      const double advantage = item.advantages[t];
      const double unclipped = rho * advantage;
      const double clipped = std::clamp(rho, lo, hi) * advantage;
      result.value += coef * std::min(unclipped, clipped);
      if (unclipped <= clipped) {
        add_logprob_grad(result.gradient, state, token_id, probs,
                         coef * advantage * rho, tau, vocab);
      }
    }
  }
  return result;
}

ObjectiveResult grpo_kl(const TabularSoftmaxPolicy& policy, const PolicySnapshot& ref,
                        std::span<const BatchItem> batch) {
  ObjectiveResult result;
  if (batch.empty()) return result;
  DistCache dists(policy);
  DistCache ref_dists(ref.policy());
  const double tau = policy.temperature();
  const int vocab = policy.vocab_size();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  // When both sides fall back to the same defaults for an unseen state, the
  // ratio is exactly 1 and the k3 term and its gradient vanish.
  const bool same_defaults =
      policy.default_logits() == ref.policy().default_logits() &&
      policy.temperature() == ref.policy().temperature();

  for (const BatchItem& item : batch) {
    const size_t n_unmasked = unmasked_count(item.tokens);
    if (n_unmasked == 0) continue;
    const double coef = inv_batch / static_cast<double>(n_unmasked);
    for (size_t t = 0; t < item.tokens.size(); ++t) {
      if (!item.tokens.mask[t]) continue;
      const ContextKey state = item.tokens.states[t];
      const int token_id = item.tokens.token_ids[t];
      if (same_defaults && !policy.has_row(state) && !ref.policy().has_row(state)) {
        continue;
      }
      const std::vector<double>& probs = dists.dist(state);
      const double lp_new =
          std::log(std::max(probs[static_cast<size_t>(token_id)], kProbFloor));
      const double lp_ref = ref_dists.logprob(state, token_id);
      const double log_ratio = lp_ref - lp_new;
      const double ratio = std::exp(log_ratio);
      result.value += coef * (ratio - 1.0 - log_ratio);
      add_logprob_grad(result.gradient, state, token_id, probs,
                       coef * (1.0 - ratio), tau, vocab);
    }
  }
  return result;
}

std::vector<double> token_rewards_ppo(const RolloutTokens& tokens,
                                      const TabularSoftmaxPolicy& policy,
                                      const PolicySnapshot& old_policy,
                                      const RewardOutcome& outcome,
                                      const OptimizerConfig& cfg, double alpha) {
  std::vector<double> rewards(tokens.size(), 0.0);
  for (size_t t = 0; t < tokens.size(); ++t) {
    if (!tokens.mask[t]) continue;
    const double lp_new = policy.logprob(tokens.states[t], tokens.token_ids[t]);
    const double lp_old = old_policy.logprob(tokens.states[t], tokens.token_ids[t]);
    rewards[t] = -cfg.beta * (lp_new - lp_old);
  }
  if (!tokens.size()) return rewards;
  const size_t last = tokens.size() - 1;
  const double terminal =
      std::max(outcome.r * cfg.eps_floor, outcome.r - alpha * outcome.cost);
  // An answerless episode can end on an injected token, but then r = 0 and
  // the terminal term is exactly 0, so masked-means-zero still holds.
  if (tokens.mask[last]) {
    rewards[last] += terminal;
  }
  return rewards;
}

GaeResult return_advantages(const RolloutTokens& tokens,
                            std::span<const double> rewards,
                            const ValueTable& values, const OptimizerConfig& cfg) {
  const size_t n = tokens.size();
  GaeResult out;
  out.returns.assign(n, 0.0);
  out.advantages.assign(n, 0.0);
  if (n == 0) return out;
  double running = 0.0;
  for (size_t t = n; t-- > 0;) {
    running = rewards[t] + cfg.gamma * running;
    out.returns[t] = running;
  }
  if (cfg.lambda == 1.0) {
    for (size_t t = 0; t < n; ++t) {
      out.advantages[t] = out.returns[t] - values.value_of(tokens.states[t]);
    }
  } else {
    double gae = 0.0;
    for (size_t t = n; t-- > 0;) {
      const double v_t = values.value_of(tokens.states[t]);
      const double v_next = t + 1 < n ? values.value_of(tokens.states[t + 1]) : 0.0;
      const double delta = rewards[t] + cfg.gamma * v_next - v_t;
      gae = delta + cfg.gamma * cfg.lambda * gae;
      out.advantages[t] = gae;
    }
  }
  return out;
}

void update_policy(TabularSoftmaxPolicy& policy, const Gradient& gradient,
                   const OptimizerConfig& cfg) {
  for (const auto& [state, row] : gradient) {
    for (double g : row) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradientError("non-finite gradient entry for state " +
                                     std::to_string(state));
      }
    }
  }
  for (const auto& [state, row] : gradient) {
    // All-zero rows would only materialize dead states in the policy.
    if (std::all_of(row.begin(), row.end(), [](double g) { return g == 0.0; })) {
      continue;
    }
    std::vector<double>& target = policy.row(state);
    for (size_t u = 0; u < row.size(); ++u) {
      target[u] += cfg.learning_rate * row[u];
    }
  }
}

void update_value(ValueTable& values, std::span<const BatchItem> batch,
                  std::span<const std::vector<double>> returns, double lr) {
  std::map<ContextKey, double> grad;
  for (size_t i = 0; i < batch.size(); ++i) {
    const RolloutTokens& tokens = batch[i].tokens;
    for (size_t t = 0; t < tokens.size(); ++t) {
      const ContextKey s = tokens.states[t];
      grad[s] += 2.0 * (values.value_of(s) - returns[i][t]);
    }
  }
  for (const auto& [state, g] : grad) {
    values.set(state, values.value_of(state) - lr * g);
  }
}

void accumulate_gradient(Gradient& out, const Gradient& grad, double scale) {
  for (const auto& [state, row] : grad) {
    auto it = out.find(state);
    if (it == out.end()) {
      it = out.emplace(state, std::vector<double>(row.size(), 0.0)).first;
    }
    for (size_t u = 0; u < row.size(); ++u) it->second[u] += scale * row[u];
  }
}

double finite_difference_check(TabularSoftmaxPolicy& policy,
                               std::span<const BatchItem> batch,
                               const PolicySnapshot& old_policy,
                               const PolicySnapshot& ref,
                               const OptimizerConfig& cfg, double h) {
  // Materialize a row for every state the batch touches so parameters exist.
  for (const BatchItem& item : batch) {
    for (ContextKey s : item.tokens.states) policy.row(s);
  }
  double max_err = 0.0;
  auto check = [&](auto&& objective, const Gradient& analytic) {
    std::vector<ContextKey> states;
    for (const auto& [s, row] : policy.rows()) states.push_back(s);
    std::sort(states.begin(), states.end());
    for (ContextKey s : states) {
      std::vector<double>& row = policy.row(s);
      for (size_t u = 0; u < row.size(); ++u) {
        const double saved = row[u];
        row[u] = saved + h;
        const double plus = objective();
        row[u] = saved - h;
        const double minus = objective();
        row[u] = saved;
        const double g_fd = (plus - minus) / (2.0 * h);
        double g_an = 0.0;
        auto it = analytic.find(s);
        if (it != analytic.end()) g_an = it->second[u];
        const double err = std::abs(g_an - g_fd) / std::max(1.0, std::abs(g_fd));
        max_err = std::max(max_err, err);
      }
    }
  };

  ObjectiveResult surrogate = masked_surrogate(batch, policy, old_policy, cfg);
  check([&] { return masked_surrogate(batch, policy, old_policy, cfg).value; },
        surrogate.gradient);
  ObjectiveResult kl = grpo_kl(policy, ref, batch);
  check([&] { return grpo_kl(policy, ref, batch).value; }, kl.gradient);
  return max_err;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

std::string key_to_hex(ContextKey key) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(key));
  return std::string(buf);
}

ContextKey hex_to_key(const std::string& hex) {
  return static_cast<ContextKey>(std::stoull(hex, nullptr, 16));
}

nlohmann::json config_to_json(const OptimizerConfig& cfg) {
  return {{"eps_clip", cfg.eps_clip},
          {"beta", cfg.beta},
          {"gamma", cfg.gamma},
          {"lambda", cfg.lambda},
          {"eps_floor", cfg.eps_floor},
          {"group_size", cfg.group_size},
          {"learning_rate", cfg.learning_rate},
          {"std_epsilon", cfg.std_epsilon},
          {"value_learning_rate", cfg.value_learning_rate},
          {"inner_epochs", cfg.inner_epochs},
          {"ref_refresh_interval", cfg.ref_refresh_interval},
          {"ppo_kl_target",
           cfg.ppo_kl_target == OptimizerConfig::KlTarget::Old ? "old" : "ref"}};
}

OptimizerConfig config_from_json(const nlohmann::json& j) {
  OptimizerConfig cfg;
  cfg.eps_clip = j.at("eps_clip").get<double>();
  cfg.beta = j.at("beta").get<double>();
  cfg.gamma = j.at("gamma").get<double>();
  cfg.lambda = j.at("lambda").get<double>();
  cfg.eps_floor = j.at("eps_floor").get<double>();
  cfg.group_size = j.at("group_size").get<int>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.std_epsilon = j.at("std_epsilon").get<double>();
  cfg.value_learning_rate = j.at("value_learning_rate").get<double>();
  cfg.inner_epochs = j.at("inner_epochs").get<int>();
  cfg.ref_refresh_interval = j.at("ref_refresh_interval").get<int>();
  cfg.ppo_kl_target = j.at("ppo_kl_target").get<std::string>() == "ref"
                          ? OptimizerConfig::KlTarget::Ref
                          : OptimizerConfig::KlTarget::Old;
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const TabularSoftmaxPolicy& policy,
                     const ValueTable& values, const OptimizerConfig& cfg,
                     int64_t step, const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["step"] = step;
  j["vocab"] = vocab.words();
  nlohmann::ordered_json pol;
  pol["vocab_size"] = policy.vocab_size();
  pol["temperature"] = policy.temperature();
  pol["window"] = policy.window();
  pol["default_logits"] = policy.default_logits();
  std::vector<ContextKey> keys;
  for (const auto& [k, row] : policy.rows()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (ContextKey k : keys) {
    rows.push_back({key_to_hex(k), policy.rows().at(k)});
  }
  pol["rows"] = std::move(rows);
  j["policy"] = std::move(pol);

  nlohmann::ordered_json vals;
  vals["default_value"] = values.default_value;
  vals["capacity"] = values.capacity;
  std::vector<ContextKey> vkeys;
  for (const auto& [k, v] : values.values) vkeys.push_back(k);
  std::sort(vkeys.begin(), vkeys.end());
  nlohmann::ordered_json vrows = nlohmann::ordered_json::array();
  for (ContextKey k : vkeys) vrows.push_back({key_to_hex(k), values.values.at(k)});
  vals["rows"] = std::move(vrows);
  j["values"] = std::move(vals);
  j["config"] = config_to_json(cfg);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("version").get<int>() != 1) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  const auto& pol = j.at("policy");
  Checkpoint ck{
      TabularSoftmaxPolicy(pol.at("vocab_size").get<int>(),
                           pol.at("temperature").get<double>(),
                           pol.at("window").get<int>()),
      ValueTable{},
      config_from_json(j.at("config")),
      j.at("step").get<int64_t>(),
      j.at("vocab").get<std::vector<std::string>>()};
  ck.policy.mutable_default_logits() =
      pol.at("default_logits").get<std::vector<double>>();
  for (const auto& row : pol.at("rows")) {
    ContextKey key = hex_to_key(row.at(0).get<std::string>());
    ck.policy.row(key) = row.at(1).get<std::vector<double>>();
  }
  const auto& vals = j.at("values");
  ck.values.default_value = vals.at("default_value").get<double>();
  ck.values.capacity = vals.at("capacity").get<size_t>();
  for (const auto& row : vals.at("rows")) {
    ck.values.values.emplace(hex_to_key(row.at(0).get<std::string>()),
                             row.at(1).get<double>());
  }
  return ck;
}

}  // namespace ragrl

#include "ragrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ragrl/hash.hpp"

namespace ragrl {

std::vector<QAExample> load_qa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw QaParseError(path, 0, "cannot open file");
  std::vector<QAExample> examples;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw QaParseError(path, lineno, "invalid JSON object");
    }
    if (!j.contains("question") || !j["question"].is_string()) {
      throw QaParseError(path, lineno, "missing question field");
    }
    if (!j.contains("golden_answers") || !j["golden_answers"].is_array() ||
        j["golden_answers"].empty()) {
      throw QaParseError(path, lineno, "missing golden_answers field");
    }
    QAExample ex;
    ex.question = j["question"].get<std::string>();
    for (const auto& g : j["golden_answers"]) {
      if (!g.is_string()) throw QaParseError(path, lineno, "non-string gold answer");
      ex.golds.push_back(g.get<std::string>());
    }
    examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw EmptyDatasetError(path);
  return examples;
}

void save_qa(const std::string& path, std::span<const QAExample> examples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  for (const QAExample& ex : examples) {
    nlohmann::json j{{"question", ex.question}, {"golden_answers", ex.golds}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("algorithm", cfg.algorithm);
  get("steps", cfg.steps);
  get("eval_every", cfg.eval_every);
  get("seed", cfg.seed);
  get("corpus", cfg.corpus_path);
  get("train", cfg.train_path);
  get("eval", cfg.eval_path);
  get("out_dir", cfg.out_dir);
  if (j.contains("cost")) {
    const auto& c = j.at("cost");
    if (c.contains("mode")) {
      cfg.cost.mode = c.at("mode").get<std::string>() == "latency" ? CostMode::Latency
                                                                   : CostMode::Memory;
    }
    if (c.contains("alpha")) cfg.cost.alpha = c.at("alpha").get<double>();
    if (c.contains("c_g")) cfg.cost.c_g = c.at("c_g").get<double>();
    if (c.contains("c_e")) cfg.cost.c_e = c.at("c_e").get<double>();
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    auto geto = [&](const char* key, auto& slot) {
      if (o.contains(key)) slot = o.at(key).get<std::decay_t<decltype(slot)>>();
    };
    geto("eps_clip", cfg.optimizer.eps_clip);
    geto("beta", cfg.optimizer.beta);
    geto("gamma", cfg.optimizer.gamma);
    geto("lambda", cfg.optimizer.lambda);
    geto("eps_floor", cfg.optimizer.eps_floor);
    geto("group_size", cfg.optimizer.group_size);
    geto("learning_rate", cfg.optimizer.learning_rate);
    geto("std_epsilon", cfg.optimizer.std_epsilon);
    geto("value_learning_rate", cfg.optimizer.value_learning_rate);
    geto("inner_epochs", cfg.optimizer.inner_epochs);
    geto("ref_refresh_interval", cfg.optimizer.ref_refresh_interval);
    if (o.contains("ppo_kl_target")) {
      cfg.optimizer.ppo_kl_target = o.at("ppo_kl_target").get<std::string>() == "ref"
                                        ? OptimizerConfig::KlTarget::Ref
                                        : OptimizerConfig::KlTarget::Old;
    }
  }
  if (j.contains("episode")) {
    const auto& e = j.at("episode");
    if (e.contains("budget")) cfg.episode.budget = e.at("budget").get<int>();
    if (e.contains("max_tokens_per_turn")) {
      cfg.episode.max_tokens_per_turn = e.at("max_tokens_per_turn").get<int>();
    }
    if (e.contains("strict_parsing")) {
      cfg.episode.strict_parsing = e.at("strict_parsing").get<bool>();
    }
  }
  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    if (p.contains("temperature")) {
      cfg.policy_temperature = p.at("temperature").get<double>();
    }
    if (p.contains("window")) cfg.policy_window = p.at("window").get<int>();
    if (p.contains("prime_certified")) {
      cfg.prime.certified = p.at("prime_certified").get<double>();
    }
    if (p.contains("prime_deep")) cfg.prime.deep = p.at("prime_deep").get<double>();
    if (p.contains("prime_direct")) {
      cfg.prime.direct = p.at("prime_direct").get<double>();
    }
    if (p.contains("prime_chain")) cfg.prime.chain = p.at("prime_chain").get<double>();
  }
  if (const char* env = std::getenv("RAGRL_OUT_DIR"); env && *env) {
    cfg.out_dir = env;
  }
  return cfg;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["algorithm"] = cfg.algorithm;
  j["steps"] = cfg.steps;
  j["eval_every"] = cfg.eval_every;
  j["seed"] = cfg.seed;
  j["corpus"] = cfg.corpus_path;
  j["train"] = cfg.train_path;
  j["eval"] = cfg.eval_path;
  j["out_dir"] = cfg.out_dir;
  j["cost"] = {{"mode", cfg.cost.mode == CostMode::Latency ? "latency" : "memory"},
               {"alpha", cfg.cost.alpha},
               {"c_g", cfg.cost.c_g},
               {"c_e", cfg.cost.c_e}};
  j["optimizer"] = {
      {"eps_clip", cfg.optimizer.eps_clip},
      {"beta", cfg.optimizer.beta},
      {"gamma", cfg.optimizer.gamma},
      {"lambda", cfg.optimizer.lambda},
      {"eps_floor", cfg.optimizer.eps_floor},
      {"group_size", cfg.optimizer.group_size},
      {"learning_rate", cfg.optimizer.learning_rate},
      {"std_epsilon", cfg.optimizer.std_epsilon},
      {"value_learning_rate", cfg.optimizer.value_learning_rate},
      {"inner_epochs", cfg.optimizer.inner_epochs},
      {"ref_refresh_interval", cfg.optimizer.ref_refresh_interval},
      {"ppo_kl_target",
       cfg.optimizer.ppo_kl_target == OptimizerConfig::KlTarget::Ref ? "ref" : "old"}};
  j["episode"] = {{"budget", cfg.episode.budget},
                  {"max_tokens_per_turn", cfg.episode.max_tokens_per_turn},
                  {"strict_parsing", cfg.episode.strict_parsing}};
  j["policy"] = {{"temperature", cfg.policy_temperature},
                 {"window", cfg.policy_window},
                 {"prime_certified", cfg.prime.certified},
                 {"prime_deep", cfg.prime.deep},
                 {"prime_direct", cfg.prime.direct},
                 {"prime_chain", cfg.prime.chain}};
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw UsageError("config is not valid JSON: " + path);
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Experiment setup and priming
// ---------------------------------------------------------------------------

Experiment setup_experiment(const ExperimentConfig& cfg) {
  std::vector<Document> corpus = load_corpus_jsonl(cfg.corpus_path);
  std::vector<QAExample> train_set = load_qa(cfg.train_path);
  std::vector<QAExample> eval_set =
      cfg.eval_path == cfg.train_path ? train_set : load_qa(cfg.eval_path);
  std::vector<std::string> texts;
  for (const auto& set : {train_set, eval_set}) {
    for (const QAExample& ex : set) {
      texts.push_back(ex.question);
      for (const std::string& g : ex.golds) texts.push_back(g);
    }
  }
  Vocabulary vocab = build_experiment_vocab(corpus, texts);
  Index index = build_index(corpus);
  TabularSoftmaxPolicy policy(vocab.size(), cfg.policy_temperature, cfg.policy_window);
  return Experiment{std::move(corpus), std::move(train_set), std::move(eval_set),
                    std::move(index),  std::move(vocab),     std::move(policy),
                    ValueTable{}};
}

namespace {

void prime_with(TabularSoftmaxPolicy& policy, const Experiment& exp,
                const ExperimentConfig& cfg, const QAExample& ex,
                StrategyMode mode, double entry_boost, double chain_boost) {
  if (entry_boost <= 0.0) return;
  auto plan = derive_plan(ex.question, ex.golds);
  if (!plan) return;  // non-synthetic question shapes simply do not prime
  auto strategy = make_strategy_policy(*plan, mode, exp.vocab);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x9121, static_cast<uint64_t>(mode)));
  Rollout rollout = run_episode(*strategy, exp.index, exp.vocab, ex.question,
                                cfg.episode, rng);
  RolloutTokens tokens = tokenize_rollout(rollout, exp.vocab, policy.window());
  // Action-opening markers are the decision points.
  std::vector<uint8_t> is_entry(tokens.size(), 0);
  for (size_t t = 0; t < tokens.size(); ++t) {
    const int id = tokens.token_ids[t];
    if (id == kSearchOpen || id == kMoreOpen || id == kAnswerOpen) is_entry[t] = 1;
  }
  for (size_t t = 0; t < tokens.size(); ++t) {
    if (!tokens.mask[t]) continue;
    policy.raise_logit(tokens.states[t], tokens.token_ids[t],
                       is_entry[t] ? entry_boost : chain_boost);
  }
}

}  // namespace

void prime_policy(TabularSoftmaxPolicy& policy, const Experiment& exp,
                  const ExperimentConfig& cfg) {
  for (const QAExample& ex : exp.train_set) {
    prime_with(policy, exp, cfg, ex, StrategyMode::Certified, cfg.prime.certified,
               cfg.prime.chain);
    prime_with(policy, exp, cfg, ex, StrategyMode::Deep, cfg.prime.deep,
               cfg.prime.chain);
    prime_with(policy, exp, cfg, ex, StrategyMode::Direct, cfg.prime.direct,
               cfg.prime.chain);
  }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalResult evaluate(Policy& policy, const Experiment& exp,
                    const ExperimentConfig& cfg, int step) {
  EvalResult result;
  result.row.step = step;
  const size_t n = exp.eval_set.size();
  double em_sum = 0, tok_sum = 0, lat_sum = 0, reward_sum = 0, cost_sum = 0,
         act_sum = 0;
  for (size_t i = 0; i < n; ++i) {
    const QAExample& ex = exp.eval_set[i];
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xE7A1u + static_cast<uint64_t>(step),
                                    static_cast<uint64_t>(i)));
    Rollout rollout = run_episode(policy, exp.index, exp.vocab, ex.question,
                                  cfg.episode, rng, DecodeMode::Greedy);
    RewardOutcome outcome = score_rollout(rollout, ex.golds, cfg.cost);
    result.em_bits.push_back(outcome.r == 1.0 ? 1 : 0);
    em_sum += outcome.r;
    tok_sum += memory_cost(rollout);
    lat_sum += latency_cost(rollout, cfg.cost);
    reward_sum += outcome.r;
    cost_sum += outcome.cost;
    act_sum += rollout.action_count;
  }
  const double dn = static_cast<double>(n);
  result.row.em = em_sum / dn;
  result.row.mean_tokens = tok_sum / dn;
  result.row.mean_latency_ms = lat_sum / dn;
  result.row.mean_reward = reward_sum / dn;
  result.row.mean_cost = cost_sum / dn;
  result.row.mean_actions = act_sum / dn;
  return result;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

void check_finite(double value, const char* what, int step) {
  if (!std::isfinite(value)) {
    throw NonFiniteGradientError(std::string(what) + " is non-finite at step " +
                                 std::to_string(step));
  }
}

}  // namespace

TrainResult train(Experiment& exp, const ExperimentConfig& cfg) {
  if (cfg.algorithm != "grpo" && cfg.algorithm != "ppo") {
    throw UsageError("unknown algorithm: " + cfg.algorithm);
  }
  const OptimizerConfig& opt = cfg.optimizer;
  prime_policy(exp.policy, exp, cfg);
  PolicySnapshot ref = snapshot(exp.policy);

  TrainResult result;
  EvalResult eval0 = evaluate(exp.policy, exp, cfg, 0);
  result.report.rows.push_back(eval0.row);
  result.final_eval = eval0;

  const int n_train = static_cast<int>(exp.train_set.size());
  for (int step = 1; step <= cfg.steps; ++step) {
    const QAExample& ex = exp.train_set[(step - 1) % n_train];
    // With a single inner epoch nothing reads pi_old after the update, and
    // pi_old == pi_theta during the gradient pass, so the deep copy is
    // skipped. Multi-epoch updates need the real frozen copy.
    PolicySnapshot old = opt.inner_epochs > 1 ? snapshot(exp.policy)
                                              : PolicySnapshot::alias(exp.policy);

    GroupSample group;
    group.question = ex.question;
    for (int g = 0; g < opt.group_size; ++g) {
      std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<uint64_t>(step),
                                      static_cast<uint64_t>(g)));
      group.rollouts.push_back(run_episode(exp.policy, exp.index, exp.vocab,
                                           ex.question, cfg.episode, rng));
      group.outcomes.push_back(
          score_rollout(group.rollouts.back(), ex.golds, cfg.cost));
    }
    const std::vector<Rollout>& rollouts = group.rollouts;
    const std::vector<RewardOutcome>& outcomes = group.outcomes;

    if (cfg.algorithm == "grpo") {
      std::vector<double> group_adv =
          grpo_advantages(group, cfg.cost.alpha, opt.std_epsilon);
      std::vector<BatchItem> batch;
      for (size_t i = 0; i < rollouts.size(); ++i) {
        BatchItem item;
        item.tokens = tokenize_rollout(rollouts[i], exp.vocab, exp.policy.window());
        item.advantages = broadcast_group_advantage(group_adv[i], item.tokens.size());
        batch.push_back(std::move(item));
      }
      for (int epoch = 0; epoch < opt.inner_epochs; ++epoch) {
        ObjectiveResult surrogate = masked_surrogate(batch, exp.policy, old, opt);
        ObjectiveResult kl = grpo_kl(exp.policy, ref, batch);
        check_finite(surrogate.value, "surrogate objective", step);
        check_finite(kl.value, "kl estimate", step);
        Gradient total = surrogate.gradient;
        accumulate_gradient(total, kl.gradient, -opt.beta);
        update_policy(exp.policy, total, opt);
      }
    } else {  // ppo
      std::vector<std::vector<double>> returns;
      std::vector<BatchItem> batch;
      const PolicySnapshot& kl_target =
          opt.ppo_kl_target == OptimizerConfig::KlTarget::Ref ? ref : old;
      for (size_t i = 0; i < rollouts.size(); ++i) {
        BatchItem item;
        item.tokens = tokenize_rollout(rollouts[i], exp.vocab, exp.policy.window());
        std::vector<double> rewards = token_rewards_ppo(
            item.tokens, exp.policy, kl_target, outcomes[i], opt, cfg.cost.alpha);
        GaeResult gae = return_advantages(item.tokens, rewards, exp.values, opt);
        item.advantages = std::move(gae.advantages);
        returns.push_back(std::move(gae.returns));
        batch.push_back(std::move(item));
      }
      for (int epoch = 0; epoch < opt.inner_epochs; ++epoch) {
        ObjectiveResult surrogate = masked_surrogate(batch, exp.policy, old, opt);
        check_finite(surrogate.value, "surrogate objective", step);
        update_policy(exp.policy, surrogate.gradient, opt);
      }
      update_value(exp.values, batch, returns, opt.value_learning_rate);
    }

    if (opt.ref_refresh_interval > 0 && step % opt.ref_refresh_interval == 0) {
      ref = snapshot(exp.policy);
    }
    if ((cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps) {
      EvalResult ev = evaluate(exp.policy, exp, cfg, step);
      result.report.rows.push_back(ev.row);
      result.final_eval = std::move(ev);
    }
  }
  return result;
}

TrainResult run_training(const ExperimentConfig& cfg, Experiment* out_exp) {
  Experiment exp = setup_experiment(cfg);
  TrainResult result = train(exp, cfg);
  std::filesystem::create_directories(cfg.out_dir);
  emit_metrics(result.report, cfg.out_dir);
  save_checkpoint(cfg.out_dir + "/checkpoint.json", exp.policy, exp.values,
                  cfg.optimizer, cfg.steps, exp.vocab);
  if (out_exp) *out_exp = std::move(exp);
  return result;
}

// ---------------------------------------------------------------------------
// Sweeps and the McNemar utility
// ---------------------------------------------------------------------------

double mcnemar_p_value(int b, int c) {
  const int n = b + c;
  if (n == 0) return 1.0;
  const int k = std::min(b, c);
  // Two-sided exact binomial(n, 1/2) tail, doubled and clamped.
  double tail = 0.0;
  double log_half_n = n * std::log(0.5);
  for (int i = 0; i <= k; ++i) {
    double log_choose = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                        std::lgamma(n - i + 1.0);
    tail += std::exp(log_choose + log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

std::vector<SweepRow> sweep_alpha(const ExperimentConfig& cfg,
                                  std::span<const double> alphas) {
  if (alphas.empty()) throw UsageError("sweep requires at least one alpha");
  std::vector<SweepRow> rows;
  std::vector<uint8_t> baseline_bits;
  bool have_baseline = false;
  // Baseline pass first if present, so every row can be paired against it.
  std::vector<size_t> order(alphas.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return (alphas[a] == 0.0) > (alphas[b] == 0.0);
  });
  std::vector<SweepRow> by_index(alphas.size());
  for (size_t oi : order) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.cost.alpha = alphas[oi];
    Experiment exp = setup_experiment(run_cfg);
    TrainResult tr = train(exp, run_cfg);
    SweepRow row;
    row.alpha = alphas[oi];
    row.em = tr.final_eval.row.em;
    row.mean_latency_ms = tr.final_eval.row.mean_latency_ms;
    if (alphas[oi] == 0.0 && !have_baseline) {
      baseline_bits = tr.final_eval.em_bits;
      have_baseline = true;
    }
    if (have_baseline && !baseline_bits.empty()) {
      int b = 0, c = 0;
      for (size_t i = 0; i < baseline_bits.size(); ++i) {
        if (baseline_bits[i] && !tr.final_eval.em_bits[i]) ++b;
        if (!baseline_bits[i] && tr.final_eval.em_bits[i]) ++c;
      }
      row.mcnemar_p_vs_alpha0 = mcnemar_p_value(b, c);
    }
    by_index[oi] = row;
  }
  for (const SweepRow& row : by_index) rows.push_back(row);
  return rows;
}

// ---------------------------------------------------------------------------
// Metrics emission
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return std::string(buf);
}

}  // namespace

std::string metrics_csv(const ExperimentReport& report) {
  std::string out = "step,em,mean_tokens,mean_latency_ms,mean_reward,mean_cost,mean_actions\n";
  for (const ReportRow& r : report.rows) {
    out += std::to_string(r.step) + "," + fmt(r.em) + "," + fmt(r.mean_tokens) + "," +
           fmt(r.mean_latency_ms) + "," + fmt(r.mean_reward) + "," + fmt(r.mean_cost) +
           "," + fmt(r.mean_actions) + "\n";
  }
  return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "alpha,em,mean_latency_ms,mcnemar_p_vs_alpha0\n";
  for (const SweepRow& r : rows) {
    out += fmt(r.alpha) + "," + fmt(r.em) + "," + fmt(r.mean_latency_ms) + ",";
    if (r.mcnemar_p_vs_alpha0 >= 0.0) out += fmt(r.mcnemar_p_vs_alpha0);
    out += "\n";
  }
  return out;
}

void emit_metrics(const ExperimentReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/metrics.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + dir + "/metrics.csv");
    out << metrics_csv(report);
  }
  nlohmann::ordered_json summary;
  summary["rows"] = report.rows.size();
  if (!report.rows.empty()) {
    const ReportRow& last = report.rows.back();
    summary["final"] = {{"step", last.step},
                        {"em", last.em},
                        {"mean_tokens", last.mean_tokens},
                        {"mean_latency_ms", last.mean_latency_ms},
                        {"mean_reward", last.mean_reward},
                        {"mean_cost", last.mean_cost},
                        {"mean_actions", last.mean_actions}};
  }
  std::ofstream out(dir + "/summary.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + dir + "/summary.json");
  out << summary.dump(2) << '\n';
}

}  // namespace ragrl

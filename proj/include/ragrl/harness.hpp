#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragrl/cost_reward.hpp"
#include "ragrl/optimizer.hpp"
#include "ragrl/policy.hpp"
#include "ragrl/retrieval.hpp"
#include "ragrl/rollout.hpp"
#include "ragrl/synth_world.hpp"

namespace ragrl {

struct QAExample {
  std::string question;
  std::vector<std::string> golds;
};

class QaParseError : public std::runtime_error {
 public:
  QaParseError(const std::string& path, size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

class EmptyDatasetError : public std::runtime_error {
 public:
  explicit EmptyDatasetError(const std::string& path)
      : std::runtime_error("dataset is empty: " + path) {}
};

class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// JSON-lines: {"question": str, "golden_answers": [str, ...]} per line.
std::vector<QAExample> load_qa(const std::string& path);
void save_qa(const std::string& path, std::span<const QAExample> examples);

// Pre-training logit boosts along scripted-strategy trajectories; the
// desk-scale stand-in for starting from a protocol-competent base model.
// Action-opening tokens (the decision points) get the per-strategy entry
// boost; the rest of a trajectory gets the chain boost, so an entered path
// completes reliably while entry odds stay tunable. Zero entry disables a
// strategy.
struct PrimeConfig {
  double certified = 8.0;
  double deep = 6.5;
  double direct = 4.5;
  double chain = 8.0;
};

struct ExperimentConfig {
  std::string algorithm = "grpo";  // grpo | ppo
  int steps = 2000;
  int eval_every = 200;
  uint64_t seed = 1;
  std::string corpus_path;
  std::string train_path;
  std::string eval_path;
  std::string out_dir = "out";
  CostParams cost;
  OptimizerConfig optimizer;
  EpisodeConfig episode;
  double policy_temperature = 1.0;
  int policy_window = 4;
  PrimeConfig prime;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

struct ReportRow {
  int step = 0;
  double em = 0.0;
  double mean_tokens = 0.0;
  double mean_latency_ms = 0.0;
  double mean_reward = 0.0;
  double mean_cost = 0.0;
  double mean_actions = 0.0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
};

struct EvalResult {
  ReportRow row;
  std::vector<uint8_t> em_bits;  // per eval question, for paired tests
};

// Shared experiment state: data, index, vocabulary, policy, critic.
struct Experiment {
  std::vector<Document> corpus;
  std::vector<QAExample> train_set;
  std::vector<QAExample> eval_set;
  Index index;
  Vocabulary vocab;
  TabularSoftmaxPolicy policy;
  ValueTable values;
};

Experiment setup_experiment(const ExperimentConfig& cfg);

// Replays the scripted strategies through the rollout engine and raises the
// visited (state, token) logits (max-merge).
void prime_policy(TabularSoftmaxPolicy& policy, const Experiment& exp,
                  const ExperimentConfig& cfg);

EvalResult evaluate(Policy& policy, const Experiment& exp,
                    const ExperimentConfig& cfg, int step);

struct TrainResult {
  ExperimentReport report;
  EvalResult final_eval;
};

// Runs the configured algorithm and returns the report; `exp` holds the
// trained policy afterwards.
TrainResult train(Experiment& exp, const ExperimentConfig& cfg);

// Convenience: setup + train + emit metrics/checkpoint into cfg.out_dir.
TrainResult run_training(const ExperimentConfig& cfg, Experiment* out_exp = nullptr);

struct SweepRow {
  double alpha = 0.0;
  double em = 0.0;
  double mean_latency_ms = 0.0;
  double mcnemar_p_vs_alpha0 = -1.0;  // negative = no baseline in the sweep
};

std::vector<SweepRow> sweep_alpha(const ExperimentConfig& cfg,
                                  std::span<const double> alphas);

// Exact two-sided binomial McNemar test on discordant pair counts.
double mcnemar_p_value(int b, int c);

void emit_metrics(const ExperimentReport& report, const std::string& dir);
std::string metrics_csv(const ExperimentReport& report);
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace ragrl

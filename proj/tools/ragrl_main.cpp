// ragrl command-line front end: world generation, indexing, single-rollout
// debugging, training, evaluation, and alpha sweeps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ragrl/harness.hpp"
#include "ragrl/hash.hpp"
#include "ragrl/synth_world.hpp"

namespace {

using namespace ragrl;

std::vector<double> parse_alphas(const std::string& csv) {
  std::vector<double> alphas;
  std::stringstream ss(csv);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) alphas.push_back(std::stod(part));
  }
  return alphas;
}

void apply_overrides(ExperimentConfig& cfg, const std::string& algorithm, int steps,
                     double alpha, uint64_t seed, const std::string& out_dir,
                     const std::string& cost_mode) {
  if (!algorithm.empty()) cfg.algorithm = algorithm;
  if (steps >= 0) cfg.steps = steps;
  if (alpha >= 0) cfg.cost.alpha = alpha;
  if (seed != 0) cfg.seed = seed;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (!cost_mode.empty()) {
    cfg.cost.mode = cost_mode == "latency" ? CostMode::Latency : CostMode::Memory;
  }
}

int cmd_gen_world(const WorldSpec& spec, const std::string& out_dir) {
  SynthWorld world = generate_world(spec);
  std::filesystem::create_directories(out_dir);
  save_corpus_jsonl(out_dir + "/corpus.jsonl", world.docs);
  std::vector<QAExample> qa;
  for (const SynthQuestion& q : world.questions) {
    qa.push_back(QAExample{q.question, q.golds});
  }
  save_qa(out_dir + "/questions.jsonl", qa);
  int n_depth = 0, n_two_hop = 0;
  for (const SynthQuestion& q : world.questions) {
    n_depth += q.is_depth ? 1 : 0;
    n_two_hop += q.is_two_hop ? 1 : 0;
  }
  nlohmann::ordered_json summary{{"docs", world.docs.size()},
                                 {"questions", world.questions.size()},
                                 {"depth_questions", n_depth},
                                 {"two_hop_questions", n_two_hop},
                                 {"seed", spec.seed}};
  std::ofstream out(out_dir + "/world.json");
  out << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

int cmd_index(const std::string& corpus_path) {
  std::vector<Document> corpus = load_corpus_jsonl(corpus_path);
  Index index = build_index(corpus);
  nlohmann::ordered_json stats{{"docs", index.doc_count},
                               {"terms", index.postings.size()},
                               {"avg_doc_length", index.avg_doc_length}};
  std::cout << stats.dump(2) << std::endl;
  return 0;
}

int cmd_rollout(const std::string& corpus_path, const std::string& question,
                const std::string& golds_csv, const std::string& checkpoint_path,
                uint64_t seed, bool greedy, int budget, int max_tokens) {
  std::vector<Document> corpus = load_corpus_jsonl(corpus_path);
  Index index = build_index(corpus);

  std::vector<std::string> texts{question};
  std::vector<std::string> golds;
  {
    std::stringstream ss(golds_csv);
    std::string part;
    while (std::getline(ss, part, '|')) {
      if (!part.empty()) golds.push_back(part);
    }
  }
  for (const std::string& g : golds) texts.push_back(g);

  EpisodeConfig episode;
  episode.budget = budget;
  episode.max_tokens_per_turn = max_tokens;

  Rollout rollout;
  if (!checkpoint_path.empty()) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    Vocabulary vocab;
    for (const std::string& w : ck.vocab_words) vocab.add_word(w);
    std::mt19937_64 rng(seed);
    rollout = run_episode(ck.policy, index, vocab, question, episode, rng,
                          greedy ? DecodeMode::Greedy : DecodeMode::Sample);
  } else {
    Vocabulary vocab = build_experiment_vocab(corpus, texts);
    TabularSoftmaxPolicy policy(vocab.size());
    std::mt19937_64 rng(seed);
    rollout = run_episode(policy, index, vocab, question, episode, rng,
                          greedy ? DecodeMode::Greedy : DecodeMode::Sample);
  }
  nlohmann::json j = rollout_to_json(rollout);
  if (!golds.empty()) {
    j["exact_match"] = exact_match(rollout.final_answer, golds);
  }
  std::cout << j.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cost-aware retrieval-augmented reasoning at desk scale"};
  app.require_subcommand(1);

  // gen-world
  auto* gen = app.add_subcommand("gen-world", "generate a synthetic corpus + QA set");
  WorldSpec spec;
  std::string gen_out = "world";
  gen->add_option("--seed", spec.seed, "world seed");
  gen->add_option("--entities", spec.n_entities, "number of entities");
  gen->add_option("--docs", spec.n_docs, "total documents");
  gen->add_option("--two-hop-frac", spec.two_hop_fraction, "two-hop question fraction");
  gen->add_option("--depth-frac", spec.depth_fraction, "depth-question fraction");
  gen->add_option("--out-dir", gen_out, "output directory");

  // index
  auto* idx = app.add_subcommand("index", "build an index and print stats");
  std::string idx_corpus;
  idx->add_option("--corpus", idx_corpus, "corpus JSONL path")->required();

  // rollout
  auto* ro = app.add_subcommand("rollout", "run one episode and print its trace");
  std::string ro_corpus, ro_question, ro_golds, ro_checkpoint;
  uint64_t ro_seed = 1;
  bool ro_greedy = false;
  int ro_budget = 8, ro_max_tokens = 256;
  ro->add_option("--corpus", ro_corpus, "corpus JSONL path")->required();
  ro->add_option("--question", ro_question, "question text")->required();
  ro->add_option("--golds", ro_golds, "gold answers, '|'-separated");
  ro->add_option("--checkpoint", ro_checkpoint, "trained checkpoint to load");
  ro->add_option("--seed", ro_seed, "episode seed");
  ro->add_flag("--greedy", ro_greedy, "argmax decoding");
  ro->add_option("--budget", ro_budget, "action budget B");
  ro->add_option("--max-tokens-per-turn", ro_max_tokens, "per-turn token limit");

  // train / eval / sweep-alpha share config + overrides
  std::string cfg_path, ov_algorithm, ov_out, ov_cost_mode;
  int ov_steps = -1;
  double ov_alpha = -1;
  uint64_t ov_seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", cfg_path, "experiment config JSON")->required();
    sub->add_option("--algorithm", ov_algorithm, "grpo | ppo");
    sub->add_option("--steps", ov_steps, "training steps");
    sub->add_option("--alpha", ov_alpha, "cost weight alpha");
    sub->add_option("--seed", ov_seed, "run seed");
    sub->add_option("--out-dir", ov_out, "output directory");
    sub->add_option("--cost-mode", ov_cost_mode, "memory | latency");
  };

  auto* tr = app.add_subcommand("train", "train a policy and emit metrics");
  add_common(tr);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the eval set");
  std::string ev_checkpoint;
  add_common(ev);
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint path")->required();

  auto* sw = app.add_subcommand("sweep-alpha", "train once per alpha and emit the frontier");
  std::string sw_alphas = "0,0.1,0.2,1,10";
  add_common(sw);
  sw->add_option("--alphas", sw_alphas, "comma-separated alphas");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_world(spec, gen_out);
    if (idx->parsed()) return cmd_index(idx_corpus);
    if (ro->parsed()) {
      return cmd_rollout(ro_corpus, ro_question, ro_golds, ro_checkpoint, ro_seed,
                         ro_greedy, ro_budget, ro_max_tokens);
    }

    ragrl::ExperimentConfig cfg = ragrl::load_config(cfg_path);
    apply_overrides(cfg, ov_algorithm, ov_steps, ov_alpha, ov_seed, ov_out,
                    ov_cost_mode);

    if (tr->parsed()) {
      ragrl::TrainResult result = ragrl::run_training(cfg);
      std::cout << "final em=" << result.final_eval.row.em
                << " latency_ms=" << result.final_eval.row.mean_latency_ms
                << " tokens=" << result.final_eval.row.mean_tokens << std::endl;
      std::cout << "metrics written to " << cfg.out_dir << std::endl;
      return 0;
    }
    if (ev->parsed()) {
      ragrl::Experiment exp = ragrl::setup_experiment(cfg);
      ragrl::Checkpoint ck = ragrl::load_checkpoint(ev_checkpoint);
      if (ck.policy.vocab_size() != exp.vocab.size()) {
        throw ragrl::UsageError("checkpoint vocabulary does not match the config data");
      }
      exp.policy = ck.policy;
      ragrl::EvalResult result = ragrl::evaluate(exp.policy, exp, cfg, ck.step);
      ragrl::ExperimentReport report;
      report.rows.push_back(result.row);
      std::cout << ragrl::metrics_csv(report);
      return 0;
    }
    if (sw->parsed()) {
      std::vector<double> alphas = parse_alphas(sw_alphas);
      std::vector<ragrl::SweepRow> rows = ragrl::sweep_alpha(cfg, alphas);
      std::string csv = ragrl::sweep_csv(rows);
      std::filesystem::create_directories(cfg.out_dir);
      std::ofstream out(cfg.out_dir + "/sweep.csv", std::ios::binary);
      out << csv;
      std::cout << csv;
      return 0;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << std::endl;
    return 1;
  }
  return 0;
}

#include "ragrl/synth_world.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <set>

#include "ragrl/cost_reward.hpp"
#include "ragrl/hash.hpp"
#include "ragrl/tag_stream.hpp"

namespace ragrl {

namespace {

const std::array<std::string, 4> kAttributes = {"color", "metal", "fruit", "animal"};

const std::array<std::array<std::string, 6>, 4> kValues = {{
    {"crimson", "azure", "amber", "violet", "jade", "coral"},
    {"iron", "copper", "silver", "cobalt", "nickel", "zinc"},
    {"mango", "plum", "quince", "fig", "papaya", "lychee"},
    {"otter", "heron", "lynx", "ibex", "tapir", "marten"},
}};

const std::array<std::string, 12> kSyllables = {"vor", "mek", "tal", "rin",
                                                "zub", "kel", "dra", "pon",
                                                "sul", "gra", "fen", "lox"};

// Distractor text variants in increasing term-frequency strength; the
// generator escalates until the fact document drops to rank >= 2. The
// distractor mentions every attribute word but never the "is <value>"
// pattern, so it outranks the fact document without leaking the answer.
std::string distractor_text(const std::string& e, int level) {
  std::string attrs;
  for (size_t i = 0; i < kAttributes.size(); ++i) {
    if (i) attrs += ' ';
    attrs += kAttributes[i];
  }
  std::string text =
      e + " archive : " + e + " " + attrs + " , " + e + " records listed .";
  for (int i = 0; i < level; ++i) text += " " + e + " " + attrs + " index .";
  return text;
}

std::string fact_text(const std::string& e, const std::array<std::string, 4>& vals) {
  std::string text = "facts about " + e + " :";
  for (size_t i = 0; i < kAttributes.size(); ++i) {
    text += " the " + kAttributes[i] + " of " + e + " is " + vals[i] + " .";
  }
  return text;
}

struct WorldRng {
  std::mt19937_64 rng;
  explicit WorldRng(uint64_t seed) : rng(seed) {}
  // idx in [0, n)
  size_t pick(size_t n) { return static_cast<size_t>(rng() % n); }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[pick(i)]);
    }
  }
};

std::vector<std::string> make_entity_names(int n, WorldRng& rng) {
  std::set<std::string> used;
  std::vector<std::string> names;
  while (static_cast<int>(names.size()) < n) {
    std::string name = kSyllables[rng.pick(kSyllables.size())] +
                       kSyllables[rng.pick(kSyllables.size())];
    if (used.insert(name).second) names.push_back(std::move(name));
  }
  return names;
}

int rank_of(const RankedList& ranked, const std::string& doc_id) {
  for (size_t i = 0; i < ranked.entries.size(); ++i) {
    if (ranked.entries[i].doc_id == doc_id) return static_cast<int>(i) + 1;
  }
  return 0;
}

}  // namespace

Vocabulary build_experiment_vocab(std::span<const Document> docs,
                                  std::span<const std::string> texts) {
  Vocabulary vocab;
  vocab.add_text(kPromptTemplateV1);
  vocab.add_text(kRethinkText);
  vocab.add_text(kExhaustionNotice);
  vocab.add_text("Doc ( Title : \" ) unknown");
  for (int d = 0; d <= 9; ++d) vocab.add_word(std::to_string(d));
  for (const Document& doc : docs) {
    vocab.add_text(doc.title);
    vocab.add_text(doc.text);
  }
  for (const std::string& t : texts) vocab.add_text(t);
  return vocab;
}

SynthWorld generate_world(const WorldSpec& spec) {
  if (spec.n_entities < 2) throw InfeasibleSpecError("need at least 2 entities");
  if (spec.n_docs < spec.n_entities) {
    throw InfeasibleSpecError("n_docs must be >= n_entities");
  }
  if (spec.two_hop_fraction < 0 || spec.two_hop_fraction > 1 ||
      spec.depth_fraction < 0 || spec.depth_fraction > 1) {
    throw InfeasibleSpecError("mix fractions must lie in [0,1]");
  }

  WorldRng rng(spec.seed);
  const int n_entities = spec.n_entities;
  const int n_attrs = static_cast<int>(kAttributes.size());
  const int n_single = n_entities * n_attrs;
  std::vector<std::string> entities = make_entity_names(n_entities, rng);

  // Attribute values per entity.
  std::vector<std::array<std::string, 4>> values(n_entities);
  for (int i = 0; i < n_entities; ++i) {
    for (size_t j = 0; j < kAttributes.size(); ++j) {
      values[i][j] = kValues[j][rng.pick(kValues[j].size())];
    }
  }

  // Depth entities: their fact documents hide behind a shared distractor.
  std::vector<int> entity_order(n_entities);
  for (int i = 0; i < n_entities; ++i) entity_order[i] = i;
  rng.shuffle(entity_order);
  const int n_depth = static_cast<int>(spec.depth_fraction * n_entities + 0.5);
  std::vector<uint8_t> is_depth(n_entities, 0);
  for (int i = 0; i < n_depth; ++i) is_depth[entity_order[i]] = 1;

  // Two-hop questions are extras on top of the single-hop set, clustered on
  // few anchor entities so one bridge document serves several questions.
  // two_hop_fraction is the fraction of the final question set.
  double two_frac = spec.two_hop_fraction;
  if (two_frac >= 1.0) throw InfeasibleSpecError("two_hop_fraction must be < 1");
  const int n_two_hop =
      static_cast<int>(two_frac / (1.0 - two_frac) * n_single + 0.5);
  if (n_two_hop > n_single) {
    throw InfeasibleSpecError("two_hop_fraction too large for this entity count");
  }
  std::vector<std::pair<int, int>> two_hop_slots;  // (anchor entity, attribute)
  std::vector<uint8_t> needs_bridge(n_entities, 0);
  for (int k = 0; k < n_two_hop; ++k) {
    const int anchor = entity_order[(k / n_attrs) % n_entities];
    two_hop_slots.emplace_back(anchor, k % n_attrs);
    needs_bridge[anchor] = 1;
  }
  int n_bridges = 0;
  for (uint8_t b : needs_bridge) n_bridges += b;

  const int fixed_docs = n_entities + n_bridges + n_depth;
  if (spec.n_docs < fixed_docs) {
    throw InfeasibleSpecError("n_docs too small: need at least " +
                              std::to_string(fixed_docs));
  }

  // Spend the remaining doc budget on "split" entities whose facts live in
  // one focused document per attribute (the rest get a single consolidated
  // fact sheet). Split docs are what make paging and retrieval exact at the
  // question level; consolidated sheets answer any of their four questions
  // only as a group.
  const int n_split = std::min(
      n_entities, std::max(0, (spec.n_docs - fixed_docs) / (n_attrs - 1)));
  std::vector<int> split_order(entity_order);
  rng.shuffle(split_order);
  std::vector<uint8_t> is_split(n_entities, 0);
  for (int i = 0; i < n_split; ++i) is_split[split_order[i]] = 1;

  // Assemble documents: facts (split or consolidated), bridges, distractors,
  // fillers.
  std::vector<int> distractor_level(n_entities, 0);
  auto assemble = [&](std::vector<Document>& docs) {
    docs.clear();
    for (int i = 0; i < n_entities; ++i) {
      if (is_split[i]) {
        for (int j = 0; j < n_attrs; ++j) {
          docs.push_back(Document{"fact-" + entities[i] + "-" + kAttributes[j],
                                  entities[i] + " entry " + std::to_string(j + 1),
                                  "the " + kAttributes[j] + " of " + entities[i] +
                                      " is " + values[i][j] + " ."});
        }
      } else {
        docs.push_back(Document{"fact-" + entities[i], entities[i] + " fact sheet",
                                fact_text(entities[i], values[i])});
      }
    }
    for (int i = 0; i < n_entities; ++i) {
      if (!needs_bridge[i]) continue;
      const std::string& e2 = entities[(i + 1) % n_entities];
      docs.push_back(Document{"link-" + entities[i], entities[i] + " companion note",
                              "the companion of " + entities[i] + " is " + e2 + " ."});
    }
    for (int i = 0; i < n_entities; ++i) {
      if (!is_depth[i]) continue;
      docs.push_back(Document{"noise-" + entities[i], entities[i] + " archive",
                              distractor_text(entities[i], distractor_level[i])});
    }
    int filler = 0;
    while (static_cast<int>(docs.size()) < spec.n_docs) {
      std::string k = std::to_string(filler++);
      docs.push_back(Document{"filler-" + k, "almanac entry " + k,
                              "the weather of region" + k + " is mild today ."});
    }
  };

  SynthWorld world;
  // Escalate distractor strength until every depth entity's fact documents
  // sit at rank 2..5 for their attribute queries.
  const int kMaxLevel = 6;
  for (int attempt = 0;; ++attempt) {
    assemble(world.docs);
    Index index = build_index(world.docs);
    bool all_ok = true;
    for (int i = 0; i < n_entities; ++i) {
      if (!is_depth[i]) continue;
      for (const std::string& attr : kAttributes) {
        RankedList ranked = search_all(index, entities[i] + " " + attr);
        const std::string target_id =
            is_split[i] ? "fact-" + entities[i] + "-" + attr : "fact-" + entities[i];
        int rank = rank_of(ranked, target_id);
        if (rank < 2 || rank > 5) {
          all_ok = false;
          if (rank == 1 || rank == 0) {
            if (distractor_level[i] >= kMaxLevel) {
              throw InfeasibleSpecError("cannot demote fact doc for " + entities[i]);
            }
            ++distractor_level[i];
          } else {
            throw InfeasibleSpecError("fact doc sank below rank 5 for " + entities[i]);
          }
        }
      }
    }
    if (all_ok) break;
    if (attempt > kMaxLevel * n_entities) {
      throw InfeasibleSpecError("distractor escalation did not converge");
    }
  }

  // Questions: the single-hop grid, then the two-hop extras. The two-hop
  // phrasing keeps the attribute at the question tail so a small context
  // window still distinguishes sibling questions.
  for (int slot = 0; slot < n_single; ++slot) {
    const int i = slot / n_attrs;
    const int j = slot % n_attrs;
    SynthQuestion q;
    q.attribute = kAttributes[j];
    q.question = "what is the " + q.attribute + " of " + entities[i] + " ?";
    q.golds = {values[i][j]};
    q.entity = entities[i];
    q.is_depth = is_depth[i] != 0;
    q.provenance_doc_ids = {is_split[i] ? "fact-" + entities[i] + "-" + q.attribute
                                        : "fact-" + entities[i]};
    world.questions.push_back(std::move(q));
  }
  for (const auto& [i, j] : two_hop_slots) {
    const int target = (i + 1) % n_entities;
    SynthQuestion q;
    q.attribute = kAttributes[j];
    q.is_two_hop = true;
    q.question = "the companion of " + entities[i] + " has which " + q.attribute + " ?";
    q.golds = {values[target][j]};
    q.entity = entities[i];
    q.is_depth = is_depth[target] != 0;
    q.provenance_doc_ids = {
        "link-" + entities[i],
        is_split[target] ? "fact-" + entities[target] + "-" + q.attribute
                         : "fact-" + entities[target]};
    world.questions.push_back(std::move(q));
  }

  // Record the fact document's rank for each question's final query and
  // check depth realism: a depth question's rank-1 document must not contain
  // the gold answer.
  Index index = build_index(world.docs);
  for (SynthQuestion& q : world.questions) {
    std::string target_entity = q.entity;
    if (q.is_two_hop) {
      const auto it = std::find(entities.begin(), entities.end(), q.entity);
      target_entity = entities[(it - entities.begin() + 1) % n_entities];
    }
    const auto te_it = std::find(entities.begin(), entities.end(), target_entity);
    const bool target_split = is_split[te_it - entities.begin()] != 0;
    RankedList ranked = search_all(index, target_entity + " " + q.attribute);
    q.answer_doc_rank = rank_of(
        ranked, target_split ? "fact-" + target_entity + "-" + q.attribute
                             : "fact-" + target_entity);
    if (q.is_depth) {
      if (q.answer_doc_rank < 2 || q.answer_doc_rank > 5) {
        throw InfeasibleSpecError("depth question rank check failed: " + q.question);
      }
      const Document* top = index.find(ranked.entries.front().doc_id);
      const std::vector<std::string> top_words = split_words(top->text);
      if (std::find(top_words.begin(), top_words.end(), q.golds[0]) !=
          top_words.end()) {
        throw InfeasibleSpecError("gold leaked into rank-1 doc for: " + q.question);
      }
    } else if (q.answer_doc_rank != 1) {
      throw InfeasibleSpecError("plain question not answerable from rank 1: " +
                                q.question);
    }
  }

  // Certification: the adaptive strategy must answer every question within
  // the default budget through the real rollout engine.
  std::vector<std::string> texts;
  for (const SynthQuestion& q : world.questions) {
    texts.push_back(q.question);
    for (const std::string& g : q.golds) texts.push_back(g);
  }
  Vocabulary vocab = build_experiment_vocab(world.docs, texts);
  EpisodeConfig episode_cfg;
  for (const SynthQuestion& q : world.questions) {
    auto plan = derive_plan(q.question, q.golds);
    if (!plan) throw InfeasibleSpecError("generated unparseable question: " + q.question);
    auto policy = make_strategy_policy(*plan, StrategyMode::Certified, vocab);
    std::mt19937_64 ep_rng(derive_seed(spec.seed, 0xCE27, 0));
    Rollout rollout =
        run_episode(*policy, index, vocab, q.question, episode_cfg, ep_rng);
    if (exact_match(rollout.final_answer, q.golds) != 1.0) {
      throw InfeasibleSpecError("certification failed for: " + q.question);
    }
  }
  return world;
}

std::optional<QuestionPlan> derive_plan(const std::string& question,
                                        std::span<const std::string> golds) {
  if (golds.empty()) return std::nullopt;
  std::vector<std::string> words = split_words(question);
  QuestionPlan plan;
  plan.gold = golds[0];
  // "what is the <attr> of <entity> ?"
  if (words.size() == 7 && words[0] == "what" && words[1] == "is" &&
      words[2] == "the" && words[4] == "of" && words[6] == "?") {
    plan.attribute = words[3];
    plan.entity = words[5];
    return plan;
  }
  // "the companion of <entity> has which <attr> ?"
  if (words.size() == 8 && words[0] == "the" && words[1] == "companion" &&
      words[2] == "of" && words[4] == "has" && words[5] == "which" &&
      words[7] == "?") {
    plan.two_hop = true;
    plan.entity = words[3];
    plan.attribute = words[6];
    return plan;
  }
  return std::nullopt;
}

namespace {

// Reactive point-mass policy executing an answering strategy against the
// live episode stream.
class StrategyPolicy final : public Policy {
 public:
  StrategyPolicy(QuestionPlan plan, StrategyMode mode, const Vocabulary& vocab)
      : plan_(std::move(plan)), mode_(mode), vocab_(vocab) {}

  int vocab_size() const override { return vocab_.size(); }

  void begin_episode(std::span<const Token> prompt_tokens) override {
    prompt_len_ = prompt_tokens.size();
    queue_.clear();
    stage_ = 0;
    more_attempts_ = 0;
    over_fetched_ = false;
    done_ = false;
    target_entity_.clear();
  }

  std::vector<double> next_token_dist(std::span<const Token> context) override {
    if (queue_.empty()) advance(context);
    std::vector<double> dist(static_cast<size_t>(vocab_.size()), 0.0);
    int id = kEos;
    if (!queue_.empty()) {
      id = queue_.front();
      queue_.pop_front();
    }
    dist.at(static_cast<size_t>(id)) = 1.0;
    return dist;
  }

 private:
  void queue_text(const std::string& text) {
    for (const Token& t : tokenize(text, vocab_)) queue_.push_back(t.id);
  }
  void queue_search(const std::string& query) {
    queue_.push_back(kSearchOpen);
    queue_text(query);
    queue_.push_back(kSearchClose);
  }
  void queue_more(int k) {
    queue_.push_back(kMoreOpen);
    queue_text(std::to_string(k));
    queue_.push_back(kMoreClose);
  }
  void queue_answer(const std::string& text) {
    queue_.push_back(kAnswerOpen);
    queue_text(text);
    queue_.push_back(kAnswerClose);
    done_ = true;
  }

  // "the <attr> of <entity> is <value>" scan over the info blocks, newest
  // block first.
  std::optional<std::string> extract(const TaggedStream& stream,
                                     const std::string& attr,
                                     const std::string& entity) const {
    for (auto it = stream.segments.rbegin(); it != stream.segments.rend(); ++it) {
      if (it->kind != SegmentKind::Information) continue;
      const std::vector<Token>& toks = it->tokens;
      for (size_t i = 0; i + 5 < toks.size(); ++i) {
        if (toks[i].text == "the" && toks[i + 1].text == attr &&
            toks[i + 2].text == "of" && toks[i + 3].text == entity &&
            toks[i + 4].text == "is") {
          return toks[i + 5].text;
        }
      }
    }
    return std::nullopt;
  }

  void advance(std::span<const Token> context) {
    if (done_) return;
    TaggedStream stream;
    try {
      std::span<const Token> suffix = context.subspan(std::min(prompt_len_, context.size()));
      stream = parse_stream(suffix, ParseMode::Lenient);
    } catch (const ParseError&) {
      queue_answer("unknown");
      return;
    }
    switch (mode_) {
      case StrategyMode::Direct:
        queue_answer(plan_.gold);
        return;
      case StrategyMode::Premature:
        queue_answer("unknown");
        return;
      case StrategyMode::WrongQuery:
        if (stage_ == 0) {
          queue_search("almanac entry");
          stage_ = 1;
        } else {
          queue_answer("unknown");
        }
        return;
      case StrategyMode::Certified:
      case StrategyMode::Deep:
        break;
    }

    const bool deep = mode_ == StrategyMode::Deep;
    if (stage_ == 0) {
      if (plan_.two_hop) {
        queue_search(plan_.entity + " companion");
        stage_ = 1;
      } else {
        target_entity_ = plan_.entity;
        queue_search(plan_.entity + " " + plan_.attribute);
        stage_ = 2;
        more_attempts_ = 0;
        over_fetched_ = false;
      }
      return;
    }
    if (stage_ == 1) {
      // Resolve the bridge entity, paging deeper if the top document missed.
      auto bridge = extract(stream, "companion", plan_.entity);
      if (bridge) {
        target_entity_ = *bridge;
        queue_search(target_entity_ + " " + plan_.attribute);
        stage_ = 2;
        more_attempts_ = 0;
        over_fetched_ = false;
        return;
      }
      if (more_attempts_ < 4) {
        ++more_attempts_;
        queue_more(1);
      } else {
        queue_answer("unknown");
      }
      return;
    }
    // stage_ == 2: final query issued; extract the value.
    auto value = extract(stream, plan_.attribute, target_entity_);
    if (value && deep && !over_fetched_) {
      // Over-fetch one page the answer does not need.
      over_fetched_ = true;
      queue_more(1);
      return;
    }
    if (value) {
      queue_answer(*value);
      return;
    }
    if (more_attempts_ < 4) {
      ++more_attempts_;
      queue_more(1);
    } else {
      queue_answer("unknown");
    }
  }

  QuestionPlan plan_;
  StrategyMode mode_;
  const Vocabulary& vocab_;
  std::deque<int> queue_;
  size_t prompt_len_ = 0;
  int stage_ = 0;
  int more_attempts_ = 0;
  bool over_fetched_ = false;
  bool done_ = false;
  std::string target_entity_;
};

}  // namespace

std::unique_ptr<Policy> make_strategy_policy(const QuestionPlan& plan,
                                             StrategyMode mode,
                                             const Vocabulary& vocab) {
  return std::make_unique<StrategyPolicy>(plan, mode, vocab);
}

OracleStrategies oracle_strategies(const SynthQuestion& question,
                                   const Vocabulary& vocab) {
  auto plan = derive_plan(question.question, question.golds);
  if (!plan) throw InfeasibleSpecError("question has no strategy plan");
  QuestionPlan p = *plan;
  const Vocabulary* v = &vocab;
  return OracleStrategies{
      [p, v] { return make_strategy_policy(p, StrategyMode::Certified, *v); },
      [p, v] { return make_strategy_policy(p, StrategyMode::Deep, *v); },
      [p, v] { return make_strategy_policy(p, StrategyMode::Direct, *v); },
      [p, v] { return make_strategy_policy(p, StrategyMode::Premature, *v); },
      [p, v] { return make_strategy_policy(p, StrategyMode::WrongQuery, *v); },
  };
}

}  // namespace ragrl

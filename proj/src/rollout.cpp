#include "ragrl/rollout.hpp"

#include <algorithm>
#include <cassert>

namespace ragrl {

const std::string kPromptTemplateV1 =
    "Answer the given question. You must start the output by generating "
    "reasoning tokens inside <think> and </think> and every time you get new "
    "information. After reasoning, if you lack some knowledge, you can call a "
    "search engine by <search> query </search>, and it will return the top "
    "searched result between <information> and </information>. After each "
    "search you can optionally ask for more documents by <more info> num_docs "
    "</more info> where num_docs is a positive integer indicating the number "
    "of additional requested documents. Additional retrieved documents will "
    "be provided between <information> and </information>. You can search as "
    "many times as you want. If you find that no further external knowledge "
    "is needed, you can directly provide the answer inside <answer> and "
    "</answer> without detailed illustrations. For example, <answer> xxx "
    "</answer>. Question: {question}.";

std::string render_prompt(const std::string& question) {
  std::string prompt = kPromptTemplateV1;
  const std::string placeholder = "{question}";
  size_t pos = prompt.find(placeholder);
  prompt.replace(pos, placeholder.size(), question);
  return prompt;
}

std::vector<Token> prompt_tokens(const std::string& question, const Vocabulary& vocab) {
  return tokenize(render_prompt(question), vocab);
}

std::vector<Token> generate_turn(Policy& policy, std::span<const Token> context,
                                 int limit, const Vocabulary& vocab,
                                 std::mt19937_64& rng, DecodeMode mode) {
  if (limit < 1) throw std::invalid_argument("turn limit must be >= 1");
  std::vector<Token> ctx(context.begin(), context.end());
  std::vector<Token> turn;
  for (int i = 0; i < limit; ++i) {
    std::vector<double> dist = policy.next_token_dist(ctx);
    int id = mode == DecodeMode::Greedy ? argmax_token(dist) : sample_token(dist, rng);
    Token tok{id, vocab.text_of(id)};
    turn.push_back(tok);
    ctx.push_back(std::move(tok));
    if (id == kSearchClose || id == kMoreClose || id == kAnswerClose || id == kEos) {
      break;
    }
  }
  return turn;
}

namespace {

// A usable action turn parses into zero or more Think segments followed by
// exactly one Search/MoreInfo/Answer segment, with no trailing <eos>. In
// lenient mode untagged spans count as reasoning; in strict mode they void
// the turn. Everything else stays in the stream verbatim as untagged tokens.
struct TurnShape {
  std::vector<Segment> segments;  // what to append to the stream
  std::optional<Segment> action_segment;
  std::string invalid_reason;
};

TurnShape classify_turn(const std::vector<Token>& turn, bool strict_parsing) {
  TurnShape shape;
  TaggedStream parsed;
  try {
    parsed = parse_stream(turn,
                          strict_parsing ? ParseMode::Strict : ParseMode::Lenient);
  } catch (const ParseError& err) {
    shape.segments.push_back(make_segment(SegmentKind::Think, turn, false));
    shape.invalid_reason = err.what();
    return shape;
  }
  // The policy typing out the rethink sentence is still just policy text.
  for (Segment& seg : parsed.segments) {
    if (seg.kind == SegmentKind::Rethink) {
      seg = make_segment(SegmentKind::Think, std::move(seg.tokens), false);
    }
  }
  bool well_shaped = !parsed.segments.empty() && !parsed.trailing_eos;
  if (well_shaped) {
    for (size_t i = 0; i + 1 < parsed.segments.size(); ++i) {
      if (parsed.segments[i].kind != SegmentKind::Think) well_shaped = false;
    }
    SegmentKind last = parsed.segments.back().kind;
    if (last != SegmentKind::Search && last != SegmentKind::MoreInfo &&
        last != SegmentKind::Answer && last != SegmentKind::Think) {
      well_shaped = false;  // policy-forged <information> block
    }
  }
  if (!well_shaped) {
    bool thinks_only = !parsed.segments.empty() &&
                       std::all_of(parsed.segments.begin(), parsed.segments.end(),
                                   [](const Segment& s) {
                                     return s.kind == SegmentKind::Think;
                                   });
    if (thinks_only) {
      // Keep the well-formed reasoning; the dangling <eos> stays verbatim.
      shape.segments = parsed.segments;
      if (parsed.trailing_eos) {
        shape.segments.push_back(make_segment(
            SegmentKind::Think, std::vector<Token>{reserved_token(kEos)}, false));
      }
      shape.invalid_reason = "no action in turn";
    } else {
      shape.segments.push_back(make_segment(SegmentKind::Think, turn, false));
      shape.invalid_reason = parsed.segments.empty() ? "empty action turn"
                                                     : "malformed action turn";
    }
    return shape;
  }
  if (parsed.segments.back().kind == SegmentKind::Think) {
    shape.segments = parsed.segments;
    shape.invalid_reason = "turn ended without an action";
    return shape;
  }
  shape.segments = parsed.segments;
  shape.action_segment = parsed.segments.back();
  return shape;
}

}  // namespace

Rollout run_episode(Policy& policy, const Index& index, const Vocabulary& vocab,
                    const std::string& question, const EpisodeConfig& cfg,
                    std::mt19937_64& rng, DecodeMode mode) {
  if (cfg.budget < 1) throw std::invalid_argument("budget must be >= 1");
  Rollout rollout;
  rollout.question = question;

  std::vector<Token> context = prompt_tokens(question, vocab);
  policy.begin_episode(context);

  RetrievalCache cache;
  int b = 0;
  int turn_index = 0;

  auto append_segment = [&](Segment seg) {
    if (auto open = seg.open_tag()) context.push_back(*open);
    context.insert(context.end(), seg.tokens.begin(), seg.tokens.end());
    if (auto close = seg.close_tag()) context.push_back(*close);
    rollout.stream.segments.push_back(std::move(seg));
  };

  auto inject_rethink = [&](const std::string& reason) {
    append_segment(make_segment(SegmentKind::Rethink,
                                tokenize(kRethinkText, vocab), false));
    ActionRecord rec;
    rec.turn = turn_index;
    rec.kind = "rethink";
    rec.argument = reason;
    rec.actions_including_answer = b + 1;
    rec.actions_excluding_answer = b + 1;
    rollout.trace.push_back(std::move(rec));
  };

  while (b < cfg.budget) {
    ++turn_index;
    std::vector<Token> turn =
        generate_turn(policy, context, cfg.max_tokens_per_turn, vocab, rng, mode);
    TurnShape shape = classify_turn(turn, cfg.strict_parsing);
    for (Segment& seg : shape.segments) append_segment(std::move(seg));

    Action action = shape.action_segment
                        ? detect_action(*shape.action_segment)
                        : Action(InvalidAction{shape.invalid_reason});

    if (auto* sq = std::get_if<SearchQuery>(&action)) {
      RankedList full = search_all(index, sq->query);
      std::vector<Document> delivered;
      ActionRecord rec;
      rec.turn = turn_index;
      rec.kind = "search";
      rec.argument = sq->query;
      if (!full.empty()) {
        const Document* doc = index.find(full.entries.front().doc_id);
        delivered.push_back(*doc);
        rec.delivered_doc_ids.push_back(doc->id);
      }
      cache = cache_store(std::move(cache), sq->query, std::move(full),
                          delivered.size());
      append_segment(render_information(delivered, vocab));
      rec.actions_including_answer = b + 1;
      rec.actions_excluding_answer = b + 1;
      rollout.trace.push_back(std::move(rec));
    } else if (auto* mi = std::get_if<MoreInfoRequest>(&action)) {
      if (!cache.last_query.has_value()) {
        inject_rethink("more-info before any search");
      } else {
        auto [ids, updated] = fetch_more(std::move(cache), mi->k);
        cache = std::move(updated);
        std::vector<Document> delivered;
        for (const std::string& id : ids) delivered.push_back(*index.find(id));
        append_segment(render_information(delivered, vocab));
        ActionRecord rec;
        rec.turn = turn_index;
        rec.kind = "more_info";
        rec.argument = std::to_string(mi->k);
        rec.delivered_doc_ids = std::move(ids);
        rec.actions_including_answer = b + 1;
        rec.actions_excluding_answer = b + 1;
        rollout.trace.push_back(std::move(rec));
      }
    } else if (auto* fa = std::get_if<FinalAnswer>(&action)) {
      rollout.final_answer = fa->answer;
      ActionRecord rec;
      rec.turn = turn_index;
      rec.kind = "answer";
      rec.argument = fa->answer;
      rec.actions_including_answer = b + 1;
      rec.actions_excluding_answer = b;
      rollout.trace.push_back(std::move(rec));
      ++b;
      break;
    } else {
      inject_rethink(std::get<InvalidAction>(action).reason);
    }
    ++b;
  }

  rollout.action_count = b;
  rollout.mask = build_mask(rollout.stream);

#ifndef NDEBUG
  // The optimizer reconstructs states from prompt + serialized stream; that
  // only works if the running context was exactly that sequence.
  std::vector<Token> expect = prompt_tokens(question, vocab);
  std::vector<Token> serialized = serialize_tokens(rollout.stream);
  expect.insert(expect.end(), serialized.begin(), serialized.end());
  assert(expect == context);
#endif
  return rollout;
}

nlohmann::json rollout_to_json(const Rollout& rollout) {
  nlohmann::json j;
  j["question"] = rollout.question;
  j["stream"] = serialize_text(rollout.stream);
  j["mask"] = rollout.mask;
  j["action_count"] = rollout.action_count;
  j["final_answer"] =
      rollout.final_answer ? nlohmann::json(*rollout.final_answer) : nlohmann::json();
  nlohmann::json actions = nlohmann::json::array();
  for (const ActionRecord& rec : rollout.trace) {
    actions.push_back({{"turn", rec.turn},
                       {"kind", rec.kind},
                       {"argument", rec.argument},
                       {"delivered_doc_ids", rec.delivered_doc_ids},
                       {"actions_including_answer", rec.actions_including_answer},
                       {"actions_excluding_answer", rec.actions_excluding_answer}});
  }
  j["actions"] = std::move(actions);
  return j;
}

}  // namespace ragrl

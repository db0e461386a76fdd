#include <doctest.h>

#include <random>

#include "ragrl/tag_stream.hpp"
#include "test_util.hpp"

using namespace ragrl;
using ragrl::test::make_vocab;

namespace {

const char* kFixtureWords =
    "musician x q1 Gary Barlow profession a d Teide National Park 1 2 hello world";

Vocabulary fixture_vocab() { return make_vocab({kFixtureWords}); }

// Seeded generator of well-formed streams for the round-trip property.
TaggedStream random_stream(std::mt19937_64& rng, const Vocabulary& vocab) {
  static const std::vector<std::string> words = {"hello", "world", "q1",
                                                 "Gary",  "Park",  "x"};
  TaggedStream stream;
  const int n_segments = static_cast<int>(rng() % 7);
  for (int s = 0; s < n_segments; ++s) {
    const int kind_pick = static_cast<int>(rng() % 6);
    std::vector<Token> content;
    if (kind_pick == 2) {  // MoreInfo holds a digit
      content.push_back(tokenize(std::to_string(1 + rng() % 9), vocab)[0]);
      stream.segments.push_back(make_segment(SegmentKind::MoreInfo, content));
      continue;
    }
    const int len = static_cast<int>(rng() % 5);
    for (int i = 0; i < len; ++i) {
      content.push_back(tokenize(words[rng() % words.size()], vocab)[0]);
    }
    switch (kind_pick) {
      case 0:
        stream.segments.push_back(make_segment(SegmentKind::Think, content));
        break;
      case 1:
        stream.segments.push_back(make_segment(SegmentKind::Search, content));
        break;
      case 3:
        stream.segments.push_back(make_segment(SegmentKind::Answer, content));
        break;
      case 4:
        stream.segments.push_back(make_segment(SegmentKind::Information, content));
        break;
      default:
        stream.segments.push_back(
            make_segment(SegmentKind::Rethink, tokenize(kRethinkText, vocab)));
        break;
    }
  }
  stream.trailing_eos = rng() % 2 == 0;
  return stream;
}

}  // namespace

TEST_CASE("tokenize maps words, reserved tags, and empty input") {
  Vocabulary vocab = fixture_vocab();
  auto single = tokenize("musician", vocab);
  REQUIRE(single.size() == 1);
  CHECK(single[0].text == "musician");
  CHECK(single[0].id >= kNumReserved);

  auto more = tokenize("<more info> 1 </more info>", vocab);
  REQUIRE(more.size() == 3);
  CHECK(more[0].id == kMoreOpen);
  CHECK(more[1].text == "1");
  CHECK(more[2].id == kMoreClose);

  CHECK(tokenize("", vocab).empty());
}

TEST_CASE("tokenize keeps unknown surfaces under the unk id") {
  Vocabulary vocab = fixture_vocab();
  auto tokens = tokenize("zzyzx musician", vocab);
  REQUIRE(tokens.size() == 2);
  CHECK(tokens[0].id == kUnk);
  CHECK(tokens[0].text == "zzyzx");
  CHECK(tokens[1].id != kUnk);
}

TEST_CASE("tokenize splits punctuation and keeps <unk> literal intact") {
  Vocabulary vocab = fixture_vocab();
  auto tokens = tokenize("(Title: \"x\") <unk>", vocab);
  std::vector<std::string> texts;
  for (const auto& t : tokens) texts.push_back(t.text);
  CHECK(texts == std::vector<std::string>{"(", "Title", ":", "\"", "x", "\"", ")",
                                          "<unk>"});
  CHECK(tokens.back().id == kUnk);
}

TEST_CASE("parse_stream partitions tagged segments") {
  Vocabulary vocab = fixture_vocab();
  auto tokens = tokenize("<think> x </think> <answer> musician </answer>", vocab);
  TaggedStream stream = parse_stream(tokens);
  REQUIRE(stream.segments.size() == 2);
  CHECK(stream.segments[0].kind == SegmentKind::Think);
  CHECK(stream.segments[0].tokens.size() == 1);
  CHECK(stream.segments[1].kind == SegmentKind::Answer);
  CHECK(stream.segments[1].tokens[0].text == "musician");
  CHECK_FALSE(stream.trailing_eos);
}

TEST_CASE("parse_stream handles the empty stream") {
  TaggedStream stream = parse_stream(std::span<const Token>{});
  CHECK(stream.segments.empty());
  CHECK_FALSE(stream.trailing_eos);
}

TEST_CASE("parse_stream error classes") {
  Vocabulary vocab = fixture_vocab();
  auto check_kind = [&](const std::string& text, ParseErrorKind kind) {
    auto tokens = tokenize(text, vocab);
    try {
      parse_stream(tokens);
      FAIL("expected ParseError for: " << text);
    } catch (const ParseError& err) {
      CHECK(err.kind() == kind);
    }
  };
  check_kind("<search> q1", ParseErrorKind::UnclosedTag);
  check_kind("<think> x <search> q1 </search>", ParseErrorKind::NestedTag);
  check_kind("</think>", ParseErrorKind::StrayCloseTag);
  check_kind("<think> x </answer>", ParseErrorKind::StrayCloseTag);
  check_kind("<search> q1 <eos>", ParseErrorKind::UnclosedTag);
}

TEST_CASE("strict mode rejects untagged spans; lenient wraps them") {
  Vocabulary vocab = fixture_vocab();
  auto tokens = tokenize("hello <think> x </think>", vocab);
  CHECK_THROWS_AS(parse_stream(tokens, ParseMode::Strict), ParseError);
  TaggedStream lenient = parse_stream(tokens, ParseMode::Lenient);
  REQUIRE(lenient.segments.size() == 2);
  CHECK(lenient.segments[0].kind == SegmentKind::Think);
  CHECK_FALSE(lenient.segments[0].tagged);
}

TEST_CASE("lenient parsing recognizes the rethink sentence") {
  Vocabulary vocab = fixture_vocab();
  std::string text = std::string("hello ") + std::string(kRethinkText) + " " +
                     std::string(kRethinkText) + " world";
  TaggedStream stream = parse_stream(tokenize(text, vocab));
  REQUIRE(stream.segments.size() == 4);
  CHECK(stream.segments[0].kind == SegmentKind::Think);
  CHECK(stream.segments[1].kind == SegmentKind::Rethink);
  CHECK(stream.segments[2].kind == SegmentKind::Rethink);
  CHECK(stream.segments[3].kind == SegmentKind::Think);
}

TEST_CASE("trailing eos is recognized only at the end") {
  Vocabulary vocab = fixture_vocab();
  TaggedStream stream = parse_stream(tokenize("<think> x </think> <eos>", vocab));
  CHECK(stream.trailing_eos);
  REQUIRE(stream.segments.size() == 1);

  TaggedStream mid = parse_stream(tokenize("<eos> <think> x </think>", vocab));
  CHECK_FALSE(mid.trailing_eos);
  REQUIRE(mid.segments.size() == 2);
  CHECK_FALSE(mid.segments[0].tagged);  // stray eos stays a raw span
}

TEST_CASE("detect_action classifies segments") {
  Vocabulary vocab = fixture_vocab();
  Segment more = make_segment(SegmentKind::MoreInfo, tokenize("1", vocab));
  CHECK(std::get<MoreInfoRequest>(detect_action(more)).k == 1);

  Segment zero = make_segment(SegmentKind::MoreInfo, tokenize("0", vocab));
  CHECK(std::get<InvalidAction>(detect_action(zero)).reason == "k must be positive");

  Segment query =
      make_segment(SegmentKind::Search, tokenize("Gary Barlow profession", vocab));
  CHECK(std::get<SearchQuery>(detect_action(query)).query == "Gary Barlow profession");

  Segment answer = make_segment(SegmentKind::Answer, tokenize("musician", vocab));
  CHECK(std::get<FinalAnswer>(detect_action(answer)).answer == "musician");

  Segment think = make_segment(SegmentKind::Think, tokenize("x", vocab));
  CHECK(std::holds_alternative<InvalidAction>(detect_action(think)));

  Segment multi = make_segment(SegmentKind::MoreInfo, tokenize("1 2", vocab));
  CHECK(std::holds_alternative<InvalidAction>(detect_action(multi)));

  Segment junk = make_segment(SegmentKind::MoreInfo, tokenize("hello", vocab));
  CHECK(std::holds_alternative<InvalidAction>(detect_action(junk)));
}

TEST_CASE("detect_action never yields a non-positive more-info count") {
  Vocabulary vocab = fixture_vocab();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    std::string text = std::to_string(static_cast<long>(rng() % 2000) - 1000);
    Segment seg = make_segment(SegmentKind::MoreInfo, tokenize(text, vocab));
    Action action = detect_action(seg);
    if (auto* mi = std::get_if<MoreInfoRequest>(&action)) CHECK(mi->k > 0);
  }
}

TEST_CASE("render_information formats ranked documents") {
  Vocabulary vocab =
      make_vocab({"Doc ( Title : \" ) Teide National Park volcano island two",
                  std::string(kExhaustionNotice)});
  Document teide{"d1", "Teide National Park", "volcano island"};
  Document other{"d2", "Park two", "island"};

  Segment one = render_information(std::vector<Document>{teide}, vocab);
  CHECK(one.kind == SegmentKind::Information);
  CHECK(detokenize(one.tokens).rfind("Doc 1 ( Title : \" Teide National Park \" )",
                                     0) == 0);

  Segment two = render_information(std::vector<Document>{teide, other}, vocab);
  std::string text = detokenize(two.tokens);
  CHECK(text.find("Doc 1") != std::string::npos);
  CHECK(text.find("Doc 2") != std::string::npos);
  CHECK(text.find("Doc 1") < text.find("Doc 2"));

  Segment empty = render_information(std::vector<Document>{}, vocab);
  CHECK(detokenize(empty.tokens) == "No more results available .");
}

TEST_CASE("render_information strips reserved markers from document text") {
  Vocabulary vocab = make_vocab({"Doc ( Title : \" ) t x"});
  Document tricky{"d1", "t", "x <search> x </search> <eos>"};
  Segment seg = render_information(std::vector<Document>{tricky}, vocab);
  for (const Token& tok : seg.tokens) {
    CHECK_FALSE(is_tag_marker(tok.id));
    CHECK(tok.id != kEos);
  }
}

TEST_CASE("build_mask marks injected spans") {
  Vocabulary vocab = fixture_vocab();
  TaggedStream stream;
  stream.segments.push_back(make_segment(SegmentKind::Think, tokenize("a", vocab)));
  stream.segments.push_back(
      make_segment(SegmentKind::Information, tokenize("d", vocab)));
  CHECK(build_mask(stream) == MaskVector{1, 1, 1, 0, 0, 0});

  TaggedStream no_info;
  no_info.segments.push_back(make_segment(SegmentKind::Think, tokenize("a", vocab)));
  no_info.trailing_eos = true;
  CHECK(build_mask(no_info) == MaskVector{1, 1, 1, 1});

  TaggedStream only_info;
  only_info.segments.push_back(
      make_segment(SegmentKind::Information, tokenize("a d", vocab)));
  CHECK(build_mask(only_info) == MaskVector{0, 0, 0, 0});
}

TEST_CASE("build_mask flag keeps injected markers unmasked") {
  Vocabulary vocab = fixture_vocab();
  TaggedStream stream;
  stream.segments.push_back(
      make_segment(SegmentKind::Information, tokenize("d", vocab)));
  stream.segments.push_back(
      make_segment(SegmentKind::Rethink, tokenize(kRethinkText, vocab)));
  MaskVector masked = build_mask(stream, true);
  MaskVector content_only = build_mask(stream, false);
  CHECK(masked[0] == 0);        // <information>
  CHECK(content_only[0] == 1);  // markers stay policy-visible
  CHECK(content_only[1] == 0);  // retrieved content always masked
  // Rethink text: masked by default, unmasked under the flag.
  CHECK(masked.back() == 0);
  CHECK(content_only.back() == 1);
}

TEST_CASE("round trip: serialize then parse is identity on well-formed streams") {
  Vocabulary vocab = fixture_vocab();
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 300; ++i) {
    TaggedStream stream = random_stream(rng, vocab);
    std::vector<Token> serialized = serialize_tokens(stream);
    TaggedStream reparsed = parse_stream(serialized);
    CHECK(reparsed == stream);
    CHECK(serialize_text(reparsed) == serialize_text(stream));
  }
}

TEST_CASE("mask partition: ones plus injected tokens equals total") {
  Vocabulary vocab = fixture_vocab();
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    TaggedStream stream = random_stream(rng, vocab);
    MaskVector mask = build_mask(stream);
    size_t ones = 0;
    for (uint8_t b : mask) ones += b;
    size_t injected = 0;
    for (const Segment& seg : stream.segments) {
      if (seg.kind == SegmentKind::Information || seg.kind == SegmentKind::Rethink) {
        injected += seg.token_count();
      }
    }
    CHECK(mask.size() == serialize_tokens(stream).size());
    CHECK(ones + injected == mask.size());
  }
}

TEST_CASE("parsing is prefix-monotone at segment boundaries") {
  Vocabulary vocab = fixture_vocab();
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    TaggedStream stream = random_stream(rng, vocab);
    stream.trailing_eos = false;
    std::vector<Token> all = serialize_tokens(stream);
    size_t consumed = 0;
    for (size_t s = 0; s < stream.segments.size(); ++s) {
      consumed += stream.segments[s].token_count();
      // A prefix cut between two untagged segments re-merges them on the
      // reparse, so only cut where the boundary is marker-delimited.
      bool clean_cut = s + 1 >= stream.segments.size() ||
                       stream.segments[s + 1].tagged || stream.segments[s].tagged;
      if (!clean_cut) continue;
      std::span<const Token> prefix(all.data(), consumed);
      TaggedStream partial = parse_stream(prefix);
      REQUIRE(partial.segments.size() == s + 1);
      for (size_t k = 0; k <= s; ++k) CHECK(partial.segments[k] == stream.segments[k]);
    }
  }
}

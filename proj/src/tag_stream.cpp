#include "ragrl/tag_stream.hpp"

#include <algorithm>
#include <array>

namespace ragrl {

namespace {

struct KindMarkers {
  int open;
  int close;
};

KindMarkers markers_for(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Think:
      return {kThinkOpen, kThinkClose};
    case SegmentKind::Search:
      return {kSearchOpen, kSearchClose};
    case SegmentKind::MoreInfo:
      return {kMoreOpen, kMoreClose};
    case SegmentKind::Answer:
      return {kAnswerOpen, kAnswerClose};
    case SegmentKind::Information:
      return {kInfoOpen, kInfoClose};
    case SegmentKind::Rethink:
      return {-1, -1};
  }
  return {-1, -1};
}

SegmentKind kind_for_open(int id) {
  switch (id) {
    case kThinkOpen:
      return SegmentKind::Think;
    case kSearchOpen:
      return SegmentKind::Search;
    case kMoreOpen:
      return SegmentKind::MoreInfo;
    case kAnswerOpen:
      return SegmentKind::Answer;
    case kInfoOpen:
      return SegmentKind::Information;
    default:
      throw std::logic_error("not an open marker");
  }
}

// Surface forms of the rethink sentence, for text-level comparison (ids may
// be kUnk under small vocabularies).
const std::vector<std::string>& rethink_words() {
  static const std::vector<std::string> kWords = split_words(kRethinkText);
  return kWords;
}

bool matches_rethink_at(std::span<const Token> run, size_t pos) {
  const auto& words = rethink_words();
  if (pos + words.size() > run.size()) return false;
  for (size_t i = 0; i < words.size(); ++i) {
    if (run[pos + i].text != words[i]) return false;
  }
  return true;
}

// Splits an untagged run into untagged Think chunks and Rethink segments.
void flush_untagged(std::vector<Token>& run, std::vector<Segment>& out) {
  if (run.empty()) return;
  std::span<const Token> span(run);
  std::vector<Token> plain;
  size_t i = 0;
  auto flush_plain = [&] {
    if (!plain.empty()) {
      out.push_back(make_segment(SegmentKind::Think, std::move(plain), false));
      plain.clear();
    }
  };
  while (i < span.size()) {
    if (matches_rethink_at(span, i)) {
      flush_plain();
      size_t n = rethink_words().size();
      std::vector<Token> sentence(span.begin() + i, span.begin() + i + n);
      out.push_back(make_segment(SegmentKind::Rethink, std::move(sentence), false));
      i += n;
    } else {
      plain.push_back(span[i]);
      ++i;
    }
  }
  flush_plain();
  run.clear();
}

}  // namespace

std::string_view segment_kind_name(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Think:
      return "think";
    case SegmentKind::Search:
      return "search";
    case SegmentKind::MoreInfo:
      return "more_info";
    case SegmentKind::Answer:
      return "answer";
    case SegmentKind::Information:
      return "information";
    case SegmentKind::Rethink:
      return "rethink";
  }
  return "?";
}

std::optional<Token> Segment::open_tag() const {
  if (!tagged) return std::nullopt;
  return reserved_token(markers_for(kind).open);
}

std::optional<Token> Segment::close_tag() const {
  if (!tagged) return std::nullopt;
  return reserved_token(markers_for(kind).close);
}

size_t Segment::token_count() const { return tokens.size() + (tagged ? 2 : 0); }

Segment make_segment(SegmentKind kind, std::vector<Token> tokens, bool tagged) {
  if (kind == SegmentKind::Rethink) tagged = false;
  return Segment{kind, std::move(tokens), tagged};
}

TaggedStream parse_stream(std::span<const Token> tokens, ParseMode mode) {
  TaggedStream stream;
  std::vector<Token> untagged;
  size_t i = 0;
  const size_t n = tokens.size();
  while (i < n) {
    const Token& tok = tokens[i];
    if (is_open_marker(tok.id)) {
      if (mode == ParseMode::Strict && !untagged.empty()) {
        throw ParseError(ParseErrorKind::StrayText, "untagged tokens before " + tok.text);
      }
      flush_untagged(untagged, stream.segments);
      SegmentKind kind = kind_for_open(tok.id);
      int close_id = markers_for(kind).close;
      size_t j = i + 1;
      std::vector<Token> content;
      bool closed = false;
      for (; j < n; ++j) {
        int id = tokens[j].id;
        if (id == close_id) {
          closed = true;
          break;
        }
        if (is_open_marker(id)) {
          throw ParseError(ParseErrorKind::NestedTag,
                           tokens[j].text + " inside open " + tok.text);
        }
        if (is_close_marker(id)) {
          throw ParseError(ParseErrorKind::StrayCloseTag,
                           tokens[j].text + " inside open " + tok.text);
        }
        if (id == kEos) {
          throw ParseError(ParseErrorKind::UnclosedTag,
                           tok.text + " interrupted by <eos>");
        }
        content.push_back(tokens[j]);
      }
      if (!closed) {
        throw ParseError(ParseErrorKind::UnclosedTag, tok.text + " never closed");
      }
      stream.segments.push_back(make_segment(kind, std::move(content)));
      i = j + 1;
    } else if (is_close_marker(tok.id)) {
      throw ParseError(ParseErrorKind::StrayCloseTag, tok.text + " without open tag");
    } else if (tok.id == kEos && i + 1 == n) {
      if (mode == ParseMode::Strict && !untagged.empty()) {
        throw ParseError(ParseErrorKind::StrayText, "untagged tokens before <eos>");
      }
      flush_untagged(untagged, stream.segments);
      stream.trailing_eos = true;
      ++i;
    } else {
      if (mode == ParseMode::Strict) {
        throw ParseError(ParseErrorKind::StrayText, "untagged token: " + tok.text);
      }
      untagged.push_back(tok);
      ++i;
    }
  }
  flush_untagged(untagged, stream.segments);
  return stream;
}

std::vector<Token> serialize_tokens(const TaggedStream& stream) {
  std::vector<Token> out;
  for (const Segment& seg : stream.segments) {
    if (auto open = seg.open_tag()) out.push_back(*open);
    out.insert(out.end(), seg.tokens.begin(), seg.tokens.end());
    if (auto close = seg.close_tag()) out.push_back(*close);
  }
  if (stream.trailing_eos) out.push_back(reserved_token(kEos));
  return out;
}

std::string serialize_text(const TaggedStream& stream) {
  std::vector<Token> tokens = serialize_tokens(stream);
  return detokenize(tokens);
}

MaskVector build_mask(const TaggedStream& stream, bool mask_injected_markers) {
  MaskVector mask;
  for (const Segment& seg : stream.segments) {
    uint8_t marker_bit = 1;
    uint8_t content_bit = 1;
    if (seg.kind == SegmentKind::Information) {
      content_bit = 0;
      marker_bit = mask_injected_markers ? 0 : 1;
    } else if (seg.kind == SegmentKind::Rethink) {
      content_bit = mask_injected_markers ? 0 : 1;
    }
    if (seg.tagged) mask.push_back(marker_bit);
    mask.insert(mask.end(), seg.tokens.size(), content_bit);
    if (seg.tagged) mask.push_back(marker_bit);
  }
  if (stream.trailing_eos) mask.push_back(1);
  return mask;
}

Action detect_action(const Segment& segment) {
  switch (segment.kind) {
    case SegmentKind::Search:
      return SearchQuery{detokenize(segment.tokens)};
    case SegmentKind::MoreInfo: {
      if (segment.tokens.size() != 1) {
        return InvalidAction{"more-info count must be a single integer"};
      }
      const std::string& text = segment.tokens[0].text;
      if (text.empty() || text.size() > 9 ||
          !std::all_of(text.begin(), text.end(),
                       [](unsigned char c) { return c >= '0' && c <= '9'; })) {
        return InvalidAction{"more-info count must be a positive integer"};
      }
      long k = std::stol(text);
      if (k <= 0) return InvalidAction{"k must be positive"};
      return MoreInfoRequest{static_cast<int>(k)};
    }
    case SegmentKind::Answer:
      return FinalAnswer{detokenize(segment.tokens)};
    default:
      return InvalidAction{std::string(segment_kind_name(segment.kind)) +
                           " segment is not an action"};
  }
}

Segment render_information(std::span<const Document> docs, const Vocabulary& vocab) {
  std::string text;
  if (docs.empty()) {
    text = kExhaustionNotice;
  } else {
    for (size_t i = 0; i < docs.size(); ++i) {
      if (i) text += ' ';
      text += "Doc " + std::to_string(i + 1) + " (Title: \"" + docs[i].title +
              "\") " + docs[i].text;
    }
  }
  std::vector<Token> tokens = tokenize(text, vocab);
  std::erase_if(tokens, [](const Token& t) {
    return is_tag_marker(t.id) || t.id == kEos;
  });
  return make_segment(SegmentKind::Information, std::move(tokens));
}

}  // namespace ragrl

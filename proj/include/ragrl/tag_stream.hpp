#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ragrl/document.hpp"
#include "ragrl/vocab.hpp"

namespace ragrl {

// Sentence the environment injects when a turn yields no usable action.
inline constexpr std::string_view kRethinkText =
    "My action is not correct. Let me rethink.";

enum class SegmentKind { Think, Search, MoreInfo, Answer, Information, Rethink };

std::string_view segment_kind_name(SegmentKind kind);

// One tagged span of the stream. `tokens` excludes the wrapping markers.
// `tagged == false` means the span serializes without markers: Rethink
// insertions always, and Think spans that hold raw untagged tokens (lenient
// parsing, malformed turns kept verbatim by the rollout engine).
struct Segment {
  SegmentKind kind = SegmentKind::Think;
  std::vector<Token> tokens;
  bool tagged = true;

  std::optional<Token> open_tag() const;
  std::optional<Token> close_tag() const;
  // Serialized length including markers when present.
  size_t token_count() const;

  bool operator==(const Segment& other) const {
    return kind == other.kind && tagged == other.tagged && tokens == other.tokens;
  }
};

Segment make_segment(SegmentKind kind, std::vector<Token> tokens, bool tagged = true);

struct TaggedStream {
  std::vector<Segment> segments;
  bool trailing_eos = false;

  bool operator==(const TaggedStream& other) const {
    return segments == other.segments && trailing_eos == other.trailing_eos;
  }
};

// One bit per serialized token: 1 = policy-generated, 0 = injected
// (Information contents and, by default, their markers and Rethink text).
using MaskVector = std::vector<uint8_t>;

enum class ParseErrorKind { UnclosedTag, NestedTag, StrayCloseTag, StrayText };

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ParseErrorKind kind() const { return kind_; }

 private:
  ParseErrorKind kind_;
};

enum class ParseMode { Lenient, Strict };

// Lenient mode turns untagged spans into untagged Think segments, except
// spans matching the rethink sentence exactly, which become Rethink segments.
// Strict mode rejects untagged spans with StrayText.
TaggedStream parse_stream(std::span<const Token> tokens,
                          ParseMode mode = ParseMode::Lenient);

std::vector<Token> serialize_tokens(const TaggedStream& stream);
std::string serialize_text(const TaggedStream& stream);

// mask_injected_markers=true additionally masks Information markers and the
// Rethink sentence; false masks retrieved contents only.
MaskVector build_mask(const TaggedStream& stream, bool mask_injected_markers = true);

struct SearchQuery {
  std::string query;
};
struct MoreInfoRequest {
  int k = 0;
};
struct FinalAnswer {
  std::string answer;
};
struct InvalidAction {
  std::string reason;
};

using Action = std::variant<SearchQuery, MoreInfoRequest, FinalAnswer, InvalidAction>;

// Classifies the last policy-generated segment of a turn. Parse failures are
// reported as InvalidAction; the rollout engine maps those to the rethink path.
Action detect_action(const Segment& segment);

// Builds the injected results block: `Doc i (Title: "...") <text>` per
// document in rank order, or the exhaustion notice for an empty list. Any
// reserved marker appearing inside document text is dropped so injected
// content can never open or close a tag.
Segment render_information(std::span<const Document> docs, const Vocabulary& vocab);

inline constexpr std::string_view kExhaustionNotice = "No more results available.";

}  // namespace ragrl

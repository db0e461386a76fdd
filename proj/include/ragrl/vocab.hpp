#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ragrl {

// Reserved control tokens with fixed ids. The tag markers plus <eos> occupy
// ids 0..10; the unknown-word token follows at 11. Fixed ids keep fixtures
// and checkpoints stable across vocabulary builds.
enum ReservedId : int {
  kThinkOpen = 0,
  kThinkClose = 1,
  kSearchOpen = 2,
  kSearchClose = 3,
  kInfoOpen = 4,
  kInfoClose = 5,
  kMoreOpen = 6,
  kMoreClose = 7,
  kAnswerOpen = 8,
  kAnswerClose = 9,
  kEos = 10,
  kUnk = 11,
};

constexpr int kNumReserved = 12;

inline bool is_tag_marker(int id) { return id >= kThinkOpen && id <= kAnswerClose; }
inline bool is_open_marker(int id) {
  return id == kThinkOpen || id == kSearchOpen || id == kInfoOpen ||
         id == kMoreOpen || id == kAnswerOpen;
}
inline bool is_close_marker(int id) {
  return id == kThinkClose || id == kSearchClose || id == kInfoClose ||
         id == kMoreClose || id == kAnswerClose;
}

const std::string& reserved_text(int id);

struct Token {
  int id = kUnk;
  std::string text;

  bool operator==(const Token& other) const {
    return id == other.id && text == other.text;
  }
};

Token reserved_token(int id);

// Closed word-level vocabulary. Words are added explicitly (corpus, prompt,
// questions); tokenize() maps anything else to kUnk while keeping the surface
// form on the token, so exact-match scoring still sees the original text.
class Vocabulary {
 public:
  Vocabulary();

  int add_word(std::string_view word);
  void add_text(std::string_view text);

  // kUnk when the word is not in the vocabulary.
  int id_of(std::string_view word) const;
  const std::string& text_of(int id) const;
  int size() const { return static_cast<int>(id_to_text_.size()); }

  // Words in id order, reserved entries included. Used by checkpoints.
  const std::vector<std::string>& words() const { return id_to_text_; }

 private:
  std::unordered_map<std::string, int> text_to_id_;
  std::vector<std::string> id_to_text_;
};

// Splits text into word-level pieces: reserved tag literals are matched
// first (including the two-word "<more info>" forms), then maximal runs of
// [A-Za-z0-9_'-] or non-ASCII bytes, then single punctuation characters.
std::vector<std::string> split_words(std::string_view text);

std::vector<Token> tokenize(std::string_view text, const Vocabulary& vocab);

// Joins token surface forms with single spaces.
std::string detokenize(std::span<const Token> tokens);

}  // namespace ragrl

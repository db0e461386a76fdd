#include "ragrl/vocab.hpp"

#include <array>
#include <cctype>
#include <stdexcept>

namespace ragrl {

namespace {

const std::array<std::string, kNumReserved>& reserved_texts() {
  static const std::array<std::string, kNumReserved> kTexts = {
      "<think>",       "</think>",      "<search>", "</search>",
      "<information>", "</information>", "<more info>", "</more info>",
      "<answer>",      "</answer>",     "<eos>",    "<unk>"};
  return kTexts;
}

bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_' || c == '\'' || c == '-' || c >= 0x80;
}

// Longest reserved literal starting at pos, or -1.
int match_reserved(std::string_view text, size_t pos) {
  if (text[pos] != '<') return -1;
  int best = -1;
  size_t best_len = 0;
  const auto& lits = reserved_texts();
  for (int id = 0; id < kNumReserved; ++id) {
    const std::string& lit = lits[id];
    if (lit.size() > best_len && text.compare(pos, lit.size(), lit) == 0) {
      best = id;
      best_len = lit.size();
    }
  }
  return best;
}

}  // namespace

const std::string& reserved_text(int id) { return reserved_texts().at(id); }

Token reserved_token(int id) { return Token{id, reserved_text(id)}; }

Vocabulary::Vocabulary() {
  for (int id = 0; id < kNumReserved; ++id) {
    id_to_text_.push_back(reserved_text(id));
    text_to_id_.emplace(reserved_text(id), id);
  }
}

int Vocabulary::add_word(std::string_view word) {
  auto it = text_to_id_.find(std::string(word));
  if (it != text_to_id_.end()) return it->second;
  int id = static_cast<int>(id_to_text_.size());
  id_to_text_.emplace_back(word);
  text_to_id_.emplace(id_to_text_.back(), id);
  return id;
}

void Vocabulary::add_text(std::string_view text) {
  for (const std::string& w : split_words(text)) add_word(w);
}

int Vocabulary::id_of(std::string_view word) const {
  auto it = text_to_id_.find(std::string(word));
  return it == text_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::text_of(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return id_to_text_[id];
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '<') {
      int id = match_reserved(text, i);
      if (id >= 0) {
        out.push_back(reserved_text(id));
        i += reserved_text(id).size();
        continue;
      }
    }
    if (is_word_char(c)) {
      size_t j = i;
      while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(text.substr(i, 1));
      ++i;
    }
  }
  return out;
}

std::vector<Token> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<Token> out;
  for (std::string& w : split_words(text)) {
    int id = vocab.id_of(w);
    out.push_back(Token{id, std::move(w)});
  }
  return out;
}

std::string detokenize(std::span<const Token> tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i].text;
  }
  return out;
}

}  // namespace ragrl

#include "wmrl/vocab.hpp"

#include <cctype>

#include "wmrl/errors.hpp"

namespace wmrl {

namespace {

bool alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

Vocabulary::Vocabulary() {
  std::vector<std::string> t{"<pad>", "<eot>"};
  for (int i = 0; i < kTurnTokens; ++i) t.push_back("<turn" + std::to_string(i) + ">");
  for (const char* tag : {"<think>", "</think>", "<observation>", "</observation>", "<reasoning>", "</reasoning>",
                          "<prediction>", "</prediction>", "<answer>", "</answer>"})
    t.push_back(tag);
  for (const char* a : {"Up", "Down", "Left", "Right"}) t.push_back(a);
  for (const char* p : {",", ".", "(", ")", "[", "]", "{", "}", ":"}) t.push_back(p);
  for (const char* g : {"#", "_", "O", "X", "P", "*", "S", "G", "\n"}) t.push_back(g);
  for (int d = 0; d <= 9; ++d) t.push_back(std::to_string(d));
  for (const char* e : {"player", "target", "goal", "box0", "box1", "box2", "target0", "target1", "target2"})
    t.push_back(e);
  for (int h = 0; h < 12; ++h) t.push_back("hole" + std::to_string(h));
  for (const char* w : {"above", "below", "left", "right", "up", "down", "same", "row", "column", "place", "is",
                        "the", "and", "at", "of", "to", "on", "side", "as", "push", "move", "reach", "then", "will",
                        "be", "not"})
    t.push_back(w);
  for (const char* k : {"player_position", "box_positions", "target_positions", "target_position",
                        "hole_positions", "grid_size"})
    t.push_back(k);

  tokens_ = std::move(t);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw VocabularyError("duplicate token '" + tokens_[i] + "'");
    is_word_.push_back(alnum(tokens_[i][0]));
  }
  if (tokens_.size() > 128) throw VocabularyError("vocabulary exceeds 128 tokens");
  pad_ = id("<pad>");
  eot_ = id("<eot>");
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v;
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw VocabularyError("unknown token '" + std::string(token) + "'");
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw VocabularyError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::turn_token(int turn) const {
  if (turn < 0) turn = 0;
  if (turn >= kTurnTokens) turn = kTurnTokens - 1;
  return 2 + turn;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
  std::string out;
  bool prev_word = false;
  for (int i : ids) {
    const bool w = is_word(i);
    if (w && prev_word) out.push_back(' ');
    out += token(i);
    prev_word = w;
  }
  return out;
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == ' ') {
      ++i;
      continue;
    }
    int best = -1;
    std::size_t best_len = 0;
    for (std::size_t k = 0; k < tokens_.size(); ++k) {
      const std::string& tok = tokens_[k];
      if (tok.size() <= best_len || text.compare(i, tok.size(), tok) != 0) continue;
      if (is_word_[k] && i + tok.size() < text.size() && alnum(text[i + tok.size()])) continue;
      best = static_cast<int>(k);
      best_len = tok.size();
    }
    if (best < 0) throw VocabularyError("cannot tokenize at offset " + std::to_string(i) + ": '" +
                                        std::string(text.substr(i, 12)) + "'");
    out.push_back(best);
    i += best_len;
  }
  return out;
}

std::vector<int> Vocabulary::encode_observation(std::string_view grid, int turn) const {
  std::vector<int> out{turn_token(turn)};
  for (char c : grid) out.push_back(id(std::string(1, c)));
  return out;
}

}  // namespace wmrl

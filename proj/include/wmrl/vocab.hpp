#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wmrl {

// Fixed token inventory shared by rollouts and the policy. Tokens whose first
// character is alphanumeric are "words"; detokenize() puts one space between
// consecutive words and nothing anywhere else.
class Vocabulary {
 public:
  Vocabulary();
  static const Vocabulary& standard();

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;  // throws VocabularyError
  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }
  const std::string& token(int id) const;
  bool is_word(int id) const { return is_word_[static_cast<std::size_t>(id)]; }

  int pad() const { return pad_; }
  int eot() const { return eot_; }
  int turn_token(int turn) const;  // clamps to the last turn marker
  int num_turn_tokens() const { return kTurnTokens; }

  std::string detokenize(const std::vector<int>& ids) const;
  // Longest-match tokenizer; throws VocabularyError on text it cannot cover.
  std::vector<int> tokenize(std::string_view text) const;
  // Turn marker followed by the grid, one token per cell and per line break.
  std::vector<int> encode_observation(std::string_view grid, int turn) const;

  static constexpr int kTurnTokens = 8;

 private:
  std::vector<std::string> tokens_;
  std::vector<bool> is_word_;
  std::unordered_map<std::string, int> index_;
  int pad_ = 0;
  int eot_ = 1;
};

}  // namespace wmrl

#pragma once

// Regex transcription of the five response skeletons, used to cross-check
// the hand-rolled grammar parser.

#include <regex>
#include <string>

namespace oracle {

inline bool skeleton_ok(const std::string& text, const std::string& strategy) {
  const std::string ws = R"([ \t\r\n]*)";
  const std::string body = R"(([^<>]*))";
  auto field = [&](const std::string& tag) { return ws + "<" + tag + ">" + body + "</" + tag + ">"; };
  std::string think;
  if (strategy == "NoThink") think = ws + "<think></think>";
  else if (strategy == "FreeThink") think = ws + "<think>" + body + "</think>";
  else if (strategy == "StateEstimation") think = ws + "<think>" + field("observation") + field("reasoning") + ws + "</think>";
  else if (strategy == "TransitionModeling") think = ws + "<think>" + field("reasoning") + field("prediction") + ws + "</think>";
  else think = ws + "<think>" + field("observation") + field("reasoning") + field("prediction") + ws + "</think>";
  const std::regex re(think + field("answer") + ws);
  std::smatch m;
  if (!std::regex_match(text, m, re)) return false;
  for (std::size_t i = 1; i < m.size(); ++i) {
    const std::string s = m[i].str();
    if (s.find_first_not_of(" \t\r\n") == std::string::npos) return false;
  }
  // at least one comma-separated item must name a move
  static const std::regex move(R"((^|,)[ \t\r\n]*(up|down|left|right)[ \t\r\n]*(,|$))", std::regex::icase);
  return std::regex_search(m[m.size() - 1].str(), move);
}

}  // namespace oracle

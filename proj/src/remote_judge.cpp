#include "wmrl/remote_judge.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "wmrl/errors.hpp"

namespace wmrl {

namespace {

nlohmann::json sentences(const RelationSet& rs, EnvKind kind) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rs) out.push_back(describe(r, kind));
  return out;
}

}  // namespace

RemoteJudge::RemoteJudge(std::string url, int timeout_ms, JudgeConfig cfg)
    : timeout_ms_(timeout_ms), cfg_(cfg), fallback_(cfg) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("judge url needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  host_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

JudgeVerdict RemoteJudge::judge(const StructuredResponse& resp, const RelationSet& truth_now,
                                const RelationSet& truth_next, EnvKind kind) {
  nlohmann::json req{{"belief_now", resp.state_belief.value_or("")},
                     {"belief_next", resp.next_state_belief.value_or("")},
                     {"truth_now", sentences(truth_now, kind)},
                     {"truth_next", sentences(truth_next, kind)}};
  try {
    httplib::Client cli(host_);
    const time_t sec = timeout_ms_ / 1000;
    const time_t usec = static_cast<time_t>(timeout_ms_ % 1000) * 1000;
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);
    auto res = cli.Post(path_, req.dump(), "application/json");
    if (!res) throw std::runtime_error("transport: " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error("http status " + std::to_string(res->status));
    const auto body = nlohmann::json::parse(res->body);
    JudgeVerdict v;
    v.se_score = body.at("se_score").get<double>();
    v.tm_score = body.at("tm_score").get<double>();
    v.se_pass = body.at("se_pass").get<bool>();
    v.tm_pass = body.at("tm_pass").get<bool>();
    ++remote_calls_;
    return v;
  } catch (const std::exception& e) {
    ++fallbacks_;
    spdlog::warn("remote judge {}{} failed ({}); using rule judge", host_, path_, e.what());
    return fallback_.judge(resp, truth_now, truth_next, kind);
  }
}

std::unique_ptr<TurnJudge> make_judge(const std::string& url, int timeout_ms, const JudgeConfig& cfg) {
  if (url.empty()) return std::make_unique<RuleJudge>(cfg);
  return std::make_unique<RemoteJudge>(url, timeout_ms, cfg);
}

}  // namespace wmrl

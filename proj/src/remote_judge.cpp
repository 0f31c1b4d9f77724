#include "csteer/remote_judge.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace csteer {
namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("judge endpoint must be an http(s) URL: '" + url + "'");
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

std::mutex& transcript_mutex() {
  static std::mutex m;
  return m;
}

void append_transcript(const RemoteJudgeConfig& config, const nlohmann::json& entry) {
  if (config.transcript.empty()) return;
  std::lock_guard lock(transcript_mutex());
  std::ofstream out(config.transcript, std::ios::app);
  if (!out) throw Error("cannot append judge transcript '" + config.transcript.string() + "'");
  out << entry.dump() << '\n';
}

}  // namespace

std::string credential_from_env() {
  const char* v = std::getenv(kJudgeCredentialEnv);
  if (!v || !*v) {
    throw ConfigError(std::string("remote judge needs a credential: set ") + kJudgeCredentialEnv);
  }
  return v;
}

std::optional<GridScore> parse_judge_reply(std::string_view reply, ReplyFormat format) {
  if (format == ReplyFormat::kGrid) return GridScore::parse(reply);
  while (!reply.empty() && std::isspace(static_cast<unsigned char>(reply.front()))) reply.remove_prefix(1);
  while (!reply.empty() && std::isspace(static_cast<unsigned char>(reply.back()))) reply.remove_suffix(1);
  if (reply == "True") return GridScore::from_tenths(10);
  if (reply == "False") return GridScore::from_tenths(0);
  return std::nullopt;
}

RemoteJudgeResult remote_judge_call(const RemoteJudgeConfig& config, const std::string& prompt,
                                    ReplyFormat format) {
  if (config.credential.empty()) {
    throw ConfigError(std::string("remote judge credential is empty; set ") + kJudgeCredentialEnv);
  }
  if (config.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  const Url url = split_url(config.endpoint);
  httplib::Client client(url.origin);
  client.set_connection_timeout(config.timeout);
  client.set_read_timeout(config.timeout);
  client.set_write_timeout(config.timeout);
  const httplib::Headers headers{{"Authorization", "Bearer " + config.credential}};
  const nlohmann::json body = {
      {"model", config.model},
      {"messages", {{{"role", "user"}, {"content", prompt}}}},
      {"temperature", 0},
  };
  const std::string payload = body.dump();

  RemoteJudgeResult result;
  auto delay = config.backoff;
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    result.attempts = attempt;
    nlohmann::json entry = {{"attempt", attempt}, {"endpoint", config.endpoint}, {"prompt", prompt}};
    const auto res = client.Post(url.path, headers, payload, "application/json");
    bool retry = false;
    if (!res) {
      entry["error"] = httplib::to_string(res.error());
      retry = true;
    } else {
      entry["status"] = res->status;
      if (res->status == 401 || res->status == 403) {
        append_transcript(config, entry);
        throw AuthError("judge endpoint rejected the credential (HTTP " + std::to_string(res->status) +
                        "); check " + kJudgeCredentialEnv);
      }
      if (res->status == 429 || res->status >= 500) {
        retry = true;
      } else if (res->status != 200) {
        entry["body"] = res->body;
        append_transcript(config, entry);
        break;
      } else {
        try {
          const auto j = nlohmann::json::parse(res->body);
          result.reply = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          result.reply = res->body;
          entry["error"] = std::string("malformed response: ") + e.what();
        }
        entry["reply"] = result.reply;
        result.score = parse_judge_reply(result.reply, format);
        entry["score"] = result.score ? nlohmann::json(result.score->str()) : nlohmann::json(nullptr);
        retry = !result.score;
      }
    }
    append_transcript(config, entry);
    if (!retry) break;
    if (attempt < config.max_attempts) {
      std::this_thread::sleep_for(delay);
      delay = std::min(delay * 2, config.max_backoff);
    }
  }
  return result;
}

}  // namespace csteer

#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

#include "csteer/error.hpp"
#include "csteer/judge.hpp"

namespace csteer {

inline constexpr const char* kJudgeCredentialEnv = "CSTEER_JUDGE_API_KEY";

// Raised when the judge endpoint rejects the credential; never retried.
class AuthError : public Error {
 public:
  using Error::Error;
};

struct RemoteJudgeConfig {
  std::string endpoint;  // full URL, e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string model = "judge";
  std::string credential;  // bearer token; see credential_from_env
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::milliseconds max_backoff{2000};
  std::chrono::seconds timeout{60};
  int max_concurrent = 1;
  std::filesystem::path transcript;  // JSON lines, appended; empty disables
};

// Reads kJudgeCredentialEnv; throws ConfigError naming the variable if unset.
std::string credential_from_env();

enum class ReplyFormat { kGrid, kBoolean };

struct RemoteJudgeResult {
  std::optional<GridScore> score;  // nullopt means unscored
  std::string reply;               // last reply text
  int attempts = 0;
};

// Strict reply parse: a grid value, or "True"/"False" mapped to 1.0/0.0.
std::optional<GridScore> parse_judge_reply(std::string_view reply, ReplyFormat format);

// One chat-completions exchange with the rendered prompt as the user message.
// Transport failures, 429/5xx and unparseable replies are retried with
// exponential backoff; 401/403 throws AuthError.
RemoteJudgeResult remote_judge_call(const RemoteJudgeConfig& config, const std::string& prompt,
                                    ReplyFormat format = ReplyFormat::kGrid);

}  // namespace csteer

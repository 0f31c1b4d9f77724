#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "csteer/remote_judge.hpp"

using namespace csteer;
using namespace std::chrono_literals;

namespace {

// Chat-completions stand-in. `reply` decides status and content per call.
class FakeJudge {
 public:
  using Reply = std::function<std::pair<int, std::string>(int call)>;

  explicit FakeJudge(Reply reply) : reply_(std::move(reply)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      const auto [status, content] = reply_(calls_++);
      res.status = status;
      nlohmann::json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
      res.set_content(j.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeJudge() {
    server_.stop();
    thread_.join();
  }

  RemoteJudgeConfig config() const {
    RemoteJudgeConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    c.credential = "test-token";
    c.backoff = 1ms;
    c.max_backoff = 4ms;
    c.timeout = 5s;
    return c;
  }
  int calls() const { return calls_; }
  std::string last_auth() const { return last_auth_; }
  std::string last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  Reply reply_;
  std::atomic<int> calls_{0};
  std::string last_auth_, last_body_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("strict reply parsing") {
  CHECK(parse_judge_reply("0.7", ReplyFormat::kGrid)->tenths() == 7);
  CHECK(parse_judge_reply(" 1.0\n", ReplyFormat::kGrid)->tenths() == 10);
  CHECK_FALSE(parse_judge_reply("Score: 0.7 because the answer is close", ReplyFormat::kGrid));
  CHECK_FALSE(parse_judge_reply("0.75", ReplyFormat::kGrid));
  CHECK(parse_judge_reply("True", ReplyFormat::kBoolean)->tenths() == 10);
  CHECK(parse_judge_reply("False\n", ReplyFormat::kBoolean)->tenths() == 0);
  CHECK_FALSE(parse_judge_reply("true", ReplyFormat::kBoolean));
  CHECK_FALSE(parse_judge_reply("0.7", ReplyFormat::kBoolean));
}

TEST_CASE("a well-formed reply is scored on the first attempt") {
  FakeJudge judge([](int) { return std::pair{200, std::string("0.6")}; });
  const auto r = remote_judge_call(judge.config(), "rate this");
  REQUIRE(r.score);
  CHECK(r.score->tenths() == 6);
  CHECK(r.attempts == 1);
  CHECK(judge.last_auth() == "Bearer test-token");
  const auto body = nlohmann::json::parse(judge.last_body());
  CHECK(body["messages"][0]["content"] == "rate this");
}

TEST_CASE("off-grid replies are retried and end unscored") {
  FakeJudge judge([](int) { return std::pair{200, std::string("Score: 0.7 because it is close")}; });
  auto cfg = judge.config();
  cfg.max_attempts = 3;
  const auto r = remote_judge_call(cfg, "p");
  CHECK_FALSE(r.score);
  CHECK(r.attempts == 3);
  CHECK(judge.calls() == 3);
  CHECK(r.reply == "Score: 0.7 because it is close");
}

TEST_CASE("server errors are retried with backoff") {
  FakeJudge judge([](int call) {
    return call < 2 ? std::pair{call == 0 ? 500 : 429, std::string()} : std::pair{200, std::string("0.9")};
  });
  const auto r = remote_judge_call(judge.config(), "p");
  REQUIRE(r.score);
  CHECK(r.score->tenths() == 9);
  CHECK(r.attempts == 3);
}

TEST_CASE("rejected credentials raise AuthError without retrying") {
  FakeJudge judge([](int) { return std::pair{401, std::string()}; });
  CHECK_THROWS_AS(remote_judge_call(judge.config(), "p"), AuthError);
  CHECK(judge.calls() == 1);
}

TEST_CASE("unreachable endpoints exhaust attempts and end unscored") {
  RemoteJudgeConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  cfg.credential = "x";
  cfg.max_attempts = 2;
  cfg.backoff = 1ms;
  cfg.timeout = 1s;
  const auto r = remote_judge_call(cfg, "p");
  CHECK_FALSE(r.score);
  CHECK(r.attempts == 2);
}

TEST_CASE("configuration errors") {
  RemoteJudgeConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/x";
  CHECK_THROWS_AS(remote_judge_call(cfg, "p"), ConfigError);
  cfg.credential = "x";
  cfg.endpoint = "ftp://host/x";
  CHECK_THROWS_AS(remote_judge_call(cfg, "p"), ConfigError);

  ::unsetenv(kJudgeCredentialEnv);
  try {
    credential_from_env();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(kJudgeCredentialEnv) != std::string::npos);
  }
  ::setenv(kJudgeCredentialEnv, "from-env", 1);
  CHECK(credential_from_env() == "from-env");
  ::unsetenv(kJudgeCredentialEnv);
}

TEST_CASE("every attempt is appended to the transcript") {
  FakeJudge judge([](int call) { return std::pair{200, std::string(call == 0 ? "maybe" : "False")}; });
  auto cfg = judge.config();
  cfg.transcript = std::filesystem::temp_directory_path() / "csteer_judge_transcript.jsonl";
  std::filesystem::remove(cfg.transcript);
  const auto r = remote_judge_call(cfg, "judge me", ReplyFormat::kBoolean);
  REQUIRE(r.score);
  CHECK(r.score->tenths() == 0);

  std::ifstream in(cfg.transcript);
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0]["reply"] == "maybe");
  CHECK(lines[0]["score"].is_null());
  CHECK(lines[1]["score"] == "0.0");
  CHECK(lines[1]["prompt"] == "judge me");
  std::ifstream raw(cfg.transcript);
  const std::string all((std::istreambuf_iterator<char>(raw)), {});
  CHECK(all.find("test-token") == std::string::npos);
}

#pragma once

// Loopback chat-completions stub and the client contract suite run against
// it. Nothing here leaves 127.0.0.1.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pathweaver/error.hpp"
#include "pathweaver/responder/responder.hpp"

namespace pwtest {

using namespace pathweaver;

struct StubReply {
  int status = 200;
  std::string body;
  double delay_seconds = 0;
};

inline std::string completion_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

class StubLlmServer {
 public:
  // `script` is consumed one reply per request; once empty, `fallback` answers.
  using Fallback = std::function<StubReply(const nlohmann::json& request)>;

  explicit StubLlmServer(std::deque<StubReply> script, Fallback fallback = {})
      : script_(std::move(script)), fallback_(std::move(fallback)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      for (int seen = peak_.load(); now > seen && !peak_.compare_exchange_weak(seen, now);) {
      }
      StubReply reply;
      nlohmann::json request = nlohmann::json::parse(req.body, nullptr, false);
      {
        std::lock_guard lock(mu_);
        ++requests_;
        last_auth_ = req.get_header_value("Authorization");
        last_request_ = request;
        if (!script_.empty()) {
          reply = script_.front();
          script_.pop_front();
        } else if (fallback_) {
          reply = fallback_(request);
        } else {
          reply = {200, completion_body("ok")};
        }
      }
      if (reply.delay_seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(reply.delay_seconds));
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubLlmServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  int peak_concurrency() const { return peak_.load(); }
  std::string last_auth() const {
    std::lock_guard lock(mu_);
    return last_auth_;
  }
  nlohmann::json last_request() const {
    std::lock_guard lock(mu_);
    return last_request_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::deque<StubReply> script_;
  Fallback fallback_;
  int requests_ = 0;
  std::string last_auth_;
  nlohmann::json last_request_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

// A port that was free a moment ago; nothing listens on it.
inline int closed_port() {
  httplib::Server probe;
  return probe.bind_to_any_port("127.0.0.1");
}

struct ContractCase {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline constexpr const char* kStubKeyEnv = "PATHWEAVER_STUB_TEST_KEY";

inline responder::LlmEndpointConfig stub_config(const std::string& base_url) {
  responder::LlmEndpointConfig c;
  c.base_url = base_url;
  c.model = "stub-model";
  c.api_key_env = kStubKeyEnv;
  c.timeout_seconds = 2;
  c.max_retries = 3;
  c.backoff_initial_seconds = 0.01;
  return c;
}

inline responder::PromptSpec stub_prompt(const std::string& topic = "SongX") {
  return responder::build_prompt({{corpus::Speaker::kUser, "hello"}}, {{"SongX", "sung by", "SingerY"}},
                                 {"Play music", topic});
}

template <class E, class F>
bool throws_as(F&& f, std::string* what) {
  try {
    f();
  } catch (const E& e) {
    *what = e.what();
    return true;
  } catch (const std::exception& e) {
    *what = std::string("wrong exception: ") + e.what();
    return false;
  }
  *what = "no exception";
  return false;
}

// Retry, timeout, protocol-error, key, and concurrency contract of the remote
// client, each case against its own loopback stub.
inline std::vector<ContractCase> run_stub_contract_suite() {
  using responder::RemoteClient;
  std::vector<ContractCase> out;
  ::setenv(kStubKeyEnv, "sk-stub-secret", 1);

  {
    StubLlmServer s({{200, completion_body("fixed reply")}});
    RemoteClient c(stub_config(s.base_url()));
    const auto text = c.generate(stub_prompt());
    const auto req = s.last_request();
    const bool shape = req.value("model", "") == "stub-model" && req.at("messages").size() == 2 &&
                       req["messages"][1]["content"].get<std::string>().find("Next step: Play music about SongX") !=
                           std::string::npos;
    out.push_back({"echo", text == "fixed reply" && shape && s.last_auth() == "Bearer sk-stub-secret",
                   "got '" + text + "', auth '" + s.last_auth() + "'"});
  }
  {
    StubLlmServer s({{500, "oops"}, {500, "oops"}, {200, completion_body("third time")}});
    RemoteClient c(stub_config(s.base_url()));
    const auto text = c.generate(stub_prompt());
    out.push_back({"500 twice then 200", text == "third time" && c.attempts() == 3 && s.requests() == 3,
                   "attempts " + std::to_string(c.attempts())});
  }
  {
    StubLlmServer s({{429, "slow down"}, {200, completion_body("after 429")}});
    RemoteClient c(stub_config(s.base_url()));
    const auto text = c.generate(stub_prompt());
    out.push_back({"429 is retried", text == "after 429" && c.attempts() == 2, "attempts " + std::to_string(c.attempts())});
  }
  {
    StubLlmServer s({}, [](const nlohmann::json&) { return StubReply{503, "down"}; });
    auto cfg = stub_config(s.base_url());
    cfg.max_retries = 2;
    RemoteClient c(cfg);
    std::string what;
    const bool ok = throws_as<TransportError>([&] { c.generate(stub_prompt()); }, &what);
    out.push_back({"retries exhausted", ok && s.requests() == 3, what});
  }
  {
    StubLlmServer s({{404, "no such route"}});
    RemoteClient c(stub_config(s.base_url()));
    std::string what;
    const bool ok = throws_as<TransportError>([&] { c.generate(stub_prompt()); }, &what);
    out.push_back({"4xx is not retried", ok && s.requests() == 1, what});
  }
  {
    StubLlmServer s({{200, "{not json"}});
    RemoteClient c(stub_config(s.base_url()));
    std::string what;
    const bool ok = throws_as<ProtocolError>([&] { c.generate(stub_prompt()); }, &what);
    out.push_back({"invalid JSON body", ok && s.requests() == 1, what});
  }
  {
    StubLlmServer s({{200, R"({"choices": []})"}, {200, R"({"choices": [{"message": {"content": 7}}]})"}});
    RemoteClient c(stub_config(s.base_url()));
    std::string w1, w2;
    const bool ok = throws_as<ProtocolError>([&] { c.generate(stub_prompt()); }, &w1) &&
                    throws_as<ProtocolError>([&] { c.generate(stub_prompt()); }, &w2);
    out.push_back({"missing or non-string content", ok, w1 + "; " + w2});
  }
  {
    StubLlmServer s({}, [](const nlohmann::json&) { return StubReply{200, completion_body("late"), 0.6}; });
    auto cfg = stub_config(s.base_url());
    cfg.timeout_seconds = 0.15;
    cfg.max_retries = 1;
    RemoteClient c(cfg);
    std::string what;
    const auto t0 = std::chrono::steady_clock::now();
    const bool ok = throws_as<TransportError>([&] { c.generate(stub_prompt()); }, &what);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back({"read timeout", ok && c.attempts() == 2 && secs < 1.0, what});
  }
  {
    auto cfg = stub_config("http://127.0.0.1:" + std::to_string(closed_port()) + "/v1");
    cfg.max_retries = 1;
    RemoteClient c(cfg);
    std::string what;
    const bool ok = throws_as<TransportError>([&] { c.generate(stub_prompt()); }, &what);
    out.push_back({"connection refused", ok && c.attempts() == 2, what});
  }
  {
    StubLlmServer s({});
    auto cfg = stub_config(s.base_url());
    cfg.api_key_env = "PATHWEAVER_STUB_UNSET_KEY";
    ::unsetenv(cfg.api_key_env.c_str());
    RemoteClient c(cfg);
    std::string what;
    const bool ok = throws_as<ConfigError>([&] { c.generate(stub_prompt()); }, &what);
    out.push_back({"missing API key", ok && s.requests() == 0, what});
    cfg.require_api_key = false;
    RemoteClient anon(cfg);
    const auto text = anon.generate(stub_prompt());
    out.push_back({"optional API key", text == "ok" && s.last_auth().empty(), text});
  }
  {
    // Replies echo the requested topic so order can be checked.
    StubLlmServer s({}, [](const nlohmann::json& req) {
      const std::string user = req["messages"][1]["content"];
      const auto at = user.find("about ") + 6;
      return StubReply{200, completion_body(user.substr(at, user.find('.', at) - at)), 0.05};
    });
    auto cfg = stub_config(s.base_url());
    cfg.max_concurrent_requests = 3;
    RemoteClient c(cfg);
    std::vector<responder::PromptSpec> prompts;
    for (int i = 0; i < 12; ++i) prompts.push_back(stub_prompt("Topic" + std::to_string(i)));
    const auto replies = c.generate_all(prompts);
    bool ordered = replies.size() == 12;
    for (int i = 0; ordered && i < 12; ++i) ordered = replies[i] == "Topic" + std::to_string(i);
    out.push_back({"bounded concurrency keeps order",
                   ordered && c.peak_in_flight() <= 3 && s.peak_concurrency() <= 3 && s.peak_concurrency() >= 2,
                   "peak " + std::to_string(s.peak_concurrency())});
  }
  {
    std::string what;
    auto cfg = stub_config("");
    const bool empty = throws_as<ConfigError>([&] { responder::RemoteClient c(cfg); }, &what);
    cfg = stub_config("ftp://example");
    const bool scheme = throws_as<ConfigError>([&] { responder::RemoteClient c(cfg); }, &what);
    cfg = stub_config("http://127.0.0.1:1/v1");
    cfg.timeout_seconds = 0;
    const bool timeout = throws_as<ConfigError>([&] { responder::RemoteClient c(cfg); }, &what);
    out.push_back({"endpoint validation", empty && scheme && timeout, what});
  }
  return out;
}

}  // namespace pwtest

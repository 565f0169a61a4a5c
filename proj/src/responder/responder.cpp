#include "pathweaver/responder/responder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <regex>
#include <thread>

#include <httplib.h>

#include "pathweaver/error.hpp"

namespace pathweaver::responder {

namespace {

const char* speaker_tag(corpus::Speaker s) { return s == corpus::Speaker::kUser ? "[user]" : "[system]"; }

}  // namespace

std::string PromptSpec::render() const { return system_instruction + "\n" + user_content(); }

std::string PromptSpec::user_content() const {
  std::string out = "Knowledge:\n";
  for (const auto& l : knowledge_lines) out += l + "\n";
  out += "History:\n";
  for (const auto& l : history_lines) out += l + "\n";
  out += subtarget_line + "\n";
  return out;
}

PromptSpec build_prompt(const std::vector<corpus::Turn>& history,
                        const std::vector<corpus::KnowledgeTriple>& knowledge, const corpus::PathPair& subtarget,
                        const PromptCaps& caps) {
  if (subtarget.action.empty() || subtarget.topic.empty()) {
    throw ContractError("build_prompt: subtarget action and topic must be non-empty");
  }
  PromptSpec p;
  p.system_instruction =
      "You are a proactive conversational agent. Using the knowledge and the dialogue so far, write the "
      "system's next utterance so that it carries out the next step.";
  std::vector<const corpus::KnowledgeTriple*> ordered;
  for (const auto& t : knowledge) {
    if (t.subject == subtarget.topic || t.object == subtarget.topic) ordered.push_back(&t);
  }
  for (const auto& t : knowledge) {
    if (t.subject != subtarget.topic && t.object != subtarget.topic) ordered.push_back(&t);
  }
  ordered.resize(std::min(ordered.size(), caps.max_knowledge_lines));
  for (const auto* t : ordered) p.knowledge_lines.push_back(t->subject + " | " + t->relation + " | " + t->object);
  const std::size_t first = history.size() > caps.max_history_turns ? history.size() - caps.max_history_turns : 0;
  for (std::size_t i = first; i < history.size(); ++i) {
    p.history_lines.push_back(std::string(speaker_tag(history[i].speaker)) + " " + history[i].text);
  }
  p.subtarget_line = "Next step: " + subtarget.action + " about " + subtarget.topic + ". Respond as the system.";
  return p;
}

void LlmEndpointConfig::validate() const {
  if (base_url.empty()) throw ConfigError("llm: base_url must be non-empty");
  if (!(timeout_seconds > 0)) throw ConfigError("llm: timeout_seconds must be > 0");
  if (max_concurrent_requests == 0) throw ConfigError("llm: max_concurrent_requests must be >= 1");
  if (!(backoff_initial_seconds >= 0)) throw ConfigError("llm: backoff_initial_seconds must be >= 0");
}

void to_json(nlohmann::json& j, const LlmEndpointConfig& c) {
  j = nlohmann::json{{"base_url", c.base_url},
                     {"model", c.model},
                     {"api_key_env", c.api_key_env},
                     {"require_api_key", c.require_api_key},
                     {"timeout_seconds", c.timeout_seconds},
                     {"max_retries", c.max_retries},
                     {"max_concurrent_requests", c.max_concurrent_requests},
                     {"backoff_initial_seconds", c.backoff_initial_seconds},
                     {"debug", c.debug}};
}

void from_json(const nlohmann::json& j, LlmEndpointConfig& c) {
  c.base_url = j.value("base_url", c.base_url);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.require_api_key = j.value("require_api_key", c.require_api_key);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.max_concurrent_requests = j.value("max_concurrent_requests", c.max_concurrent_requests);
  c.backoff_initial_seconds = j.value("backoff_initial_seconds", c.backoff_initial_seconds);
  c.debug = j.value("debug", c.debug);
}

RemoteClient::RemoteClient(LlmEndpointConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.base_url, m, url)) {
    throw ConfigError("llm: base_url '" + cfg_.base_url + "' is not an http(s) URL");
  }
  scheme_host_port_ = m[1].str();
  path_prefix_ = m[2].matched ? m[2].str() : "";
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme_host_port_.rfind("https://", 0) == 0) throw ConfigError("llm: built without TLS support");
#endif
}

std::size_t RemoteClient::attempts() const {
  std::lock_guard lock(mu_);
  return attempts_;
}

std::size_t RemoteClient::peak_in_flight() const {
  std::lock_guard lock(mu_);
  return peak_;
}

namespace {

std::string redact(std::string text, const std::string& key) {
  if (key.empty()) return text;
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos)) text.replace(pos, key.size(), "****");
  return text;
}

}  // namespace

std::string RemoteClient::request_once(const std::string& body, const std::string& key, int* status,
                                       bool* transient) {
  httplib::Client cli(scheme_host_port_);
  const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
  const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
  const std::string path = path_prefix_ + "/chat/completions";
  if (cfg_.debug) {
    std::cerr << "[llm] POST " << scheme_host_port_ << path << (key.empty() ? "" : " (Authorization: Bearer ****)")
              << "\n[llm] request " << redact(body, key) << "\n";
  }
  auto res = cli.Post(path, headers, body, "application/json");
  if (!res) {
    *status = 0;
    *transient = true;
    return httplib::to_string(res.error());
  }
  *status = res->status;
  *transient = res->status == 429 || res->status >= 500;
  if (cfg_.debug) std::cerr << "[llm] response " << res->status << " " << redact(res->body, key) << "\n";
  return res->body;
}

std::string RemoteClient::generate(const PromptSpec& prompt) {
  std::string key;
  if (const char* v = std::getenv(cfg_.api_key_env.c_str()); v && *v) key = v;
  if (key.empty() && cfg_.require_api_key) {
    throw ConfigError("llm: environment variable " + cfg_.api_key_env + " is not set");
  }
  const nlohmann::json request = {{"model", cfg_.model},
                                  {"messages",
                                   {{{"role", "system"}, {"content", prompt.system_instruction}},
                                    {{"role", "user"}, {"content", prompt.user_content()}}}},
                                  {"temperature", 0}};
  const std::string body = request.dump();

  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < cfg_.max_concurrent_requests; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
  }
  struct Release {
    RemoteClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  std::string last_error;
  for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double wait = cfg_.backoff_initial_seconds * std::pow(2.0, static_cast<double>(attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    {
      std::lock_guard lock(mu_);
      ++attempts_;
    }
    int status = 0;
    bool transient = false;
    std::string text = request_once(body, key, &status, &transient);
    if (status == 200) {
      nlohmann::json reply;
      try {
        reply = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception&) {
        throw ProtocolError("llm: response body is not JSON");
      }
      try {
        const auto& content = reply.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw ProtocolError("llm: choices[0].message.content is not a string");
        return content.get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw ProtocolError("llm: response lacks choices[0].message.content");
      }
    }
    last_error = status == 0 ? "no response (" + text + ")" : "HTTP " + std::to_string(status);
    if (!transient) throw TransportError("llm: request failed with " + last_error);
  }
  throw TransportError("llm: giving up after " + std::to_string(cfg_.max_retries + 1) + " attempts, last: " +
                       last_error);
}

std::vector<std::string> RemoteClient::generate_all(const std::vector<PromptSpec>& prompts) {
  std::vector<std::string> out(prompts.size());
  std::vector<std::exception_ptr> errors(prompts.size());
  const std::size_t workers = std::min(cfg_.max_concurrent_requests, prompts.size());
  std::mutex next_mu;
  std::size_t next = 0;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        std::size_t i;
        {
          std::lock_guard lock(next_mu);
          if (next >= prompts.size()) return;
          i = next++;
        }
        try {
          out[i] = generate(prompts[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::string generate_remote(const PromptSpec& prompt, const LlmEndpointConfig& cfg) {
  RemoteClient client(cfg);
  return client.generate(prompt);
}

std::string generate_offline(const corpus::PathPair& subtarget, const std::vector<corpus::KnowledgeTriple>& knowledge) {
  for (const auto& t : knowledge) {
    if (t.subject == subtarget.topic) {
      return "let us " + subtarget.action + " " + subtarget.topic + " , " + subtarget.topic + " " + t.relation + " " +
             t.object + " .";
    }
    if (t.object == subtarget.topic) {
      return "let us " + subtarget.action + " " + subtarget.topic + " , " + t.subject + " " + t.relation + " " +
             subtarget.topic + " .";
    }
  }
  return "let us " + subtarget.action + " " + subtarget.topic + " .";
}

}  // namespace pathweaver::responder

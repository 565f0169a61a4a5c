#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/corpus/conversation.hpp"

namespace pathweaver::responder {

inline constexpr const char* kPromptTemplateId = "pathweaver-response";
inline constexpr int kPromptTemplateVersion = 1;

struct PromptCaps {
  std::size_t max_knowledge_lines = 16;
  std::size_t max_history_turns = 8;
};

struct PromptSpec {
  std::string template_id = kPromptTemplateId;
  int template_version = kPromptTemplateVersion;
  std::string system_instruction;
  std::vector<std::string> knowledge_lines;
  std::vector<std::string> history_lines;
  std::string subtarget_line;

  // Instruction, "Knowledge:" block, "History:" block, subtarget line.
  std::string render() const;
  // The user message sent to a chat endpoint: render() minus the instruction.
  std::string user_content() const;
};

// Knowledge triples about the subtarget topic come first, then the rest, in
// input order, cut to the cap. History keeps the most recent turns. Throws
// ContractError on an empty action or topic.
PromptSpec build_prompt(const std::vector<corpus::Turn>& history,
                        const std::vector<corpus::KnowledgeTriple>& knowledge, const corpus::PathPair& subtarget,
                        const PromptCaps& caps = {});

struct LlmEndpointConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "PATHWEAVER_API_KEY";
  bool require_api_key = true;
  double timeout_seconds = 30;
  std::size_t max_retries = 3;
  std::size_t max_concurrent_requests = 4;
  double backoff_initial_seconds = 0.5;
  bool debug = false;  // logs bodies to stderr with the key redacted

  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const LlmEndpointConfig& c);
void from_json(const nlohmann::json& j, LlmEndpointConfig& c);

// Chat-completions client. Transient failures (no response, 429, 5xx) are
// retried up to max_retries times with exponential backoff; other HTTP errors
// and exhausted retries raise TransportError; unusable bodies raise
// ProtocolError; a missing required key raises ConfigError.
class RemoteClient {
 public:
  explicit RemoteClient(LlmEndpointConfig cfg);

  std::string generate(const PromptSpec& prompt);
  // Runs at most max_concurrent_requests requests at a time; results keep
  // input order. The first failure is rethrown after all workers finish.
  std::vector<std::string> generate_all(const std::vector<PromptSpec>& prompts);

  std::size_t attempts() const;  // HTTP attempts made so far
  std::size_t peak_in_flight() const;

 private:
  std::string request_once(const std::string& body, const std::string& key, int* status, bool* transient);

  LlmEndpointConfig cfg_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
  std::size_t attempts_ = 0;
};

std::string generate_remote(const PromptSpec& prompt, const LlmEndpointConfig& cfg);

// Network-free responder: names the subtarget topic and, when one exists, one
// entity linked to it by a knowledge triple.
std::string generate_offline(const corpus::PathPair& subtarget, const std::vector<corpus::KnowledgeTriple>& knowledge);

}  // namespace pathweaver::responder

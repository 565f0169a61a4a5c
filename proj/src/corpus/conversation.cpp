#include "pathweaver/corpus/conversation.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pathweaver/error.hpp"
#include "pathweaver/numcore/rng.hpp"

namespace pathweaver::corpus {

using nlohmann::json;
using nlohmann::ordered_json;

void validate(const Conversation& conv, std::size_t max_pairs, std::size_t line) {
  if (conv.id.empty()) throw SchemaError(line, "id", "must be non-empty");
  for (std::size_t i = 0; i < conv.knowledge.size(); ++i) {
    const auto& t = conv.knowledge[i];
    if (t.subject.empty() || t.relation.empty() || t.object.empty()) {
      throw SchemaError(line, "knowledge", "triple " + std::to_string(i) + " has an empty element");
    }
  }
  for (const auto& [k, v] : conv.profile) {
    if (k.empty()) throw SchemaError(line, "profile", "empty key");
  }
  if (conv.path.empty()) throw SchemaError(line, "path", "must be non-empty");
  if (conv.path.size() > max_pairs) {
    throw SchemaError(line, "path",
                      "length " + std::to_string(conv.path.size()) + " exceeds max_pairs " + std::to_string(max_pairs));
  }
  for (const auto& p : conv.path) {
    if (p.action.empty() || p.topic.empty()) throw SchemaError(line, "path", "pair with empty action or topic");
  }
  if (conv.target.action.empty() || conv.target.topic.empty()) throw SchemaError(line, "target", "empty action or topic");
  if (conv.path.back() != conv.target) throw SchemaError(line, "target", "last path pair differs from target");
  std::set<std::string> entities;
  for (const auto& t : conv.knowledge) {
    entities.insert(t.subject);
    entities.insert(t.object);
  }
  for (const auto& p : conv.path) {
    if (!entities.count(p.topic)) {
      throw SchemaError(line, "path", "topic '" + p.topic + "' does not appear in any knowledge triple");
    }
  }
}

namespace {

ordered_json to_ordered(const Conversation& c) {
  ordered_json j;
  j["id"] = c.id;
  j["knowledge"] = ordered_json::array();
  for (const auto& t : c.knowledge) j["knowledge"].push_back({t.subject, t.relation, t.object});
  j["profile"] = ordered_json::array();
  for (const auto& [k, v] : c.profile) j["profile"].push_back({k, v});
  j["history"] = ordered_json::array();
  for (const auto& t : c.history) {
    ordered_json turn;
    turn["speaker"] = t.speaker == Speaker::kUser ? "user" : "system";
    turn["text"] = t.text;
    j["history"].push_back(std::move(turn));
  }
  j["path"] = ordered_json::array();
  for (const auto& p : c.path) j["path"].push_back({p.action, p.topic});
  j["target"] = {c.target.action, c.target.topic};
  j["responses"] = c.responses;
  return j;
}

const json& field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw SchemaError(line, name, "missing");
  return *it;
}

std::string as_string(const json& v, const char* name, std::size_t line) {
  if (!v.is_string()) throw SchemaError(line, name, "expected a string");
  return v.get<std::string>();
}

std::vector<std::string> as_string_tuple(const json& v, std::size_t n, const char* name, std::size_t line) {
  if (!v.is_array() || v.size() != n) {
    throw SchemaError(line, name, "expected an array of " + std::to_string(n) + " strings");
  }
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(as_string(e, name, line));
  return out;
}

const json& as_array(const json& v, const char* name, std::size_t line) {
  if (!v.is_array()) throw SchemaError(line, name, "expected an array");
  return v;
}

}  // namespace

std::string to_jsonl_line(const Conversation& conv) { return to_ordered(conv).dump(); }

Conversation from_jsonl_line(const std::string& line, std::size_t line_number, std::size_t max_pairs) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(line_number, "", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError(line_number, "", "expected a JSON object");

  Conversation c;
  c.id = as_string(field(j, "id", line_number), "id", line_number);
  for (const auto& t : as_array(field(j, "knowledge", line_number), "knowledge", line_number)) {
    auto s = as_string_tuple(t, 3, "knowledge", line_number);
    c.knowledge.push_back({s[0], s[1], s[2]});
  }
  for (const auto& p : as_array(field(j, "profile", line_number), "profile", line_number)) {
    auto s = as_string_tuple(p, 2, "profile", line_number);
    c.profile.emplace_back(s[0], s[1]);
  }
  for (const auto& t : as_array(field(j, "history", line_number), "history", line_number)) {
    if (!t.is_object()) throw SchemaError(line_number, "history", "expected turn objects");
    const std::string speaker = as_string(field(t, "speaker", line_number), "speaker", line_number);
    Turn turn;
    if (speaker == "user") {
      turn.speaker = Speaker::kUser;
    } else if (speaker == "system") {
      turn.speaker = Speaker::kSystem;
    } else {
      throw SchemaError(line_number, "speaker", "must be \"user\" or \"system\"");
    }
    turn.text = as_string(field(t, "text", line_number), "text", line_number);
    c.history.push_back(std::move(turn));
  }
  for (const auto& p : as_array(field(j, "path", line_number), "path", line_number)) {
    auto s = as_string_tuple(p, 2, "path", line_number);
    c.path.push_back({s[0], s[1]});
  }
  auto target = as_string_tuple(field(j, "target", line_number), 2, "target", line_number);
  c.target = {target[0], target[1]};
  for (const auto& r : as_array(field(j, "responses", line_number), "responses", line_number)) {
    c.responses.push_back(as_string(r, "responses", line_number));
  }
  validate(c, max_pairs, line_number);
  return c;
}

std::vector<Conversation> load_jsonl(const std::filesystem::path& path, std::size_t max_pairs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  std::vector<Conversation> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    out.push_back(from_jsonl_line(line, n, max_pairs));
  }
  return out;
}

std::string serialize_jsonl(const std::vector<Conversation>& convs) {
  std::string out;
  for (const auto& c : convs) {
    out += to_jsonl_line(c);
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Conversation>& convs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  out << serialize_jsonl(convs);
  if (!out) throw DataError("failed writing corpus file " + path.string());
}

std::vector<PlanningExample> slice_turns(const Conversation& conv) {
  std::vector<PlanningExample> out;
  const std::size_t turns = std::min(conv.path.size(), conv.responses.size() + 1);
  for (std::size_t t = 0; t < turns; ++t) {
    PlanningExample ex;
    ex.conversation = &conv;
    ex.turn = t;
    ex.history = conv.history;
    for (std::size_t r = 0; r < t; ++r) ex.history.push_back({Speaker::kSystem, conv.responses[r]});
    ex.remaining.assign(conv.path.begin() + static_cast<std::ptrdiff_t>(t), conv.path.end());
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<PlanningExample> slice_turns(const std::vector<Conversation>& convs) {
  std::vector<PlanningExample> out;
  for (const auto& c : convs) {
    auto part = slice_turns(c);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

CorpusSplit split_corpus(const std::vector<Conversation>& convs, double dev_fraction, double test_fraction,
                         std::uint64_t seed) {
  if (dev_fraction < 0 || test_fraction < 0 || dev_fraction + test_fraction >= 1) {
    throw ConfigError("split fractions must be non-negative and sum below 1");
  }
  std::vector<std::size_t> order(convs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  num::Rng rng(seed);
  rng.shuffle(order);
  const auto n = convs.size();
  const auto n_dev = static_cast<std::size_t>(static_cast<double>(n) * dev_fraction + 0.5);
  const auto n_test = static_cast<std::size_t>(static_cast<double>(n) * test_fraction + 0.5);
  CorpusSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = convs[order[i]];
    if (i < n_dev) {
      split.dev.push_back(c);
    } else if (i < n_dev + n_test) {
      split.test.push_back(c);
    } else {
      split.train.push_back(c);
    }
  }
  return split;
}

}  // namespace pathweaver::corpus

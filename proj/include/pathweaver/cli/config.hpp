#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/corpus/synthetic.hpp"
#include "pathweaver/model/encoder.hpp"
#include "pathweaver/model/planner.hpp"
#include "pathweaver/responder/responder.hpp"
#include "pathweaver/training/training.hpp"

namespace pathweaver::cli {

struct DataConfig {
  double dev_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t split_seed = 7;
};

struct EvalConfig {
  bool constrained = true;
  bool target_forcing = false;
  bool remote = false;
  std::size_t e2e_dialogues = 50;
};

struct AblateConfig {
  std::vector<std::string> variants{"FF", "OF", "OB", "BF", "NO_FF"};
  std::vector<std::size_t> layers{2, 4};
};

struct PathsConfig {
  std::string corpus = "corpus.jsonl";
  std::string checkpoint = "model.ckpt";
  std::string reports = "reports";
};

struct Config {
  std::string profile = "desk";
  corpus::SynthConfig synth;
  encoder::EncoderConfig encoder;
  planner::PlannerConfig planner;
  training::TrainConfig train;
  responder::LlmEndpointConfig llm;
  DataConfig data;
  EvalConfig eval;
  AblateConfig ablate;
  PathsConfig paths;

  // Cross-section checks; throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const Config& c);
// Strict: unknown sections or keys raise ConfigError.
Config from_json(const nlohmann::json& j);

// "desk" or "paper"; throws ConfigError otherwise.
Config profile_defaults(const std::string& profile);

// Command-line values that take precedence over the file.
struct Overrides {
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> layers;
  std::optional<bool> remote;
  std::optional<bool> constrained;
  std::optional<bool> target_forcing;
};

// profile defaults < file values < overrides. The profile comes from the
// override, else the file's "profile" key, else "desk".
Config resolve_config(const std::optional<nlohmann::json>& file, const Overrides& overrides);
Config load_config(const std::optional<std::string>& path, const Overrides& overrides);

}  // namespace pathweaver::cli

#include "pathweaver/cli/config.hpp"

#include <fstream>
#include <sstream>

#include "pathweaver/error.hpp"

namespace pathweaver::cli {

using nlohmann::json;

void Config::validate() const {
  if (profile != "desk" && profile != "paper") throw ConfigError("profile must be \"desk\" or \"paper\"");
  synth.validate();
  encoder.validate();
  planner.validate();
  train.validate();
  if (encoder.hidden_dim != planner.hidden_dim) throw ConfigError("encoder.hidden_dim and planner.hidden_dim differ");
  if (!(data.dev_fraction > 0 && data.test_fraction > 0 && data.dev_fraction + data.test_fraction < 1)) {
    throw ConfigError("data: dev_fraction and test_fraction must be positive and sum to less than 1");
  }
  if (eval.remote) llm.validate();
  if (ablate.variants.empty() || ablate.layers.empty()) throw ConfigError("ablate: variants and layers must be non-empty");
  for (const auto& v : ablate.variants) (void)planner::variant_from_string(v);
  for (auto l : ablate.layers) {
    if (l == 0) throw ConfigError("ablate: layer counts must be >= 1");
  }
}

json to_json(const Config& c) {
  return {{"profile", c.profile},
          {"synth", c.synth},
          {"encoder", c.encoder},
          {"planner", c.planner},
          {"train", c.train},
          {"llm", c.llm},
          {"data", {{"dev_fraction", c.data.dev_fraction},
                    {"test_fraction", c.data.test_fraction},
                    {"split_seed", c.data.split_seed}}},
          {"eval", {{"constrained", c.eval.constrained},
                    {"target_forcing", c.eval.target_forcing},
                    {"remote", c.eval.remote},
                    {"e2e_dialogues", c.eval.e2e_dialogues}}},
          {"ablate", {{"variants", c.ablate.variants}, {"layers", c.ablate.layers}}},
          {"paths", {{"corpus", c.paths.corpus}, {"checkpoint", c.paths.checkpoint}, {"reports", c.paths.reports}}}};
}

namespace {

void apply_section(Config& c, const std::string& name, const json& s) {
  if (name == "synth") {
    from_json(s, c.synth);
  } else if (name == "encoder") {
    from_json(s, c.encoder);
  } else if (name == "planner") {
    from_json(s, c.planner);
  } else if (name == "train") {
    from_json(s, c.train);
  } else if (name == "llm") {
    from_json(s, c.llm);
  } else if (name == "data") {
    c.data.dev_fraction = s.value("dev_fraction", c.data.dev_fraction);
    c.data.test_fraction = s.value("test_fraction", c.data.test_fraction);
    c.data.split_seed = s.value("split_seed", c.data.split_seed);
  } else if (name == "eval") {
    c.eval.constrained = s.value("constrained", c.eval.constrained);
    c.eval.target_forcing = s.value("target_forcing", c.eval.target_forcing);
    c.eval.remote = s.value("remote", c.eval.remote);
    c.eval.e2e_dialogues = s.value("e2e_dialogues", c.eval.e2e_dialogues);
  } else if (name == "ablate") {
    c.ablate.variants = s.value("variants", c.ablate.variants);
    c.ablate.layers = s.value("layers", c.ablate.layers);
  } else if (name == "paths") {
    c.paths.corpus = s.value("corpus", c.paths.corpus);
    c.paths.checkpoint = s.value("checkpoint", c.paths.checkpoint);
    c.paths.reports = s.value("reports", c.paths.reports);
  }
}

// Overlays `file` onto `base`, rejecting anything `base` does not know.
void merge_strict(Config& base, const json& file) {
  if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
  const json known = to_json(base);
  for (const auto& [name, section] : file.items()) {
    if (name == "profile") continue;
    if (!known.contains(name)) throw ConfigError("config: unknown section '" + name + "'");
    if (!section.is_object()) throw ConfigError("config: section '" + name + "' must be an object");
    for (const auto& [key, value] : section.items()) {
      if (!known[name].contains(key)) throw ConfigError("config: unknown key '" + name + "." + key + "'");
    }
    try {
      apply_section(base, name, section);
    } catch (const json::exception& e) {
      throw ConfigError("config: section '" + name + "': " + e.what());
    }
  }
}

}  // namespace

Config from_json(const json& j) {
  std::string profile = "desk";
  if (j.contains("profile")) {
    if (!j["profile"].is_string()) throw ConfigError("config: profile must be a string");
    profile = j["profile"].get<std::string>();
  }
  Config c = profile_defaults(profile);
  merge_strict(c, j);
  return c;
}

Config profile_defaults(const std::string& profile) {
  Config c;
  c.profile = profile;
  if (profile == "desk") return c;
  if (profile != "paper") throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
  c.encoder.hidden_dim = 768;
  c.encoder.n_layers = 12;
  c.encoder.n_heads = 12;
  c.encoder.ffn_dim = 3072;
  c.encoder.max_seq_len = 512;
  c.encoder.max_knowledge_items = 64;
  c.encoder.dropout = 0.1;
  c.planner.hidden_dim = 768;
  c.planner.n_decoder_layers = 12;
  c.planner.n_heads = 12;
  c.planner.ffn_dim = 3072;
  c.planner.max_pairs = corpus::kDefaultMaxPairs;
  c.train.learning_rate = 1e-5;
  c.train.epochs = 20;
  c.train.batch_size = 4;
  c.train.gamma = 0.5;
  c.train.beta = 0.5;
  c.train.patience = 0;
  c.train.target_dev_accuracy = 2.0;
  c.train.l4_warmup_epochs = 0;
  c.ablate.layers = {12};
  return c;
}

Config resolve_config(const std::optional<json>& file, const Overrides& o) {
  std::string profile = "desk";
  if (file && file->contains("profile")) {
    if (!(*file)["profile"].is_string()) throw ConfigError("config: profile must be a string");
    profile = (*file)["profile"].get<std::string>();
  }
  if (o.profile) profile = *o.profile;
  Config c = profile_defaults(profile);
  if (file) merge_strict(c, *file);
  c.profile = profile;
  if (o.seed) {
    c.synth.seed = *o.seed;
    c.train.seed = *o.seed;
  }
  if (o.variant) c.planner.variant = planner::variant_from_string(*o.variant);
  if (o.layers) {
    c.planner.n_decoder_layers = *o.layers;
    c.ablate.layers = {*o.layers};
  }
  if (o.remote) c.eval.remote = *o.remote;
  if (o.constrained) c.eval.constrained = *o.constrained;
  if (o.target_forcing) c.eval.target_forcing = *o.target_forcing;
  c.validate();
  return c;
}

Config load_config(const std::optional<std::string>& path, const Overrides& overrides) {
  std::optional<json> file;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config file '" + *path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      file = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ConfigError("config file '" + *path + "' is not valid JSON: " + e.what());
    }
  }
  return resolve_config(file, overrides);
}

}  // namespace pathweaver::cli

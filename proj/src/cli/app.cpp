#include "pathweaver/cli/app.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pathweaver/cli/pipeline.hpp"
#include "pathweaver/error.hpp"

namespace pathweaver::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Args {
  std::optional<std::string> config, profile, variant, out, corpus, checkpoint, instance, reports;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> layers;
  std::optional<std::string> constrained, target_forcing;
  bool remote = false;
};

bool parse_bool(const std::string& flag, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(flag + " expects true or false, got '" + v + "'");
}

Config resolve(const Args& a) {
  Overrides o;
  o.profile = a.profile;
  o.seed = a.seed;
  o.variant = a.variant;
  o.layers = a.layers;
  if (a.remote) o.remote = true;
  if (a.constrained) o.constrained = parse_bool("--constrained", *a.constrained);
  if (a.target_forcing) o.target_forcing = parse_bool("--target-forcing", *a.target_forcing);
  Config c = load_config(a.config, o);
  if (a.corpus) c.paths.corpus = *a.corpus;
  if (a.checkpoint) c.paths.checkpoint = *a.checkpoint;
  if (a.reports) c.paths.reports = *a.reports;
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

decoding::PlanOptions plan_options(const Config& c) {
  decoding::PlanOptions o;
  o.constrained = c.eval.constrained;
  o.target_forcing = c.eval.target_forcing;
  return o;
}

std::unique_ptr<planner::PlannerModel> load_model(const Config& c, const Args& a) {
  auto model = training::restore_model(training::load_checkpoint(c.paths.checkpoint));
  if (a.variant) model->mutable_config().variant = c.planner.variant;
  return model;
}

std::unique_ptr<Prepared> load_prepared(const Config& c) {
  return prepare(corpus::load_jsonl(c.paths.corpus, c.planner.max_pairs), c.data);
}

// A plan instance is a corpus line whose "id", "path" and "responses" may be
// omitted.
corpus::Conversation read_instance(const fs::path& path, std::size_t max_pairs) {
  std::string text = read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(1, "", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError(1, "", "expected a JSON object");
  if (!j.contains("id")) j["id"] = path.stem().string();
  if (!j.contains("path") && j.contains("target")) j["path"] = json::array({j["target"]});
  if (!j.contains("responses")) j["responses"] = json::array();
  return corpus::from_jsonl_line(j.dump(), 1, max_pairs);
}

int cmd_synth(const Config& c, const Args& a, std::ostream& out) {
  const fs::path path = a.out.value_or(c.paths.corpus);
  auto convs = corpus::generate_synthetic(c.synth);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  corpus::write_jsonl(path, convs);
  out << json{{"command", "synth"}, {"conversations", convs.size()}, {"path", path.string()}}.dump() << "\n";
  return kExitOk;
}

int cmd_train(const Config& c, const Args& a, std::ostream& out, std::ostream& err) {
  auto data = load_prepared(c);
  const fs::path ckpt_path = a.out.value_or(c.paths.checkpoint);
  const fs::path log_path = ckpt_path.string() + ".log.jsonl";
  if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
  planner::PlannerModel model(c.encoder, c.planner, data->vocab, c.train.seed);
  std::string log_text;
  json meta = {{"seed", c.train.seed}, {"train", c.train}, {"data", to_json(c)["data"]}};
  training::TrainResult result;
  try {
    result = training::train(model, data->train, data->dev, c.train, [&](const training::EpochLog& e) {
      const std::string line = training::to_json(e).dump();
      log_text += line + "\n";
      err << line << "\n";
    });
  } catch (const DivergenceError&) {
    write_text(log_path, log_text);
    meta["diverged"] = true;
    training::save_checkpoint(training::make_checkpoint(model, meta), ckpt_path);
    throw;
  }
  write_text(log_path, log_text);
  meta["epoch"] = result.best_epoch;
  meta["dev_next_pair_accuracy"] = result.best_dev_accuracy;
  meta["epochs_run"] = result.log.size();
  auto ckpt = training::make_checkpoint(model, meta);
  training::save_checkpoint(ckpt, ckpt_path);
  out << json{{"command", "train"},
              {"checkpoint", ckpt_path.string()},
              {"log", log_path.string()},
              {"best_epoch", result.best_epoch},
              {"dev_next_pair_accuracy", result.best_dev_accuracy},
              {"content_hash", training::content_hash(ckpt)}}
             .dump()
      << "\n";
  return kExitOk;
}

int cmd_plan(const Config& c, const Args& a, std::ostream& out) {
  if (!a.instance) throw ConfigError("plan: --instance is required");
  auto model = load_model(c, a);
  auto conv = read_instance(*a.instance, model->config().max_pairs);
  encoder::PlanningInput in{&conv.knowledge, &conv.profile, &conv.history, conv.target};
  const std::string text = decoding::to_json(decoding::plan(*model, in, plan_options(c))).dump(2) + "\n";
  if (a.out) {
    write_text(*a.out, text);
  } else {
    out << text;
  }
  return kExitOk;
}

void write_report(const fs::path& base, const json& j, const std::string& table, std::ostream& out) {
  write_text(base.string() + ".json", j.dump(2) + "\n");
  write_text(base.string() + ".txt", table);
  out << table;
}

int cmd_eval_plan(const Config& c, const Args& a, std::ostream& out) {
  auto model = load_model(c, a);
  auto data = load_prepared(c);
  auto r = evaluate_plans(*model, data->test, plan_options(c));
  json j = {{"command", "eval-plan"},
            {"variant", planner::to_string(model->config().variant)},
            {"plan", metrics::to_json(r.plan)},
            {"fusion_token_accuracy", r.fusion_token_accuracy},
            {"definitions",
             {{"acc", "prediction equals the gold next pair element"},
              {"bi_acc", "prediction equals the gold next or next-but-one element"}}}};
  const std::string name = planner::to_string(model->config().variant);
  write_report(a.out.value_or((fs::path(c.paths.reports) / "plan_eval").string()), j,
               metrics::plan_table({{name, r.plan}}), out);
  return kExitOk;
}

int cmd_eval_e2e(const Config& c, const Args& a, std::ostream& out) {
  auto model = load_model(c, a);
  auto data = load_prepared(c);
  std::vector<corpus::Conversation> dialogues = data->split.test;
  if (dialogues.size() > c.eval.e2e_dialogues) dialogues.resize(c.eval.e2e_dialogues);
  auto g = evaluate_end_to_end(*model, dialogues, plan_options(c), c.eval.remote ? &c.llm : nullptr);
  json j = {{"command", "eval-e2e"},
            {"responder", c.eval.remote ? "remote" : "offline"},
            {"target_forcing", c.eval.target_forcing},
            {"generation", metrics::to_json(g)},
            {"definitions",
             {{"know_f1", "token F1 against objects of triples touching the subtarget topic"},
              {"succ", "target topic mentioned at or after the first turn planned for the target"}}}};
  write_report(a.out.value_or((fs::path(c.paths.reports) / "e2e_eval").string()), j,
               metrics::gen_table({{planner::to_string(model->config().variant), g}}), out);
  return kExitOk;
}

int cmd_ablate(const Config& c, const Args& a, std::ostream& out, std::ostream& err) {
  auto data = load_prepared(c);
  auto rows = run_ablation(c, *data, [&](const std::string& line) { err << line << "\n"; });
  json j = {{"command", "ablate"}, {"rows", json::array()}};
  for (const auto& r : rows) j["rows"].push_back(to_json(r));
  write_report(a.out.value_or((fs::path(c.paths.reports) / "ablation").string()), j, ablation_table(rows), out);
  return kExitOk;
}

int cmd_inspect(const Config& c, std::ostream& out) {
  auto ckpt = training::load_checkpoint(c.paths.checkpoint);
  std::size_t scalars = 0;
  json arrays = json::array();
  for (const auto& arr : ckpt.arrays) {
    scalars += arr.data.size();
    arrays.push_back({{"name", arr.name}, {"shape", {arr.rows, arr.cols}}});
  }
  json j = {{"format", ckpt.format},
            {"encoder", ckpt.encoder},
            {"planner", ckpt.planner},
            {"vocabulary_size", ckpt.vocab.size()},
            {"parameters", scalars},
            {"metadata", ckpt.metadata},
            {"content_hash", training::content_hash(ckpt)},
            {"arrays", arrays}};
  out << j.dump(2) << "\n";
  return kExitOk;
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kSchema:
      return "schema";
    case ErrorKind::kParse:
      return "parse";
    case ErrorKind::kIntegrity:
      return "integrity";
    case ErrorKind::kVersion:
      return "version";
    case ErrorKind::kDivergence:
      return "divergence";
    case ErrorKind::kTransport:
      return "transport";
    case ErrorKind::kProtocol:
      return "protocol";
    case ErrorKind::kDimension:
      return "dimension";
    case ErrorKind::kContract:
      return "contract";
  }
  return "internal";
}

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
      return kExitConfig;
    case ErrorKind::kData:
    case ErrorKind::kSchema:
    case ErrorKind::kParse:
    case ErrorKind::kIntegrity:
    case ErrorKind::kVersion:
      return kExitData;
    case ErrorKind::kDivergence:
      return kExitDivergence;
    case ErrorKind::kTransport:
    case ErrorKind::kProtocol:
      return kExitTransport;
    default:
      return kExitInternal;
  }
}

int report_error(std::ostream& err, const std::string& kind, int code, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"exit_code", code}, {"message", message}}}}.dump() << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dialogue-path planner: synthesize corpora, train, plan, evaluate.", "pathweaver"};
  app.require_subcommand(1);
  app.fallthrough();
  Args a;
  app.add_option("--config", a.config, "JSON config file");
  app.add_option("--profile", a.profile, "desk or paper");
  app.add_option("--seed", a.seed, "seed for corpus synthesis and training");
  app.add_option("--variant", a.variant, "ff, of, ob, bf or no-ff");
  app.add_option("--layers", a.layers, "decoder layers");
  app.add_flag("--remote", a.remote, "use the remote LLM endpoint for eval-e2e");
  app.add_option("--out", a.out, "output path");
  app.add_option("--constrained", a.constrained, "grammar-constrained decoding (true|false)");
  app.add_option("--target-forcing", a.target_forcing, "replace the last planned pair by the target (true|false)");
  app.add_option("--corpus", a.corpus, "corpus JSONL path");
  app.add_option("--checkpoint", a.checkpoint, "checkpoint path");
  app.add_option("--reports", a.reports, "report directory");

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus");
  auto* train = app.add_subcommand("train", "train a planner checkpoint");
  auto* plan = app.add_subcommand("plan", "plan a path for one instance");
  plan->add_option("--instance", a.instance, "instance JSON file")->required();
  auto* eval_plan = app.add_subcommand("eval-plan", "planning metrics on the test split");
  auto* eval_e2e = app.add_subcommand("eval-e2e", "generation metrics on the test split");
  auto* ablate = app.add_subcommand("ablate", "variant x layer ablation grid");
  auto* inspect = app.add_subcommand("inspect", "dump checkpoint metadata");

  std::vector<std::string> argv_store{"pathweaver"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "config", kExitConfig, e.what());
  }

  try {
    const Config c = resolve(a);
    if (synth->parsed()) return cmd_synth(c, a, out);
    if (train->parsed()) return cmd_train(c, a, out, err);
    if (plan->parsed()) return cmd_plan(c, a, out);
    if (eval_plan->parsed()) return cmd_eval_plan(c, a, out);
    if (eval_e2e->parsed()) return cmd_eval_e2e(c, a, out);
    if (ablate->parsed()) return cmd_ablate(c, a, out, err);
    if (inspect->parsed()) return cmd_inspect(c, out);
    return report_error(err, "config", kExitConfig, "no command given");
  } catch (const Error& e) {
    return report_error(err, kind_name(e.kind()), exit_code_for(e.kind()), e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(err, "data", kExitData, e.what());
  } catch (const std::exception& e) {
    return report_error(err, "internal", kExitInternal, e.what());
  }
}

}  // namespace pathweaver::cli

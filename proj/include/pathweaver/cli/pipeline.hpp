#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/cli/config.hpp"
#include "pathweaver/decoding/decoding.hpp"
#include "pathweaver/metrics/metrics.hpp"

namespace pathweaver::cli {

// A loaded corpus with its split, vocabulary, and per-turn items. Items point
// into the conversations and examples held here, so a Prepared must not be
// copied.
struct Prepared {
  corpus::CorpusSplit split;
  corpus::Vocabulary vocab;
  std::vector<corpus::PlanningExample> train_examples, dev_examples, test_examples;
  std::vector<training::TrainItem> train, dev, test;

  Prepared() = default;
  Prepared(const Prepared&) = delete;
  Prepared& operator=(const Prepared&) = delete;
};

// The vocabulary spans every split: topics are atomic tokens, so a held-out
// dialogue's entities must be known to be predicted at all.
std::unique_ptr<Prepared> prepare(std::vector<corpus::Conversation> conversations, const DataConfig& data);

struct PlanReport {
  metrics::PlanEval plan;
  double fusion_token_accuracy = 0;
};

PlanReport evaluate_plans(const planner::PlannerModel& model, const std::vector<training::TrainItem>& items,
                          const decoding::PlanOptions& options);

// Plans once from each dialogue's opening history and walks the plan one
// subtarget per system turn, for max(plan length, gold responses) turns.
// Responses come from the offline responder unless `remote` is set.
metrics::GenEval evaluate_end_to_end(const planner::PlannerModel& model,
                                     const std::vector<corpus::Conversation>& dialogues,
                                     const decoding::PlanOptions& options,
                                     const responder::LlmEndpointConfig* remote = nullptr);

struct AblationRow {
  std::string variant;
  std::size_t layers = 0;
  PlanReport report;
  std::size_t epochs_run = 0;
  double seconds = 0;
};

using Progress = std::function<void(const std::string&)>;

// Trains and evaluates one model per (layer count, variant) cell.
std::vector<AblationRow> run_ablation(const Config& cfg, const Prepared& data, const Progress& progress = {});

nlohmann::json to_json(const AblationRow& row);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace pathweaver::cli

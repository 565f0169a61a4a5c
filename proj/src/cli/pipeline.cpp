#include "pathweaver/cli/pipeline.hpp"

#include <algorithm>
#include <chrono>

#include "pathweaver/error.hpp"

namespace pathweaver::cli {

std::unique_ptr<Prepared> prepare(std::vector<corpus::Conversation> conversations, const DataConfig& data) {
  if (conversations.empty()) throw DataError("corpus is empty");
  auto p = std::make_unique<Prepared>();
  p->vocab = corpus::build_vocabulary(conversations);
  p->split = corpus::split_corpus(conversations, data.dev_fraction, data.test_fraction, data.split_seed);
  if (p->split.train.empty() || p->split.dev.empty() || p->split.test.empty()) {
    throw DataError("corpus too small: every split needs at least one dialogue");
  }
  p->train_examples = corpus::slice_turns(p->split.train);
  p->dev_examples = corpus::slice_turns(p->split.dev);
  p->test_examples = corpus::slice_turns(p->split.test);
  p->train = training::make_items(p->train_examples);
  p->dev = training::make_items(p->dev_examples);
  p->test = training::make_items(p->test_examples);
  return p;
}

PlanReport evaluate_plans(const planner::PlannerModel& model, const std::vector<training::TrainItem>& items,
                          const decoding::PlanOptions& options) {
  std::vector<corpus::PathPair> predictions;
  std::vector<metrics::PlanGold> golds;
  for (const auto& item : items) {
    predictions.push_back(decoding::next_subtarget(decoding::plan(model, item.input, options), 0));
    metrics::PlanGold g{item.gold.front(), std::nullopt};
    if (item.gold.size() > 1) g.next_next = item.gold[1];
    golds.push_back(std::move(g));
  }
  PlanReport r;
  r.plan = metrics::plan_accuracy(predictions, golds);
  r.fusion_token_accuracy = training::fusion_token_accuracy(model, items);
  return r;
}

metrics::GenEval evaluate_end_to_end(const planner::PlannerModel& model,
                                     const std::vector<corpus::Conversation>& dialogues,
                                     const decoding::PlanOptions& options,
                                     const responder::LlmEndpointConfig* remote) {
  struct Live {
    const corpus::Conversation* conv;
    decoding::PlanResult plan;
    std::size_t turns;
    std::vector<corpus::Turn> history;
    metrics::GenDialogue result;
  };
  std::vector<Live> live;
  for (const auto& conv : dialogues) {
    encoder::PlanningInput in{&conv.knowledge, &conv.profile, &conv.history, conv.target};
    auto plan = decoding::plan(model, in, options);
    const std::size_t turns = std::max(plan.final_path.size(), conv.responses.size());
    live.push_back({&conv, std::move(plan), turns, conv.history, {}});
    live.back().result.target = conv.target;
  }
  std::unique_ptr<responder::RemoteClient> client;
  if (remote) client = std::make_unique<responder::RemoteClient>(*remote);

  std::size_t max_turns = 0;
  for (const auto& l : live) max_turns = std::max(max_turns, l.turns);
  for (std::size_t t = 0; t < max_turns; ++t) {
    std::vector<Live*> active;
    std::vector<corpus::PathPair> subtargets;
    for (auto& l : live) {
      if (t >= l.turns) continue;
      active.push_back(&l);
      subtargets.push_back(decoding::next_subtarget(l.plan, t));
    }
    std::vector<std::string> replies(active.size());
    if (client) {
      std::vector<responder::PromptSpec> prompts;
      for (std::size_t i = 0; i < active.size(); ++i) {
        prompts.push_back(responder::build_prompt(active[i]->history, active[i]->conv->knowledge, subtargets[i]));
      }
      replies = client->generate_all(prompts);
    } else {
      for (std::size_t i = 0; i < active.size(); ++i) {
        replies[i] = responder::generate_offline(subtargets[i], active[i]->conv->knowledge);
      }
    }
    for (std::size_t i = 0; i < active.size(); ++i) {
      Live& l = *active[i];
      l.history.push_back({corpus::Speaker::kSystem, replies[i]});
      l.result.transcript.push_back({replies[i], subtargets[i]});
      if (t < l.conv->responses.size()) {
        l.result.turns.push_back(
            {replies[i], l.conv->responses[t], metrics::active_triples(l.conv->knowledge, subtargets[i].topic)});
      }
    }
  }
  std::vector<metrics::GenDialogue> out;
  for (auto& l : live) out.push_back(std::move(l.result));
  return metrics::generation_eval(out);
}

std::vector<AblationRow> run_ablation(const Config& cfg, const Prepared& data, const Progress& progress) {
  std::vector<AblationRow> rows;
  decoding::PlanOptions options;
  options.constrained = cfg.eval.constrained;
  options.target_forcing = cfg.eval.target_forcing;
  for (std::size_t layers : cfg.ablate.layers) {
    for (const auto& name : cfg.ablate.variants) {
      const auto t0 = std::chrono::steady_clock::now();
      planner::PlannerConfig pc = cfg.planner;
      pc.variant = planner::variant_from_string(name);
      pc.n_decoder_layers = layers;
      planner::PlannerModel model(cfg.encoder, pc, data.vocab, cfg.train.seed);
      auto result = training::train(model, data.train, data.dev, cfg.train);
      AblationRow row;
      row.variant = planner::to_string(pc.variant);
      row.layers = layers;
      row.report = evaluate_plans(model, data.test, options);
      row.epochs_run = result.log.size();
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (progress) progress(to_json(row).dump());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

nlohmann::json to_json(const AblationRow& row) {
  return {{"variant", row.variant},
          {"layers", row.layers},
          {"fusion_token_accuracy", row.report.fusion_token_accuracy},
          {"plan", metrics::to_json(row.report.plan)},
          {"epochs_run", row.epochs_run},
          {"seconds", row.seconds}};
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::vector<std::vector<std::string>> cells{
      {"Variant", "L", "TF Acc.", "Action Acc.", "Action Bi.Acc.", "Topic Acc.", "Topic Bi.Acc."}};
  for (const auto& r : rows) {
    cells.push_back({r.variant, std::to_string(r.layers), metrics::format_percent(r.report.fusion_token_accuracy),
                     metrics::format_percent(r.report.plan.action_acc),
                     metrics::format_percent(r.report.plan.action_bi_acc),
                     metrics::format_percent(r.report.plan.topic_acc),
                     metrics::format_percent(r.report.plan.topic_bi_acc)});
  }
  return metrics::text_table(cells);
}

}  // namespace pathweaver::cli

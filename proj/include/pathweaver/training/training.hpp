#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/corpus/conversation.hpp"
#include "pathweaver/model/planner.hpp"

namespace pathweaver::training {

struct TrainConfig {
  double gamma = 0.5;
  double beta = 0.5;
  double learning_rate = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double warmup_fraction = 0.1;
  double grad_clip_norm = 1.0;
  double weight_decay = 0.01;
  std::uint64_t seed = 7;
  std::string precision = num::kPrecisionName;  // must match the build
  // Stop after this many epochs without a dev improvement; 0 disables.
  std::size_t patience = 6;
  // Stop once dev next-pair accuracy reaches this value; > 1 disables.
  double target_dev_accuracy = 1.0;
  // Epochs at the start whose optimized objective leaves out L4. The two
  // decoders otherwise agree on memory-independent states before either has
  // learned to read the memory, and training stalls at the label prior.
  std::size_t l4_warmup_epochs = 5;
  // Reload the best-dev parameters when training ends. Off keeps the last
  // epoch, which is what an overfit run scored on its own data wants.
  bool restore_best = true;

  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossBreakdown {
  double l1 = 0, l2 = 0, l3 = 0, l4 = 0, total = 0;
};

// One teacher-forced training item.
struct TrainItem {
  encoder::PlanningInput input;
  corpus::DialoguePath gold;
};

std::vector<TrainItem> make_items(const std::vector<corpus::PlanningExample>& examples);

// Differentiable batch loss plus its scalar breakdown. Cross-entropies and
// L4 are means over all non-PAD label positions of the batch.
// total = gamma*L1 + beta*L2 + L3 + L4; objective scales the L4 term by
// l4_weight and is what gets differentiated.
struct BatchLoss {
  num::Var total;
  num::Var objective;
  LossBreakdown parts;
  std::size_t positions = 0;
};

// Throws ContractError on an empty batch.
BatchLoss compute_losses(const planner::PlannerModel& model, const std::vector<const TrainItem*>& batch,
                         const TrainConfig& cfg, num::Rng* dropout_rng = nullptr, double l4_weight = 1.0);
LossBreakdown breakdown(const planner::PlannerModel& model, const std::vector<const TrainItem*>& batch,
                        const TrainConfig& cfg);

struct AdamState {
  std::vector<num::Tensor> m, v;
  std::size_t step = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Linear warmup to the base rate over `warmup_steps`, then constant.
double learning_rate_at(double base, std::size_t step, std::size_t warmup_steps);

// Clips the global gradient norm, then applies one AdamW update to every
// parameter in `store`. Returns the pre-clip norm. Throws DivergenceError
// on a non-finite gradient without touching any parameter.
double optimizer_step(num::ParameterStore& store, AdamState& state, const TrainConfig& cfg, std::size_t warmup_steps,
                      const AdamHyper& hyper = {});

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown train;
  double dev_next_pair_accuracy = 0;
  double grad_norm = 0;
  double seconds = 0;
};

nlohmann::json to_json(const EpochLog& e);

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_accuracy = -1;
  bool stopped_early = false;
};

// Fraction of items whose planned first pair equals the gold first pair.
double next_pair_accuracy(const planner::PlannerModel& model, const std::vector<TrainItem>& items);
// Teacher-forced argmax accuracy of the fusion head over all label positions.
double fusion_token_accuracy(const planner::PlannerModel& model, const std::vector<TrainItem>& items);

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains in place and leaves the best-dev parameters loaded, or the last
// epoch's when restore_best is off. On divergence
// the best parameters so far (or the initial ones) are restored before the
// DivergenceError propagates.
TrainResult train(planner::PlannerModel& model, const std::vector<TrainItem>& train_items,
                  const std::vector<TrainItem>& dev_items, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// ---- checkpoints ----

inline constexpr const char* kCheckpointFormat = "pathweaver-checkpoint/1";

struct NamedArray {
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::vector<num::Real> data;
};

struct Checkpoint {
  std::string format = kCheckpointFormat;
  encoder::EncoderConfig encoder;
  planner::PlannerConfig planner;
  corpus::Vocabulary vocab;
  std::vector<NamedArray> arrays;
  nlohmann::json metadata;  // epoch, dev metric, seed, ...
};

Checkpoint make_checkpoint(const planner::PlannerModel& model, nlohmann::json metadata = nlohmann::json::object());
std::unique_ptr<planner::PlannerModel> restore_model(const Checkpoint& ckpt);
// Copies array values into an existing model of the same shape.
void load_parameters(planner::PlannerModel& model, const Checkpoint& ckpt);

// Layout: 8-byte magic "PWCKPT\0\1", u64 LE header length, JSON header,
// raw LE array payload in manifest order, u32 LE CRC-32 over header and
// payload.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Hex CRC-32 of the serialized checkpoint.
std::string content_hash(const Checkpoint& ckpt);

}  // namespace pathweaver::training

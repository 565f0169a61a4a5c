#include "pathweaver/training/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <zlib.h>

#include "pathweaver/decoding/decoding.hpp"
#include "pathweaver/error.hpp"

namespace pathweaver::training {

using num::Real;
using num::Tensor;
using num::Var;

void TrainConfig::validate() const {
  if (!(gamma >= 0) || !(beta >= 0)) throw ConfigError("train: gamma and beta must be >= 0");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) throw ConfigError("train: warmup_fraction must be in [0,1)");
  if (!(grad_clip_norm > 0)) throw ConfigError("train: grad_clip_norm must be > 0");
  if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (precision != num::kPrecisionName) {
    throw ConfigError("train: precision '" + precision + "' requested but this build computes in " +
                      num::kPrecisionName);
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"gamma", c.gamma},
                     {"beta", c.beta},
                     {"learning_rate", c.learning_rate},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"warmup_fraction", c.warmup_fraction},
                     {"grad_clip_norm", c.grad_clip_norm},
                     {"weight_decay", c.weight_decay},
                     {"seed", c.seed},
                     {"precision", c.precision},
                     {"patience", c.patience},
                     {"target_dev_accuracy", c.target_dev_accuracy},
                     {"l4_warmup_epochs", c.l4_warmup_epochs},
                     {"restore_best", c.restore_best}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.gamma = j.value("gamma", c.gamma);
  c.beta = j.value("beta", c.beta);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.precision = j.value("precision", c.precision);
  c.patience = j.value("patience", c.patience);
  c.target_dev_accuracy = j.value("target_dev_accuracy", c.target_dev_accuracy);
  c.l4_warmup_epochs = j.value("l4_warmup_epochs", c.l4_warmup_epochs);
  c.restore_best = j.value("restore_best", c.restore_best);
}

std::vector<TrainItem> make_items(const std::vector<corpus::PlanningExample>& examples) {
  std::vector<TrainItem> items;
  items.reserve(examples.size());
  for (const auto& ex : examples) items.push_back({encoder::input_of(ex), ex.remaining});
  return items;
}

namespace {

std::vector<std::int64_t> as_targets(const std::vector<corpus::TokenId>& ids) {
  return {ids.begin(), ids.end()};
}

}  // namespace

BatchLoss compute_losses(const planner::PlannerModel& model, const std::vector<const TrainItem*>& batch,
                         const TrainConfig& cfg, num::Rng* dropout_rng, double l4_weight) {
  if (batch.empty()) throw ContractError("compute_losses: empty batch");
  std::vector<Var> ce1, ce2, ce3, dist;
  std::size_t positions = 0;
  for (const TrainItem* item : batch) {
    encoder::Memory memory = model.encode(item->input, dropout_rng);
    planner::TeacherForced tf = planner::teacher_forced(model, memory, item->gold, dropout_rng);
    const auto n = static_cast<Real>(tf.forward_labels.size());
    positions += tf.forward_labels.size();
    ce1.push_back(num::scale(num::cross_entropy(tf.forward_logits, as_targets(tf.forward_labels), -1), n));
    ce2.push_back(num::scale(num::cross_entropy(tf.backward_logits, as_targets(tf.backward_labels), -1), n));
    ce3.push_back(num::scale(num::cross_entropy(tf.fused_logits, as_targets(tf.fused_labels), -1), n));
    dist.push_back(num::sum(num::row_norm(num::sub(tf.forward_states, tf.backward_aligned))));
  }
  const Real inv = Real(1) / static_cast<Real>(positions);
  auto reduce = [&](const std::vector<Var>& parts) { return num::scale(num::sum(num::concat_rows(parts)), inv); };
  Var l1 = reduce(ce1), l2 = reduce(ce2), l3 = reduce(ce3), l4 = reduce(dist);
  BatchLoss out;
  Var ce = num::add(num::add(num::scale(l1, static_cast<Real>(cfg.gamma)), num::scale(l2, static_cast<Real>(cfg.beta))), l3);
  out.total = num::add(ce, l4);
  out.objective = l4_weight == 1.0 ? out.total : num::add(ce, num::scale(l4, static_cast<Real>(l4_weight)));
  out.parts = {l1.value().item(), l2.value().item(), l3.value().item(), l4.value().item(), out.total.value().item()};
  out.positions = positions;
  return out;
}

LossBreakdown breakdown(const planner::PlannerModel& model, const std::vector<const TrainItem*>& batch,
                        const TrainConfig& cfg) {
  num::NoGradGuard no_grad;
  return compute_losses(model, batch, cfg).parts;
}

double learning_rate_at(double base, std::size_t step, std::size_t warmup_steps) {
  if (warmup_steps == 0) return base;
  return base * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

namespace {

bool decays(const std::string& name) {
  auto ends_with = [&](const char* s) {
    const std::size_t n = std::strlen(s);
    return name.size() >= n && name.compare(name.size() - n, n, s) == 0;
  };
  return !ends_with(".bias") && !ends_with(".gain");
}

}  // namespace

double optimizer_step(num::ParameterStore& store, AdamState& state, const TrainConfig& cfg, std::size_t warmup_steps,
                      const AdamHyper& hyper) {
  auto& entries = store.entries();
  if (state.m.size() != entries.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& e : entries) {
      state.m.emplace_back(e.var.rows(), e.var.cols());
      state.v.emplace_back(e.var.rows(), e.var.cols());
    }
  }
  double sq = 0;
  for (const auto& e : entries) {
    if (!e.var.has_grad()) continue;
    for (Real g : e.var.grad().values()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    for (const auto& e : entries) {
      if (e.var.has_grad() && !e.var.grad().all_finite()) {
        throw DivergenceError("non-finite gradient in parameter '" + e.name + "' at step " +
                              std::to_string(state.step + 1));
      }
    }
    throw DivergenceError("non-finite gradient norm at step " + std::to_string(state.step + 1));
  }
  const double clip = norm > cfg.grad_clip_norm ? cfg.grad_clip_norm / norm : 1.0;
  ++state.step;
  const double lr = learning_rate_at(cfg.learning_rate, state.step, warmup_steps);
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Var& p = entries[k].var;
    Tensor& w = p.mutable_value();
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    const bool has = p.has_grad();
    const double wd = decays(entries[k].name) ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has ? static_cast<double>(p.grad()[i]) * clip : 0.0;
      double wi = static_cast<double>(w[i]);
      wi -= lr * wd * wi;
      const double mi = hyper.beta1 * static_cast<double>(m[i]) + (1 - hyper.beta1) * g;
      const double vi = hyper.beta2 * static_cast<double>(v[i]) + (1 - hyper.beta2) * g * g;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      wi -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + hyper.eps);
      w[i] = static_cast<Real>(wi);
    }
  }
  return norm;
}

nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"l1", e.train.l1},
          {"l2", e.train.l2},
          {"l3", e.train.l3},
          {"l4", e.train.l4},
          {"total", e.train.total},
          {"dev_next_pair_accuracy", e.dev_next_pair_accuracy},
          {"grad_norm", e.grad_norm},
          {"seconds", e.seconds}};
}

double next_pair_accuracy(const planner::PlannerModel& model, const std::vector<TrainItem>& items) {
  if (items.empty()) return 0;
  std::size_t hit = 0;
  for (const auto& item : items) {
    auto r = decoding::plan(model, item.input, {});
    if (r.final_path.front() == item.gold.front()) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(items.size());
}

double fusion_token_accuracy(const planner::PlannerModel& model, const std::vector<TrainItem>& items) {
  num::NoGradGuard no_grad;
  std::size_t hit = 0, total = 0;
  for (const auto& item : items) {
    auto tf = planner::teacher_forced(model, model.encode(item.input), item.gold);
    const Tensor& logits = tf.fused_logits.value();
    for (std::size_t i = 0; i < tf.fused_labels.size(); ++i) {
      const Real* row = logits.row(i);
      const auto best = std::max_element(row, row + logits.cols()) - row;
      hit += best == tf.fused_labels[i];
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0;
}

namespace {

std::vector<Tensor> snapshot(const num::ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& e : store.entries()) out.push_back(e.var.value());
  return out;
}

void restore(num::ParameterStore& store, const std::vector<Tensor>& values) {
  auto& entries = store.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) entries[k].var.mutable_value() = values[k];
}

}  // namespace

TrainResult train(planner::PlannerModel& model, const std::vector<TrainItem>& train_items,
                  const std::vector<TrainItem>& dev_items, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_items.empty()) throw DataError("train: empty training split");
  if (dev_items.empty()) throw DataError("train: empty dev split");

  num::Rng rng(cfg.seed);
  num::Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const bool use_dropout = model.encoder_config().dropout > 0;
  auto& store = model.params();
  const std::size_t batches_per_epoch = (train_items.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches_per_epoch * cfg.epochs;
  const auto warmup_steps =
      static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));

  AdamState adam;
  TrainResult result;
  std::vector<Tensor> best = snapshot(store);
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_items.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    EpochLog log;
    log.epoch = epoch;
    double max_norm = 0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      std::vector<const TrainItem*> batch;
      for (std::size_t i = b * cfg.batch_size; i < std::min(order.size(), (b + 1) * cfg.batch_size); ++i) {
        batch.push_back(&train_items[order[i]]);
      }
      store.zero_grad();
      try {
        const double l4_weight = epoch <= cfg.l4_warmup_epochs ? 0.0 : 1.0;
        BatchLoss loss = compute_losses(model, batch, cfg, use_dropout ? &dropout_rng : nullptr, l4_weight);
        if (!std::isfinite(loss.parts.total)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(b + 1));
        }
        num::backward(loss.objective);
        max_norm = std::max(max_norm, optimizer_step(store, adam, cfg, warmup_steps));
        log.train.l1 += loss.parts.l1;
        log.train.l2 += loss.parts.l2;
        log.train.l3 += loss.parts.l3;
        log.train.l4 += loss.parts.l4;
        log.train.total += loss.parts.total;
      } catch (const DivergenceError&) {
        restore(store, best);
        store.zero_grad();
        throw;
      }
    }
    const double nb = static_cast<double>(batches_per_epoch);
    log.train = {log.train.l1 / nb, log.train.l2 / nb, log.train.l3 / nb, log.train.l4 / nb, log.train.total / nb};
    log.grad_norm = max_norm;
    log.dev_next_pair_accuracy = next_pair_accuracy(model, dev_items);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (log.dev_next_pair_accuracy > result.best_dev_accuracy) {
      result.best_dev_accuracy = log.dev_next_pair_accuracy;
      result.best_epoch = epoch;
      best = snapshot(store);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch) on_epoch(log);
    // A model stopped inside the L4 warmup would never have seen the full objective.
    const bool may_stop = epoch > cfg.l4_warmup_epochs;
    if (may_stop && (log.dev_next_pair_accuracy >= cfg.target_dev_accuracy ||
                     (cfg.patience > 0 && since_best >= cfg.patience))) {
      result.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  if (cfg.restore_best) restore(store, best);
  store.zero_grad();
  return result;
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[8] = {'P', 'W', 'C', 'K', 'P', 'T', '\0', '\1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}
std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

Checkpoint make_checkpoint(const planner::PlannerModel& model, nlohmann::json metadata) {
  Checkpoint c;
  c.encoder = model.encoder_config();
  c.planner = model.config();
  c.vocab = model.vocab();
  for (const auto& e : model.params().entries()) {
    const Tensor& t = e.var.value();
    c.arrays.push_back({e.name, t.rows(), t.cols(), {t.values().begin(), t.values().end()}});
  }
  if (!metadata.contains("seed")) metadata["seed"] = model.seed();
  c.metadata = std::move(metadata);
  return c;
}

void load_parameters(planner::PlannerModel& model, const Checkpoint& ckpt) {
  auto& entries = model.params().entries();
  if (entries.size() != ckpt.arrays.size()) {
    throw IntegrityError("checkpoint holds " + std::to_string(ckpt.arrays.size()) + " arrays, model expects " +
                         std::to_string(entries.size()));
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const NamedArray& a = ckpt.arrays[k];
    Var& p = entries[k].var;
    if (a.name != entries[k].name || a.rows != p.rows() || a.cols != p.cols()) {
      throw IntegrityError("checkpoint array '" + a.name + "' does not match model parameter '" + entries[k].name +
                           "'");
    }
    p.mutable_value() = Tensor(a.rows, a.cols, a.data);
  }
}

std::unique_ptr<planner::PlannerModel> restore_model(const Checkpoint& ckpt) {
  const std::uint64_t seed = ckpt.metadata.value("seed", std::uint64_t{0});
  auto model = std::make_unique<planner::PlannerModel>(ckpt.encoder, ckpt.planner, ckpt.vocab, seed);
  load_parameters(*model, ckpt);
  return model;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = ckpt.format;
  header["precision"] = num::kPrecisionName;
  header["encoder"] = ckpt.encoder;
  header["planner"] = ckpt.planner;
  header["vocabulary"] = ckpt.vocab.to_json();
  header["metadata"] = ckpt.metadata;
  auto manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& a : ckpt.arrays) {
    if (a.data.size() != a.rows * a.cols) throw ContractError("checkpoint array '" + a.name + "' has a bad size");
    manifest.push_back({{"name", a.name}, {"shape", {a.rows, a.cols}}, {"offset", offset}});
    offset += a.data.size() * sizeof(Real);
  }
  header["arrays"] = manifest;
  const std::string head = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, head.size());
  const std::size_t body_start = out.size();
  out += head;
  for (const auto& a : ckpt.arrays) {
    out.append(reinterpret_cast<const char*>(a.data.data()), a.data.size() * sizeof(Real));
  }
  put_u32(out, crc_of(out.data() + body_start, out.size() - body_start));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 8 + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IntegrityError("not a checkpoint file (bad magic or too short)");
  }
  const std::uint64_t head_len = get_u64(bytes, sizeof kMagic);
  const std::size_t body_start = sizeof kMagic + 8;
  if (head_len > bytes.size() - body_start - 4) throw IntegrityError("checkpoint truncated inside header");
  const std::uint32_t stored = get_u32(bytes, bytes.size() - 4);
  if (crc_of(bytes.data() + body_start, bytes.size() - 4 - body_start) != stored) {
    throw IntegrityError("checkpoint checksum mismatch (truncated or corrupt)");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(body_start, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  Checkpoint c;
  c.format = header.value("format", std::string());
  if (c.format != kCheckpointFormat) {
    throw VersionError("checkpoint format '" + c.format + "' unsupported; expected '" + kCheckpointFormat + "'");
  }
  const std::string precision = header.value("precision", std::string());
  std::size_t width;
  if (precision == "f32") {
    width = 4;
  } else if (precision == "f64") {
    width = 8;
  } else {
    throw VersionError("checkpoint precision '" + precision + "' unsupported");
  }
  try {
    c.encoder = header.at("encoder").get<encoder::EncoderConfig>();
    c.planner = header.at("planner").get<planner::PlannerConfig>();
    c.vocab = corpus::Vocabulary::from_json(header.at("vocabulary"));
    c.metadata = header.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header malformed: ") + e.what());
  }
  const std::size_t payload_start = body_start + head_len;
  const std::size_t payload_len = bytes.size() - 4 - payload_start;
  for (const auto& m : header.at("arrays")) {
    NamedArray a;
    a.name = m.at("name").get<std::string>();
    a.rows = m.at("shape").at(0).get<std::size_t>();
    a.cols = m.at("shape").at(1).get<std::size_t>();
    const auto offset = m.at("offset").get<std::size_t>();
    const std::size_t count = a.rows * a.cols;
    if (offset > payload_len || count * width > payload_len - offset) {
      throw IntegrityError("checkpoint array '" + a.name + "' exceeds the payload");
    }
    a.data.resize(count);
    const char* src = bytes.data() + payload_start + offset;
    for (std::size_t i = 0; i < count; ++i) {
      if (width == 4) {
        float f;
        std::memcpy(&f, src + 4 * i, 4);
        a.data[i] = static_cast<Real>(f);
      } else {
        double d;
        std::memcpy(&d, src + 8 * i, 8);
        a.data[i] = static_cast<Real>(d);
      }
    }
    c.arrays.push_back(std::move(a));
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::string content_hash(const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc_of(bytes.data(), bytes.size()));
  return buf;
}

}  // namespace pathweaver::training

#include "pathweaver/model/encoder.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <map>

#include "pathweaver/error.hpp"

namespace pathweaver::encoder {

using corpus::TokenKind;
using corpus::Vocabulary;
using num::Tensor;

void EncoderConfig::validate() const {
  if (hidden_dim == 0 || n_layers == 0 || n_heads == 0 || max_hops == 0 || max_knowledge_items == 0 ||
      max_seq_len == 0 || ffn_dim == 0) {
    throw ConfigError("encoder: all sizes must be positive");
  }
  if (hidden_dim % n_heads != 0) throw ConfigError("encoder: hidden_dim must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder: dropout must be in [0, 1)");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"hidden_dim", c.hidden_dim}, {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},       {"max_hops", c.max_hops},
                     {"max_knowledge_items", c.max_knowledge_items},
                     {"max_seq_len", c.max_seq_len}, {"dropout", c.dropout},
                     {"ffn_dim", c.ffn_dim}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.max_hops = j.value("max_hops", c.max_hops);
  c.max_knowledge_items = j.value("max_knowledge_items", c.max_knowledge_items);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.dropout = j.value("dropout", c.dropout);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
}

Embeddings::Embeddings(num::ParameterStore& store, std::size_t vocab_size, const EncoderConfig& cfg,
                       std::size_t max_len, num::Rng& rng)
    : tokens(store.add("embed.tokens", num::xavier_uniform(vocab_size, cfg.hidden_dim, rng))),
      hops(store.add("embed.hops", num::xavier_uniform(cfg.max_hops + 1, cfg.hidden_dim, rng))),
      triple_slots(store.add("embed.triple_slots", num::xavier_uniform(3, cfg.hidden_dim, rng))),
      focus(store.add("embed.focus", num::xavier_uniform(2, cfg.hidden_dim, rng))),
      segments(store.add("embed.segments", num::xavier_uniform(kSegmentCount, cfg.hidden_dim, rng))),
      positions(num::sinusoidal_positions(max_len, cfg.hidden_dim)) {}

KtAttention::KtAttention(num::ParameterStore& store, const std::string& name, const EncoderConfig& cfg,
                         num::Rng& rng)
    : norm_knowledge(store, name + ".norm_knowledge", cfg.hidden_dim),
      norm_target(store, name + ".norm_target", cfg.hidden_dim),
      knowledge_from_target(store, name + ".knowledge_from_target", cfg.hidden_dim, cfg.n_heads, rng),
      target_from_knowledge(store, name + ".target_from_knowledge", cfg.hidden_dim, cfg.n_heads, rng) {}

EncoderParams::EncoderParams(num::ParameterStore& store, const EncoderConfig& cfg, num::Rng& rng)
    : knowledge(store, "encoder.knowledge", cfg.n_layers, cfg.hidden_dim, cfg.n_heads, cfg.ffn_dim, rng),
      profile(store, "encoder.profile", cfg.n_layers, cfg.hidden_dim, cfg.n_heads, cfg.ffn_dim, rng),
      history(store, "encoder.history", cfg.n_layers, cfg.hidden_dim, cfg.n_heads, cfg.ffn_dim, rng),
      target(store, "encoder.target", cfg.n_layers, cfg.hidden_dim, cfg.n_heads, cfg.ffn_dim, rng),
      kt(store, "encoder.kt", cfg, rng) {}

KnowledgeSequence serialize_knowledge(const std::vector<corpus::KnowledgeTriple>& knowledge,
                                      const std::string& target_topic,
                                      const std::optional<std::string>& current_topic, const Vocabulary& vocab,
                                      const EncoderConfig& cfg) {
  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();
  KnowledgeSequence ks;

  // Entity graph and BFS distances from the target.
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& t : knowledge) {
    adj[t.subject].push_back(t.object);
    adj[t.object].push_back(t.subject);
  }
  std::map<std::string, std::size_t> dist;
  ks.hop_ordered = adj.count(target_topic) > 0;
  if (ks.hop_ordered) {
    std::deque<std::string> queue{target_topic};
    dist[target_topic] = 0;
    while (!queue.empty()) {
      const std::string u = queue.front();
      queue.pop_front();
      for (const auto& v : adj[u]) {
        if (!dist.count(v)) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  auto distance = [&](const std::string& e) {
    auto it = dist.find(e);
    return it == dist.end() ? kInf : it->second;
  };

  std::size_t hop_limit = cfg.max_hops;
  if (ks.hop_ordered && current_topic) {
    const std::size_t d = distance(*current_topic);
    if (d != kInf) hop_limit = std::min(hop_limit, std::max<std::size_t>(d, 1));
  }

  struct Item {
    std::size_t hop;
    std::size_t order;
    const corpus::KnowledgeTriple* triple;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < knowledge.size(); ++i) {
    const auto& t = knowledge[i];
    if (ks.hop_ordered) {
      const std::size_t hop = std::min(distance(t.subject), distance(t.object));
      if (hop >= hop_limit) continue;
      items.push_back({hop, i, &t});
    } else {
      items.push_back({cfg.max_hops, i, &t});
    }
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.hop < b.hop; });
  if (items.size() > cfg.max_knowledge_items) items.resize(cfg.max_knowledge_items);

  for (const auto& item : items) {
    const auto& t = *item.triple;
    const bool subject_nearer = distance(t.subject) <= distance(t.object);
    const std::string& nearer = subject_nearer ? t.subject : t.object;
    const std::string& farther = subject_nearer ? t.object : t.subject;
    const TokenId ids[3] = {vocab.find(nearer, TokenKind::kTopic).value_or(Vocabulary::kUnk),
                            vocab.relation_id(t.relation),
                            vocab.find(farther, TokenKind::kTopic).value_or(Vocabulary::kUnk)};
    const bool touches = current_topic && (t.subject == *current_topic || t.object == *current_topic);
    for (std::uint8_t s = 0; s < 3; ++s) {
      ks.tokens.push_back(ids[s]);
      ks.hops.push_back(item.hop);
      ks.slots.push_back(s);
      ks.focus.push_back(touches ? 1 : 0);
    }
    ks.triples.push_back(t);
    ks.triple_hops.push_back(item.hop);
  }
  if (ks.tokens.empty()) {
    ks.degenerate = true;
    ks.tokens.push_back(Vocabulary::kPad);
    ks.hops.push_back(cfg.max_hops);
    ks.slots.push_back(0);
    ks.focus.push_back(0);
  }
  return ks;
}

std::optional<std::string> last_mentioned_topic(const std::vector<corpus::Turn>& history,
                                                const std::vector<corpus::KnowledgeTriple>& knowledge,
                                                const Vocabulary& vocab) {
  for (auto turn = history.rbegin(); turn != history.rend(); ++turn) {
    const auto ids = vocab.encode_text(turn->text);
    for (auto it = ids.rbegin(); it != ids.rend(); ++it) {
      if (vocab.kind(*it) != TokenKind::kTopic) continue;
      const std::string& s = vocab.surface(*it);
      for (const auto& t : knowledge) {
        if (t.subject == s || t.object == s) return s;
      }
    }
  }
  return std::nullopt;
}

std::vector<TokenId> history_tokens(const std::vector<corpus::Turn>& history, const Vocabulary& vocab,
                                    std::size_t max_seq_len) {
  std::vector<std::vector<TokenId>> turns;
  for (const auto& t : history) turns.push_back(vocab.encode_text(t.text));
  std::size_t first = 0;
  std::size_t total = 0;
  for (const auto& t : turns) total += t.size();
  while (total > max_seq_len && first + 1 < turns.size()) total -= turns[first++].size();
  std::vector<TokenId> out;
  for (std::size_t i = first; i < turns.size(); ++i) out.insert(out.end(), turns[i].begin(), turns[i].end());
  if (out.size() > max_seq_len) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(max_seq_len));
  if (out.empty()) out.push_back(Vocabulary::kBos);
  return out;
}

std::vector<TokenId> profile_tokens(const std::vector<std::pair<std::string, std::string>>& profile,
                                    const Vocabulary& vocab, std::size_t max_seq_len) {
  std::vector<TokenId> out;
  for (const auto& [k, v] : profile) {
    for (auto id : vocab.encode_text(k)) out.push_back(id);
    if (auto rel = vocab.find(v, TokenKind::kWord)) {
      out.push_back(*rel);
    } else {
      for (auto id : vocab.encode_text(v)) out.push_back(id);
    }
  }
  if (out.size() > max_seq_len) out.resize(max_seq_len);
  if (out.empty()) out.push_back(Vocabulary::kBos);
  return out;
}

std::vector<TokenId> target_tokens(const corpus::PathPair& target, const Vocabulary& vocab) {
  return {Vocabulary::kActionMarker, vocab.action_id(target.action), Vocabulary::kTopicMarker,
          vocab.topic_id(target.topic)};
}

namespace {

Var position_rows(const Embeddings& emb, std::size_t len) {
  if (len > emb.positions.rows()) throw ContractError("sequence longer than the position table");
  Tensor p(len, emb.positions.cols());
  std::copy(emb.positions.data(), emb.positions.data() + p.size(), p.data());
  return num::constant(std::move(p));
}

std::vector<std::int64_t> as_index(const std::vector<TokenId>& ids) { return {ids.begin(), ids.end()}; }

}  // namespace

Var embed_tokens(const std::vector<TokenId>& tokens, const Embeddings& emb) {
  // sqrt(h) keeps token identity comparable to the unit-amplitude positions;
  // the tied output projection uses the unscaled table.
  const auto s = static_cast<num::Real>(std::sqrt(static_cast<double>(emb.tokens.cols())));
  return num::add(num::scale(num::gather_rows(emb.tokens, as_index(tokens)), s), position_rows(emb, tokens.size()));
}

Var encode_knowledge(const KnowledgeSequence& ks, const num::TransformerEncoder& encoder, const Embeddings& emb,
                     double dropout, num::Rng* rng) {
  std::vector<std::int64_t> hop_idx(ks.hops.begin(), ks.hops.end());
  std::vector<std::int64_t> slot_idx(ks.slots.begin(), ks.slots.end());
  Var x = embed_tokens(ks.tokens, emb);
  x = num::add(x, num::gather_rows(emb.hops, hop_idx));
  x = num::add(x, num::gather_rows(emb.triple_slots, slot_idx));
  std::vector<std::int64_t> focus_idx(ks.focus.begin(), ks.focus.end());
  x = num::add(x, num::gather_rows(emb.focus, focus_idx));
  std::vector<std::uint8_t> mask(ks.tokens.size(), ks.degenerate ? 0 : 1);
  // A fully masked self-attention would zero the sequence; the PAD row is
  // masked later at the memory level instead.
  return encoder(x, ks.degenerate ? nullptr : &mask, static_cast<num::Real>(dropout), rng);
}

Var encode_sequence(const std::vector<TokenId>& tokens, const num::TransformerEncoder& encoder,
                    const Embeddings& emb, double dropout, num::Rng* rng) {
  return encoder(embed_tokens(tokens, emb), nullptr, static_cast<num::Real>(dropout), rng);
}

KtResult kt_mutual_attention(const Var& knowledge_states, const Var& target_states, const KtAttention& kt,
                             const std::vector<std::uint8_t>* knowledge_mask,
                             std::vector<num::Tensor>* knowledge_probe, std::vector<num::Tensor>* target_probe) {
  if (knowledge_states.cols() != target_states.cols()) {
    throw DimensionError("kt attention: knowledge and target hidden sizes differ");
  }
  Var nk = kt.norm_knowledge(knowledge_states);
  Var nt = kt.norm_target(target_states);
  KtResult r;
  r.knowledge = num::add(knowledge_states, kt.knowledge_from_target(nk, nt, false, nullptr, knowledge_probe));
  r.target = num::add(target_states, kt.target_from_knowledge(nt, nk, false, knowledge_mask, target_probe));
  return r;
}

Memory assemble_memory(const Var& knowledge, const std::vector<std::uint8_t>& knowledge_mask, const Var& profile,
                       const Var& history, const Var& target, const Embeddings& emb) {
  const std::size_t h = knowledge.cols();
  if (profile.cols() != h || history.cols() != h || target.cols() != h || emb.segments.cols() != h) {
    throw ContractError("assemble_memory: hidden sizes differ");
  }
  if (knowledge_mask.size() != knowledge.rows()) throw ContractError("assemble_memory: knowledge mask length");
  Memory m;
  const std::pair<const Var*, Segment> parts[] = {{&knowledge, Segment::kKnowledge},
                                                  {&profile, Segment::kProfile},
                                                  {&history, Segment::kHistory},
                                                  {&target, Segment::kTarget}};
  std::vector<Var> rows;
  std::vector<std::int64_t> seg_index;
  for (const auto& [var, seg] : parts) {
    rows.push_back(*var);
    for (std::size_t i = 0; i < var->rows(); ++i) {
      m.segments.push_back(seg);
      seg_index.push_back(static_cast<std::int64_t>(seg));
      m.mask.push_back(seg == Segment::kKnowledge ? knowledge_mask[i] : 1);
    }
  }
  m.states = num::add(num::concat_rows(rows), num::gather_rows(emb.segments, seg_index));
  return m;
}

PlanningInput input_of(const corpus::PlanningExample& ex) {
  PlanningInput in;
  in.knowledge = &ex.conversation->knowledge;
  in.profile = &ex.conversation->profile;
  in.history = &ex.history;
  in.target = ex.conversation->target;
  return in;
}

Memory encode_context(const PlanningInput& in, const EncoderParams& params, const Embeddings& emb,
                      const Vocabulary& vocab, const EncoderConfig& cfg, num::Rng* dropout_rng) {
  const auto current = last_mentioned_topic(*in.history, *in.knowledge, vocab);
  const auto ks = serialize_knowledge(*in.knowledge, in.target.topic, current, vocab, cfg);
  const double p = dropout_rng ? cfg.dropout : 0.0;
  Var k = encode_knowledge(ks, params.knowledge, emb, p, dropout_rng);
  Var prof = encode_sequence(profile_tokens(*in.profile, vocab, cfg.max_seq_len), params.profile, emb, p, dropout_rng);
  Var hist = encode_sequence(history_tokens(*in.history, vocab, cfg.max_seq_len), params.history, emb, p, dropout_rng);
  Var tgt = encode_sequence(target_tokens(in.target, vocab), params.target, emb, p, dropout_rng);
  std::vector<std::uint8_t> kmask(ks.tokens.size(), ks.degenerate ? 0 : 1);
  auto kt = kt_mutual_attention(k, tgt, params.kt, &kmask);
  return assemble_memory(kt.knowledge, kmask, prof, hist, kt.target, emb);
}

}  // namespace pathweaver::encoder

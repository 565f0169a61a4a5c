#include <doctest.h>

#include <deque>
#include <map>
#include <set>

#include "pathweaver/error.hpp"
#include "pathweaver/model/planner.hpp"
#include "support/fusion_check.hpp"
#include "support/gradcheck.hpp"

using namespace pathweaver;
using namespace pathweaver::encoder;
using corpus::Vocabulary;

namespace {

// Random connected-ish entity graph with named entities e0..e{n-1}.
std::vector<corpus::KnowledgeTriple> random_graph(num::Rng& rng, std::size_t n, std::size_t edges) {
  std::vector<corpus::KnowledgeTriple> k;
  for (std::size_t i = 1; i < n; ++i) {
    k.push_back({"e" + std::to_string(rng.below(i)), "r" + std::to_string(rng.below(3)), "e" + std::to_string(i)});
  }
  for (std::size_t i = 0; i < edges; ++i) {
    const auto a = rng.below(n), b = rng.below(n);
    if (a != b) k.push_back({"e" + std::to_string(a), "r" + std::to_string(rng.below(3)), "e" + std::to_string(b)});
  }
  return k;
}

Vocabulary vocab_for(const std::vector<corpus::KnowledgeTriple>& k) {
  corpus::Conversation c;
  c.id = "g";
  c.knowledge = k;
  c.path = {{"act", k.front().subject}};
  c.target = c.path.back();
  return corpus::build_vocabulary({c});
}

std::map<std::string, std::size_t> bfs(const std::vector<corpus::KnowledgeTriple>& k, const std::string& src) {
  std::map<std::string, std::set<std::string>> adj;
  for (const auto& t : k) {
    adj[t.subject].insert(t.object);
    adj[t.object].insert(t.subject);
  }
  std::map<std::string, std::size_t> d{{src, 0}};
  std::deque<std::string> q{src};
  while (!q.empty()) {
    auto u = q.front();
    q.pop_front();
    for (const auto& v : adj[u]) {
      if (d.emplace(v, d[u] + 1).second) q.push_back(v);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("empty knowledge encodes as a single PAD position") {
  auto t = pwtest::tiny_instance(1);
  const auto& m = *t->model;
  const auto ks = serialize_knowledge({}, "x", std::nullopt, m.vocab(), m.encoder_config());
  CHECK(ks.degenerate);
  REQUIRE(ks.tokens.size() == 1);
  CHECK(ks.tokens[0] == Vocabulary::kPad);
  const auto out = encode_knowledge(ks, m.encoders.knowledge, m.embeddings);
  CHECK(out.rows() == 1);
  CHECK(out.cols() == m.encoder_config().hidden_dim);
}

TEST_CASE("knowledge order and pruning match a BFS oracle on 100 random graphs") {
  num::Rng rng(5);
  EncoderConfig cfg;
  cfg.max_knowledge_items = 1000;
  for (int g = 0; g < 100; ++g) {
    cfg.max_hops = 1 + rng.below(4);
    const auto k = random_graph(rng, 3 + rng.below(10), rng.below(6));
    const auto vocab = vocab_for(k);
    const std::string target = "e" + std::to_string(rng.below(3));
    const auto dist = bfs(k, target);
    std::optional<std::string> current;
    if (rng.below(2)) current = "e" + std::to_string(rng.below(3));
    const auto ks = serialize_knowledge(k, target, current, vocab, cfg);
    REQUIRE(ks.hop_ordered);

    std::size_t limit = cfg.max_hops;
    if (current) limit = std::min(limit, std::max<std::size_t>(dist.at(*current), 1));
    std::size_t expected = 0;
    for (const auto& t : k) expected += std::min(dist.at(t.subject), dist.at(t.object)) < limit;
    CHECK(ks.triples.size() == expected);
    CHECK(ks.tokens.size() == 3 * expected);
    for (std::size_t i = 0; i < ks.triples.size(); ++i) {
      const auto& t = ks.triples[i];
      const auto hop = std::min(dist.at(t.subject), dist.at(t.object));
      CHECK(ks.triple_hops[i] == hop);
      if (i > 0) CHECK(ks.triple_hops[i - 1] <= ks.triple_hops[i]);
      // nearer entity first
      CHECK(dist.at(vocab.surface(ks.tokens[3 * i])) == hop);
      const bool touches = current && (t.subject == *current || t.object == *current);
      CHECK(ks.focus[3 * i] == (touches ? 1 : 0));
    }
  }
}

TEST_CASE("knowledge without the target is encoded unordered and flagged") {
  const std::vector<corpus::KnowledgeTriple> k{{"a", "r", "b"}, {"b", "r", "c"}};
  const auto vocab = vocab_for(k);
  EncoderConfig cfg;
  const auto ks = serialize_knowledge(k, "zzz", std::nullopt, vocab, cfg);
  CHECK_FALSE(ks.hop_ordered);
  CHECK(ks.triples == k);
  for (auto h : ks.hops) CHECK(h == cfg.max_hops);
}

TEST_CASE("history truncation drops the oldest turns first") {
  auto t = pwtest::tiny_instance(2);
  const auto& v = t->model->vocab();
  CHECK(history_tokens({}, v, 10) == std::vector<corpus::TokenId>{Vocabulary::kBos});
  const std::vector<corpus::Turn> h{{corpus::Speaker::kUser, "a b c"},
                                    {corpus::Speaker::kSystem, "d e"},
                                    {corpus::Speaker::kUser, "f g"}};
  const auto all = history_tokens(h, v, 100);
  CHECK(all.size() == 7);
  const auto cut = history_tokens(h, v, 4);
  CHECK(cut.size() == 4);
  CHECK(cut == std::vector<corpus::TokenId>(all.end() - 4, all.end()));
  const auto one = history_tokens(h, v, 5);
  CHECK(one.size() == 4);
}

TEST_CASE("sequence encoding is position sensitive and finite") {
  auto t = pwtest::tiny_instance(3);
  const auto& m = *t->model;
  num::NoGradGuard ng;
  const std::vector<corpus::TokenId> a{6, 7, 8, 9}, b{9, 8, 7, 6};
  const auto ea = encode_sequence(a, m.encoders.history, m.embeddings).value();
  const auto eb = encode_sequence(b, m.encoders.history, m.embeddings).value();
  CHECK(ea.rows() == 4);
  CHECK(ea.all_finite());
  bool differs = false;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < ea.cols(); ++j) differs |= ea(i, j) != eb(3 - i, j);
  CHECK(differs);
}

TEST_CASE("KT attention: residual identity, shapes, and softmax rows") {
  auto t = pwtest::tiny_instance(4);
  auto& m = *t->model;
  num::Rng rng(9);
  const auto k = num::constant(pwtest::uniform_tensor(5, 8, rng, 1));
  const auto tgt = num::constant(num::Tensor(4, 8));
  std::vector<num::Tensor> kp, tp;
  auto r = kt_mutual_attention(k, num::constant(pwtest::uniform_tensor(4, 8, rng, 1)), m.encoders.kt, nullptr, &kp, &tp);
  CHECK(r.knowledge.rows() == 5);
  CHECK(r.target.rows() == 4);
  for (const auto* probe : {&kp, &tp}) {
    for (const auto& p : *probe) {
      for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < p.cols(); ++j) s += p(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
      }
    }
  }
  for (auto* lin : {&m.encoders.kt.knowledge_from_target.output}) {
    for (auto& x : lin->weight.mutable_value().values()) x = 0;
    for (auto& x : lin->bias.mutable_value().values()) x = 0;
  }
  r = kt_mutual_attention(k, tgt, m.encoders.kt);
  CHECK(pwtest::bitwise_equal(r.knowledge.value(), k.value()));
  CHECK_THROWS_AS(kt_mutual_attention(k, num::constant(num::Tensor(2, 6)), m.encoders.kt), DimensionError);
}

TEST_CASE("memory assembly partitions positions by segment") {
  auto t = pwtest::tiny_instance(5);
  const auto& m = *t->model;
  num::Rng rng(3);
  auto part = [&](std::size_t r) { return num::constant(pwtest::uniform_tensor(r, 8, rng, 1)); };
  const std::vector<std::uint8_t> kmask{1, 0, 1};
  const auto mem = assemble_memory(part(3), kmask, part(2), part(4), part(4), m.embeddings);
  CHECK(mem.size() == 13);
  CHECK(mem.states.rows() == 13);
  CHECK(mem.mask.size() == 13);
  std::map<Segment, int> counts;
  for (auto s : mem.segments) ++counts[s];
  CHECK(counts[Segment::kKnowledge] == 3);
  CHECK(counts[Segment::kProfile] == 2);
  CHECK(counts[Segment::kHistory] == 4);
  CHECK(counts[Segment::kTarget] == 4);
  CHECK(mem.mask[1] == 0);
  CHECK_THROWS_AS(assemble_memory(part(3), kmask, num::constant(num::Tensor(2, 6)), part(4), part(4), m.embeddings),
                  ContractError);

  // A masked memory slot gets no cross-attention weight downstream.
  std::vector<num::Tensor> probe;
  const auto& cross = m.forward_decoder.layers[0].cross_attn;
  (void)cross(part(3), mem.states, false, &mem.mask, &probe);
  for (const auto& p : probe)
    for (std::size_t i = 0; i < p.rows(); ++i) CHECK(p(i, 1) == 0);
}

TEST_CASE("full encoder pipeline over real examples") {
  auto t = pwtest::tiny_instance(6);
  num::NoGradGuard ng;
  for (const auto& ex : t->examples) {
    const auto mem = t->model->encode(input_of(ex));
    CHECK(mem.states.cols() == 8);
    CHECK(mem.mask.size() == mem.size());
    CHECK(mem.states.value().all_finite());
  }
}

TEST_CASE("variant names") {
  using planner::Variant;
  CHECK(planner::variant_from_string("FF") == Variant::kFF);
  CHECK(planner::variant_from_string("no_ff") == Variant::kNoFF);
  CHECK(planner::variant_from_string("No-FF") == Variant::kNoFF);
  CHECK(planner::variant_from_string("bf") == Variant::kBF);
  CHECK_THROWS_AS(planner::variant_from_string("xx"), ConfigError);
  for (auto v : {Variant::kFF, Variant::kOF, Variant::kOB, Variant::kBF, Variant::kNoFF}) {
    CHECK(planner::variant_from_string(planner::to_string(v)) == v);
  }
}

TEST_CASE("block reversal maps backward order to forward order") {
  auto t = pwtest::tiny_instance(7);
  const auto& v = t->model->vocab();
  const auto& c = t->convs.front();
  corpus::DialoguePath p = c.path;
  while (p.size() < 3) p.push_back(p.back());
  const auto fwd = corpus::path_to_tokens(p, v);
  const auto bwd = corpus::path_to_tokens(corpus::reversed(p), v);
  const auto a = planner::block_reversal(bwd, fwd.size(), v);
  CHECK_FALSE(a.fallback);
  REQUIRE(a.index.size() == fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) CHECK(bwd[static_cast<std::size_t>(a.index[i])] == fwd[i]);
  // Involution on equal-length well-formed sequences.
  const auto b = planner::block_reversal(fwd, fwd.size(), v);
  for (std::size_t i = 0; i < fwd.size(); ++i) CHECK(a.index[static_cast<std::size_t>(b.index[i])] == std::int64_t(i));
  // Padding and truncation.
  const auto padded = planner::block_reversal(bwd, fwd.size() + 2, v);
  CHECK(padded.index[fwd.size()] == -1);
  CHECK(planner::block_reversal(bwd, 3, v).index.size() == 3);
  // Ill-formed source: whole-sequence reversal.
  const std::vector<corpus::TokenId> junk{Vocabulary::kTopicMarker, 7, Vocabulary::kEos};
  const auto f = planner::block_reversal(junk, 3, v);
  CHECK(f.fallback);
  CHECK(f.index == std::vector<std::int64_t>{2, 1, 0});
}

TEST_CASE("shift_right and teacher-forced shapes") {
  CHECK(planner::shift_right({4, 9, 5, 10, 2}) == std::vector<corpus::TokenId>{Vocabulary::kBos, 4, 9, 5, 10});
  for (auto variant : {planner::Variant::kFF, planner::Variant::kBF, planner::Variant::kNoFF}) {
    auto t = pwtest::tiny_instance(8, variant);
    const auto& ex = t->examples.front();
    const auto mem = t->model->encode(input_of(ex));
    const auto tf = planner::teacher_forced(*t->model, mem, ex.remaining);
    const std::size_t n = 4 * ex.remaining.size() + 1;
    CHECK(tf.forward_labels.size() == n);
    CHECK(tf.backward_labels.size() == n);
    CHECK(tf.forward_states.rows() == n);
    CHECK(tf.backward_aligned.rows() == n);
    CHECK(tf.fused_logits.rows() == n);
    CHECK(tf.fused_logits.cols() == t->model->vocab().size());
    if (variant == planner::Variant::kBF) CHECK(tf.fused_labels == tf.backward_labels);
    else CHECK(tf.fused_labels == tf.forward_labels);
  }
}

TEST_CASE("fusion algebra in the build precision") {
  const auto rep = pwtest::check_fusion_algebra(300, 11, 64 * std::numeric_limits<num::Real>::epsilon());
  INFO(rep.summary());
  CHECK(rep.ok());
  CHECK(rep.strict_checked > rep.coordinates / 2);
  auto t = pwtest::tiny_instance(9);
  CHECK_THROWS_AS(planner::fuse_forward_focused(num::constant(num::Tensor(2, 8)), num::constant(num::Tensor(3, 8)),
                                                t->model->fusion),
                  ContractError);
}

TEST_CASE("decoders have independent weights") {
  auto t = pwtest::tiny_instance(10);
  const auto& f = t->model->forward_decoder.layers[0].self_attn.query.weight;
  const auto& b = t->model->backward_decoder.layers[0].self_attn.query.weight;
  CHECK(f.node() != b.node());
  CHECK_FALSE(pwtest::bitwise_equal(f.value(), b.value()));
}

#include "pathweaver/corpus/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <deque>
#include <map>
#include <set>

#include "pathweaver/error.hpp"
#include "pathweaver/numcore/rng.hpp"

namespace pathweaver::corpus {

namespace {

constexpr std::array<const char*, 16> kSyllables = {"ka", "lo", "mi", "ren", "to", "sa", "vi", "du",
                                                   "ne", "ri", "ba", "zo", "el", "an", "quo", "fe"};
constexpr std::array<const char*, 8> kRelations = {"directed by", "starring", "sung by",   "genre of",
                                                   "born in",     "friend of", "produced by", "similar to"};
constexpr std::array<const char*, 8> kActions = {"chat about",     "recommend movie", "play music",
                                                 "ask preference", "recommend food",  "respond qa",
                                                 "introduce star", "say goodbye"};
constexpr std::size_t kMaxRetries = 200;

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

struct Graph {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj;  // (neighbor, edge index)
  std::vector<KnowledgeTriple> triples;                               // edge index -> triple
  std::vector<std::size_t> edge_relation;
};

Graph random_graph(std::size_t n, std::size_t degree, const std::vector<std::size_t>& topic_ids,
                   std::size_t n_relations, num::Rng& rng) {
  Graph g;
  g.n = n;
  g.adj.resize(n);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  auto add_edge = [&](std::size_t a, std::size_t b) {
    const auto key = std::minmax(a, b);
    if (a == b || !seen.insert(key).second) return false;
    const std::size_t rel = static_cast<std::size_t>(rng.below(n_relations));
    const std::size_t e = g.triples.size();
    const bool flip = rng.bernoulli(0.5);
    const std::string sa = synthetic_topic_name(topic_ids[a]);
    const std::string sb = synthetic_topic_name(topic_ids[b]);
    g.triples.push_back({flip ? sb : sa, synthetic_relation_name(rel), flip ? sa : sb});
    g.edge_relation.push_back(rel);
    g.adj[a].emplace_back(b, e);
    g.adj[b].emplace_back(a, e);
    return true;
  };
  for (std::size_t i = 1; i < n; ++i) add_edge(i, static_cast<std::size_t>(rng.below(i)));
  const std::size_t target_edges = std::max(n - 1, n * degree / 2);
  const std::size_t max_edges = n * (n - 1) / 2;
  std::size_t attempts = 0;
  while (g.triples.size() < std::min(target_edges, max_edges) && attempts++ < 100 * n) {
    add_edge(static_cast<std::size_t>(rng.below(n)), static_cast<std::size_t>(rng.below(n)));
  }
  return g;
}

// BFS distances from `src` and shortest-path counts saturated at 2.
void bfs(const Graph& g, std::size_t src, std::vector<std::size_t>& dist, std::vector<int>& count) {
  constexpr std::size_t kInf = static_cast<std::size_t>(-1);
  dist.assign(g.n, kInf);
  count.assign(g.n, 0);
  dist[src] = 0;
  count[src] = 1;
  std::deque<std::size_t> queue{src};
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (auto [v, e] : g.adj[u]) {
      (void)e;
      if (dist[v] == kInf) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
      if (dist[v] == dist[u] + 1) count[v] = std::min(2, count[v] + count[u]);
    }
  }
}

}  // namespace

std::string synthetic_topic_name(std::size_t index) {
  const std::size_t s = kSyllables.size();
  std::string first = capitalized(std::string(kSyllables[index % s]) + kSyllables[(index / s) % s]);
  std::string last = capitalized(std::string(kSyllables[(index * 7 + 3) % s]) + kSyllables[(index * 5 + 11) % s] + "n");
  std::string name = first + " " + last;
  if (index >= s * s) name += " " + std::to_string(index / (s * s));
  return name;
}

std::string synthetic_relation_name(std::size_t index) {
  if (index < kRelations.size()) return kRelations[index];
  return "related " + std::to_string(index);
}

std::string synthetic_action_name(std::size_t index) {
  if (index < kActions.size()) return kActions[index];
  return "act " + std::to_string(index);
}

void SynthConfig::validate() const {
  if (n_conversations == 0 || n_topics == 0 || n_relations == 0 || n_actions == 0 || max_pairs == 0 ||
      graph_degree == 0 || history_turns == 0) {
    throw ConfigError("synth: all counts must be positive");
  }
  if (n_topics < max_pairs) throw ConfigError("synth: n_topics must be >= max_pairs");
  if (n_topics < 2) throw ConfigError("synth: at least two topics are needed");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"n_conversations", c.n_conversations},
                     {"n_topics", c.n_topics},
                     {"n_relations", c.n_relations},
                     {"n_actions", c.n_actions},
                     {"max_pairs", c.max_pairs},
                     {"graph_degree", c.graph_degree},
                     {"history_turns", c.history_turns}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.n_conversations = j.value("n_conversations", c.n_conversations);
  c.n_topics = j.value("n_topics", c.n_topics);
  c.n_relations = j.value("n_relations", c.n_relations);
  c.n_actions = j.value("n_actions", c.n_actions);
  c.max_pairs = j.value("max_pairs", c.max_pairs);
  c.graph_degree = j.value("graph_degree", c.graph_degree);
  c.history_turns = j.value("history_turns", c.history_turns);
}

std::vector<Conversation> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  num::Rng rng(cfg.seed);
  const std::size_t nodes = std::min(cfg.n_topics, std::max(cfg.max_pairs + 1, 3 * cfg.max_pairs));
  std::vector<Conversation> out;
  out.reserve(cfg.n_conversations);

  for (std::size_t ci = 0; ci < cfg.n_conversations; ++ci) {
    bool done = false;
    for (std::size_t attempt = 0; attempt < kMaxRetries && !done; ++attempt) {
      std::vector<std::size_t> pool(cfg.n_topics);
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      rng.shuffle(pool);
      pool.resize(nodes);
      Graph g = random_graph(nodes, cfg.graph_degree, pool, cfg.n_relations, rng);

      const std::size_t target = static_cast<std::size_t>(rng.below(nodes));
      std::vector<std::size_t> dist;
      std::vector<int> count;
      bfs(g, target, dist, count);
      std::map<std::size_t, std::vector<std::size_t>> by_length;
      for (std::size_t v = 0; v < nodes; ++v) {
        if (dist[v] >= 1 && dist[v] <= cfg.max_pairs && count[v] == 1) by_length[dist[v]].push_back(v);
      }
      if (by_length.empty()) continue;
      // Uniform over available lengths, then over nodes at that length.
      auto it = by_length.begin();
      std::advance(it, static_cast<std::ptrdiff_t>(rng.below(by_length.size())));
      const auto& candidates = it->second;
      const std::size_t start = candidates[static_cast<std::size_t>(rng.below(candidates.size()))];

      Conversation c;
      c.id = "synth-" + std::to_string(ci);
      c.knowledge = g.triples;
      const auto target_action = synthetic_action_name(static_cast<std::size_t>(rng.below(cfg.n_actions)));
      const std::string start_name = synthetic_topic_name(pool[start]);

      std::size_t cur = start;
      std::string prev_name = start_name;
      while (cur != target) {
        std::size_t next = cur, edge = 0;
        for (auto [v, e] : g.adj[cur]) {
          if (dist[v] + 1 == dist[cur]) {
            next = v;
            edge = e;
            break;
          }
        }
        const std::string name = synthetic_topic_name(pool[next]);
        const std::string action =
            next == target ? target_action : synthetic_action_name(g.edge_relation[edge] % cfg.n_actions);
        c.path.push_back({action, name});
        c.responses.push_back(prev_name + " and " + name + " are linked by " + g.triples[edge].relation + " , so i " +
                              action + " " + name);
        prev_name = name;
        cur = next;
      }
      c.target = c.path.back();

      std::vector<std::size_t> rels(cfg.n_relations);
      for (std::size_t i = 0; i < rels.size(); ++i) rels[i] = i;
      rng.shuffle(rels);
      for (std::size_t i = 0; i < std::min<std::size_t>(2, rels.size()); ++i) {
        c.profile.emplace_back("prefers", synthetic_relation_name(rels[i]));
      }
      for (std::size_t t = 0; t + 1 < cfg.history_turns; ++t) {
        c.history.push_back(t % 2 == 0 ? Turn{Speaker::kUser, "hello there"}
                                       : Turn{Speaker::kSystem, "hi , how can i help you today"});
      }
      c.history.push_back({Speaker::kUser, "i would like to chat about " + start_name});
      validate(c, std::max(cfg.max_pairs, kDefaultMaxPairs));
      out.push_back(std::move(c));
      done = true;
    }
    if (!done) throw DataError("synth: no start/target pair with a unique shortest path after retries");
  }
  return out;
}

}  // namespace pathweaver::corpus

#include "pathweaver/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "pathweaver/corpus/vocabulary.hpp"
#include "pathweaver/error.hpp"

namespace pathweaver::metrics {

Tokens tokenize(std::string_view text) { return corpus::split_lower(text); }

PlanEval plan_accuracy(const std::vector<corpus::PathPair>& predictions, const std::vector<PlanGold>& golds) {
  if (predictions.size() != golds.size()) {
    throw ContractError("plan_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(golds.size()) + " golds");
  }
  PlanEval e;
  e.n_examples = predictions.size();
  if (predictions.empty()) return e;
  std::size_t a = 0, ab = 0, t = 0, tb = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = golds[i];
    const bool a_hit = p.action == g.next.action;
    const bool t_hit = p.topic == g.next.topic;
    a += a_hit;
    t += t_hit;
    ab += a_hit || (g.next_next && p.action == g.next_next->action);
    tb += t_hit || (g.next_next && p.topic == g.next_next->topic);
  }
  const auto n = static_cast<double>(predictions.size());
  e.action_acc = a / n;
  e.action_bi_acc = ab / n;
  e.topic_acc = t / n;
  e.topic_bi_acc = tb / n;
  return e;
}

namespace {

std::map<std::string, std::size_t> counts(const Tokens& toks) {
  std::map<std::string, std::size_t> c;
  for (const auto& t : toks) ++c[t];
  return c;
}

std::map<Tokens, std::size_t> ngram_counts(const Tokens& toks, std::size_t n) {
  std::map<Tokens, std::size_t> c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++c[Tokens(toks.begin() + i, toks.begin() + i + n)];
  return c;
}

}  // namespace

double word_f1(const Tokens& hyp, const Tokens& ref) {
  if (hyp.empty() && ref.empty()) return 1.0;
  if (hyp.empty() || ref.empty()) return 0.0;
  const auto ch = counts(hyp);
  const auto cr = counts(ref);
  std::size_t overlap = 0;
  for (const auto& [tok, n] : ch) {
    if (auto it = cr.find(tok); it != cr.end()) overlap += std::min(n, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(hyp.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return 2 * p * r / (p + r);
}

double bleu(const Tokens& hyp, const Tokens& ref, std::size_t n) {
  if (n == 0) throw ContractError("bleu: order must be >= 1");
  if (hyp.empty()) return ref.empty() ? 1.0 : 0.0;
  double log_sum = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    const auto hc = ngram_counts(hyp, k);
    const auto rc = ngram_counts(ref, k);
    const std::size_t total = hyp.size() >= k ? hyp.size() - k + 1 : 0;
    const std::size_t ref_total = ref.size() >= k ? ref.size() - k + 1 : 0;
    double p;
    if (total == 0 && ref_total == 0) {
      p = 1.0;
    } else {
      std::size_t matched = 0;
      for (const auto& [g, c] : hc) {
        if (auto it = rc.find(g); it != rc.end()) matched += std::min(c, it->second);
      }
      p = (matched == 0 ? kBleuEpsilon : static_cast<double>(matched)) / static_cast<double>(std::max<std::size_t>(total, 1));
    }
    log_sum += std::log(p) / static_cast<double>(n);
  }
  const double h = static_cast<double>(hyp.size());
  const double r = static_cast<double>(ref.size());
  const double bp = h > r ? 1.0 : std::exp(1.0 - r / h);
  return bp * std::exp(log_sum);
}

double distinct_n(const std::vector<Tokens>& hyps, std::size_t n) {
  if (n == 0) throw ContractError("distinct_n: order must be >= 1");
  std::set<Tokens> unique;
  std::size_t total = 0;
  for (const auto& h : hyps) {
    for (std::size_t i = 0; i + n <= h.size(); ++i) {
      unique.emplace(h.begin() + i, h.begin() + i + n);
      ++total;
    }
  }
  return total ? static_cast<double>(unique.size()) / static_cast<double>(total) : 0.0;
}

std::vector<corpus::KnowledgeTriple> active_triples(const std::vector<corpus::KnowledgeTriple>& knowledge,
                                                    const std::string& topic) {
  std::vector<corpus::KnowledgeTriple> out;
  for (const auto& t : knowledge) {
    if (t.subject == topic || t.object == topic) out.push_back(t);
  }
  return out;
}

std::optional<double> knowledge_f1(const Tokens& hyp, const std::vector<corpus::KnowledgeTriple>& active) {
  if (active.empty()) return std::nullopt;
  Tokens ref;
  for (const auto& t : active) {
    auto words = tokenize(t.object);
    ref.insert(ref.end(), words.begin(), words.end());
  }
  return word_f1(hyp, ref);
}

int target_success(const std::vector<SystemTurn>& transcript, const corpus::PathPair& target) {
  const Tokens needed = tokenize(target.topic);
  std::size_t start = transcript.size();
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    if (transcript[i].subtarget == target) {
      start = i;
      break;
    }
  }
  for (std::size_t i = start; i < transcript.size(); ++i) {
    const Tokens words = tokenize(transcript[i].text);
    const std::set<std::string> have(words.begin(), words.end());
    if (std::all_of(needed.begin(), needed.end(), [&](const std::string& w) { return have.count(w) > 0; })) {
      return 1;
    }
  }
  return 0;
}

GenEval generation_eval(const std::vector<GenDialogue>& dialogues) {
  GenEval e;
  e.n_dialogues = dialogues.size();
  std::vector<Tokens> hyps;
  double know_sum = 0;
  std::size_t know_n = 0;
  for (const auto& d : dialogues) {
    for (const auto& t : d.turns) {
      Tokens h = tokenize(t.hypothesis);
      const Tokens r = tokenize(t.reference);
      e.f1 += word_f1(h, r);
      e.bleu1 += bleu(h, r, 1);
      e.bleu2 += bleu(h, r, 2);
      if (auto k = knowledge_f1(h, t.active)) {
        know_sum += *k;
        ++know_n;
      } else {
        ++e.n_know_excluded;
      }
      hyps.push_back(std::move(h));
    }
    e.succ += target_success(d.transcript, d.target);
  }
  e.n_responses = hyps.size();
  if (e.n_responses > 0) {
    const auto n = static_cast<double>(e.n_responses);
    e.f1 /= n;
    e.bleu1 /= n;
    e.bleu2 /= n;
  }
  e.dist1 = distinct_n(hyps, 1);
  e.dist2 = distinct_n(hyps, 2);
  e.know_f1 = know_n ? know_sum / static_cast<double>(know_n) : 0.0;
  e.succ = e.n_dialogues ? e.succ / static_cast<double>(e.n_dialogues) : 0.0;
  return e;
}

nlohmann::json to_json(const PlanEval& e) {
  return {{"action_acc", e.action_acc},
          {"action_bi_acc", e.action_bi_acc},
          {"topic_acc", e.topic_acc},
          {"topic_bi_acc", e.topic_bi_acc},
          {"n_examples", e.n_examples}};
}

nlohmann::json to_json(const GenEval& e) {
  return {{"f1", e.f1},       {"bleu1", e.bleu1}, {"bleu2", e.bleu2},
          {"dist1", e.dist1}, {"dist2", e.dist2}, {"know_f1", e.know_f1},
          {"succ", e.succ},   {"n_responses", e.n_responses}, {"n_dialogues", e.n_dialogues},
          {"n_know_excluded", e.n_know_excluded}};
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

std::string text_table(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  auto rule = [&] {
    for (std::size_t c = 0; c < width.size(); ++c) out += (c ? "-+-" : "") + std::string(width[c], '-');
    out += '\n';
  };
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const std::string& s = cells[r][c];
      if (c) out += " | ";
      out += c == 0 ? s + std::string(width[c] - s.size(), ' ') : std::string(width[c] - s.size(), ' ') + s;
    }
    out += '\n';
    if (r == 0) rule();
  }
  return out;
}

std::string plan_table(const std::vector<std::pair<std::string, PlanEval>>& rows) {
  std::vector<std::vector<std::string>> cells{{"Model", "Action Acc.", "Action Bi.Acc.", "Topic Acc.", "Topic Bi.Acc."}};
  for (const auto& [name, e] : rows) {
    cells.push_back({name, format_percent(e.action_acc), format_percent(e.action_bi_acc), format_percent(e.topic_acc),
                     format_percent(e.topic_bi_acc)});
  }
  return text_table(cells);
}

std::string gen_table(const std::vector<std::pair<std::string, GenEval>>& rows) {
  std::vector<std::vector<std::string>> cells{
      {"Model", "F1", "BLEU-1", "BLEU-2", "DIST-1", "DIST-2", "Know.F1", "Succ."}};
  for (const auto& [name, e] : rows) {
    cells.push_back({name, format_percent(e.f1), format_percent(e.bleu1), format_percent(e.bleu2),
                     format_percent(e.dist1), format_percent(e.dist2), format_percent(e.know_f1),
                     format_percent(e.succ)});
  }
  return text_table(cells);
}

}  // namespace pathweaver::metrics

#include "cachelab/prefix_attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace cachelab {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::baseline: return "baseline";
    case Strategy::naive_bayes: return "naive_bayes";
    case Strategy::prob_vocab: return "prob_vocab";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  for (Strategy x : kAllStrategies)
    if (strategy_name(x) == s) return x;
  throw ConfigInvalid("unknown strategy '" + std::string(s) + "'");
}

std::string_view budget_mode_name(BudgetMode m) { return m == BudgetMode::ideal ? "ideal" : "all"; }

BudgetMode parse_budget_mode(std::string_view s) {
  if (s == "ideal") return BudgetMode::ideal;
  if (s == "all") return BudgetMode::all;
  throw ConfigInvalid("unknown budget mode '" + std::string(s) + "'");
}

std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::complete: return "complete";
    case StopReason::field_exhausted: return "field_exhausted";
    case StopReason::token_budget: return "token_budget";
    case StopReason::time_budget: return "time_budget";
    case StopReason::rate_limited: return "rate_limited";
  }
  return "?";
}

Budget Budget::ideal() { return Budget{}; }

Budget Budget::all() {
  Budget b;
  b.mode = BudgetMode::all;
  b.max_tokens = 250000;
  b.max_time = std::chrono::minutes(5);
  b.max_rpm = 5000;
  return b;
}

FieldValue field_value(const FieldRecord& r, FieldId f) {
  FieldValue v{normalize_units(r.field_text(f)), -1};
  switch (f) {
    case FieldId::age: v.numeric = r.age; break;
    case FieldId::gender: v.numeric = static_cast<int>(r.gender); break;
    case FieldId::chief_complaint: v.numeric = static_cast<int>(r.chief_complaint); break;
    default: break;
  }
  return v;
}

namespace {

bool is_free_text(FieldId f) {
  return f == FieldId::disease_history || f == FieldId::symptoms || f == FieldId::duration;
}

constexpr int kAgeBands = kMaxAge / 10 + 1;

std::uint64_t joint_key(std::size_t value, std::size_t evidence) {
  return (static_cast<std::uint64_t>(value) << 32) | static_cast<std::uint64_t>(evidence);
}

std::vector<double> softmax(const std::vector<double>& logw) {
  const double best = *std::max_element(logw.begin(), logw.end());
  std::vector<double> p(logw.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) total += p[i] = std::exp(logw[i] - best);
  for (double& x : p) x /= total;
  return p;
}

std::vector<std::size_t> order_by_weight_desc(const std::vector<double>& w) {
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  return idx;
}

// Weighted sampling without replacement (exponential keys).
std::vector<std::size_t> weighted_permutation(const std::vector<double>& w, Rng& rng) {
  std::vector<double> key(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double u = std::max(uniform01(rng), std::numeric_limits<double>::min());
    key[i] = w[i] > 0.0 ? std::log(u) / w[i] : -std::numeric_limits<double>::infinity();
  }
  return order_by_weight_desc(key);
}

}  // namespace

// ---------------------------------------------------------------------------
// Corpus model

std::size_t CorpusModel::count(FieldId f, std::size_t value_index) const {
  return fields_[field_index(f)].counts.at(value_index);
}

std::optional<std::size_t> CorpusModel::index_of(FieldId f, std::string_view normalized_text) const {
  const auto& t = fields_[field_index(f)];
  const auto it = t.index.find(std::string(normalized_text));
  if (it == t.index.end()) return std::nullopt;
  return it->second;
}

std::string CorpusModel::evidence_key(FieldId f, const FieldValue& v) const {
  if (f == FieldId::age) return "band " + std::to_string(age_band(v.numeric));
  return v.text;
}

std::optional<std::size_t> CorpusModel::evidence_id(FieldId f, const FieldValue& v) const {
  const auto& t = fields_[field_index(f)];
  const auto it = t.evidence_index.find(evidence_key(f, v));
  if (it == t.evidence_index.end()) return std::nullopt;
  return it->second;
}

std::vector<double> CorpusModel::log_scores(
    FieldId f, std::span<const std::pair<FieldId, FieldValue>> evidence) const {
  const auto& t = fields_[field_index(f)];
  const double D = static_cast<double>(t.values.size());
  const double N = static_cast<double>(records);
  std::vector<double> s(t.values.size());
  for (std::size_t vi = 0; vi < t.values.size(); ++vi) {
    const double c = static_cast<double>(t.counts[vi]);
    double score = std::log((c + alpha) / (N + alpha * D));
    for (const auto& [ef, ev] : evidence) {
      if (ef == f) continue;
      const auto& et = fields_[field_index(ef)];
      std::size_t joint = 0;
      if (auto id = evidence_id(ef, ev)) {
        const auto& m = joint_[field_index(f)][field_index(ef)];
        const auto it = m.find(joint_key(vi, *id));
        if (it != m.end()) joint = it->second;
      }
      score += std::log((static_cast<double>(joint) + alpha) /
                        (c + alpha * static_cast<double>(et.evidence_domain)));
    }
    s[vi] = score;
  }
  return s;
}

std::vector<double> CorpusModel::marginal(FieldId f) const { return softmax(log_scores(f, {})); }

std::vector<double> CorpusModel::conditional(
    FieldId f, std::span<const std::pair<FieldId, FieldValue>> evidence) const {
  return softmax(log_scores(f, evidence));
}

double CorpusModel::log_prob_marginal(FieldId f, const FieldValue& v) const {
  return log_prob_conditional(f, v, {});
}

double CorpusModel::log_prob_conditional(
    FieldId f, const FieldValue& v, std::span<const std::pair<FieldId, FieldValue>> evidence) const {
  const auto idx = index_of(f, v.text);
  if (!idx) return -std::numeric_limits<double>::infinity();
  const auto p = conditional(f, evidence);
  return std::log(p[*idx]);
}

const std::vector<FieldValue>& CorpusModel::bigram_candidates(FieldId f) const {
  if (!is_free_text(f)) throw DomainError("bigram candidates exist only for free-text fields");
  return fields_[field_index(f)].bigram_list;
}

std::vector<FieldValue> bigram_completions(std::span<const std::string> texts,
                                           std::size_t max_tokens, std::size_t max_chars,
                                           std::size_t cap) {
  // Unit ids: 0 = start, 1 = end.
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::string> units = {"", ""};
  std::vector<std::unordered_map<std::size_t, std::size_t>> counts(2);
  auto id_of = [&](std::string_view u) {
    auto [it, fresh] = ids.emplace(std::string(u), units.size());
    if (fresh) {
      units.emplace_back(u);
      counts.emplace_back();
    }
    return it->second;
  };
  for (const auto& text : texts) {
    std::size_t prev = 0;
    for (std::string_view u : token_units(text)) {
      const std::size_t cur = id_of(u);
      ++counts[prev][cur];
      prev = cur;
    }
    ++counts[prev][1];
  }
  // Successors sorted by descending probability, ties by unit id.
  std::vector<std::vector<std::pair<std::size_t, double>>> next(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) {
    std::size_t total = 0;
    for (const auto& [_, c] : counts[u]) total += c;
    for (const auto& [v, c] : counts[u])
      next[u].emplace_back(v, -std::log(static_cast<double>(c) / static_cast<double>(total)));
    std::sort(next[u].begin(), next[u].end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
  }

  struct Node {
    std::size_t parent;
    std::size_t unit;
    std::size_t length;
    std::size_t chars;
  };
  constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();
  constexpr std::size_t kMaxNodes = 4'000'000;
  std::vector<Node> nodes = {{kNoParent, 0, 0, 0}};
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
  frontier.push({0.0, 0});

  std::vector<FieldValue> out;
  std::unordered_set<std::string> seen;
  while (!frontier.empty() && out.size() < cap) {
    const auto [cost, id] = frontier.top();
    frontier.pop();
    const Node node = nodes[id];
    if (node.unit == 1) {
      std::vector<std::string_view> seq;
      for (std::size_t p = node.parent; p != kNoParent && nodes[p].unit != 0; p = nodes[p].parent)
        seq.push_back(units[nodes[p].unit]);
      std::string text;
      for (auto it = seq.rbegin(); it != seq.rend(); ++it) {
        if (!text.empty()) text += ' ';
        text += *it;
      }
      if (seen.insert(text).second) out.push_back({std::move(text), -1});
      continue;
    }
    for (const auto& [v, c] : next[node.unit]) {
      if (v != 1 && (node.length + 1 > max_tokens || node.chars + units[v].size() > max_chars)) continue;
      if (nodes.size() >= kMaxNodes) break;
      nodes.push_back({id, v, node.length + 1, node.chars + units[v].size()});
      frontier.push({cost + c, nodes.size() - 1});
    }
  }
  return out;
}

CorpusModel train_corpus_model(std::span<const FieldRecord> records, double alpha) {
  if (records.empty()) throw EmptyCorpus("cannot train on an empty corpus");
  if (!(alpha > 0.0)) throw DomainError("smoothing alpha must be positive");
  CorpusModel m;
  m.alpha = alpha;
  m.records = records.size();

  auto add_value = [&](FieldId f, FieldValue v) {
    auto& t = m.fields_[field_index(f)];
    if (t.index.emplace(v.text, t.values.size()).second) {
      t.values.push_back(std::move(v));
      t.counts.push_back(0);
    }
  };
  for (int a = 0; a <= kMaxAge; ++a) add_value(FieldId::age, {normalize_units(age_to_words(a)), a});
  for (Gender g : {Gender::male, Gender::female})
    add_value(FieldId::gender, {std::string(gender_label(g)), static_cast<int>(g)});
  for (std::size_t c = 0; c < chief_complaint_options().size(); ++c)
    add_value(FieldId::chief_complaint,
              {normalize_units(chief_complaint_options()[c]), static_cast<int>(c)});

  for (const auto& r : records) {
    r.validate();
    for (FieldId f : kAllFields) {
      FieldValue v = field_value(r, f);
      if (is_free_text(f)) add_value(f, v);
      auto& t = m.fields_[field_index(f)];
      ++t.counts[t.index.at(v.text)];
    }
  }

  // Evidence vocabularies: age bands, both genders, every complaint, seen free text.
  for (FieldId f : kAllFields) {
    auto& t = m.fields_[field_index(f)];
    if (f == FieldId::age) {
      for (int b = 0; b < kAgeBands; ++b) t.evidence_index.emplace("band " + std::to_string(b), b);
      t.evidence_domain = kAgeBands;
    } else {
      for (std::size_t i = 0; i < t.values.size(); ++i) t.evidence_index.emplace(t.values[i].text, i);
      t.evidence_domain = t.values.size();
    }
  }

  for (const auto& r : records) {
    std::array<std::size_t, kFieldCount> vi{}, ei{};
    for (FieldId f : kAllFields) {
      const FieldValue v = field_value(r, f);
      vi[field_index(f)] = m.fields_[field_index(f)].index.at(v.text);
      ei[field_index(f)] = *m.evidence_id(f, v);
    }
    for (std::size_t i = 0; i < kFieldCount; ++i)
      for (std::size_t j = 0; j < kFieldCount; ++j)
        if (i != j) ++m.joint_[i][j][joint_key(vi[i], ei[j])];
  }

  for (FieldId f : kAllFields) {
    if (!is_free_text(f)) continue;
    std::vector<std::string> texts;
    texts.reserve(records.size());
    for (const auto& r : records) texts.push_back(r.field_text(f));
    m.fields_[field_index(f)].bigram_list = bigram_completions(texts, 64, kFreeTextCharLimit);
  }
  return m;
}

std::vector<FieldValue> age_search_order(const CorpusModel& model) {
  const auto& ages = model.domain(FieldId::age);
  std::vector<std::size_t> band_count(kAgeBands, 0);
  for (std::size_t i = 0; i < ages.size(); ++i) band_count[age_band(ages[i].numeric)] += model.count(FieldId::age, i);
  std::vector<int> bands(kAgeBands);
  std::iota(bands.begin(), bands.end(), 0);
  std::stable_sort(bands.begin(), bands.end(),
                   [&](int a, int b) { return band_count[a] > band_count[b]; });
  std::vector<FieldValue> out;
  for (int b : bands) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ages.size(); ++i)
      if (age_band(ages[i].numeric) == b) members.push_back(i);
    std::stable_sort(members.begin(), members.end(), [&](std::size_t x, std::size_t y) {
      return model.count(FieldId::age, x) > model.count(FieldId::age, y);
    });
    for (std::size_t i : members) out.push_back(ages[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attack state

AttackState::AttackState(const PromptTemplate& tpl, std::uint64_t nonce_salt)
    : compiled_(tpl), nonce_salt_(nonce_salt) {
  for (const auto& s : tpl.field_slots) order_.push_back(s.field);
  tried.resize(order_.size());
  attempts_per_field.assign(order_.size(), 0);
  complete = order_.empty();
}

FieldId AttackState::current_field() const {
  if (complete) throw DomainError("attack is already complete");
  return order_[current_field_index];
}

namespace {

std::vector<FieldValue> candidate_queue(const AttackState& state, const CorpusModel& model,
                                        Strategy strategy, FieldId f, Rng& rng) {
  if (f == FieldId::age) return age_search_order(model);
  const auto& domain = model.domain(f);
  std::vector<double> weights;
  if (f == FieldId::gender) {
    weights = model.marginal(f);
  } else if (strategy == Strategy::naive_bayes) {
    std::vector<std::pair<FieldId, FieldValue>> evidence;
    const auto& slots = state.prompt_template().field_slots;
    for (std::size_t i = 0; i < state.matched_values.size(); ++i)
      evidence.emplace_back(slots[i].field, state.matched_values[i]);
    weights = model.conditional(f, evidence);
  } else if (strategy == Strategy::prob_vocab) {
    if (is_free_text(f)) return model.bigram_candidates(f);
    weights = model.marginal(f);
  } else {
    std::vector<double> w(domain.size());
    for (std::size_t i = 0; i < domain.size(); ++i)
      w[i] = static_cast<double>(model.count(f, i)) + (is_free_text(f) ? 0.0 : model.alpha);
    std::vector<FieldValue> out;
    for (std::size_t i : weighted_permutation(w, rng))
      if (w[i] > 0.0) out.push_back(domain[i]);
    return out;
  }
  std::vector<FieldValue> out;
  for (std::size_t i : order_by_weight_desc(weights)) out.push_back(domain[i]);
  return out;
}

}  // namespace

ProbeCandidate next_candidate(AttackState& state, const CorpusModel& model, Strategy strategy,
                              Rng& rng) {
  if (state.outstanding) throw DomainError("a candidate is already outstanding");
  const FieldId f = state.current_field();
  const std::size_t idx = state.current_field_index;
  if (state.queue_field_ != idx) {
    state.queue_ = candidate_queue(state, model, strategy, f, rng);
    state.queue_pos_ = 0;
    state.queue_field_ = idx;
  }

  const std::size_t slots = state.order_.size();
  while (state.queue_pos_ < state.queue_.size()) {
    const FieldValue& v = state.queue_[state.queue_pos_++];
    if (state.tried[idx].count(v.text) != 0) continue;

    const std::uint64_t nonce = ++state.nonce_counter;
    const std::vector<TokenId> value_tokens = tokenize(v.text).tokens;
    const std::vector<TokenId> nonce_tokens = {token_id("nonce"),
                                               splitmix64(state.nonce_salt_ ^ nonce) | (TokenId{1} << 63)};
    std::vector<const std::vector<TokenId>*> parts(slots, nullptr);
    for (std::size_t i = 0; i < idx; ++i) parts[i] = &state.matched_tokens_[i];
    parts[idx] = &value_tokens;
    if (idx + 1 < slots) parts[idx + 1] = &nonce_tokens;

    ProbeCandidate c;
    c.field = f;
    c.value = v;
    c.nonce = nonce;
    try {
      c.prompt.tokens = state.compiled_.render(parts);
    } catch (const FieldTooLong&) {
      state.tried[idx].insert(v.text);
      continue;
    }
    state.outstanding = c;
    return c;
  }
  throw FieldExhausted("no untried candidates left for " + std::string(field_name(f)));
}

void record_result(AttackState& state, bool field_hit, VirtualDuration elapsed) {
  if (!state.outstanding) throw DomainError("no outstanding candidate");
  const ProbeCandidate c = std::move(*state.outstanding);
  state.outstanding.reset();
  const std::size_t idx = state.current_field_index;
  ++state.attempts;
  ++state.attempts_per_field[idx];
  state.tokens += c.prompt.size();
  state.elapsed += elapsed;
  state.tried[idx].insert(c.value.text);
  if (field_hit) {
    state.matched_tokens_.push_back(tokenize(c.value.text).tokens);
    state.matched_values.push_back(c.value);
    ++state.current_field_index;
    if (state.current_field_index == state.order_.size()) state.complete = true;
  }
}

std::vector<ProbeSpan> probe_spans(const PromptTemplate& tpl) {
  const auto bounds = field_boundaries(tpl);
  std::vector<ProbeSpan> out;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const std::size_t reach =
        i + 1 < bounds.size() ? tpl.field_slots[i + 1].start_block : tpl.total_blocks;
    out.push_back({bounds[i], reach});
  }
  return out;
}

bool AnalyzerOracle::field_hit(const RequestOutcome& outcome, const ProbeSpan& span) {
  return predict_field_hit(predictor_, outcome.ttft, span.field.first_block, span.decision_blocks());
}

// ---------------------------------------------------------------------------

AttackReport run_attack(ServingNode& node, const PromptTemplate& tpl, const CorpusModel& model,
                        Strategy strategy, const Budget& budget, FieldHitOracle& oracle, Rng& rng,
                        const AttackOptions& options) {
  AttackState state(tpl, rng());
  const auto spans = probe_spans(tpl);
  AttackReport report;

  auto finish = [&](StopReason why) {
    report.stop = why;
    report.attempts = state.attempts;
    report.tokens = state.tokens;
    report.virtual_time_s = to_seconds(state.elapsed);
    for (std::size_t i = 0; i < state.field_count(); ++i) {
      const std::size_t fi = field_index(tpl.field_slots[i].field);
      report.field_attempts[fi] = state.attempts_per_field[i];
      if (i < state.matched_values.size()) {
        report.field_matched[fi] = true;
        report.recovered[fi] = state.matched_values[i].text;
      }
    }
    return report;
  };

  std::size_t limited_streak = 0;
  while (!state.complete) {
    if (state.tokens + tpl.total_tokens() > budget.max_tokens) return finish(StopReason::token_budget);
    if (state.elapsed >= budget.max_time) return finish(StopReason::time_budget);
    ProbeCandidate cand;
    try {
      cand = next_candidate(state, model, strategy, rng);
    } catch (const FieldExhausted&) {
      return finish(StopReason::field_exhausted);
    }
    const Request request{options.user, std::move(cand.prompt), 1};
    for (;;) {
      SubmitResult r = node.submit(request, rng);
      if (const auto* limited = std::get_if<RateLimited>(&r)) {
        if (++limited_streak >= budget.max_rate_limited_streak) return finish(StopReason::rate_limited);
        const VirtualDuration wait = std::max(limited->retry_after - node.now(), VirtualDuration(1));
        node.advance_clock(wait);
        state.elapsed += wait;
        continue;
      }
      limited_streak = 0;
      const auto& outcome = std::get<RequestOutcome>(r);
      const VirtualDuration spent = from_seconds(outcome.ttft) + options.think_time;
      node.advance_clock(spent);
      const bool hit = oracle.field_hit(outcome, spans[state.current_field_index]);
      record_result(state, hit, spent);
      break;
    }
  }
  return finish(StopReason::complete);
}

bool is_reachable(const FieldRecord& victim, const CorpusModel& model, Strategy strategy) {
  for (FieldId f : kAllFields) {
    if (!is_free_text(f)) continue;
    const FieldValue v = field_value(victim, f);
    if (strategy == Strategy::prob_vocab) {
      const auto& list = model.bigram_candidates(f);
      if (std::none_of(list.begin(), list.end(), [&](const FieldValue& c) { return c.text == v.text; }))
        return false;
    } else if (!model.index_of(f, v.text)) {
      return false;
    }
  }
  return true;
}

}  // namespace cachelab

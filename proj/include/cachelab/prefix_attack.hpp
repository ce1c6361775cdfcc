#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cachelab/core.hpp"
#include "cachelab/rng.hpp"
#include "cachelab/serving_node.hpp"
#include "cachelab/time_analyzer.hpp"

namespace cachelab {

enum class Strategy { baseline, naive_bayes, prob_vocab };
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view s);
inline constexpr Strategy kAllStrategies[] = {Strategy::baseline, Strategy::naive_bayes,
                                              Strategy::prob_vocab};

/// One value of a field: its normalized text plus the typed value for
/// age, gender and chief complaint (-1 for free text).
struct FieldValue {
  std::string text;
  int numeric = -1;

  bool operator==(const FieldValue&) const = default;
};

FieldValue field_value(const FieldRecord& r, FieldId f);

/// Ages condition other fields through their decade band.
inline int age_band(int age) { return age / 10; }

inline constexpr std::size_t kProbVocabCap = 10000;

/// Corpus statistics: per-field value counts, pairwise co-occurrence counts
/// for naive-Bayes conditionals, and token bigrams inside free-text fields.
class CorpusModel {
 public:
  double alpha = 1.0;
  std::size_t records = 0;

  /// Candidate domain of a field: every age, both genders, all ten chief
  /// complaints, or the distinct values seen in the corpus for free text.
  const std::vector<FieldValue>& domain(FieldId f) const { return fields_[field_index(f)].values; }
  std::size_t count(FieldId f, std::size_t value_index) const;
  std::optional<std::size_t> index_of(FieldId f, std::string_view normalized_text) const;

  /// Additively smoothed marginal over the field's domain.
  std::vector<double> marginal(FieldId f) const;
  /// Naive-Bayes posterior over the domain of `f` given the matched values.
  std::vector<double> conditional(FieldId f,
                                  std::span<const std::pair<FieldId, FieldValue>> evidence) const;

  double log_prob_marginal(FieldId f, const FieldValue& v) const;
  double log_prob_conditional(FieldId f, const FieldValue& v,
                              std::span<const std::pair<FieldId, FieldValue>> evidence) const;

  /// Best-first completions of the field's token bigram model (free-text fields only).
  const std::vector<FieldValue>& bigram_candidates(FieldId f) const;

 private:
  friend CorpusModel train_corpus_model(std::span<const FieldRecord> records, double alpha);

  struct FieldTable {
    std::vector<FieldValue> values;
    std::vector<std::size_t> counts;
    std::unordered_map<std::string, std::size_t> index;
    std::unordered_map<std::string, std::size_t> evidence_index;  // key -> id
    std::size_t evidence_domain = 0;
    std::vector<FieldValue> bigram_list;
  };

  std::string evidence_key(FieldId f, const FieldValue& v) const;
  std::optional<std::size_t> evidence_id(FieldId f, const FieldValue& v) const;
  std::vector<double> log_scores(FieldId f,
                                 std::span<const std::pair<FieldId, FieldValue>> evidence) const;

  std::array<FieldTable, kFieldCount> fields_;
  /// joint_[i][j]: (value of field i, evidence id of field j) -> count
  std::array<std::array<std::unordered_map<std::uint64_t, std::size_t>, kFieldCount>, kFieldCount> joint_;
};

/// Throws EmptyCorpus for an empty record list.
CorpusModel train_corpus_model(std::span<const FieldRecord> records, double alpha = 1.0);

/// Token-bigram best-first enumeration over a set of texts, most probable first.
/// `max_chars` bounds the summed length of a completion's units, separators excluded.
std::vector<FieldValue> bigram_completions(std::span<const std::string> texts,
                                           std::size_t max_tokens, std::size_t max_chars,
                                           std::size_t cap = kProbVocabCap);

/// Shared exhaustive age order: decade bands by corpus frequency, then ages
/// within each band by frequency (ties ascending).
std::vector<FieldValue> age_search_order(const CorpusModel& model);

enum class BudgetMode { ideal, all };
std::string_view budget_mode_name(BudgetMode m);
BudgetMode parse_budget_mode(std::string_view s);

struct Budget {
  BudgetMode mode = BudgetMode::ideal;
  std::size_t max_tokens = SIZE_MAX;
  VirtualDuration max_time = kForever;
  std::size_t max_rpm = kUnlimitedRpm;  ///< enforced by the node
  std::size_t max_rate_limited_streak = 3;

  static Budget ideal();
  /// 250,000 tokens, 5 virtual minutes, 5,000 requests per minute.
  static Budget all();
};

struct ProbeCandidate {
  FieldId field = FieldId::age;
  FieldValue value;
  std::uint64_t nonce = 0;
  TokenSeq prompt;
};

/// Field-by-field search progress for one victim.
class AttackState {
 public:
  AttackState(const PromptTemplate& tpl, std::uint64_t nonce_salt);

  const PromptTemplate& prompt_template() const { return compiled_.source(); }
  std::size_t current_field_index = 0;
  std::vector<FieldValue> matched_values;
  std::vector<std::unordered_set<std::string>> tried;
  std::uint64_t nonce_counter = 0;
  std::size_t attempts = 0;
  std::size_t tokens = 0;
  VirtualDuration elapsed{0};
  std::vector<std::size_t> attempts_per_field;
  bool complete = false;
  std::optional<ProbeCandidate> outstanding;

  FieldId current_field() const;
  std::size_t field_count() const { return order_.size(); }

 private:
  friend ProbeCandidate next_candidate(AttackState&, const CorpusModel&, Strategy, Rng&);
  friend void record_result(AttackState&, bool, VirtualDuration);

  CompiledTemplate compiled_;
  std::vector<FieldId> order_;
  std::uint64_t nonce_salt_;
  std::vector<std::vector<TokenId>> matched_tokens_;
  std::vector<FieldValue> queue_;
  std::size_t queue_pos_ = 0;
  std::optional<std::size_t> queue_field_;
};

/// Next probe for the current field: matched values before it, a nonce in the
/// first block of the following slot, filler everywhere after.
/// Throws FieldExhausted when the field has no untried candidates.
ProbeCandidate next_candidate(AttackState& state, const CorpusModel& model, Strategy strategy,
                              Rng& rng);

/// Charges the outstanding probe and advances on a hit.
void record_result(AttackState& state, bool field_hit, VirtualDuration elapsed);

/// Cache depths a probe for one field can reach: a wrong value stops below
/// the field's end, a right one runs on to the nonce at `hit_blocks`.
struct ProbeSpan {
  FieldSpan field;
  std::size_t hit_blocks = 0;

  /// Smallest depth counted as a hit when reading depth from timing.
  std::size_t decision_blocks() const { return (field.end_block() + hit_blocks + 1) / 2; }
};

/// One span per template slot, in slot order.
std::vector<ProbeSpan> probe_spans(const PromptTemplate& tpl);

/// Decides from an observed response whether the probed field fully matched.
class FieldHitOracle {
 public:
  virtual ~FieldHitOracle() = default;
  virtual bool field_hit(const RequestOutcome& outcome, const ProbeSpan& span) = 0;
};

class AnalyzerOracle : public FieldHitOracle {
 public:
  explicit AnalyzerOracle(const HitPredictor& predictor) : predictor_(predictor) {}
  bool field_hit(const RequestOutcome& outcome, const ProbeSpan& span) override;

 private:
  const HitPredictor& predictor_;
};

enum class StopReason { complete, field_exhausted, token_budget, time_budget, rate_limited };
std::string_view stop_reason_name(StopReason r);

struct AttackReport {
  std::array<bool, kFieldCount> field_matched{};
  std::array<std::string, kFieldCount> recovered;
  std::array<std::size_t, kFieldCount> field_attempts{};
  std::size_t attempts = 0;
  std::size_t tokens = 0;
  double virtual_time_s = 0.0;
  StopReason stop = StopReason::complete;
};

struct AttackOptions {
  UserId user = "attacker";
  VirtualDuration think_time = std::chrono::milliseconds(10);
};

AttackReport run_attack(ServingNode& node, const PromptTemplate& tpl, const CorpusModel& model,
                        Strategy strategy, const Budget& budget, FieldHitOracle& oracle, Rng& rng,
                        const AttackOptions& options = {});

/// True when every field of `victim` appears among the strategy's candidates.
bool is_reachable(const FieldRecord& victim, const CorpusModel& model, Strategy strategy);

}  // namespace cachelab

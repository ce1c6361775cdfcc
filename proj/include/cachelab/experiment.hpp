#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cachelab/corpus.hpp"
#include "cachelab/prefix_attack.hpp"
#include "cachelab/semantic_attack.hpp"
#include "cachelab/serving_node.hpp"
#include "cachelab/time_analyzer.hpp"

namespace cachelab {

enum class ExperimentKind { prefix, semantic };
std::string_view experiment_kind_name(ExperimentKind k);
ExperimentKind parse_experiment_kind(std::string_view s);

/// How the prefix attack decides a field hit: from timing, or from the node's
/// debug channel (a perfect oracle for soundness checks).
enum class OracleKind { analyzer, debug_truth };
std::string_view oracle_kind_name(OracleKind k);
OracleKind parse_oracle_kind(std::string_view s);

struct ExperimentConfig {
  std::string id = "experiment";
  std::uint64_t seed = 1;
  ExperimentKind kind = ExperimentKind::prefix;
  /// Base node; prefix runs force prefix mode, semantic runs force semantic mode.
  NodeConfig node;
  std::size_t block_size = 16;

  // Prefix attack
  PrefixCorpusSpec corpus;
  std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  std::vector<BudgetMode> regimes{BudgetMode::ideal, BudgetMode::all};
  /// Limits of the All regime.
  Budget all_budget = Budget::all();
  PredictorKind analyzer = PredictorKind::curve_bayes;
  std::size_t calibration_budget = 600;
  std::size_t calibration_reps = 10;
  OracleKind oracle = OracleKind::analyzer;
  std::size_t repetitions = 200;
  VirtualDuration think_time = std::chrono::milliseconds(10);

  // Semantic attack
  SemanticCorpusSpec semantic_corpus;
  std::size_t victims_per_category = 30;
  std::vector<std::size_t> probe_budgets{50, 200, 500};
  std::size_t tree_leaves = 128;
  SearchParams search;
  std::size_t semantic_calibration_reps = 50;

  // Defense sweep
  std::size_t defense_victims = 50;
  std::size_t defense_eval_draws = 1000;
  /// Delay-injection sigma as a multiple of the adjacent-level timing gap.
  double delay_gap_multiple = 5.0;

  /// Throws ConfigInvalid.
  void validate() const;
  PromptTemplate prompt_template() const { return PromptTemplate::medical(block_size); }
};

/// One aggregate line of a report. Prefix rows fill the ASR_* and mean/std
/// columns; semantic rows fill category, budget, asr and probes_mean.
struct ReportRow {
  std::string experiment_id;
  std::string attack;  ///< "prefix" or "semantic"
  std::string strategy;
  std::string regime;
  std::string category;
  std::size_t budget = 0;
  std::size_t victims = 0;
  double asr_disease = 0.0;
  double asr_symptoms = 0.0;
  double asr_all = 0.0;
  double asr = 0.0;
  double attempts_mean = 0.0;
  double attempts_std = 0.0;
  double tokens_mean = 0.0;
  double tokens_std = 0.0;
  double time_mean_s = 0.0;
  double time_std_s = 0.0;
  double probes_mean = 0.0;

  bool operator==(const ReportRow&) const = default;
};

/// Per-victim outcome of one prefix attack, as scored by the harness.
struct PrefixVictimResult {
  std::size_t victim = 0;
  Strategy strategy = Strategy::baseline;
  BudgetMode regime = BudgetMode::ideal;
  AttackReport report;
  std::array<bool, kFieldCount> correct{};
  /// Fields marked matched whose recovered value differs from the victim's.
  std::size_t false_matches = 0;
  bool reachable = false;
};

struct PrefixExperimentResult {
  std::vector<ReportRow> rows;
  std::vector<PrefixVictimResult> victims;
};

struct SemanticVictimResult {
  std::size_t category = 0;
  std::string query;
  SemanticAttackReport report;
  /// Claimed hit that the debug channel attributes to the victim's entry.
  bool success = false;
};

struct SemanticExperimentResult {
  std::vector<ReportRow> rows;
  std::vector<SemanticVictimResult> victims;
};

/// Decides field hits from the node's debug channel.
class DebugTruthOracle : public FieldHitOracle {
 public:
  explicit DebugTruthOracle(const ServingNode& node) : node_(node) {}
  bool field_hit(const RequestOutcome& outcome, const ProbeSpan& span) override;

 private:
  const ServingNode& node_;
};

/// Node configuration the prefix attack runs against under `regime`.
NodeConfig regime_node_config(const ExperimentConfig& config, BudgetMode regime);
Budget regime_budget(const ExperimentConfig& config, BudgetMode regime);

/// Training corpus and victims both come from the configured world; victims
/// use their own rng stream.
std::vector<FieldRecord> experiment_training_records(const ExperimentConfig& config);
std::vector<FieldRecord> experiment_victims(const ExperimentConfig& config);

/// Fits the configured analyzer on a fresh calibration node.
HitPredictor calibrate_predictor(const ExperimentConfig& config);

PrefixExperimentResult run_prefix_experiment(const ExperimentConfig& config);
SemanticExperimentResult run_semantic_experiment(const ExperimentConfig& config);
/// Dispatches on config.kind.
std::vector<ReportRow> run_experiment(const ExperimentConfig& config);

struct DefenseRow {
  std::string defense;
  double block_accuracy = 0.0;
  double field_accuracy = 0.0;
  std::size_t victims = 0;
  double prefix_asr_all = 0.0;
  bool semantic_separable = false;
  double semantic_accuracy = 0.0;

  bool operator==(const DefenseRow&) const = default;
};

/// Runs the analyzer evaluation, a Naive-Bayes prefix attack and the semantic
/// classifier against each defense in turn: none, isolation, delay injection,
/// constant time and non-streaming responses.
std::vector<DefenseRow> run_defense_eval(const ExperimentConfig& config);

/// Prefill-time difference between adjacent block-hit levels of the template prompt.
double block_timing_gap(const ExperimentConfig& config);

}  // namespace cachelab

#include <doctest.h>

#include <algorithm>

#include "cachelab/experiment.hpp"
#include "test_support.hpp"

using namespace cachelab;

namespace {

ExperimentConfig small_prefix_config() {
  ExperimentConfig c;
  c.id = "small";
  c.seed = 5;
  c.corpus.n_records = 2000;
  c.repetitions = 12;
  return c;
}

const ReportRow& row_for(const std::vector<ReportRow>& rows, std::string_view strategy,
                         std::string_view regime) {
  const auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& r) {
    return r.strategy == strategy && r.regime == regime;
  });
  REQUIRE(it != rows.end());
  return *it;
}

}  // namespace

TEST_CASE("the All regime without limits reproduces the Ideal regime") {
  ExperimentConfig c = small_prefix_config();
  c.strategies = {Strategy::baseline, Strategy::naive_bayes};
  c.all_budget = Budget::ideal();
  c.all_budget.mode = BudgetMode::all;
  c.node.prefix.ttl = kForever;
  const auto res = run_prefix_experiment(c);
  REQUIRE(res.rows.size() == 4);
  for (Strategy s : c.strategies) {
    ReportRow ideal = row_for(res.rows, strategy_name(s), "ideal");
    ReportRow all = row_for(res.rows, strategy_name(s), "all");
    all.regime = ideal.regime;
    CHECK(all == ideal);
  }
}

TEST_CASE("prefix experiment rows are internally consistent") {
  ExperimentConfig c = small_prefix_config();
  const auto res = run_prefix_experiment(c);
  REQUIRE(res.rows.size() == 6);
  REQUIRE(res.victims.size() == 6 * c.repetitions);
  for (const auto& r : res.rows) {
    CAPTURE(r.strategy);
    CAPTURE(r.regime);
    CHECK(r.victims == c.repetitions);
    CHECK(r.asr_all <= std::min(r.asr_disease, r.asr_symptoms) + 1e-12);
    CHECK(r.asr == r.asr_all);
    CHECK(r.tokens_mean == doctest::Approx(r.attempts_mean * 800));
  }
  for (Strategy s : kAllStrategies) {
    const auto& ideal = row_for(res.rows, strategy_name(s), "ideal");
    const auto& all = row_for(res.rows, strategy_name(s), "all");
    CHECK(ideal.asr_all >= all.asr_all);
    CHECK(ideal.attempts_mean >= all.attempts_mean);
  }
  for (const auto& v : res.victims) {
    CHECK(v.false_matches == 0);
    if (v.regime == BudgetMode::all) {
      CHECK(v.report.tokens <= Budget::all().max_tokens);
      // the last probe may start just before the time limit
      CHECK(v.report.virtual_time_s <= 300.0 + 2.0);
    }
  }
}

TEST_CASE("the debug oracle scores every reachable Ideal victim") {
  ExperimentConfig c = small_prefix_config();
  c.oracle = OracleKind::debug_truth;
  c.regimes = {BudgetMode::ideal};
  const auto res = run_prefix_experiment(c);
  for (const auto& v : res.victims) {
    CAPTURE(v.victim);
    if (v.reachable) {
      CHECK(v.report.stop == StopReason::complete);
      CHECK(std::all_of(v.correct.begin(), v.correct.end(), [](bool b) { return b; }));
    }
    CHECK(v.false_matches == 0);
  }
}

TEST_CASE("per-user isolation defeats the prefix attack") {
  ExperimentConfig c = small_prefix_config();
  c.node.defenses.isolation = true;
  c.oracle = OracleKind::debug_truth;
  c.strategies = {Strategy::naive_bayes};
  c.repetitions = 4;
  const auto res = run_prefix_experiment(c);
  for (const auto& r : res.rows) {
    CHECK(r.asr_disease == 0.0);
    CHECK(r.asr_all == 0.0);
  }
}

TEST_CASE("experiments are deterministic for a seed") {
  ExperimentConfig c = small_prefix_config();
  c.repetitions = 4;
  c.strategies = {Strategy::naive_bayes};
  CHECK(run_experiment(c) == run_experiment(c));
  ExperimentConfig d = c;
  d.seed = 6;
  CHECK(experiment_victims(c) != experiment_victims(d));
  CHECK(experiment_training_records(c).size() == c.corpus.n_records);
}

TEST_CASE("semantic experiment ASR grows with the probe budget") {
  ExperimentConfig c;
  c.kind = ExperimentKind::semantic;
  c.victims_per_category = 2;
  c.probe_budgets = {20, 100, 300};
  c.semantic_corpus.records_per_category.assign(13, 60);
  c.tree_leaves = 48;
  const auto res = run_semantic_experiment(c);
  REQUIRE(res.victims.size() == 26);
  REQUIRE(res.rows.size() == 3 * 14);
  std::vector<double> overall;
  for (const auto& r : res.rows) {
    CHECK(r.attack == "semantic");
    CHECK(r.probes_mean <= static_cast<double>(r.budget));
    if (r.category == "overall") {
      CHECK(r.victims == 26);
      overall.push_back(r.asr);
    } else {
      CHECK(r.victims == 2);
    }
  }
  REQUIRE(overall.size() == 3);
  CHECK(overall[0] <= overall[1]);
  CHECK(overall[1] <= overall[2]);
  CHECK(overall[2] > 0.5);
  for (const auto& v : res.victims) {
    if (v.success) CHECK(v.report.claimed_hit);
  }
}

TEST_CASE("defense evaluation ranks the defenses") {
  ExperimentConfig c = small_prefix_config();
  c.defense_victims = 6;
  c.defense_eval_draws = 200;
  c.semantic_calibration_reps = 20;
  const auto rows = run_defense_eval(c);
  REQUIRE(rows.size() == 5);
  auto find = [&](std::string_view name) -> const DefenseRow& {
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const DefenseRow& r) { return r.defense == name; });
    REQUIRE(it != rows.end());
    return *it;
  };
  const auto& none = find("none");
  CHECK(none.field_accuracy > 0.95);
  CHECK(none.prefix_asr_all > 0.5);
  CHECK(none.semantic_separable);
  CHECK(find("isolation").prefix_asr_all == 0.0);
  // own entries still time as hits; isolation only removes cross-user sharing
  CHECK(find("isolation").semantic_separable);
  CHECK(find("delay_injection").field_accuracy < 0.8);
  CHECK(find("constant_time").prefix_asr_all == 0.0);
  CHECK(find("constant_time").field_accuracy < 0.7);
  CHECK_FALSE(find("constant_time").semantic_separable);
  CHECK(block_timing_gap(c) == doctest::Approx(0.0128));
}

TEST_CASE("configuration validation") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  c.block_size = 32;
  CHECK_THROWS_AS(c.validate(), ConfigInvalid);
  c = ExperimentConfig{};
  c.probe_budgets = {500, 50};
  CHECK_THROWS_AS(c.validate(), ConfigInvalid);
  c = ExperimentConfig{};
  c.strategies.clear();
  CHECK_THROWS_AS(c.validate(), ConfigInvalid);
  CHECK(parse_oracle_kind("debug_truth") == OracleKind::debug_truth);
  CHECK(parse_experiment_kind("semantic") == ExperimentKind::semantic);
  CHECK_THROWS_AS(parse_experiment_kind("both"), ConfigInvalid);
}

#include "cachelab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

#include "cachelab/errors.hpp"

namespace cachelab {

namespace {

// Stream ids for derive_rng; every consumer of randomness owns one.
constexpr std::uint64_t kStreamCorpus = 1;
constexpr std::uint64_t kStreamVictims = 2;
constexpr std::uint64_t kStreamCalibration = 3;
constexpr std::uint64_t kStreamSemanticCorpus = 4;
constexpr std::uint64_t kStreamSemanticVictims = 5;
constexpr std::uint64_t kStreamSemanticCalibration = 6;
constexpr std::uint64_t kStreamDefense = 7;
constexpr std::uint64_t kStreamRepetition = 1000;

/// Runs body(i) for i in [0, n) on worker threads; results must be written by index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

double fraction(std::size_t k, std::size_t n) {
  return n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n);
}

ReportRow prefix_row(const ExperimentConfig& config, Strategy s, BudgetMode m,
                     const std::vector<const PrefixVictimResult*>& results) {
  ReportRow row;
  row.experiment_id = config.id;
  row.attack = "prefix";
  row.strategy = std::string(strategy_name(s));
  row.regime = std::string(budget_mode_name(m));
  row.victims = results.size();
  std::size_t disease = 0, symptoms = 0, all = 0;
  std::vector<double> attempts, tokens, times;
  for (const auto* r : results) {
    disease += r->correct[field_index(FieldId::disease_history)];
    symptoms += r->correct[field_index(FieldId::symptoms)];
    all += std::all_of(r->correct.begin(), r->correct.end(), [](bool b) { return b; });
    attempts.push_back(static_cast<double>(r->report.attempts));
    tokens.push_back(static_cast<double>(r->report.tokens));
    times.push_back(r->report.virtual_time_s);
  }
  row.asr_disease = fraction(disease, results.size());
  row.asr_symptoms = fraction(symptoms, results.size());
  row.asr_all = fraction(all, results.size());
  row.asr = row.asr_all;
  const auto a = mean_std(attempts), t = mean_std(tokens), v = mean_std(times);
  row.attempts_mean = a.mean;
  row.attempts_std = a.std;
  row.tokens_mean = t.mean;
  row.tokens_std = t.std;
  row.time_mean_s = v.mean;
  row.time_std_s = v.std;
  return row;
}

NodeConfig semantic_node_config(const ExperimentConfig& config) {
  NodeConfig c = config.node;
  c.cache_mode = CacheMode::semantic;
  c.rate_limit_rpm = kUnlimitedRpm;
  return c;
}

/// Attack one victim already cached on a fresh node.
PrefixVictimResult attack_victim(const ExperimentConfig& config, const PromptTemplate& tpl,
                                 const CorpusModel& model, const HitPredictor& predictor,
                                 const FieldRecord& victim, std::size_t index, Strategy strategy,
                                 BudgetMode regime) {
  NodeConfig nc = regime_node_config(config, regime);
  nc.test_mode = config.oracle == OracleKind::debug_truth;
  ServingNode node(nc);
  Rng rng = derive_rng(config.seed, kStreamRepetition + index);
  timed_submit(node, Request{"victim", render_prompt(tpl, victim), 1}, rng, config.think_time);

  AttackOptions options;
  options.think_time = config.think_time;
  AnalyzerOracle analyzer(predictor);
  DebugTruthOracle truth(node);
  FieldHitOracle& oracle =
      config.oracle == OracleKind::debug_truth ? static_cast<FieldHitOracle&>(truth) : analyzer;

  PrefixVictimResult out;
  out.victim = index;
  out.strategy = strategy;
  out.regime = regime;
  out.report = run_attack(node, tpl, model, strategy, regime_budget(config, regime), oracle, rng,
                          options);
  out.reachable = is_reachable(victim, model, strategy);
  for (FieldId f : kAllFields) {
    const std::size_t i = field_index(f);
    if (!out.report.field_matched[i]) continue;
    const bool right = out.report.recovered[i] == normalize_units(victim.field_text(f));
    out.correct[i] = right;
    out.false_matches += right ? 0 : 1;
  }
  return out;
}

}  // namespace

std::string_view experiment_kind_name(ExperimentKind k) {
  return k == ExperimentKind::prefix ? "prefix" : "semantic";
}

ExperimentKind parse_experiment_kind(std::string_view s) {
  if (s == "prefix") return ExperimentKind::prefix;
  if (s == "semantic") return ExperimentKind::semantic;
  throw ConfigInvalid("unknown experiment kind: " + std::string(s));
}

std::string_view oracle_kind_name(OracleKind k) {
  return k == OracleKind::analyzer ? "analyzer" : "debug_truth";
}

OracleKind parse_oracle_kind(std::string_view s) {
  if (s == "analyzer") return OracleKind::analyzer;
  if (s == "debug_truth") return OracleKind::debug_truth;
  throw ConfigInvalid("unknown oracle kind: " + std::string(s));
}

void ExperimentConfig::validate() const {
  node.validate();
  corpus.validate();
  semantic_corpus.validate();
  search.validate();
  try {
    prompt_template().validate();
  } catch (const TemplateInvalid& e) {
    throw ConfigInvalid(std::string("template: ") + e.what());
  }
  if (block_size != node.prefix.block_size) {
    throw ConfigInvalid("template block_size must equal the prefix cache block_size");
  }
  if (strategies.empty()) throw ConfigInvalid("at least one strategy is required");
  if (regimes.empty()) throw ConfigInvalid("at least one regime is required");
  if (repetitions == 0) throw ConfigInvalid("repetitions must be positive");
  if (calibration_reps == 0) throw ConfigInvalid("calibration_reps must be positive");
  if (probe_budgets.empty()) throw ConfigInvalid("at least one probe budget is required");
  if (!std::is_sorted(probe_budgets.begin(), probe_budgets.end())) {
    throw ConfigInvalid("probe budgets must be ascending");
  }
  if (victims_per_category == 0) throw ConfigInvalid("victims_per_category must be positive");
  if (tree_leaves == 0) throw ConfigInvalid("tree_leaves must be positive");
  if (semantic_calibration_reps < 10) throw ConfigInvalid("semantic_calibration_reps must be >= 10");
  if (think_time.count() < 0) throw ConfigInvalid("think_time must be non-negative");
  if (!(delay_gap_multiple >= 0.0)) throw ConfigInvalid("delay_gap_multiple must be non-negative");
  if (all_budget.max_rpm == 0) throw ConfigInvalid("All regime rpm must be positive");
}

bool DebugTruthOracle::field_hit(const RequestOutcome& outcome, const ProbeSpan& span) {
  return node_.debug_truth(outcome).k_blocks >= span.field.end_block();
}

NodeConfig regime_node_config(const ExperimentConfig& config, BudgetMode regime) {
  NodeConfig c = config.node;
  c.cache_mode = CacheMode::prefix;
  if (regime == BudgetMode::ideal) {
    c.prefix.ttl = kForever;
    c.rate_limit_rpm = kUnlimitedRpm;
  } else {
    c.rate_limit_rpm = config.all_budget.max_rpm;
  }
  return c;
}

Budget regime_budget(const ExperimentConfig& config, BudgetMode regime) {
  return regime == BudgetMode::ideal ? Budget::ideal() : config.all_budget;
}

std::vector<FieldRecord> experiment_training_records(const ExperimentConfig& config) {
  Rng rng = derive_rng(config.seed, kStreamCorpus);
  return generate_prefix_corpus(config.corpus, rng);
}

std::vector<FieldRecord> experiment_victims(const ExperimentConfig& config) {
  Rng rng = derive_rng(config.seed, kStreamVictims);
  return generate_prefix_records(config.corpus, config.repetitions, rng);
}

HitPredictor calibrate_predictor(const ExperimentConfig& config) {
  const PromptTemplate tpl = config.prompt_template();
  NodeConfig nc = regime_node_config(config, BudgetMode::ideal);
  ServingNode node(nc);
  Rng rng = derive_rng(config.seed, kStreamCalibration);
  CalibrationOptions options;
  options.think_time = config.think_time;
  const TimingProfile profile = calibrate(node, tpl.total_tokens(), config.calibration_reps,
                                          config.calibration_budget, rng, options);
  return fit(profile, config.analyzer);
}

PrefixExperimentResult run_prefix_experiment(const ExperimentConfig& config) {
  config.validate();
  const PromptTemplate tpl = config.prompt_template();
  const auto training = experiment_training_records(config);
  const auto victims = experiment_victims(config);
  const CorpusModel model = train_corpus_model(training);
  HitPredictor predictor;
  if (config.oracle == OracleKind::analyzer) predictor = calibrate_predictor(config);

  const std::size_t per_cell = victims.size();
  const std::size_t cells = config.strategies.size() * config.regimes.size();
  std::vector<PrefixVictimResult> results(cells * per_cell);
  parallel_for(results.size(), [&](std::size_t job) {
    const std::size_t cell = job / per_cell, v = job % per_cell;
    const Strategy s = config.strategies[cell / config.regimes.size()];
    const BudgetMode m = config.regimes[cell % config.regimes.size()];
    results[job] = attack_victim(config, tpl, model, predictor, victims[v], v, s, m);
  });

  PrefixExperimentResult out;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::vector<const PrefixVictimResult*> part;
    for (std::size_t v = 0; v < per_cell; ++v) part.push_back(&results[cell * per_cell + v]);
    out.rows.push_back(prefix_row(config, config.strategies[cell / config.regimes.size()],
                                  config.regimes[cell % config.regimes.size()], part));
  }
  out.victims = std::move(results);
  return out;
}

SemanticExperimentResult run_semantic_experiment(const ExperimentConfig& config) {
  config.validate();
  const SemanticCorpusSpec& spec = config.semantic_corpus;
  Rng corpus_rng = derive_rng(config.seed, kStreamSemanticCorpus);
  const auto corpus = generate_semantic_corpus(spec, corpus_rng);
  std::vector<std::string> texts, labels;
  for (const auto& t : corpus) {
    texts.push_back(t.text);
    labels.push_back(t.category);
  }
  const ClusterTree tree =
      build_cluster_tree(texts, std::min(config.tree_leaves, texts.size()), labels);

  const NodeConfig nc = semantic_node_config(config);
  SemanticClassifier classifier;
  {
    ServingNode node(nc);
    Rng rng = derive_rng(config.seed, kStreamSemanticCalibration);
    CalibrationOptions options;
    options.think_time = config.think_time;
    const auto prof = calibrate_semantic(node, config.semantic_calibration_reps, rng, options);
    classifier = fit_semantic_classifier(prof.hit, prof.miss);
  }

  std::vector<SemanticVictimResult> victims;
  {
    Rng rng = derive_rng(config.seed, kStreamSemanticVictims);
    for (std::size_t c = 0; c < spec.n_categories; ++c) {
      for (auto& q : generate_semantic_queries(spec, c, config.victims_per_category, rng)) {
        SemanticVictimResult r;
        r.category = c;
        r.query = std::move(q.text);
        victims.push_back(std::move(r));
      }
    }
  }

  const std::size_t max_budget = config.probe_budgets.back();
  parallel_for(victims.size(), [&](std::size_t i) {
    NodeConfig vc = nc;
    vc.test_mode = true;
    ServingNode node(vc);
    Rng rng = derive_rng(config.seed, kStreamRepetition + i);
    auto& r = victims[i];
    timed_submit(node, Request::text("victim", r.query), rng, config.think_time);
    SemanticAttackOptions options;
    options.think_time = config.think_time;
    r.report = run_attack(node, tree, max_budget, classifier, rng, config.search, options);
    if (r.report.claimed_hit && r.report.hit_outcome) {
      r.success = node.debug_truth(*r.report.hit_outcome).semantic_owner == "victim";
    }
  });

  // A shorter budget sees a prefix of the same probe sequence, so one run
  // at the largest budget scores every budget.
  SemanticExperimentResult out;
  auto add_row = [&](const std::string& category, std::size_t budget,
                     const std::vector<const SemanticVictimResult*>& part) {
    ReportRow row;
    row.experiment_id = config.id;
    row.attack = "semantic";
    row.strategy = "cluster_tree";
    row.regime = "probe_budget";
    row.category = category;
    row.budget = budget;
    row.victims = part.size();
    std::size_t wins = 0;
    std::vector<double> probes;
    for (const auto* r : part) {
      const bool within = r->success && r->report.probes_used <= budget;
      wins += within;
      probes.push_back(static_cast<double>(std::min(budget, r->report.probes_used)));
    }
    row.asr = fraction(wins, part.size());
    row.probes_mean = mean_std(probes).mean;
    out.rows.push_back(row);
  };
  for (std::size_t budget : config.probe_budgets) {
    for (std::size_t c = 0; c < spec.n_categories; ++c) {
      std::vector<const SemanticVictimResult*> part;
      for (const auto& r : victims) {
        if (r.category == c) part.push_back(&r);
      }
      add_row(legal_category_names()[c], budget, part);
    }
    std::vector<const SemanticVictimResult*> all;
    for (const auto& r : victims) all.push_back(&r);
    add_row("overall", budget, all);
  }
  out.victims = std::move(victims);
  return out;
}

std::vector<ReportRow> run_experiment(const ExperimentConfig& config) {
  return config.kind == ExperimentKind::prefix ? run_prefix_experiment(config).rows
                                               : run_semantic_experiment(config).rows;
}

double block_timing_gap(const ExperimentConfig& config) {
  const PromptTemplate tpl = config.prompt_template();
  const std::size_t n = tpl.total_tokens();
  return prefill_time_mean(n, 0, config.node.timing) -
         prefill_time_mean(n, tpl.block_size, config.node.timing);
}

std::vector<DefenseRow> run_defense_eval(const ExperimentConfig& config) {
  config.validate();
  const PromptTemplate tpl = config.prompt_template();
  const auto training = experiment_training_records(config);
  const CorpusModel model = train_corpus_model(training);
  auto victims = experiment_victims(config);
  victims.resize(std::min(victims.size(), config.defense_victims));

  struct Variant {
    std::string name;
    std::function<void(Defenses&)> apply;
  };
  const double sigma = config.delay_gap_multiple * block_timing_gap(config);
  const std::vector<Variant> variants = {
      {"none", [](Defenses&) {}},
      {"isolation", [](Defenses& d) { d.isolation = true; }},
      {"delay_injection", [sigma](Defenses& d) { d.delay_injection_sigma = sigma; }},
      {"constant_time", [](Defenses& d) { d.constant_time = true; }},
      {"no_streaming", [](Defenses& d) { d.streaming = false; }},
  };

  std::vector<DefenseRow> rows;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    ExperimentConfig ec = config;
    variants[vi].apply(ec.node.defenses);
    DefenseRow row;
    row.defense = variants[vi].name;

    const HitPredictor predictor = calibrate_predictor(ec);
    {
      ServingNode node(regime_node_config(ec, BudgetMode::ideal));
      Rng rng = derive_rng(config.seed, kStreamDefense * 100 + vi);
      CalibrationOptions options;
      options.think_time = config.think_time;
      const auto acc = evaluate_analyzer(node, predictor, config.defense_eval_draws, rng, options);
      row.block_accuracy = acc.block;
      row.field_accuracy = acc.field;
    }

    std::vector<PrefixVictimResult> results(victims.size());
    ec.oracle = OracleKind::analyzer;
    parallel_for(victims.size(), [&](std::size_t v) {
      results[v] = attack_victim(ec, tpl, model, predictor, victims[v], v, Strategy::naive_bayes,
                                 BudgetMode::all);
    });
    std::vector<const PrefixVictimResult*> part;
    for (const auto& r : results) part.push_back(&r);
    row.victims = victims.size();
    row.prefix_asr_all = prefix_row(ec, Strategy::naive_bayes, BudgetMode::all, part).asr_all;

    {
      const NodeConfig sc = semantic_node_config(ec);
      ServingNode node(sc);
      Rng rng = derive_rng(config.seed, kStreamDefense * 100 + 50 + vi);
      CalibrationOptions options;
      options.think_time = config.think_time;
      const auto prof = calibrate_semantic(node, config.semantic_calibration_reps, rng, options);
      try {
        const auto cls = fit_semantic_classifier(prof.hit, prof.miss);
        row.semantic_separable = true;
        ServingNode eval_node(sc);
        const auto test = calibrate_semantic(eval_node, config.semantic_calibration_reps, rng, options);
        std::size_t right = 0;
        for (double t : test.hit) right += cls.is_hit(t);
        for (double t : test.miss) right += !cls.is_hit(t);
        row.semantic_accuracy = fraction(right, test.hit.size() + test.miss.size());
      } catch (const OverlappingProfiles&) {
        row.semantic_separable = false;
        row.semantic_accuracy = 0.5;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cachelab

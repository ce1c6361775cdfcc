// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cachelab/cli.hpp"
#include "cachelab/config.hpp"
#include "cachelab/experiment.hpp"
#include "cachelab/prefix_cache.hpp"
#include "cachelab/report.hpp"
#include "cachelab/semantic_cache.hpp"
#include "cachelab/serving_node.hpp"
#include "cachelab/time_analyzer.hpp"
#include "cachelab/timing.hpp"

using namespace cachelab;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::filesystem::path work_dir() {
  const auto d = std::filesystem::temp_directory_path() / "cachelab_acceptance";
  std::filesystem::create_directories(d);
  return d;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cachelab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in;
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

NodeConfig calibration_node() {
  NodeConfig c;
  c.prefix.ttl = kForever;
  c.rate_limit_rpm = kUnlimitedRpm;
  return c;
}

// ---- 1 ----------------------------------------------------------------------

Verdict timing_law() {
  TimingParams tp = TimingParams{}.noise_free();
  tp.c0 = 0.0;
  tp.net_mu = 0.0;
  const double t400 = prefill_time_mean(400, 0, tp);
  const double t800 = prefill_time_mean(800, 0, tp);
  const double t1600 = prefill_time_mean(1600, 0, tp);
  Rng rng = derive_rng(1, 1);
  const bool sampled = prefill_time(800, 0, rng, tp) == t800;
  const bool ok = t800 == 4 * t400 && t1600 == 16 * t400 && sampled;
  return {ok, "ratios 1:" + fmt("%.12g", t800 / t400) + ":" + fmt("%.12g", t1600 / t400)};
}

// ---- 2 ----------------------------------------------------------------------

TokenSeq random_tokens(Rng& rng, std::size_t n) {
  TokenSeq s;
  for (std::size_t i = 0; i < n; ++i) s.tokens.push_back(100 + uniform_index(rng, 2));
  return s;
}

std::string random_phrase(Rng& rng) {
  static const char* words[] = {"file", "divorce", "landlord", "deposit", "refund", "wage",
                                "visa", "court", "tax", "my", "the", "for", "how", "can"};
  std::string s;
  const std::size_t n = 2 + uniform_index(rng, 5);
  for (std::size_t i = 0; i < n; ++i) s += std::string(i ? " " : "") + words[uniform_index(rng, 14)];
  return s;
}

Verdict cache_oracles() {
  Rng rng = derive_rng(2, 1);
  std::size_t prefix_bad = 0, semantic_bad = 0;
  const VirtualInstant t0{};
  for (int trial = 0; trial < 1000; ++trial) {
    PrefixCacheConfig cfg;
    cfg.block_size = 1 + uniform_index(rng, 4);
    cfg.ttl = kForever;
    cfg.verify_tokens = trial % 2 == 0;
    PrefixCache cache(cfg);
    std::vector<TokenSeq> stored;
    for (std::size_t i = 0, m = 1 + uniform_index(rng, 6); i < m; ++i) {
      stored.push_back(random_tokens(rng, uniform_index(rng, 20)));
      cache.insert_sequence(stored.back(), "u", t0);
    }
    const TokenSeq q = random_tokens(rng, uniform_index(rng, 20));
    const std::size_t B = cfg.block_size;
    std::size_t expected = 0;
    for (const auto& s : stored) {
      const std::size_t limit = std::min(s.size() / B, q.size() / B) * B;
      std::size_t l = 0;
      while (l < limit && s.tokens[l] == q.tokens[l]) ++l;
      expected = std::max(expected, l / B);
    }
    if (cache.match_prefix(q, "u", t0) != expected) ++prefix_bad;
  }
  for (int trial = 0; trial < 1000; ++trial) {
    SemanticCacheConfig cfg;
    cfg.threshold = 0.3 + 0.6 * uniform01(rng);
    SemanticCache cache(cfg);
    for (int i = 0; i < 8; ++i) cache.insert(random_phrase(rng), "r", t0);
    const std::string q = random_phrase(rng);
    double best = -2;
    std::string best_text;
    for (const auto& e : cache.entries()) {
      const double c = cosine(embed(q), embed(e.query_text));
      if (c > best) {
        best = c;
        best_text = e.query_text;
      }
    }
    const auto hit = cache.lookup(q, t0);
    const bool ok = best >= cfg.threshold ? hit && hit->query_text == best_text : !hit;
    if (!ok) ++semantic_bad;
  }
  return {prefix_bad == 0 && semantic_bad == 0,
          "prefix mismatches " + std::to_string(prefix_bad) + "/1000, semantic mismatches " +
              std::to_string(semantic_bad) + "/1000"};
}

// ---- 3, 4 -------------------------------------------------------------------

Verdict analyzer_accuracy(std::size_t n, double field_bound) {
  bool ok = false;
  std::string detail;
  for (PredictorKind kind : {PredictorKind::curve_bayes, PredictorKind::nearest_level,
                             PredictorKind::boosted_stumps}) {
    ServingNode node(calibration_node());
    Rng rng = derive_rng(3, n);
    const HitPredictor p = fit(calibrate(node, n, 10, 600, rng), kind);
    const AnalyzerAccuracy acc = evaluate_analyzer(node, p, 1000, rng);
    ok = ok || (acc.block >= 0.80 && acc.field >= field_bound);
    detail += std::string(detail.empty() ? "" : ", ") + std::string(predictor_kind_name(kind)) +
              " block " + fmt("%.3f", acc.block) + " field " + fmt("%.3f", acc.field);
  }
  return {ok, detail};
}

// ---- 5 ----------------------------------------------------------------------

Verdict semantic_classifier() {
  NodeConfig c = calibration_node();
  c.cache_mode = CacheMode::semantic;
  ServingNode node(c);
  Rng rng = derive_rng(5, 1);
  const SemanticProfiles cal = calibrate_semantic(node, 50, rng);
  const SemanticClassifier cls = fit_semantic_classifier(cal.hit, cal.miss);
  const SemanticProfiles draws = calibrate_semantic(node, 5000, rng);
  std::size_t correct = 0;
  for (double t : draws.hit) correct += cls.is_hit(t);
  for (double t : draws.miss) correct += !cls.is_hit(t);
  const double acc = static_cast<double>(correct) / 10000.0;

  c.defenses.constant_time = true;
  ServingNode flat(c);
  const SemanticProfiles ct = calibrate_semantic(flat, 50, rng);
  bool overlapping = false;
  try {
    fit_semantic_classifier(ct.hit, ct.miss);
  } catch (const OverlappingProfiles&) {
    overlapping = true;
  }
  return {acc >= 0.99 && overlapping, "accuracy " + fmt("%.4f", acc) + " on 10000 draws, constant time " +
                                          (overlapping ? "OverlappingProfiles" : "separable")};
}

// ---- 6, 7 -------------------------------------------------------------------

ExperimentConfig prefix_config() {
  ExperimentConfig c;
  c.id = "acceptance-prefix";
  c.seed = 2024;
  c.corpus.rho = 0.8;
  c.repetitions = 200;
  return c;
}

const ReportRow* find_row(const std::vector<ReportRow>& rows, std::string_view strategy,
                          std::string_view regime) {
  for (const auto& r : rows)
    if (r.strategy == strategy && r.regime == regime) return &r;
  return nullptr;
}

Verdict prefix_orderings(const std::filesystem::path& report) {
  const auto ini = work_dir() / "prefix.ini";
  write_text_file(ini, config_to_ini(prefix_config()));
  if (cli({"attack-prefix", "--config", ini.string(), "--out", report.string()}) != 0)
    return {false, "attack-prefix failed"};
  const auto rows = read_report(report);
  bool a = true, c = true, d = false;
  std::string detail;
  for (Strategy s : kAllStrategies) {
    const ReportRow* ideal = find_row(rows, strategy_name(s), "ideal");
    const ReportRow* all = find_row(rows, strategy_name(s), "all");
    if (!ideal || !all) return {false, "missing rows"};
    a = a && ideal->asr_all >= all->asr_all;
    c = c && ideal->asr_all <= ideal->asr_disease && all->asr_all <= all->asr_disease;
    d = d || all->asr_disease >= 0.4;
    detail += std::string(strategy_name(s)) + " ideal asr_all " + fmt("%.3f", ideal->asr_all) +
              " attempts " + fmt("%.1f", ideal->attempts_mean) + " | all asr_disease " +
              fmt("%.3f", all->asr_disease) + " asr_all " + fmt("%.3f", all->asr_all) + "; ";
  }
  const double nb = find_row(rows, "naive_bayes", "ideal")->attempts_mean;
  const double base = find_row(rows, "baseline", "ideal")->attempts_mean;
  const bool b = nb < base;
  detail += std::string("(a) ") + (a ? "ok" : "no") + " (b) " + (b ? "ok" : "no") + " (c) " +
            (c ? "ok" : "no") + " (d) " + (d ? "ok" : "no");
  return {a && b && c && d, detail};
}

Verdict perfect_oracle() {
  ExperimentConfig c = prefix_config();
  c.node.timing = c.node.timing.noise_free();
  c.oracle = OracleKind::debug_truth;
  c.regimes = {BudgetMode::ideal};
  const auto res = run_prefix_experiment(c);
  std::size_t reachable = 0, exact = 0, false_matches = 0;
  for (const auto& v : res.victims) {
    false_matches += v.false_matches;
    if (!v.reachable) continue;
    ++reachable;
    exact += std::all_of(v.correct.begin(), v.correct.end(), [](bool b) { return b; });
  }
  return {exact == reachable && false_matches == 0,
          std::to_string(exact) + "/" + std::to_string(reachable) + " reachable victim runs exact, " +
              std::to_string(false_matches) + " false matches over " + std::to_string(res.victims.size()) +
              " victim runs"};
}

// ---- 8 ----------------------------------------------------------------------

Verdict semantic_attack(const std::filesystem::path& report) {
  ExperimentConfig c;
  c.id = "acceptance-semantic";
  c.kind = ExperimentKind::semantic;
  c.seed = 2024;
  const auto ini = work_dir() / "semantic.ini";
  write_text_file(ini, config_to_ini(c));
  if (cli({"attack-semantic", "--config", ini.string(), "--out", report.string()}) != 0)
    return {false, "attack-semantic failed"};
  const auto rows = read_report(report);
  std::map<std::string, std::vector<double>> by_cat;
  double overall = 0, worst = 1;
  std::string worst_cat;
  for (const auto& r : rows) {
    by_cat[r.category].push_back(r.asr);
    if (r.budget != 500) continue;
    if (r.category == "overall") {
      overall = r.asr;
    } else if (r.asr < worst) {
      worst = r.asr;
      worst_cat = r.category;
    }
  }
  bool monotone = true;
  for (const auto& [_, v] : by_cat) monotone = monotone && std::is_sorted(v.begin(), v.end());
  const auto& ov = by_cat["overall"];
  std::string curve;
  for (double v : ov) curve += std::string(curve.empty() ? "" : " ") + fmt("%.3f", v);
  return {overall >= 0.70 && worst >= 0.43 && monotone && ov.size() == 3,
          "overall ASR by budget 50/200/500: " + curve + ", weakest category " + worst_cat + " " +
              fmt("%.3f", worst)};
}

// ---- 9 ----------------------------------------------------------------------

Verdict defenses() {
  ExperimentConfig c = prefix_config();
  const auto rows = run_defense_eval(c);
  double iso = -1, delay = -1;
  for (const auto& r : rows) {
    if (r.defense == "isolation") iso = r.prefix_asr_all;
    if (r.defense == "delay_injection") delay = r.field_accuracy;
  }

  NodeConfig nc;
  nc.rate_limit_rpm = 5000;
  nc.test_mode = true;
  ServingNode node(nc);
  Rng rng = derive_rng(9, 1);
  const TokenSeq p = random_tokens(rng, 32);
  bool accepted = true;
  for (int i = 0; i < 5000; ++i)
    accepted = accepted && std::holds_alternative<RequestOutcome>(node.submit(Request{"a", p, 1}, rng));
  const PrefixCacheStats before = node.prefix_stats();
  const bool rejected = std::holds_alternative<RateLimited>(node.submit(Request{"a", p, 1}, rng));
  const bool unchanged = node.prefix_stats() == before;
  const bool within_minute = node.now() - VirtualInstant{} < kRateWindow;
  const bool limiter = accepted && rejected && unchanged && within_minute;

  return {iso == 0.0 && delay >= 0 && delay <= 0.6 && limiter,
          "isolation asr_all " + fmt("%.3f", iso) + ", delay-injection field accuracy " +
              fmt("%.3f", delay) + ", limiter " + (limiter ? "rejects request 5001 with stats unchanged" : "failed")};
}

// ---- 10 ---------------------------------------------------------------------

Verdict determinism(const std::filesystem::path& prefix_report,
                    const std::filesystem::path& semantic_report) {
  const auto p2 = work_dir() / "prefix_again.csv";
  const auto s2 = work_dir() / "semantic_again.csv";
  if (cli({"attack-prefix", "--config", (work_dir() / "prefix.ini").string(), "--out", p2.string()}) != 0 ||
      cli({"attack-semantic", "--config", (work_dir() / "semantic.ini").string(), "--out", s2.string()}) != 0)
    return {false, "rerun failed"};
  const bool p = read_text_file(prefix_report) == read_text_file(p2);
  const bool s = read_text_file(semantic_report) == read_text_file(s2);
  return {p && s, std::string("prefix report ") + (p ? "identical" : "differs") + ", semantic report " +
                      (s ? "identical" : "differs")};
}

}  // namespace

int main() {
  const auto prefix_report = work_dir() / "prefix.csv";
  const auto semantic_report = work_dir() / "semantic.csv";
  struct Criterion {
    int id;
    double limit_s;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, 1, timing_law},
      {2, 10, cache_oracles},
      {3, 60, [] { return analyzer_accuracy(800, 0.95); }},
      {4, 120, [] { return analyzer_accuracy(1600, 0.98); }},
      {5, 30, semantic_classifier},
      {6, 600, [&] { return prefix_orderings(prefix_report); }},
      {7, 120, perfect_oracle},
      {8, 600, [&] { return semantic_attack(semantic_report); }},
      {9, 120, defenses},
      {10, 1200, [&] { return determinism(prefix_report, semantic_report); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.limit_s;
    const bool pass = v.pass && in_time;
    failures += !pass;
    std::printf("criterion %d: %s  %s  [%.2f s of %.0f s]\n", c.id, pass ? "PASS" : "FAIL",
                v.detail.c_str(), secs, c.limit_s);
    std::fflush(stdout);
  }
  return failures;
}

#include "cachelab/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cachelab/errors.hpp"
#include "cachelab/report.hpp"

namespace cachelab {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = s.find(',', pos);
    out.push_back(trim(s.substr(pos, comma == std::string_view::npos ? s.npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <class T>
std::string join_list(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += f(xs[i]);
  }
  return out;
}

struct BadValue {};

std::uint64_t to_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw BadValue{};
  return v;
}

std::size_t to_size(std::string_view s) {
  if (s == "unlimited") return SIZE_MAX;
  return static_cast<std::size_t>(to_u64(s));
}

std::string from_size(std::size_t v) { return v == SIZE_MAX ? "unlimited" : std::to_string(v); }

int to_int(std::string_view s) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw BadValue{};
  return v;
}

double to_double(std::string_view s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw BadValue{};
  return v;
}

bool to_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw BadValue{};
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

/// Seconds, or "forever".
VirtualDuration to_duration(std::string_view s) {
  if (s == "forever") return kForever;
  const double v = to_double(s);
  if (!(v >= 0.0)) throw BadValue{};
  return from_seconds(v);
}

std::string from_duration(VirtualDuration d) {
  return d == kForever ? "forever" : format_double(to_seconds(d));
}

struct Key {
  std::string section;
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define CL_KEY(section, name, getter, setter)                                   \
  Key {                                                                          \
    section, name, [](const ExperimentConfig& c) { return getter; },            \
        [](ExperimentConfig& c, std::string_view v) { setter; }                 \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      CL_KEY("experiment", "id", c.id, c.id = std::string(v)),
      CL_KEY("experiment", "seed", std::to_string(c.seed), c.seed = to_u64(v)),
      CL_KEY("experiment", "kind", std::string(experiment_kind_name(c.kind)),
             c.kind = parse_experiment_kind(v)),
      CL_KEY("experiment", "repetitions", std::to_string(c.repetitions), c.repetitions = to_size(v)),
      CL_KEY("experiment", "think_time_s", from_duration(c.think_time), c.think_time = to_duration(v)),
      CL_KEY("experiment", "oracle", std::string(oracle_kind_name(c.oracle)),
             c.oracle = parse_oracle_kind(v)),

      CL_KEY("node", "cache_mode", std::string(cache_mode_name(c.node.cache_mode)),
             c.node.cache_mode = parse_cache_mode(v)),
      CL_KEY("node", "rate_limit_rpm", from_size(c.node.rate_limit_rpm),
             c.node.rate_limit_rpm = to_size(v)),
      CL_KEY("node", "test_mode", from_bool(c.node.test_mode), c.node.test_mode = to_bool(v)),

      CL_KEY("prefix_cache", "block_size", std::to_string(c.node.prefix.block_size),
             c.node.prefix.block_size = c.block_size = to_size(v)),
      CL_KEY("prefix_cache", "capacity_tokens", from_size(c.node.prefix.capacity_tokens),
             c.node.prefix.capacity_tokens = to_size(v)),
      CL_KEY("prefix_cache", "ttl_s", from_duration(c.node.prefix.ttl),
             c.node.prefix.ttl = to_duration(v)),
      CL_KEY("prefix_cache", "ttl_mode",
             std::string(c.node.prefix.ttl_mode == TtlMode::sliding ? "sliding" : "fixed_from_insert"),
             if (v == "sliding") c.node.prefix.ttl_mode = TtlMode::sliding;
             else if (v == "fixed_from_insert") c.node.prefix.ttl_mode = TtlMode::fixed_from_insert;
             else throw BadValue{}),
      CL_KEY("prefix_cache", "isolation", from_bool(c.node.prefix.isolation),
             c.node.prefix.isolation = to_bool(v)),
      CL_KEY("prefix_cache", "verify_tokens", from_bool(c.node.prefix.verify_tokens),
             c.node.prefix.verify_tokens = to_bool(v)),

      CL_KEY("semantic_cache", "threshold", format_double(c.node.semantic.threshold),
             c.node.semantic.threshold = to_double(v)),
      CL_KEY("semantic_cache", "capacity_entries", from_size(c.node.semantic.capacity_entries),
             c.node.semantic.capacity_entries = to_size(v)),
      CL_KEY("semantic_cache", "ttl_s", from_duration(c.node.semantic.ttl),
             c.node.semantic.ttl = to_duration(v)),
      CL_KEY("semantic_cache", "isolation", from_bool(c.node.semantic.isolation),
             c.node.semantic.isolation = to_bool(v)),
      CL_KEY("semantic_cache", "dim", std::to_string(c.node.semantic.dim),
             c.node.semantic.dim = to_size(v)),

      CL_KEY("timing", "c0", format_double(c.node.timing.c0), c.node.timing.c0 = to_double(v)),
      CL_KEY("timing", "c1", format_double(c.node.timing.c1), c.node.timing.c1 = to_double(v)),
      CL_KEY("timing", "tpot", format_double(c.node.timing.tpot), c.node.timing.tpot = to_double(v)),
      CL_KEY("timing", "net_mu", format_double(c.node.timing.net_mu),
             c.node.timing.net_mu = to_double(v)),
      CL_KEY("timing", "net_sigma", format_double(c.node.timing.net_sigma),
             c.node.timing.net_sigma = to_double(v)),
      CL_KEY("timing", "noise_rel", format_double(c.node.timing.noise_rel),
             c.node.timing.noise_rel = to_double(v)),
      CL_KEY("timing", "outlier_p", format_double(c.node.timing.outlier_p),
             c.node.timing.outlier_p = to_double(v)),
      CL_KEY("timing", "outlier_scale", format_double(c.node.timing.outlier_scale),
             c.node.timing.outlier_scale = to_double(v)),

      CL_KEY("defenses", "isolation", from_bool(c.node.defenses.isolation),
             c.node.defenses.isolation = to_bool(v)),
      CL_KEY("defenses", "delay_injection_sigma", format_double(c.node.defenses.delay_injection_sigma),
             c.node.defenses.delay_injection_sigma = to_double(v)),
      CL_KEY("defenses", "constant_time", from_bool(c.node.defenses.constant_time),
             c.node.defenses.constant_time = to_bool(v)),
      CL_KEY("defenses", "streaming", from_bool(c.node.defenses.streaming),
             c.node.defenses.streaming = to_bool(v)),

      CL_KEY("corpus", "seed", std::to_string(c.corpus.seed), c.corpus.seed = to_u64(v)),
      CL_KEY("corpus", "n_records", std::to_string(c.corpus.n_records), c.corpus.n_records = to_size(v)),
      CL_KEY("corpus", "n_diseases", std::to_string(c.corpus.n_diseases),
             c.corpus.n_diseases = to_size(v)),
      CL_KEY("corpus", "symptoms_per_disease", std::to_string(c.corpus.symptoms_per_disease),
             c.corpus.symptoms_per_disease = to_size(v)),
      CL_KEY("corpus", "rho", format_double(c.corpus.rho), c.corpus.rho = to_double(v)),
      CL_KEY("corpus", "n_durations", std::to_string(c.corpus.n_durations),
             c.corpus.n_durations = to_size(v)),
      CL_KEY("corpus", "min_age", std::to_string(c.corpus.min_age), c.corpus.min_age = to_int(v)),
      CL_KEY("corpus", "max_age", std::to_string(c.corpus.max_age), c.corpus.max_age = to_int(v)),

      CL_KEY("analyzer", "kind", std::string(predictor_kind_name(c.analyzer)),
             c.analyzer = parse_predictor_kind(v)),
      CL_KEY("analyzer", "calibration_budget", std::to_string(c.calibration_budget),
             c.calibration_budget = to_size(v)),
      CL_KEY("analyzer", "calibration_reps", std::to_string(c.calibration_reps),
             c.calibration_reps = to_size(v)),

      CL_KEY("attack", "strategies",
             join_list<Strategy>(c.strategies, [](const Strategy& s) { return std::string(strategy_name(s)); }),
             c.strategies.clear();
             for (const auto& s : split_list(v)) c.strategies.push_back(parse_strategy(s))),
      CL_KEY("attack", "regimes",
             join_list<BudgetMode>(c.regimes,
                                   [](const BudgetMode& m) { return std::string(budget_mode_name(m)); }),
             c.regimes.clear();
             for (const auto& s : split_list(v)) c.regimes.push_back(parse_budget_mode(s))),

      CL_KEY("budget", "max_tokens", from_size(c.all_budget.max_tokens),
             c.all_budget.max_tokens = to_size(v)),
      CL_KEY("budget", "max_time_s", from_duration(c.all_budget.max_time),
             c.all_budget.max_time = to_duration(v)),
      CL_KEY("budget", "max_rpm", from_size(c.all_budget.max_rpm), c.all_budget.max_rpm = to_size(v)),
      CL_KEY("budget", "max_rate_limited_streak", std::to_string(c.all_budget.max_rate_limited_streak),
             c.all_budget.max_rate_limited_streak = to_size(v)),

      CL_KEY("semantic_corpus", "seed", std::to_string(c.semantic_corpus.seed),
             c.semantic_corpus.seed = to_u64(v)),
      CL_KEY("semantic_corpus", "n_categories", std::to_string(c.semantic_corpus.n_categories),
             c.semantic_corpus.n_categories = to_size(v)),
      CL_KEY("semantic_corpus", "records_per_category",
             join_list<std::size_t>(c.semantic_corpus.records_per_category,
                                    [](const std::size_t& n) { return std::to_string(n); }),
             c.semantic_corpus.records_per_category.clear();
             for (const auto& s : split_list(v)) c.semantic_corpus.records_per_category.push_back(to_size(s))),
      CL_KEY("semantic_corpus", "style_jitter", format_double(c.semantic_corpus.style_jitter),
             c.semantic_corpus.style_jitter = to_double(v)),
      CL_KEY("semantic_corpus", "canonical_min", std::to_string(c.semantic_corpus.canonical_min),
             c.semantic_corpus.canonical_min = to_size(v)),
      CL_KEY("semantic_corpus", "canonical_max", std::to_string(c.semantic_corpus.canonical_max),
             c.semantic_corpus.canonical_max = to_size(v)),
      CL_KEY("semantic_corpus", "canonical_divisor", std::to_string(c.semantic_corpus.canonical_divisor),
             c.semantic_corpus.canonical_divisor = to_size(v)),
      CL_KEY("semantic_corpus", "zipf_s", format_double(c.semantic_corpus.zipf_s),
             c.semantic_corpus.zipf_s = to_double(v)),

      CL_KEY("semantic_attack", "victims_per_category", std::to_string(c.victims_per_category),
             c.victims_per_category = to_size(v)),
      CL_KEY("semantic_attack", "probe_budgets",
             join_list<std::size_t>(c.probe_budgets, [](const std::size_t& n) { return std::to_string(n); }),
             c.probe_budgets.clear();
             for (const auto& s : split_list(v)) c.probe_budgets.push_back(to_size(s))),
      CL_KEY("semantic_attack", "tree_leaves", std::to_string(c.tree_leaves), c.tree_leaves = to_size(v)),
      CL_KEY("semantic_attack", "w_rep", format_double(c.search.w_rep), c.search.w_rep = to_double(v)),
      CL_KEY("semantic_attack", "w_hist", format_double(c.search.w_hist), c.search.w_hist = to_double(v)),
      CL_KEY("semantic_attack", "w_clu", format_double(c.search.w_clu), c.search.w_clu = to_double(v)),
      CL_KEY("semantic_attack", "diversity_threshold", format_double(c.search.diversity_threshold),
             c.search.diversity_threshold = to_double(v)),
      CL_KEY("semantic_attack", "explore_p", format_double(c.search.explore_p),
             c.search.explore_p = to_double(v)),
      CL_KEY("semantic_attack", "novelty_u", format_double(c.search.novelty_u),
             c.search.novelty_u = to_double(v)),
      CL_KEY("semantic_attack", "descent",
             std::string(c.search.descent == DescentMode::sample ? "sample" : "greedy"),
             if (v == "sample") c.search.descent = DescentMode::sample;
             else if (v == "greedy") c.search.descent = DescentMode::greedy;
             else throw BadValue{}),
      CL_KEY("semantic_attack", "candidates_per_leaf", std::to_string(c.search.candidates_per_leaf),
             c.search.candidates_per_leaf = to_size(v)),
      CL_KEY("semantic_attack", "calibration_reps", std::to_string(c.semantic_calibration_reps),
             c.semantic_calibration_reps = to_size(v)),

      CL_KEY("defense_eval", "victims", std::to_string(c.defense_victims),
             c.defense_victims = to_size(v)),
      CL_KEY("defense_eval", "eval_draws", std::to_string(c.defense_eval_draws),
             c.defense_eval_draws = to_size(v)),
      CL_KEY("defense_eval", "delay_gap_multiple", format_double(c.delay_gap_multiple),
             c.delay_gap_multiple = to_double(v)),
  };
  return k;
}

#undef CL_KEY

const Key* find_key(std::string_view section, std::string_view name) {
  for (const auto& k : keys()) {
    if (k.section == section && k.name == name) return &k;
  }
  return nullptr;
}

}  // namespace

ExperimentConfig parse_config(std::string_view ini_text) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(ini_text)};
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigInvalid(std::string("config syntax: ") + e.what());
  }

  ExperimentConfig c;
  bool versioned = false;
  for (const auto& [name, node] : tree) {
    if (node.empty() && name != "config_version") {
      const bool known_section = std::any_of(keys().begin(), keys().end(),
                                             [&](const Key& k) { return k.section == name; });
      if (!known_section || !trim(node.data()).empty())
        throw ConfigInvalid("unknown top-level key: " + name);
      continue;
    }
    if (node.empty()) {
      const std::string v = trim(node.data());
      if (v != std::to_string(kConfigVersion)) {
        throw ConfigInvalid("unsupported config_version " + v + " (expected " +
                            std::to_string(kConfigVersion) + ")");
      }
      versioned = true;
      continue;
    }
    for (const auto& [key, value] : node) {
      const Key* k = find_key(name, key);
      if (!k) throw ConfigInvalid("unknown config key [" + name + "] " + key);
      try {
        k->set(c, trim(value.data()));
      } catch (const BadValue&) {
        throw ConfigInvalid("bad value for [" + name + "] " + key + ": '" + value.data() + "'");
      } catch (const ConfigInvalid&) {
        throw;
      } catch (const Error& e) {
        throw ConfigInvalid("bad value for [" + name + "] " + key + ": " + e.what());
      }
    }
  }
  if (!versioned) throw ConfigInvalid("config_version is required");
  try {
    c.validate();
  } catch (const ConfigInvalid&) {
    throw;
  } catch (const Error& e) {
    throw ConfigInvalid(e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigInvalid(std::string("config file: ") + e.what());
  }
  return parse_config(text);
}

std::string config_to_ini(const ExperimentConfig& config) {
  std::string out = "config_version = " + std::to_string(kConfigVersion) + "\n";
  std::string section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      section = k.section;
      out += "\n[" + section + "]\n";
    }
    out += k.name + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace cachelab

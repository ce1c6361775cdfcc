#include "cachelab/cli.hpp"

#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cachelab/config.hpp"
#include "cachelab/errors.hpp"
#include "cachelab/experiment.hpp"
#include "cachelab/report.hpp"

namespace cachelab {

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string jsonl_path;
};

void add_common(CLI::App* sub, CommonOptions& o, bool jsonl) {
  sub->add_option("--config", o.config_path, "INI configuration file");
  sub->add_option("--seed", o.seed, "Override [experiment] seed");
  sub->add_option("--out", o.out_path, "Output file (default: standard output)");
  if (jsonl) sub->add_option("--jsonl", o.jsonl_path, "Also write rows as JSON lines to this file");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

void emit(const CommonOptions& o, std::string_view text, std::ostream& out) {
  if (o.out_path.empty()) {
    out << text;
  } else {
    write_text_file(o.out_path, text);
  }
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

std::string handle_protocol_line(ServingNode& node, std::string_view line, Rng& rng) {
  std::istringstream in{std::string(line)};
  std::string verb;
  in >> verb;
  try {
    if (verb == "SUBMIT") {
      std::string user;
      std::size_t gen = 0;
      if (!(in >> user >> gen)) return "ERR usage: SUBMIT <user> <gen_tokens> <prompt>";
      std::string prompt;
      std::getline(in >> std::ws, prompt);
      const auto result = node.submit(Request::text(user, prompt, gen), rng);
      if (const auto* limited = std::get_if<RateLimited>(&result)) {
        return "LIMITED " + fmt(to_seconds(limited->retry_after - node.now()));
      }
      const auto& o = std::get<RequestOutcome>(result);
      node.advance_clock(from_seconds(o.total_latency));
      return "OK " + fmt(o.ttft) + " " + fmt(o.total_latency) + " " + o.response_text;
    }
    if (verb == "ADVANCE") {
      double s = 0.0;
      if (!(in >> s)) return "ERR usage: ADVANCE <seconds>";
      node.advance_clock(from_seconds(s));
      return "OK " + fmt(to_seconds(node.now()));
    }
    if (verb == "NOW") return "OK " + fmt(to_seconds(node.now()));
  } catch (const Error& e) {
    return std::string("ERR ") + e.what();
  }
  return "ERR unknown command '" + verb + "'";
}

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Timing side-channel experiments against simulated LLM serving caches", "cachelab"};
  app.require_subcommand(1);

  CommonOptions calib_o, prefix_o, semantic_o, defense_o, serve_o;
  std::string kind_name;
  auto* calib = app.add_subcommand("calibrate", "Calibrate the timing analyzer and emit predictor JSON");
  add_common(calib, calib_o, false);
  calib->add_option("--kind", kind_name, "Predictor kind: curve_bayes, nearest_level or boosted_stumps");

  auto* prefix = app.add_subcommand("attack-prefix", "Run the prefix-cache input reconstruction experiment");
  add_common(prefix, prefix_o, true);
  auto* semantic = app.add_subcommand("attack-semantic", "Run the semantic-cache query inference experiment");
  add_common(semantic, semantic_o, true);
  auto* defense = app.add_subcommand("defend-eval", "Sweep defenses and emit a comparison table");
  add_common(defense, defense_o, true);

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Aggregate report CSVs into a summary table");
  report->add_option("inputs", report_inputs, "Report CSV files")->required();
  report->add_option("--out", report_out, "Output file (default: standard output)");

  auto* serve = app.add_subcommand("serve", "Line protocol over standard input against one node");
  serve->add_option("--config", serve_o.config_path, "INI configuration file");
  serve->add_option("--seed", serve_o.seed, "Override [experiment] seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*calib) {
      ExperimentConfig c = resolve_config(calib_o);
      if (!kind_name.empty()) c.analyzer = parse_predictor_kind(kind_name);
      emit(calib_o, predictor_to_json(calibrate_predictor(c)) + "\n", out);
    } else if (*prefix || *semantic) {
      const CommonOptions& o = *prefix ? prefix_o : semantic_o;
      ExperimentConfig c = resolve_config(o);
      c.kind = *prefix ? ExperimentKind::prefix : ExperimentKind::semantic;
      const auto rows = run_experiment(c);
      emit(o, report_to_csv(rows), out);
      if (!o.jsonl_path.empty()) write_report_jsonl(rows, o.jsonl_path);
    } else if (*defense) {
      const ExperimentConfig c = resolve_config(defense_o);
      const auto rows = run_defense_eval(c);
      emit(defense_o, defense_report_to_csv(rows), out);
      if (!defense_o.jsonl_path.empty()) write_defense_report_jsonl(rows, defense_o.jsonl_path);
    } else if (*report) {
      std::vector<ReportRow> rows;
      for (const auto& path : report_inputs) {
        auto part = read_report(path);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      CommonOptions o;
      o.out_path = report_out;
      emit(o, summarize_reports(rows), out);
    } else if (*serve) {
      const ExperimentConfig c = resolve_config(serve_o);
      ServingNode node(c.node);
      Rng rng = derive_rng(c.seed, 0);
      for (std::string line; std::getline(in, line);) {
        if (line == "QUIT") break;
        if (line.empty()) continue;
        out << handle_protocol_line(node, line, rng) << '\n' << std::flush;
      }
    }
  } catch (const ConfigInvalid& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace cachelab

#include "cachelab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "cachelab/errors.hpp"

namespace cachelab {

namespace {

using Json = nlohmann::ordered_json;

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ProtocolError("malformed number in report: '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ProtocolError("malformed count in report: '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ProtocolError("malformed flag in report: '" + std::string(s) + "'");
}

// One accessor per column keeps the header, writer, reader and JSON mirror in step.
template <class Row>
struct Column {
  std::string name;
  std::function<std::string(const Row&)> get;
  std::function<void(Row&, std::string_view)> set;
  std::function<Json(const Row&)> json;
};

template <class Row>
Column<Row> text_column(std::string name, std::string Row::*m) {
  return {std::move(name), [m](const Row& r) { return r.*m; },
          [m](Row& r, std::string_view s) { r.*m = std::string(s); },
          [m](const Row& r) { return Json(r.*m); }};
}

template <class Row>
Column<Row> size_column(std::string name, std::size_t Row::*m) {
  return {std::move(name), [m](const Row& r) { return std::to_string(r.*m); },
          [m](Row& r, std::string_view s) { r.*m = parse_size(s); },
          [m](const Row& r) { return Json(r.*m); }};
}

template <class Row>
Column<Row> double_column(std::string name, double Row::*m) {
  return {std::move(name), [m](const Row& r) { return format_double(r.*m); },
          [m](Row& r, std::string_view s) { r.*m = parse_double(s); },
          [m](const Row& r) { return Json(r.*m); }};
}

template <class Row>
Column<Row> bool_column(std::string name, bool Row::*m) {
  return {std::move(name), [m](const Row& r) { return std::string(r.*m ? "true" : "false"); },
          [m](Row& r, std::string_view s) { r.*m = parse_bool(s); },
          [m](const Row& r) { return Json(r.*m); }};
}

const std::vector<Column<ReportRow>>& report_columns() {
  using R = ReportRow;
  static const std::vector<Column<R>> cols = {
      text_column<R>("experiment_id", &R::experiment_id),
      text_column<R>("attack", &R::attack),
      text_column<R>("strategy", &R::strategy),
      text_column<R>("regime", &R::regime),
      text_column<R>("category", &R::category),
      size_column<R>("budget", &R::budget),
      size_column<R>("victims", &R::victims),
      double_column<R>("asr_disease", &R::asr_disease),
      double_column<R>("asr_symptoms", &R::asr_symptoms),
      double_column<R>("asr_all", &R::asr_all),
      double_column<R>("asr", &R::asr),
      double_column<R>("attempts_mean", &R::attempts_mean),
      double_column<R>("attempts_std", &R::attempts_std),
      double_column<R>("tokens_mean", &R::tokens_mean),
      double_column<R>("tokens_std", &R::tokens_std),
      double_column<R>("time_mean_s", &R::time_mean_s),
      double_column<R>("time_std_s", &R::time_std_s),
      double_column<R>("probes_mean", &R::probes_mean),
  };
  return cols;
}

const std::vector<Column<DefenseRow>>& defense_columns() {
  using R = DefenseRow;
  static const std::vector<Column<R>> cols = {
      text_column<R>("defense", &R::defense),
      double_column<R>("block_accuracy", &R::block_accuracy),
      double_column<R>("field_accuracy", &R::field_accuracy),
      size_column<R>("victims", &R::victims),
      double_column<R>("prefix_asr_all", &R::prefix_asr_all),
      bool_column<R>("semantic_separable", &R::semantic_separable),
      double_column<R>("semantic_accuracy", &R::semantic_accuracy),
  };
  return cols;
}

template <class Row>
std::vector<std::string> header_of(const std::vector<Column<Row>>& cols) {
  std::vector<std::string> h;
  for (const auto& c : cols) h.push_back(c.name);
  return h;
}

template <class Row>
std::string rows_to_csv(const std::vector<Column<Row>>& cols, std::span<const Row> rows) {
  std::string out;
  auto line = [&](auto cell) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out += ',';
      out += csv_escape(cell(i));
    }
    out += '\n';
  };
  line([&](std::size_t i) { return cols[i].name; });
  for (const auto& r : rows) line([&](std::size_t i) { return cols[i].get(r); });
  return out;
}

template <class Row>
std::vector<Row> rows_from_csv(const std::vector<Column<Row>>& cols, std::string_view text) {
  const auto records = parse_csv(text);
  if (records.empty()) throw ProtocolError("report has no header");
  if (records[0] != header_of(cols)) throw ProtocolError("report header does not match");
  std::vector<Row> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != cols.size()) {
      throw ProtocolError("report line " + std::to_string(r + 1) + " has " +
                          std::to_string(records[r].size()) + " fields");
    }
    Row row;
    for (std::size_t i = 0; i < cols.size(); ++i) cols[i].set(row, records[r][i]);
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class Row>
std::string rows_to_jsonl(const std::vector<Column<Row>>& cols, std::span<const Row> rows) {
  std::string out;
  for (const auto& r : rows) {
    Json j = Json::object();
    for (const auto& c : cols) j[c.name] = c.json(r);
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace

const std::vector<std::string>& report_header() {
  static const auto h = header_of(report_columns());
  return h;
}

const std::vector<std::string>& defense_report_header() {
  static const auto h = header_of(defense_columns());
  return h;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c != '"') {
        field += c;
      } else if (i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else {
        quoted = false;
      }
      continue;
    }
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw ProtocolError("unterminated quoted CSV field");
  if (any) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw DomainError("cannot format number");
  return std::string(buf, ptr);
}

std::string report_to_csv(std::span<const ReportRow> rows) {
  return rows_to_csv(report_columns(), rows);
}

std::vector<ReportRow> report_from_csv(std::string_view text) {
  return rows_from_csv(report_columns(), text);
}

std::string defense_report_to_csv(std::span<const DefenseRow> rows) {
  return rows_to_csv(defense_columns(), rows);
}

std::vector<DefenseRow> defense_report_from_csv(std::string_view text) {
  return rows_from_csv(defense_columns(), text);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

void write_report(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  write_text_file(path, report_to_csv(rows));
}

std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  return report_from_csv(read_text_file(path));
}

void write_report_jsonl(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  write_text_file(path, rows_to_jsonl(report_columns(), rows));
}

void write_defense_report(std::span<const DefenseRow> rows, const std::filesystem::path& path) {
  write_text_file(path, defense_report_to_csv(rows));
}

void write_defense_report_jsonl(std::span<const DefenseRow> rows,
                                const std::filesystem::path& path) {
  write_text_file(path, rows_to_jsonl(defense_columns(), rows));
}

std::string summarize_reports(std::span<const ReportRow> rows) {
  std::vector<std::vector<std::string>> table;
  auto fixed = [](double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return std::string(buf);
  };
  auto pm = [&](double m, double s, int digits) { return fixed(m, digits) + " +- " + fixed(s, digits); };

  std::vector<const ReportRow*> prefix, semantic;
  for (const auto& r : rows) (r.attack == "semantic" ? semantic : prefix).push_back(&r);

  std::string out;
  auto emit = [&](const std::vector<std::string>& head) {
    std::vector<std::size_t> width(head.size());
    for (std::size_t i = 0; i < head.size(); ++i) width[i] = head[i].size();
    for (const auto& row : table) {
      for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        out += i ? "  " : "";
        out += cells[i];
        if (i + 1 < cells.size()) out += std::string(width[i] - cells[i].size(), ' ');
      }
      out += '\n';
    };
    line(head);
    std::vector<std::string> rule;
    for (auto w : width) rule.emplace_back(w, '-');
    line(rule);
    for (const auto& row : table) line(row);
    table.clear();
  };

  if (!prefix.empty()) {
    for (const auto* r : prefix) {
      table.push_back({r->experiment_id, r->strategy, r->regime, std::to_string(r->victims),
                       fixed(r->asr_disease, 3), fixed(r->asr_symptoms, 3), fixed(r->asr_all, 3),
                       pm(r->attempts_mean, r->attempts_std, 1), pm(r->tokens_mean, r->tokens_std, 0),
                       pm(r->time_mean_s, r->time_std_s, 1)});
    }
    emit({"experiment", "strategy", "regime", "victims", "asr_disease", "asr_symptoms", "asr_all",
          "attempts", "tokens", "time_s"});
  }
  if (!semantic.empty()) {
    if (!out.empty()) out += '\n';
    for (const auto* r : semantic) {
      table.push_back({r->experiment_id, r->category, std::to_string(r->budget),
                       std::to_string(r->victims), fixed(r->asr, 3), fixed(r->probes_mean, 1)});
    }
    emit({"experiment", "category", "budget", "victims", "asr", "probes"});
  }
  return out;
}

}  // namespace cachelab

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cachelab/experiment.hpp"

namespace cachelab {

/// Column order of report CSV files.
const std::vector<std::string>& report_header();
const std::vector<std::string>& defense_report_header();

/// RFC 4180 style: fields holding commas, quotes or newlines are quoted.
std::string csv_escape(std::string_view field);
/// Splits CSV text into records; throws ProtocolError on an unterminated quote.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

std::string report_to_csv(std::span<const ReportRow> rows);
std::vector<ReportRow> report_from_csv(std::string_view text);
/// Throws IoError when the file cannot be written or read.
void write_report(std::span<const ReportRow> rows, const std::filesystem::path& path);
std::vector<ReportRow> read_report(const std::filesystem::path& path);
/// One JSON object per row, keys as in the CSV header.
void write_report_jsonl(std::span<const ReportRow> rows, const std::filesystem::path& path);

std::string defense_report_to_csv(std::span<const DefenseRow> rows);
std::vector<DefenseRow> defense_report_from_csv(std::string_view text);
void write_defense_report(std::span<const DefenseRow> rows, const std::filesystem::path& path);
void write_defense_report_jsonl(std::span<const DefenseRow> rows, const std::filesystem::path& path);

/// Fixed-width text table of the rows, prefix rows first.
std::string summarize_reports(std::span<const ReportRow> rows);

/// Whole-file helpers shared by the CLI; both throw IoError.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace cachelab

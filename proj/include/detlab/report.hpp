#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace detlab {

// Named metric rows with run provenance. Emission is byte-deterministic for
// a fixed table: values are written with 17 significant digits (lossless for
// doubles) and no timestamps.
struct ReportTable {
  std::string title;
  std::vector<std::string> columns;  // value columns, excluding the label
  struct Row {
    std::string label;
    std::vector<double> values;
  };
  std::vector<Row> rows;

  std::uint64_t seed = 0;
  std::string config_hash;
  std::string config_json;  // resolved config, for exact re-runs

  void validate() const;  // finite cells, consistent widths
};

enum class ReportFormat { kCsv, kMarkdown, kJson };

ReportFormat report_format_from_string(const std::string& s);

std::string render_report(const ReportTable& table, ReportFormat format);
void write_report(const ReportTable& table, ReportFormat format,
                  const std::string& path);

// Reads back a CSV produced by write_report (labels and values; provenance
// comments are parsed into seed/config_hash, config_json is not embedded in
// CSV).
ReportTable parse_report_csv(const std::string& path);

}  // namespace detlab

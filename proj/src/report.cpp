#include "detlab/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "detlab/errors.hpp"

namespace detlab {

namespace {

std::string fmt_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

void check_name(const std::string& s, const char* what) {
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos ||
      s.find('|') != std::string::npos) {
    throw ValidationError(std::string("report: ") + what +
                          " must not contain ',', '|' or newlines: " + s);
  }
}

}  // namespace

void ReportTable::validate() const {
  check_name(title, "title");
  for (const auto& c : columns) check_name(c, "column name");
  for (const auto& row : rows) {
    check_name(row.label, "row label");
    if (row.values.size() != columns.size())
      throw ValidationError("report: row '" + row.label + "' has " +
                            std::to_string(row.values.size()) + " values, expected " +
                            std::to_string(columns.size()));
    for (const double v : row.values) {
      if (!std::isfinite(v))
        throw ValidationError("report: non-finite cell in row '" + row.label + "'");
    }
  }
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "md" || s == "markdown") return ReportFormat::kMarkdown;
  if (s == "json") return ReportFormat::kJson;
  throw ValidationError("report: unknown format '" + s +
                        "' (expected csv, md or json)");
}

std::string render_report(const ReportTable& table, ReportFormat format) {
  table.validate();
  std::ostringstream out;
  switch (format) {
    case ReportFormat::kCsv: {
      out << "# title=" << table.title << " seed=" << table.seed
          << " config=" << table.config_hash << "\n";
      out << "label";
      for (const auto& c : table.columns) out << "," << c;
      out << "\n";
      for (const auto& row : table.rows) {
        out << row.label;
        for (const double v : row.values) out << "," << fmt_value(v);
        out << "\n";
      }
      break;
    }
    case ReportFormat::kMarkdown: {
      out << "## " << table.title << "\n\n";
      out << "seed " << table.seed << ", config " << table.config_hash << "\n\n";
      out << "| label |";
      for (const auto& c : table.columns) out << " " << c << " |";
      out << "\n|---|";
      for (std::size_t i = 0; i < table.columns.size(); ++i) out << "---|";
      out << "\n";
      for (const auto& row : table.rows) {
        out << "| " << row.label << " |";
        for (const double v : row.values) out << " " << fmt_value(v) << " |";
        out << "\n";
      }
      break;
    }
    case ReportFormat::kJson: {
      nlohmann::json root;
      root["title"] = table.title;
      root["seed"] = table.seed;
      root["config_hash"] = table.config_hash;
      if (table.config_json.empty()) {
        root["config"] = nullptr;
      } else {
        root["config"] = nlohmann::json::parse(table.config_json);
      }
      root["columns"] = table.columns;
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& row : table.rows) {
        rows.push_back({{"label", row.label}, {"values", row.values}});
      }
      root["rows"] = std::move(rows);
      out << root.dump(2) << "\n";
      break;
    }
  }
  return out.str();
}

void write_report(const ReportTable& table, ReportFormat format,
                  const std::string& path) {
  const std::string body = render_report(table, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("report: cannot open " + path + " for writing");
  out << body;
  if (!out) throw ValidationError("report: write failed for " + path);
}

ReportTable parse_report_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("report: cannot open " + path);
  ReportTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto seed_pos = line.find("seed=");
      if (seed_pos != std::string::npos)
        table.seed = std::strtoull(line.c_str() + seed_pos + 5, nullptr, 10);
      const auto cfg_pos = line.find("config=");
      if (cfg_pos != std::string::npos) {
        std::string rest = line.substr(cfg_pos + 7);
        const auto space = rest.find(' ');
        table.config_hash = space == std::string::npos ? rest : rest.substr(0, space);
      }
      const auto title_pos = line.find("title=");
      if (title_pos != std::string::npos) {
        std::string rest = line.substr(title_pos + 6);
        const auto seed_marker = rest.find(" seed=");
        table.title = seed_marker == std::string::npos ? rest : rest.substr(0, seed_marker);
      }
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (!have_header) {
      if (cells.empty() || cells[0] != "label")
        throw ValidationError("report: line " + std::to_string(line_no) +
                              ": expected a header starting with 'label'");
      table.columns.assign(cells.begin() + 1, cells.end());
      have_header = true;
      continue;
    }
    ReportTable::Row row;
    row.label = cells.empty() ? "" : cells[0];
    for (std::size_t i = 1; i < cells.size(); ++i) {
      try {
        row.values.push_back(std::stod(cells[i]));
      } catch (const std::exception&) {
        throw ValidationError("report: line " + std::to_string(line_no) +
                              ": bad number '" + cells[i] + "'");
      }
    }
    if (row.values.size() != table.columns.size())
      throw ValidationError("report: line " + std::to_string(line_no) +
                            ": wrong cell count");
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw ValidationError("report: " + path + " has no header row");
  return table;
}

}  // namespace detlab

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace collapsim {

// Provenance stamped into every output file. Wall-clock time is deliberately
// absent: re-running an unchanged config and seed must reproduce
// byte-identical files.
struct RunMetadata {
  std::string tool_version;
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;  // master seed in effect; 0 when none is used
};

// One named data column on a shared abscissa.
struct OutputColumn {
  std::string name;
  std::vector<double> values;
};

// One output file worth of columnar data. `basename` names the file (the
// writer appends .csv or .json). Every column must match the abscissa
// length.
struct OutputTable {
  std::string basename;
  RunMetadata meta;
  // Extra provenance/summary facts, serialized as `# key=value` lines (CSV)
  // or meta-object members (JSON), in the given order.
  std::vector<std::pair<std::string, std::string>> extra_meta;
  std::string abscissa_name;  // e.g. "t"
  std::vector<double> abscissa;
  std::vector<OutputColumn> columns;
};

// Everything one command produced: tables to serialize plus the paths the
// CLI actually wrote.
struct OutputBundle {
  RunMetadata meta;
  std::vector<OutputTable> tables;
  std::vector<std::string> written_files;
};

std::string format_g9(double v);  // %.9g, the documented output precision

// CSV: `# key=value` metadata lines, a header row, one row per abscissa
// entry; 9 significant digits; NaN renders as `nan`.
std::string render_csv(const OutputTable& table);

// The same content as a JSON object: {"meta": {...}, "data": {<name>:
// [...], ...}} with full double precision; NaN renders as null.
std::string render_json(const OutputTable& table);

// Writes content to path, creating parent directories. Throws IoError.
void write_file(const std::string& path, const std::string& content);

// Columnar CSV reader for files in the render_csv layout (metadata lines
// optional). All cells must be numeric; NaN spellings are accepted.
struct CsvData {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  // Column by name, or nullptr.
  const std::vector<double>* find(const std::string& name) const;
};
CsvData parse_csv(const std::string& text);
CsvData read_csv_file(const std::string& path);  // IoError if unreadable

}  // namespace collapsim

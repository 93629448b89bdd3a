#include "collapsim/output.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "collapsim/config.hpp"
#include "collapsim/errors.hpp"

namespace collapsim {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void check_table(const OutputTable& table) {
  for (const OutputColumn& c : table.columns) {
    if (c.values.size() != table.abscissa.size()) {
      throw IoError("output table '" + table.basename + "': column '" +
                    c.name + "' length mismatch");
    }
  }
}

}  // namespace

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string render_csv(const OutputTable& table) {
  check_table(table);
  std::string out;
  out += "# tool_version=" + table.meta.tool_version + "\n";
  out += "# command=" + table.meta.command + "\n";
  out += "# config_hash=" + config_hash_hex(table.meta.config_hash) + "\n";
  out += "# seed=" + std::to_string(table.meta.seed) + "\n";
  for (const auto& [key, value] : table.extra_meta) {
    out += "# " + key + "=" + value + "\n";
  }
  out += table.abscissa_name;
  for (const OutputColumn& c : table.columns) out += "," + c.name;
  out += "\n";
  for (std::size_t i = 0; i < table.abscissa.size(); ++i) {
    out += format_g9(table.abscissa[i]);
    for (const OutputColumn& c : table.columns) {
      out += ",";
      out += format_g9(c.values[i]);
    }
    out += "\n";
  }
  return out;
}

std::string render_json(const OutputTable& table) {
  check_table(table);
  nlohmann::ordered_json j;
  j["meta"]["tool_version"] = table.meta.tool_version;
  j["meta"]["command"] = table.meta.command;
  j["meta"]["config_hash"] = config_hash_hex(table.meta.config_hash);
  j["meta"]["seed"] = table.meta.seed;
  for (const auto& [key, value] : table.extra_meta) {
    j["meta"][key] = value;
  }
  j["data"][table.abscissa_name] = table.abscissa;
  for (const OutputColumn& c : table.columns) {
    j["data"][c.name] = c.values;
  }
  return j.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) {
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory '" + p.parent_path().string() +
                    "': " + ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

const std::vector<double>* CsvData::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return &columns[i];
  }
  return nullptr;
}

CsvData parse_csv(const std::string& text) {
  CsvData data;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty()) continue;
    if (s[0] == '#') {
      std::string body = trim(s.substr(1));
      std::size_t eq = body.find('=');
      if (eq != std::string::npos) {
        data.meta.emplace_back(trim(body.substr(0, eq)),
                               trim(body.substr(eq + 1)));
      }
      continue;
    }
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = s.find(',', start);
      cells.push_back(trim(s.substr(
          start, comma == std::string::npos ? comma : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!saw_header) {
      data.names = cells;
      data.columns.assign(cells.size(), {});
      saw_header = true;
      continue;
    }
    if (cells.size() != data.names.size()) {
      throw ConfigError("csv line " + std::to_string(lineno) + ": expected " +
                        std::to_string(data.names.size()) + " cells, found " +
                        std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      errno = 0;
      char* end = nullptr;
      double v = std::strtod(cells[i].c_str(), &end);
      if (end == cells[i].c_str() || *end != '\0') {
        throw ConfigError("csv line " + std::to_string(lineno) +
                          ": invalid number '" + cells[i] + "' in column '" +
                          data.names[i] + "'");
      }
      data.columns[i].push_back(v);
    }
  }
  if (!saw_header) throw ConfigError("csv input: no header row");
  return data;
}

CsvData read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

}  // namespace collapsim

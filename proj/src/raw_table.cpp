#include "sefc/raw_table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "sefc/errors.hpp"

namespace sefc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view cell, char decimal) {
  std::string buffer;
  if (decimal != '.') {
    buffer.assign(cell);
    std::replace(buffer.begin(), buffer.end(), decimal, '.');
    cell = buffer;
  }
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

class ColumnBuilder {
 public:
  explicit ColumnBuilder(std::string name) { col_.name = std::move(name); }

  void push(std::string_view cell, const CsvDialect& dialect) {
    cell = trim(cell);
    if (std::find(dialect.na_tokens.begin(), dialect.na_tokens.end(), cell) != dialect.na_tokens.end()) {
      push_cell(kNaN, CellState::Missing, {});
    } else if (auto v = parse_number(cell, dialect.decimal)) {
      push_cell(*v, CellState::Value, {});
    } else if (cell == "true" || cell == "True" || cell == "TRUE") {
      push_cell(1.0, CellState::Value, {});
    } else if (cell == "false" || cell == "False" || cell == "FALSE") {
      push_cell(0.0, CellState::Value, {});
    } else {
      push_cell(kNaN, CellState::Text, cell);
    }
  }

  RawColumn take() { return std::move(col_); }

 private:
  void push_cell(double v, CellState s, std::string_view text) {
    if (s == CellState::Text && !has_text_) {
      col_.text.resize(col_.values.size());
      has_text_ = true;
    }
    col_.values.push_back(v);
    col_.state.push_back(s);
    if (has_text_) col_.text.emplace_back(text);
  }

  RawColumn col_;
  bool has_text_ = false;
};

}  // namespace

std::size_t RawColumn::missing_count() const {
  return static_cast<std::size_t>(std::count(state.begin(), state.end(), CellState::Missing));
}

RawTable::RawTable(std::vector<RawColumn> columns) : columns_(std::move(columns)) {}

const RawColumn* RawTable::find(std::string_view name) const {
  auto it = std::find_if(columns_.begin(), columns_.end(), [&](const RawColumn& c) { return c.name == name; });
  return it == columns_.end() ? nullptr : &*it;
}

std::vector<std::string> split_csv_record(std::string_view line, char delimiter) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

RawTable parse_raw_csv_text(std::string_view text, const CsvDialect& dialect) {
  std::vector<ColumnBuilder> builders;
  std::size_t line_no = 0;
  std::size_t data_rows = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    auto fields = split_csv_record(line, dialect.delimiter);
    if (!have_header) {
      if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) fields.front().erase(0, 3);
      for (auto& f : fields) builders.emplace_back(std::string(trim(f)));
      have_header = true;
      continue;
    }
    if (fields.size() != builders.size()) {
      throw Error(ErrorCode::RaggedRow,
                  "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(builders.size()),
                  std::to_string(line_no));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) builders[c].push(fields[c], dialect);
    ++data_rows;
  }
  if (!have_header) throw Error(ErrorCode::EmptyFile, "no header row");
  if (data_rows < 2) throw Error(ErrorCode::EmptyFile, "fewer than 2 data rows");
  std::vector<RawColumn> columns;
  columns.reserve(builders.size());
  for (auto& b : builders) columns.push_back(b.take());
  return RawTable(std::move(columns));
}

RawTable parse_raw_csv(const std::filesystem::path& path, const CsvDialect& dialect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string(), path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_raw_csv_text(ss.str(), dialect);
  } catch (const Error& e) {
    throw Error(e.code(), path.filename().string() + ": " + e.detail(), e.subject());
  }
}

}  // namespace sefc

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sefc {

enum class CellState : std::uint8_t { Value, Missing, Text };

struct RawColumn {
  std::string name;
  std::vector<double> values;  // NaN unless state == Value
  std::vector<CellState> state;
  std::vector<std::string> text;  // empty unless the column holds a Text cell

  bool has_text() const { return !text.empty(); }
  std::size_t missing_count() const;
};

/// Named-column table as read from a raw per-episode CSV.
class RawTable {
 public:
  RawTable() = default;
  explicit RawTable(std::vector<RawColumn> columns);

  std::size_t rows() const { return columns_.empty() ? 0 : columns_.front().values.size(); }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<RawColumn>& columns() const { return columns_; }
  const RawColumn* find(std::string_view name) const;

 private:
  std::vector<RawColumn> columns_;
};

struct CsvDialect {
  char delimiter = ',';
  char decimal = '.';
  std::vector<std::string> na_tokens = {"", "NA", "NaN", "nan", "null", "NULL"};
};

/**
 * Parses a headered CSV. NA tokens become Missing cells, `true`/`false`
 * parse as 1/0, anything else non-numeric is kept as Text. Double-quoted
 * fields may contain the delimiter.
 *
 * Errors: Io, EmptyFile (no header or fewer than two data rows),
 * RaggedRow (1-based file line number in the message and subject).
 */
RawTable parse_raw_csv(const std::filesystem::path& path, const CsvDialect& dialect = {});
RawTable parse_raw_csv_text(std::string_view text, const CsvDialect& dialect = {});

/// Splits one CSV record, honouring double quotes.
std::vector<std::string> split_csv_record(std::string_view line, char delimiter);

}  // namespace sefc

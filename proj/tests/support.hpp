#pragma once

// Helpers shared by the unit and acceptance tests.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "sefc/raw_table.hpp"
#include "sefc/schema.hpp"

namespace sefc::testing {

inline const std::filesystem::path kFixtureDir{SEFC_FIXTURE_DIR};
inline const std::filesystem::path kSourceDir{SEFC_SOURCE_DIR};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "sefc") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Header row plus records, split on commas (fixtures never quote).
inline std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_record(line, ','));
  }
  return rows;
}

/// Episode with the given channels, uniform grid at `rate_hz` and one phase label.
inline Episode make_episode(const std::string& id, const std::vector<ChannelDescriptor>& descriptors,
                            const Eigen::MatrixXd& values, double rate_hz = 100.0,
                            const std::string& phase = "move") {
  Episode ep;
  ep.episode_id = id;
  ep.source_id = "test";
  ep.embodiment = "test";
  ep.rate_hz = rate_hz;
  ep.t = uniform_time_grid(static_cast<std::size_t>(values.rows()), rate_hz);
  ep.channels = values;
  ep.descriptors = descriptors;
  ep.phase.assign(ep.t.size(), phase);
  return ep;
}

inline ChannelDescriptor channel(const std::string& name, SignalRole role, const std::string& unit = "rad") {
  ChannelDescriptor d;
  d.canonical_name = name;
  d.role = role;
  d.unit = unit;
  const auto stem = name_stem(name);
  if (stem.size() < name.size()) d.axis = std::stoi(name.substr(stem.size() + 1));
  return d;
}

}  // namespace sefc::testing

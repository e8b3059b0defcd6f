#include <filesystem>
#include <set>

#include "cli.hpp"
#include "doctest.h"
#include "sefc/anomaly.hpp"
#include "sefc/errors.hpp"
#include "sefc/ingest.hpp"
#include "sefc/synthgen.hpp"
#include "support.hpp"

using namespace sefc;
using namespace sefc::testing;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "sefc");
  return cli::run_cli(args);
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}) == 2);
  CHECK(run({"no-such-command"}) == 2);
  CHECK(run({"generate"}) == 2);
  TempDir dir("cli_usage");
  CHECK(run({"ingest", "--raw", dir.path().string(), "--adapter", "nope", "--out", (dir / "o").string()}) == 2);
  CHECK(run({"generate", "--out", (dir / "g").string(), "--fault", "meteor_strike=2"}) == 2);
}

TEST_CASE("runtime failures exit with 1") {
  TempDir dir("cli_runtime");
  CHECK(run({"ingest", "--raw", (dir / "missing").string(), "--adapter", "voraus_ad", "--out", (dir / "o").string()}) ==
        1);
  CHECK(run({"score", "--model", (dir / "absent").string(), "--data", dir.path().string(), "--out",
             (dir / "s").string()}) == 1);
}

TEST_CASE("ingest of the voraus fixture keeps all model channels") {
  TempDir dir("cli_ingest");
  fs::create_directories(dir / "raw");
  fs::copy_file(kFixtureDir / "voraus" / "voraus_sample.csv", dir / "raw" / "voraus_sample.csv");
  REQUIRE(run({"ingest", "--raw", (dir / "raw").string(), "--adapter", "voraus_ad", "--out", (dir / "out").string()}) == 0);
  const auto rows = read_csv_rows(dir / "out" / "ingest_report.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][2] == "ok");

  const Episode ep = read_canonical(dir / "out" / "episodes", "voraus_sample");
  CHECK(ep.rate_hz == 100.0);
  for (const auto& name : anomaly_input_channels()) CHECK(ep.find_channel(name).has_value());
  for (const auto& name : anomaly_output_channels()) CHECK(ep.find_channel(name).has_value());
  CHECK(fs::exists(dir / "out" / "run_manifest.json"));
}

TEST_CASE("generate writes identical corpora for identical seeds") {
  TempDir dir("cli_generate");
  const std::vector<std::string> common = {"--n-healthy", "3", "--fault", "collision_foam_spike=2", "--seed", "9"};
  auto args_for = [&](const std::string& out) {
    std::vector<std::string> a = {"generate", "--out", (dir / out).string()};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  REQUIRE(run(args_for("a")) == 0);
  REQUIRE(run(args_for("b")) == 0);
  const auto rows = read_csv_rows(dir / "a" / "corpus.csv");
  CHECK(rows.size() == 1 + 3 + 2 + 2);
  CHECK(read_text(dir / "a" / "corpus.csv") == read_text(dir / "b" / "corpus.csv"));
  for (const auto& entry : fs::directory_iterator(dir / "a" / "episodes")) {
    CHECK(read_text(entry.path()) == read_text(dir / "b" / "episodes" / entry.path().filename()));
  }
}

TEST_CASE("pipeline: train, score, transfer, gap and report") {
  TempDir dir("cli_pipeline");
  const std::string gen = (dir / "gen").string();
  const std::string eps = (dir / "gen" / "episodes").string();
  REQUIRE(run({"generate", "--out", gen, "--n-healthy", "5", "--fault", "additional_axis_payload=2", "--seed", "4"}) == 0);
  // Faulty primaries are in the corpus; plain training refuses it as a contract violation.
  CHECK(run({"train-anomaly", "--data", eps, "--out", (dir / "bad").string(), "--epochs", "2"}) == 2);
  REQUIRE(run({"train-anomaly", "--data", eps, "--out", (dir / "tr").string(), "--epochs", "3", "--stride", "4",
               "--select-healthy"}) == 0);
  const std::string model = (dir / "tr" / "anomaly_model").string();
  REQUIRE(run({"score", "--model", model, "--data", eps, "--out", (dir / "sc").string(), "--resamples", "20"}) == 0);
  const auto report = read_csv_rows(dir / "sc" / "anomaly_report.csv");
  REQUIRE(report.size() == 4);
  CHECK(report[1][0] == "additional_axis_payload");
  CHECK(report[1][1] == "2");

  REQUIRE(run({"eval-transfer", "--model", model, "--target", eps, "--out", (dir / "xf").string()}) == 0);
  CHECK(read_csv_rows(dir / "xf" / "transfer_report.csv").size() == 3);

  REQUIRE(run({"gap", "--real", eps, "--sim", eps, "--out", (dir / "gp").string(), "--real-preset", "isaac"}) == 0);
  const auto summary = read_csv_rows(dir / "gp" / "gap_summary.csv");
  REQUIRE(summary.size() == 6);
  CHECK(summary[1] == std::vector<std::string>{"joint_rmse_deg", "0", "0", "0", "0"});

  REQUIRE(run({"report", "--inputs", (dir / "sc").string(), (dir / "xf").string(), "--out", (dir / "rp").string()}) == 0);
  const auto merged = read_csv_rows(dir / "rp" / "summary.csv");
  REQUIRE(merged.size() > 1);
  CHECK(merged[0] == std::vector<std::string>{"table", "source", "row", "column", "value"});
}

TEST_CASE("generate rejects an inverted range and names the field") {
  TempDir dir("cli_range");
  auto doc = generation_config_to_json(GenerationConfig{});
  doc["randomization"]["friction"] = {0.5, 0.3};
  write_text(dir / "config.json", doc.dump());
  CHECK(run({"generate", "--config", (dir / "config.json").string(), "--out", (dir / "g").string()}) == 2);
  try {
    load_generation_config(dir / "config.json");
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    CHECK(std::string(e.what()).find("friction") != std::string::npos);
  }
}

TEST_CASE("ingest of an empty directory succeeds with zero outputs") {
  TempDir dir("cli_empty");
  fs::create_directories(dir / "raw");
  REQUIRE(run({"ingest", "--raw", (dir / "raw").string(), "--adapter", "aursad", "--out", (dir / "out").string()}) == 0);
  const auto manifest = nlohmann::json::parse(read_text(dir / "out" / "run_manifest.json"));
  CHECK(manifest["counts"]["files"] == 0);
  CHECK(read_csv_rows(dir / "out" / "ingest_report.csv").size() == 1);
}

TEST_CASE("eval-forecast reports every model and horizon") {
  TempDir dir("cli_forecast");
  REQUIRE(run({"generate", "--out", (dir / "gen").string(), "--n-healthy", "4", "--seed", "2"}) == 0);
  REQUIRE(run({"eval-forecast", "--data", (dir / "gen" / "episodes").string(), "--out", (dir / "fc").string(), "--model",
               "kinematic_zero,oracle,linear", "--horizon", "50,100,200", "--epochs", "2", "--stride", "16",
               "--starts", "2"}) == 0);
  const auto rows = read_csv_rows(dir / "fc" / "forecast_report.csv");
  REQUIRE(rows.size() == 1 + 9);
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) seen.emplace(rows[i][0], rows[i][1]);
  for (const char* m : {"kinematic_zero", "oracle", "linear"}) {
    for (const char* h : {"50", "100", "200"}) CHECK(seen.count({m, h}) == 1);
  }
}

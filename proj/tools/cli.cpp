#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "sefc/adapters.hpp"
#include "sefc/anomaly.hpp"
#include "sefc/errors.hpp"
#include "sefc/forecast.hpp"
#include "sefc/gap.hpp"
#include "sefc/ingest.hpp"
#include "sefc/raw_table.hpp"
#include "sefc/synthgen.hpp"

namespace sefc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

bool is_config_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownAdapter:
    case ErrorCode::UnsupportedFault:
    case ErrorCode::HealthyOnlyViolation:
    case ErrorCode::InfeasibleProfile:
      return true;
    default:
      return false;
  }
}

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_color_mt("sefc");
    l->set_pattern("[%l] %v");
    l->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("SEFC_LOG")) l->set_level(spdlog::level::from_str(env));
    return l;
  }();
  return log;
}

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string(), path.string());
  out << text;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string(), path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what(), path.string());
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Deterministic permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
  return order;
}

std::vector<Episode> load_episodes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string(), dir.string());
  return read_canonical_dir(dir);
}

std::string history_csv(const nn::TrainResult& r) {
  std::string out = "epoch,lr,train_loss,val_loss\n";
  for (const auto& e : r.history) {
    out += std::to_string(e.epoch) + ',' + format_real(e.lr) + ',' + format_real(e.train_loss) + ',' +
           format_real(e.val_loss) + '\n';
  }
  return out;
}

/// Shared state of one invocation; the manifest is written when the run ends.
struct Run {
  std::string command;
  fs::path out;
  json manifest = json::object();
  std::vector<std::string> outputs;

  void output(const fs::path& path, const std::string& text) {
    write_text(path, text);
    outputs.push_back(path.filename().string());
  }
};

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_healthy;
  std::vector<std::string> faults;
  std::optional<double> rate_hz;
};

int cmd_generate(const GenerateArgs& a, Run& run) {
  GenerationConfig cfg;
  if (!a.config.empty()) cfg = load_generation_config(a.config);
  if (a.seed) cfg.seed0 = *a.seed;
  if (a.n_healthy) cfg.n_healthy = *a.n_healthy;
  for (const auto& f : a.faults) {
    const auto eq = f.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--fault expects name=count", "fault");
    const auto name = f.substr(0, eq);
    parse_fault_type(name);
    try {
      cfg.fault_mix[name] = static_cast<std::size_t>(std::stoull(f.substr(eq + 1)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad fault count in '" + f + "'", "fault");
    }
  }
  validate_config(cfg.randomization);
  run.manifest["seed"] = cfg.seed0;

  const auto corpus = generate_corpus(cfg);
  const fs::path dir = run.out / "episodes";
  std::string listing = "episode_id,kind,label,twin_of,steps,rate_hz\n";
  auto emit = [&](const Episode& ep, const char* kind, const std::string& twin_of) {
    const Episode e = a.rate_hz ? resample(ep, *a.rate_hz) : ep;
    write_canonical(e, dir);
    listing += e.episode_id + ',' + kind + ',' + (e.healthy ? "healthy" : e.fault.value_or("faulty")) + ',' + twin_of +
               ',' + std::to_string(e.steps()) + ',' + format_real(e.rate_hz) + '\n';
  };
  for (const auto& ep : corpus.primaries) emit(ep, "primary", "");
  for (const auto& ep : corpus.twins) {
    const auto primary = ep.episode_id.substr(0, ep.episode_id.size() - std::string("_twin").size());
    emit(ep, "twin", primary);
  }
  run.output(run.out / "corpus.csv", listing);
  run.output(run.out / "generation_config.json", generation_config_to_json(cfg).dump(2) + "\n");
  run.manifest["counts"] = {{"primaries", corpus.primaries.size()}, {"twins", corpus.twins.size()}};
  logger()->info("generated {} primaries and {} twins", corpus.primaries.size(), corpus.twins.size());
  return kExitOk;
}

// ------------------------------------------------------------------ ingest

struct IngestArgs {
  std::string raw;
  std::string adapter;
  std::string adapter_file;
  std::string out;
  double rate_hz = 100.0;
  double max_missing = kDefaultMaxMissingFraction;
  std::string delimiter = ",";
  std::string decimal = ".";
  std::string na_tokens;
  std::string phase_column;
  std::string labels;
};

std::map<std::string, std::string> read_labels(const fs::path& path) {
  std::map<std::string, std::string> labels;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string(), path.string());
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_record(line, ',');
    if (cells.size() < 2) throw Error(ErrorCode::InvalidConfig, "labels rows need episode_id,label", path.string());
    labels[cells[0]] = cells[1];
  }
  return labels;
}

int cmd_ingest(const IngestArgs& a, Run& run) {
  const AdapterSpec spec = a.adapter_file.empty() ? builtin_adapter(a.adapter) : load_adapter_file(a.adapter_file);
  if (const auto report = validate_adapter(spec); !report.empty()) {
    throw Error(ErrorCode::InvalidConfig, "adapter invalid: " + report.front().message, report.front().subject);
  }
  if (a.delimiter.size() != 1 || a.decimal.size() != 1) {
    throw Error(ErrorCode::InvalidConfig, "dialect delimiter and decimal must be single characters", "dialect");
  }
  if (!(a.rate_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "rate-hz must be positive", "rate-hz");
  CsvDialect dialect;
  dialect.delimiter = a.delimiter[0];
  dialect.decimal = a.decimal[0];
  if (!a.na_tokens.empty()) dialect.na_tokens = split_list(a.na_tokens);
  const auto labels = a.labels.empty() ? std::map<std::string, std::string>{} : read_labels(a.labels);

  if (!fs::is_directory(a.raw)) throw Error(ErrorCode::Io, "not a directory: " + a.raw, a.raw);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.raw)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::string report = "file,episode_id,status,steps,message\n";
  std::size_t failures = 0;
  const fs::path dir = run.out / "episodes";
  for (const auto& file : files) {
    const std::string id = file.stem().string();
    try {
      EpisodeMeta meta;
      meta.episode_id = id;
      meta.phase_column = a.phase_column;
      if (auto it = labels.find(id); it != labels.end() && it->second != "healthy") meta.fault = it->second;
      Episode ep = apply_adapter(parse_raw_csv(file, dialect), spec, meta);
      ep = fill_gaps(ep, a.max_missing);
      if (ep.rate_hz != a.rate_hz) ep = resample(ep, a.rate_hz);
      write_canonical(ep, dir);
      report += file.filename().string() + ',' + id + ",ok," + std::to_string(ep.steps()) + ",\n";
    } catch (const Error& e) {
      ++failures;
      std::string msg = e.what();
      std::replace(msg.begin(), msg.end(), ',', ';');
      report += file.filename().string() + ',' + id + ",error,," + msg + '\n';
      logger()->error("{}: {}", file.filename().string(), e.what());
    }
  }
  run.output(run.out / "ingest_report.csv", report);
  run.manifest["counts"] = {{"files", files.size()}, {"failed", failures}};
  run.manifest["adapter"] = spec.source_id;
  return failures == 0 ? kExitOk : kExitFailure;
}

// ----------------------------------------------------------- train-anomaly

struct TrainAnomalyArgs {
  std::string data;
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> stride;
  bool select_healthy = false;
};

int cmd_train_anomaly(const TrainAnomalyArgs& a, Run& run) {
  AnomalyTrainOptions opt;
  json doc = a.config.empty() ? json::object() : read_json_file(a.config);
  try {
    if (doc.contains("train")) opt.train = nn::train_config_from_json(doc.at("train"));
    opt.widths = doc.value("widths", opt.widths);
    opt.val_fraction = doc.value("val_fraction", opt.val_fraction);
    opt.stride = doc.value("stride", opt.stride);
    opt.init_seed = doc.value("init_seed", opt.init_seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("train-anomaly config: ") + e.what());
  }
  if (a.seed) {
    opt.train.seed = *a.seed;
    opt.init_seed = *a.seed;
  }
  if (a.epochs) opt.train.max_epochs = *a.epochs;
  if (a.batch_size) opt.train.batch_size = *a.batch_size;
  if (a.lr) opt.train.lr0 = *a.lr;
  if (a.stride) opt.stride = *a.stride;
  opt.train.patience = std::min(opt.train.patience, opt.train.max_epochs);
  nn::validate(opt.train);

  auto episodes = load_episodes(a.data);
  if (a.select_healthy) {
    std::erase_if(episodes, [](const Episode& e) { return !e.healthy; });
  }
  const auto trained = train_anomaly_model(episodes, opt);
  const json extra = {{"train", nn::train_config_to_json(opt.train)},
                      {"val_fraction", opt.val_fraction},
                      {"stride", opt.stride},
                      {"init_seed", opt.init_seed},
                      {"train_ids", trained.train_ids},
                      {"val_ids", trained.val_ids}};
  save_anomaly_model(run.out / "anomaly_model", trained.model, extra);
  run.outputs.push_back("anomaly_model.json");
  run.outputs.push_back("anomaly_model.params.csv");
  run.output(run.out / "training_history.csv", history_csv(trained.result));
  run.manifest["seed"] = opt.train.seed;
  run.manifest["counts"] = {{"train_episodes", trained.train_ids.size()},
                            {"val_episodes", trained.val_ids.size()},
                            {"epochs", trained.result.history.size()},
                            {"best_epoch", trained.result.best_epoch}};
  return kExitOk;
}

// ------------------------------------------------------------------- score

struct ScoreArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string categories;
  std::size_t resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

int cmd_score(const ScoreArgs& a, Run& run) {
  const auto model = load_anomaly_model(a.model);
  const auto episodes = load_episodes(a.data);
  std::vector<ScoredEpisode> scored;
  for (const auto& ep : episodes) scored.push_back(score_episode(model, ep));
  run.output(run.out / "scores.csv", scores_csv(scored));

  std::vector<std::string> categories = split_list(a.categories);
  if (categories.empty()) {
    std::set<std::string> seen;
    for (const auto& s : scored) {
      if (s.anomalous()) seen.insert(s.label);
    }
    categories.assign(seen.begin(), seen.end());
  }
  const auto report = per_category_report(scored, categories, a.resamples, a.level, a.seed);
  run.output(run.out / "anomaly_report.csv", anomaly_report_csv(report));
  run.output(run.out / "anomaly_summary.json", anomaly_report_json(report).dump(2) + "\n");
  run.manifest["seed"] = a.seed;
  run.manifest["counts"] = {{"episodes", scored.size()}, {"healthy", report.n_healthy}};
  return kExitOk;
}

// ----------------------------------------------------------- eval-forecast

struct ForecastArgs {
  std::string data;
  std::string out;
  std::string config;
  std::optional<std::string> models;
  std::optional<std::string> horizons;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> stride;
  std::optional<std::size_t> starts;
  std::optional<double> rate_hz;
  std::optional<double> threshold;
};

std::string survival_curve_csv(const std::string& model, const std::vector<RolloutResult>& results, Eigen::Index h) {
  std::string out;
  std::size_t total = 0;
  for (const auto& r : results) total += r.first_violation.size();
  for (Eigen::Index k = 0; k <= h; ++k) {
    std::size_t alive = 0;
    for (const auto& r : results) {
      for (auto v : r.first_violation) alive += v >= k ? 1 : 0;
    }
    out += model + ',' + std::to_string(k) + ',' +
           format_real(total == 0 ? 0.0 : static_cast<double>(alive) / static_cast<double>(total)) + '\n';
  }
  return out;
}

int cmd_eval_forecast(const ForecastArgs& a, Run& run) {
  json doc = a.config.empty() ? json::object() : read_json_file(a.config);
  nn::TrainConfig tc;
  tc.optimizer = nn::OptimizerKind::AdamW;
  tc.lr0 = 1e-4;
  tc.weight_decay = 1e-2;
  tc.max_epochs = 100;
  tc.patience = 100;
  tc.batch_size = 256;
  std::string models = "linear,flat_mlp,tcn,tcn_transformer,kinematic_zero";
  std::string horizons = "50,100,200";
  std::size_t stride = 1, starts = 4;
  double rate = 100.0, threshold = 0.01, train_frac = 0.8, val_frac = 0.1;
  std::uint64_t seed = 0;
  try {
    if (doc.contains("train")) tc = nn::train_config_from_json(doc.at("train"), tc);
    if (doc.contains("models")) models = doc.at("models").is_string() ? doc.at("models").get<std::string>() : [&] {
      std::string s;
      for (const auto& m : doc.at("models")) s += m.get<std::string>() + ",";
      return s;
    }();
    if (doc.contains("horizons")) {
      horizons.clear();
      for (const auto& h : doc.at("horizons")) horizons += std::to_string(h.get<long>()) + ",";
    }
    stride = doc.value("stride", stride);
    starts = doc.value("starts_per_episode", starts);
    rate = doc.value("rate_hz", rate);
    threshold = doc.value("threshold_rad", threshold);
    train_frac = doc.value("train_fraction", train_frac);
    val_frac = doc.value("val_fraction", val_frac);
    seed = doc.value("seed", seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("eval-forecast config: ") + e.what());
  }
  if (a.models) models = *a.models;
  if (a.horizons) horizons = *a.horizons;
  if (a.seed) seed = *a.seed;
  if (a.epochs) tc.max_epochs = *a.epochs;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.lr) tc.lr0 = *a.lr;
  if (a.stride) stride = *a.stride;
  if (a.starts) starts = *a.starts;
  if (a.rate_hz) rate = *a.rate_hz;
  if (a.threshold) threshold = *a.threshold;
  tc.seed = seed;
  tc.patience = std::min(tc.patience, tc.max_epochs);
  nn::validate(tc);
  if (!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "train/val fractions must be positive and leave a test split", "train_fraction");
  }

  std::vector<PredictorKind> kinds;
  for (const auto& m : split_list(models)) kinds.push_back(parse_predictor_kind(m));
  std::vector<Eigen::Index> hs;
  for (const auto& h : split_list(horizons)) {
    try {
      hs.push_back(static_cast<Eigen::Index>(std::stol(h)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad horizon '" + h + "'", "horizon");
    }
    if (hs.back() <= 0) throw Error(ErrorCode::InvalidConfig, "horizons must be positive", "horizon");
  }
  if (kinds.empty() || hs.empty()) throw Error(ErrorCode::InvalidConfig, "need at least one model and horizon", "model");
  const Eigen::Index h_max = *std::max_element(hs.begin(), hs.end());

  std::vector<ForecastData> data;
  for (auto& ep : load_episodes(a.data)) {
    if (!ep.healthy) continue;
    data.push_back(forecast_data(ep.rate_hz == rate ? ep : resample(ep, rate)));
  }
  if (data.size() < 3) throw Error(ErrorCode::EmptyDataset, "eval-forecast needs at least 3 healthy episodes");
  const auto order = permutation(data.size(), seed ^ 0xF0CAu);
  // Small corpora keep at least one episode in each split.
  const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(val_frac * static_cast<double>(data.size())), 1,
                                             data.size() - 2);
  const auto n_train = std::clamp<std::size_t>(static_cast<std::size_t>(train_frac * static_cast<double>(data.size())),
                                               1, data.size() - 1 - n_val);
  std::vector<ForecastData> train, val, test;
  std::string split = "episode_id,split\n";
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& target = i < n_train ? train : (i < n_train + n_val ? val : test);
    target.push_back(data[order[i]]);
    split += data[order[i]].episode_id + ',' + (i < n_train ? "train" : (i < n_train + n_val ? "val" : "test")) + '\n';
  }

  std::vector<const ForecastData*> roll_data;
  std::vector<Eigen::Index> roll_starts;
  for (const auto& d : test) {
    for (auto s : rollout_starts(d.steps(), h_max, starts)) {
      roll_data.push_back(&d);
      roll_starts.push_back(s);
    }
  }
  if (roll_data.empty()) throw Error(ErrorCode::HorizonOverrun, "test episodes are shorter than the longest horizon");

  std::vector<HorizonRow> rows;
  std::string curves = "model,step,surviving_fraction\n";
  for (auto kind : kinds) {
    const std::string name(to_string(kind));
    std::unique_ptr<Predictor> owned;
    if (kind == PredictorKind::KinematicZero) {
      owned = std::make_unique<KinematicZero>();
    } else if (kind == PredictorKind::Oracle) {
      owned = std::make_unique<OracleAccel>();
    } else {
      auto trained = train_forecaster(kind, train, val, tc, stride, seed);
      save_forecaster(run.out / ("forecast_" + name), *trained.predictor, {{"train", nn::train_config_to_json(tc)}});
      run.outputs.push_back("forecast_" + name + ".json");
      run.output(run.out / ("history_" + name + ".csv"), history_csv(trained.result));
      owned = std::move(trained.predictor);
    }
    const auto results = euler_rollouts(*owned, roll_data, roll_starts, h_max, threshold);
    for (auto h : hs) rows.push_back(horizon_metrics(results, h, name));
    curves += survival_curve_csv(name, results, h_max);
    logger()->info("{}: survival {:.2f} of {}", name, rows.back().survival_steps, h_max);
  }
  run.output(run.out / "forecast_report.csv", horizon_csv(rows));
  run.output(run.out / "survival_curve.csv", curves);
  run.output(run.out / "forecast_split.csv", split);
  run.manifest["seed"] = seed;
  run.manifest["counts"] = {{"train", train.size()}, {"val", val.size()}, {"test", test.size()}, {"rollouts", roll_data.size()}};
  return kExitOk;
}

// ----------------------------------------------------------- eval-transfer

struct TransferArgs {
  std::string model;
  std::string target;
  std::string out;
  std::string channels = "effort";
};

int cmd_eval_transfer(const TransferArgs& a, Run& run) {
  const auto target = load_episodes(a.target);
  std::vector<TransferRow> rows;
  if (a.channels == "effort") {
    const auto model = load_anomaly_model(a.model);
    rows.push_back(transfer_eval("setpoint_effort_mlp", effort_transfer(model), target));
    rows.push_back(transfer_eval("zero", zero_transfer(model.outputs), target));
  } else if (a.channels == "accel") {
    const auto model = load_forecaster(a.model);
    std::vector<Episode> resampled;
    for (const auto& ep : target) resampled.push_back(ep.rate_hz == 100.0 ? ep : resample(ep, 100.0));
    rows.push_back(transfer_eval(std::string(to_string(model->kind())), accel_transfer(*model), resampled));
    KinematicZero zero;
    rows.push_back(transfer_eval("kinematic_zero", accel_transfer(zero), resampled));
  } else {
    throw Error(ErrorCode::InvalidConfig, "channels must be effort or accel", "channels");
  }
  run.output(run.out / "transfer_report.csv", transfer_csv(rows));
  std::string per = "model,episode_id,mc_mae\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.per_episode.size(); ++i) {
      per += r.model + ',' + target[i].episode_id + ',' + format_real(r.per_episode[i]) + '\n';
    }
  }
  run.output(run.out / "transfer_episodes.csv", per);
  run.manifest["counts"] = {{"target_episodes", target.size()}};
  return kExitOk;
}

// --------------------------------------------------------------------- gap

struct GapArgs {
  std::string real;
  std::string sim;
  std::string out;
  std::string real_preset = "rtde";
  std::string sim_preset = "isaac";
};

int cmd_gap(const GapArgs& a, Run& run) {
  const auto real_ch = gap_preset(a.real_preset);
  const auto sim_ch = gap_preset(a.sim_preset);
  const auto paired = pair_episodes(load_episodes(a.real), load_episodes(a.sim));
  std::vector<GapMetrics> metrics;
  std::string phases = "pair_key,aligned_phases,skipped_phases,samples,rotvec_wrap_flag\n";
  for (const auto& pair : paired.pairs) {
    const auto aligned = phase_align(pair);
    metrics.push_back(pair_metrics(aligned, real_ch, sim_ch));
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ";") + x;
      return s;
    };
    phases += pair.pair_key + ',' + join(aligned.phases) + ',' + join(aligned.skipped) + ',' +
              std::to_string(aligned.samples()) + ',' + (metrics.back().rotvec_wrap_flag ? "1" : "0") + '\n';
  }
  const auto summary = batch_summary(metrics);
  run.output(run.out / "gap_pairs.csv", gap_pairs_csv(metrics));
  run.output(run.out / "gap_summary.csv", gap_summary_csv(summary));
  run.output(run.out / "gap_phases.csv", phases);
  run.manifest["counts"] = {{"pairs", paired.pairs.size()},
                            {"real_only", paired.real_only},
                            {"sim_only", paired.sim_only}};
  return kExitOk;
}

// ------------------------------------------------------------------ report

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

/// Known report files and the columns that identify a row.
const std::vector<std::pair<std::string, std::vector<std::string>>>& report_sources() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> sources = {
      {"anomaly_report.csv", {"category"}},
      {"forecast_report.csv", {"model", "H"}},
      {"transfer_report.csv", {"model"}},
      {"gap_summary.csv", {"metric"}},
  };
  return sources;
}

int cmd_report(const ReportArgs& a, Run& run) {
  std::string out = "table,source,row,column,value\n";
  std::size_t merged = 0;
  for (const auto& input : a.inputs) {
    if (!fs::is_directory(input)) throw Error(ErrorCode::Io, "not a directory: " + input, input);
    for (const auto& [file, keys] : report_sources()) {
      const fs::path path = fs::path(input) / file;
      if (!fs::exists(path)) continue;
      std::ifstream in(path, std::ios::binary);
      std::string line;
      std::getline(in, line);
      const auto header = split_csv_record(line, ',');
      std::vector<std::size_t> key_idx;
      for (const auto& k : keys) {
        auto it = std::find(header.begin(), header.end(), k);
        if (it == header.end()) throw Error(ErrorCode::SchemaViolation, path.string() + " lacks column " + k, k);
        key_idx.push_back(static_cast<std::size_t>(it - header.begin()));
      }
      const std::string table = file.substr(0, file.find('_'));
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_record(line, ',');
        std::string row;
        for (auto k : key_idx) row += (row.empty() ? "" : "@") + cells.at(k);
        for (std::size_t c = 0; c < header.size() && c < cells.size(); ++c) {
          if (std::find(key_idx.begin(), key_idx.end(), c) != key_idx.end()) continue;
          out += table + ',' + fs::path(input).filename().string() + ',' + row + ',' + header[c] + ',' + cells[c] + '\n';
        }
      }
      ++merged;
    }
  }
  run.output(run.out / "summary.csv", out);
  run.manifest["counts"] = {{"merged_files", merged}};
  return kExitOk;
}

void write_manifest(Run& run, const std::vector<std::string>& args, int code, double wall_s, const std::string& error) {
  if (run.out.empty()) return;
  json m = run.manifest;
  m["command"] = run.command;
  m["arguments"] = args;
  m["tool_version"] = kToolVersion;
  m["outputs"] = run.outputs;
  m["exit_code"] = code;
  m["wall_time_s"] = wall_s;
  if (!error.empty()) m["error"] = error;
  try {
    write_text(run.out / "run_manifest.json", m.dump(2) + "\n");
  } catch (const Error& e) {
    logger()->error("{}", e.what());
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Signal-schema toolkit: synthetic episodes, ingestion and evaluation", "sefc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic corpus with fault twins");
  g->add_option("--config", gen.config, "Generation config (JSON)");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Base seed (overrides config)");
  g->add_option("--n-healthy", gen.n_healthy, "Healthy primaries (overrides config)");
  g->add_option("--fault", gen.faults, "Fault mix entry name=count (repeatable, overrides config)");
  g->add_option("--rate-hz", gen.rate_hz, "Resample written episodes to this rate");

  IngestArgs ing;
  auto* i = app.add_subcommand("ingest", "Adapt raw CSV recordings to canonical episodes");
  i->add_option("--raw", ing.raw, "Directory of raw per-episode CSV files")->required();
  i->add_option("--adapter", ing.adapter, "Built-in adapter id");
  i->add_option("--adapter-file", ing.adapter_file, "Adapter config file (JSON)");
  i->add_option("--out", ing.out, "Output directory")->required();
  i->add_option("--rate-hz", ing.rate_hz, "Target rate")->capture_default_str();
  i->add_option("--max-missing", ing.max_missing, "Largest tolerated missing fraction per channel")->capture_default_str();
  i->add_option("--dialect-delimiter", ing.delimiter, "Field delimiter")->capture_default_str();
  i->add_option("--dialect-decimal", ing.decimal, "Decimal mark")->capture_default_str();
  i->add_option("--dialect-na", ing.na_tokens, "Comma-separated missing-value tokens");
  i->add_option("--phase-column", ing.phase_column, "Raw column with phase labels");
  i->add_option("--labels", ing.labels, "CSV of episode_id,label (healthy or fault id)");

  TrainAnomalyArgs ta;
  auto* t = app.add_subcommand("train-anomaly", "Train the setpoint-to-effort regressor on healthy episodes");
  t->add_option("--data", ta.data, "Canonical episode directory")->required();
  t->add_option("--out", ta.out, "Output directory")->required();
  t->add_option("--config", ta.config, "Training config (JSON)");
  t->add_option("--seed", ta.seed, "Shuffle and initialisation seed");
  t->add_option("--epochs", ta.epochs, "Maximum epochs");
  t->add_option("--batch-size", ta.batch_size, "Batch size");
  t->add_option("--lr", ta.lr, "Initial learning rate");
  t->add_option("--stride", ta.stride, "Use every n-th timestep");
  t->add_flag("--select-healthy", ta.select_healthy, "Drop faulty episodes instead of rejecting the corpus");

  ScoreArgs sc;
  auto* s = app.add_subcommand("score", "Score episodes and report per-category AUROC");
  s->add_option("--model", sc.model, "Anomaly checkpoint stem")->required();
  s->add_option("--data", sc.data, "Canonical episode directory")->required();
  s->add_option("--out", sc.out, "Output directory")->required();
  s->add_option("--categories", sc.categories, "Comma-separated categories (default: labels present)");
  s->add_option("--resamples", sc.resamples, "Bootstrap resamples")->capture_default_str();
  s->add_option("--level", sc.level, "Confidence level")->capture_default_str();
  s->add_option("--seed", sc.seed, "Bootstrap seed")->capture_default_str();

  ForecastArgs fc;
  auto* f = app.add_subcommand("eval-forecast", "Train forecasters and evaluate Euler rollouts");
  f->add_option("--data", fc.data, "Canonical episode directory")->required();
  f->add_option("--out", fc.out, "Output directory")->required();
  f->add_option("--config", fc.config, "Forecast config (JSON)");
  f->add_option("--model", fc.models, "Comma-separated models");
  f->add_option("--horizon", fc.horizons, "Comma-separated horizons");
  f->add_option("--seed", fc.seed, "Split, shuffle and initialisation seed");
  f->add_option("--epochs", fc.epochs, "Maximum epochs");
  f->add_option("--batch-size", fc.batch_size, "Batch size");
  f->add_option("--lr", fc.lr, "Initial learning rate");
  f->add_option("--stride", fc.stride, "Use every n-th training window");
  f->add_option("--starts", fc.starts, "Rollout starts per test episode");
  f->add_option("--rate-hz", fc.rate_hz, "Evaluation rate");
  f->add_option("--threshold", fc.threshold, "Survival threshold (rad)");

  TransferArgs tr;
  auto* x = app.add_subcommand("eval-transfer", "Zero-shot mean-centred MAE on a target corpus");
  x->add_option("--model", tr.model, "Checkpoint stem (anomaly model for effort, forecaster for accel)")->required();
  x->add_option("--target", tr.target, "Target canonical episode directory")->required();
  x->add_option("--out", tr.out, "Output directory")->required();
  x->add_option("--channels", tr.channels, "effort or accel")->capture_default_str();

  GapArgs gp;
  auto* p = app.add_subcommand("gap", "Phase-aligned sim-to-real gap metrics");
  p->add_option("--real", gp.real, "Real canonical episode directory")->required();
  p->add_option("--sim", gp.sim, "Sim canonical episode directory")->required();
  p->add_option("--out", gp.out, "Output directory")->required();
  p->add_option("--real-preset", gp.real_preset, "Channel preset for the real side")->capture_default_str();
  p->add_option("--sim-preset", gp.sim_preset, "Channel preset for the sim side")->capture_default_str();

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Merge report CSVs into one long-form table");
  r->add_option("--inputs", rp.inputs, "Directories holding report CSVs")->required();
  r->add_option("--out", rp.out, "Output directory")->required();

  std::vector<std::string> args(argv, argv + argc);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  Run run;
  auto* sub = app.get_subcommands().front();
  run.command = sub->get_name();
  const std::map<std::string, std::string> outs = {{"generate", gen.out},       {"ingest", ing.out},
                                                   {"train-anomaly", ta.out},   {"score", sc.out},
                                                   {"eval-forecast", fc.out},   {"eval-transfer", tr.out},
                                                   {"gap", gp.out},             {"report", rp.out}};
  run.out = outs.at(run.command);
  const std::map<std::string, std::string> configs = {
      {"generate", gen.config}, {"train-anomaly", ta.config}, {"eval-forecast", fc.config}};
  if (auto it = configs.find(run.command); it != configs.end() && !it->second.empty()) {
    run.manifest["config_path"] = it->second;
  }

  const auto start = std::chrono::steady_clock::now();
  int code = kExitOk;
  std::string error;
  try {
    fs::create_directories(run.out);
    if (run.command == "generate") code = cmd_generate(gen, run);
    else if (run.command == "ingest") {
      if (ing.adapter.empty() == ing.adapter_file.empty()) {
        throw Error(ErrorCode::InvalidConfig, "give exactly one of --adapter or --adapter-file", "adapter");
      }
      code = cmd_ingest(ing, run);
    } else if (run.command == "train-anomaly") code = cmd_train_anomaly(ta, run);
    else if (run.command == "score") code = cmd_score(sc, run);
    else if (run.command == "eval-forecast") code = cmd_eval_forecast(fc, run);
    else if (run.command == "eval-transfer") code = cmd_eval_transfer(tr, run);
    else if (run.command == "gap") code = cmd_gap(gp, run);
    else if (run.command == "report") code = cmd_report(rp, run);
  } catch (const Error& e) {
    error = e.what();
    logger()->error("{}", error);
    code = is_config_error(e.code()) ? kExitConfig : kExitFailure;
  } catch (const fs::filesystem_error& e) {
    error = std::string("Io: ") + e.what();
    logger()->error("{}", error);
    code = kExitFailure;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(run, args, code, wall, error);
  return code;
}

}  // namespace sefc::cli

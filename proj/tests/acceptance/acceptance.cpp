// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "sefc/adapters.hpp"
#include "sefc/anomaly.hpp"
#include "sefc/errors.hpp"
#include "sefc/forecast.hpp"
#include "sefc/gap.hpp"
#include "sefc/ingest.hpp"
#include "sefc/nn/model.hpp"
#include "sefc/raw_table.hpp"
#include "sefc/synthgen.hpp"
#include "support.hpp"

using namespace sefc;
using namespace sefc::testing;
using Eigen::Index;
using Eigen::MatrixXd;
namespace fs = std::filesystem;

namespace {

/// Collects failed expectations for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 8) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& text) { notes_ += (notes_.empty() ? "" : "; ") + text; }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string s = notes_;
    for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + ("failed: " + f);
    if (failed_ > failures_.size()) s += "; +" + std::to_string(failed_ - failures_.size()) + " more";
    return s;
  }

 private:
  std::vector<std::string> failures_;
  std::size_t failed_ = 0;
  std::string notes_;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Episode noiseless_episode(std::uint64_t seed) {
  RandomizationConfig c;
  c.sim_dt_s = 0.01;
  c.sigma_base = 0.0;
  c.sigma_pos_rad = 0.0;
  c.sigma_vel_radps = 0.0;
  c.sigma_effort = 0.0;
  return generate_episode(sample_params(seed, c));
}

// 1. Every transcribed mapping row is present in its adapter; voraus carries the 24 model channels.
void adapter_fidelity(Check& c) {
  const auto rows = read_csv_rows(kFixtureDir / "adapters" / "expected_rows.csv");
  c.expect(rows.size() > 1 && rows[0].size() == 5, "fixture header");
  std::map<std::string, AdapterSpec> specs;
  for (const auto& id : builtin_adapter_ids()) specs.emplace(id, builtin_adapter(id));
  c.expect(specs.size() == 6, "six built-in adapters");
  std::map<std::string, std::size_t> covered;
  std::size_t checked = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string where = r[0] + "/" + r[1];
    if (!specs.contains(r[0])) {
      c.expect(false, "unknown source " + r[0]);
      continue;
    }
    const auto& spec = specs.at(r[0]);
    const auto role = parse_role(r[3]);
    c.expect(role.has_value(), "role of " + where);
    if (!role) continue;
    if (r[1].rfind('#', 0) == 0) {
      const std::string group = r[1].substr(1);
      std::size_t n = 0;
      for (const auto& s : spec.signals) {
        if (s.notes.rfind(group, 0) != 0) continue;
        ++n;
        c.expect(s.role == *role && s.unit == r[4], "group member " + s.raw_name);
      }
      c.expect(n == std::stoul(r[2]), "group size " + where);
      covered[r[0]] += n;
    } else {
      const SignalSpec* s = spec.find_raw(r[1]);
      c.expect(s != nullptr, "raw column " + where);
      if (!s) continue;
      if (!r[2].empty()) c.expect(s->canonical_name == r[2], "canonical " + where);
      c.expect(s->role == *role, "role " + where);
      c.expect(s->unit == r[4], "unit " + where);
      ++covered[r[0]];
    }
    ++checked;
  }
  for (const auto& [id, spec] : specs) {
    c.expect(spec.signals.size() - covered[id] == (id == "isaac_ur5" ? 6u : 0u), "no untranscribed rows in " + id);
  }

  const auto& voraus = specs.at("voraus_ad");
  std::size_t setpoints = 0, efforts = 0;
  for (const auto& name : anomaly_input_channels()) {
    const auto* s = voraus.find_canonical(name);
    if (s && s->role == SignalRole::Setpoint) ++setpoints;
  }
  for (const auto& name : anomaly_output_channels()) {
    const auto* s = voraus.find_canonical(name);
    if (s && s->role == SignalRole::Effort) ++efforts;
  }
  c.expect(setpoints == 18 && efforts == 6, "voraus 18 setpoint + 6 effort channels");
  EpisodeMeta meta;
  meta.episode_id = "voraus_sample";
  const Episode ep = fill_gaps(apply_adapter(parse_raw_csv(kFixtureDir / "voraus" / "voraus_sample.csv"), voraus, meta));
  const auto set = build_regression_set({ep}, anomaly_input_channels(), anomaly_output_channels());
  c.expect(set.x.cols() + set.y.cols() == 24, "voraus fixture yields 24 model columns");
  c.note(std::to_string(checked) + " rows checked; voraus " + std::to_string(setpoints) + "+" + std::to_string(efforts));
}

// 2. Central-difference gradient checks on the full-size networks.
void gradient_correctness(Check& c) {
  std::mt19937_64 rng(2);
  struct Case {
    std::string name;
    std::unique_ptr<nn::Model> model;
    Index batch;
  };
  std::vector<Case> cases;
  cases.push_back({"dense 18-512-256-128-6", std::make_unique<nn::DenseNet>(std::vector<Index>{18, 512, 256, 128, 6}), 16});
  cases.push_back({"flat mlp", make_forecast_network(PredictorKind::FlatMlp), 8});
  cases.push_back({"tcn", make_forecast_network(PredictorKind::Tcn), 4});
  cases.push_back({"tcn-transformer", make_forecast_network(PredictorKind::TcnTransformer), 4});
  for (auto& k : cases) {
    k.model->initialize(7);
    const MatrixXd x = random_matrix(k.batch, k.model->input_dim(), rng);
    const MatrixXd y = random_matrix(k.batch, k.model->output_dim(), rng);
    nn::GradCheckOptions o;
    o.epsilon = 1e-6;
    o.seed = 3;
    const auto r = nn::gradient_check(*k.model, x, y, o);
    c.expect(r.max_relative_error < 1e-4, k.name + " rel err " + num(r.max_relative_error));
    c.expect(r.probes_used == o.probes, k.name + " probe count");
    c.note(k.name + " " + num(r.max_relative_error));
  }
}

double pairwise_auroc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// 3. Rank formula against the pairwise count.
void auroc_oracle(Check& c) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    const int levels = 1 + static_cast<int>(rng() % 20);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % static_cast<unsigned>(levels)) * 0.37;
      pos[i] = rng() % 2 == 0;
    }
    pos[0] = true;
    pos[1] = false;
    const double a = auroc(s, pos);
    const double b = pairwise_auroc(s, pos);
    c.expect(a == b, "instance " + std::to_string(trial) + ": " + num(a) + " vs " + num(b));
  }
  c.note("200 instances");
}

// 4. 80 healthy + 20 additional-axis-payload episodes; train on 60 healthy, score the rest.
void anomaly_experiment(Check& c) {
  GenerationConfig g;
  g.n_healthy = 80;
  g.fault_mix = {{"additional_axis_payload", 20}};
  g.seed0 = 0;
  const Corpus corpus = generate_corpus(g);
  std::vector<Episode> train(corpus.primaries.begin(), corpus.primaries.begin() + 60);
  AnomalyTrainOptions o;
  o.train.batch_size = 256;
  o.train.max_epochs = 40;
  o.train.patience = 10;
  o.train.lr0 = 1e-3;
  o.stride = 2;
  const auto trained = train_anomaly_model(train, o);
  std::vector<ScoredEpisode> scored;
  for (std::size_t i = 60; i < corpus.primaries.size(); ++i) scored.push_back(score_episode(trained.model, corpus.primaries[i]));
  const auto report = per_category_report(scored, {"additional_axis_payload"}, 1000, 0.95, 0);
  const double a = report.rows[0].auroc.value_or(0.0);
  c.expect(a >= 0.90, "AUROC " + num(a) + " < 0.90");
  c.note("AUROC " + num(a) + " CI [" + num(report.mean_ci.lo) + ", " + num(report.mean_ci.hi) + "], best epoch " +
         std::to_string(trained.result.best_epoch));
}

// 5. Per-channel constant shifts leave MC-MAE unchanged.
void mc_mae_invariance(Check& c) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> shift(-100.0, 100.0);
  double worst = 0.0, worst_zero = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index rows = 2 + static_cast<Index>(rng() % 200);
    const Index cols = 1 + static_cast<Index>(rng() % 12);
    const MatrixXd p = random_matrix(rows, cols, rng);
    const MatrixXd y = random_matrix(rows, cols, rng);
    Eigen::RowVectorXd k(cols);
    for (Index j = 0; j < cols; ++j) k(j) = shift(rng);
    worst = std::max(worst, std::abs(mc_mae(p.rowwise() + k, y) - mc_mae(p, y)));
    worst_zero = std::max(worst_zero, mc_mae(y.rowwise() + k, y));
  }
  c.expect(worst <= 1e-12, "shift changed MC-MAE by " + num(worst));
  c.expect(worst_zero <= 1e-12, "shifted truth gave " + num(worst_zero));
  c.note("max deviation " + num(worst) + ", shifted truth " + num(worst_zero));
}

// 6. Constant-velocity closed form and full survival of the oracle rollout.
void euler_survival(Check& c) {
  const ForecastData d = forecast_data(noiseless_episode(6));
  const KinematicZero kz;
  double worst = 0.0;
  for (Index start : rollout_starts(d.steps(), 200, 5)) {
    const auto r = euler_rollout(kz, d, start, 200);
    const Eigen::RowVectorXd q0 = d.fb_pos.row(start - 1);
    const Eigen::RowVectorXd v0 = d.fb_vel.row(start - 1);
    for (Index k = 0; k < 200; ++k) {
      const Eigen::RowVectorXd q = q0 + static_cast<double>(k + 1) * d.dt * v0;
      worst = std::max(worst, (r.pos.row(k) - q).cwiseAbs().maxCoeff());
    }
  }
  c.expect(worst <= 1e-12, "closed-form deviation " + num(worst));

  const OracleAccel oracle;
  const auto starts = rollout_starts(d.steps(), 200, 5);
  const auto results = euler_rollouts(oracle, std::vector<const ForecastData*>(starts.size(), &d), starts, 200);
  const auto row = horizon_metrics(results, 200, "oracle");
  c.expect(row.survival_steps == 200.0, "oracle survival " + num(row.survival_steps));
  c.note("closed form " + num(worst) + ", oracle survival " + num(row.survival_steps) + " over " +
         std::to_string(results.size()) + " rollouts");
}

// Minimum-cost perfect matching on a square cost matrix (Hungarian method, O(n^3)).
double min_cost_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[r - 1][j - 1] - u[r] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = col0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          col1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[match[j] - 1][j - 1];
  return total;
}

// Transport between uniform empirical measures: replicate both samples to |a|·|b| atoms of
// equal mass, where an optimal plan is a perfect matching.
double transport_w1(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> ra, rb;
  for (double x : a) ra.insert(ra.end(), b.size(), x);
  for (double x : b) rb.insert(rb.end(), a.size(), x);
  std::vector<std::vector<double>> cost(ra.size(), std::vector<double>(rb.size()));
  for (std::size_t i = 0; i < ra.size(); ++i) {
    for (std::size_t j = 0; j < rb.size(); ++j) cost[i][j] = std::abs(ra[i] - rb[j]);
  }
  return min_cost_assignment(cost) / static_cast<double>(ra.size());
}

// 7. Quantile-integral W1 against transport, plus symmetry and translation invariance.
void w1_correctness(Check& c) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  double worst = 0.0, worst_sym = 0.0, worst_shift = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(1 + rng() % 5), b(1 + rng() % 5);
    const bool ties = trial % 2 == 0;
    for (auto& v : a) v = ties ? std::round(u(rng)) : u(rng);
    for (auto& v : b) v = ties ? std::round(u(rng)) : u(rng);
    const double w = wasserstein1(a, b);
    worst = std::max(worst, std::abs(w - transport_w1(a, b)));
    worst_sym = std::max(worst_sym, std::abs(w - wasserstein1(b, a)));
    const double k = u(rng);
    std::vector<double> as = a, bs = b;
    for (auto& v : as) v += k;
    for (auto& v : bs) v += k;
    worst_shift = std::max(worst_shift, std::abs(w - wasserstein1(as, bs)));
  }
  c.expect(worst <= 1e-12, "transport mismatch " + num(worst));
  c.expect(worst_sym <= 1e-12, "asymmetry " + num(worst_sym));
  c.expect(worst_shift <= 1e-12, "translation " + num(worst_shift));
  c.note("1000 cases; transport " + num(worst) + ", symmetry " + num(worst_sym) + ", translation " + num(worst_shift));
}

// 8. Real-surrogate pairs whose sim side carries constant joint offsets of 1..20 degrees.
void gap_pipeline(Check& c) {
  GenerationConfig g;
  g.n_healthy = 20;
  g.seed0 = 800;
  const Corpus corpus = generate_corpus(g);
  const double deg = std::numbers::pi / 180.0;
  std::vector<GapMetrics> metrics;
  for (std::size_t i = 0; i < corpus.primaries.size(); ++i) {
    const Episode& real = corpus.primaries[i];
    Episode sim = real;
    const double k = static_cast<double>(i + 1);
    for (std::size_t col = 0; col < sim.descriptors.size(); ++col) {
      const auto& name = sim.descriptors[col].canonical_name;
      const auto j = static_cast<Index>(col);
      if (name.rfind("feedback_pos_", 0) == 0 && name.find("cartesian") == std::string::npos) {
        sim.channels.col(j).array() += k * deg;
      } else if (name == "feedback_pos_cartesian_2") {
        sim.channels.col(j).array() += k * 1e-3;
      } else if (name.rfind("effort_motor_torque_", 0) == 0) {
        sim.channels.col(j).array() += 0.05 * k;
      }
    }
    const AlignedPair al = phase_align({real, sim, real.episode_id});
    metrics.push_back(pair_metrics(al, gap_preset("isaac"), gap_preset("isaac")));
  }
  const auto summary = batch_summary(metrics);
  c.expect(summary.rows.size() == 5, "five metric rows");
  const double mean_joint = summary.rows[0].mean;
  c.expect(std::abs(mean_joint - 10.5) <= 1e-9, "mean joint RMSE " + num(mean_joint));
  for (const auto& row : summary.rows) {
    c.expect(row.n == 20, row.metric + " present in all pairs");
    c.expect(row.p10 <= row.median && row.median <= row.p90, row.metric + " percentile order");
  }
  std::ostringstream os;
  os.precision(12);
  os << "mean joint RMSE " << mean_joint;
  c.note(os.str());
}

// 9. Canonical round trip, linear resampling, hand-computed gap fill, missing-fraction threshold.
void ingestion_exactness(Check& c) {
  std::mt19937_64 rng(9);
  std::vector<ChannelDescriptor> d = {channel("feedback_pos_0", SignalRole::Feedback),
                                      channel("effort_current_0", SignalRole::Effort, "A")};
  MatrixXd v = random_matrix(64, 2, rng, 3.0);
  Episode ep = make_episode("acc_rt", d, v, 100.0);
  TempDir dir("acceptance_rt");
  write_canonical(ep, dir.path());
  const Episode back = read_canonical(dir.path(), "acc_rt");
  const double rt = (back.channels - ep.channels).cwiseAbs().maxCoeff();
  c.expect(rt <= 1e-12 && back.t == ep.t && back.phase == ep.phase, "round trip " + num(rt));

  const std::size_t n = 601;
  Episode lin = make_episode("lin", d, MatrixXd(n, 2), 60.0);
  lin.t = uniform_time_grid(n, 60.0, 0.25);
  for (std::size_t i = 0; i < n; ++i) {
    lin.channels(static_cast<Index>(i), 0) = 1.5 - 0.75 * lin.t[i];
    lin.channels(static_cast<Index>(i), 1) = 4.0 * lin.t[i];
  }
  const Episode res = resample(lin, 100.0);
  double worst = 0.0;
  for (std::size_t k = 0; k < res.steps(); ++k) {
    worst = std::max(worst, std::abs(res.channels(static_cast<Index>(k), 0) - (1.5 - 0.75 * res.t[k])));
    worst = std::max(worst, std::abs(res.channels(static_cast<Index>(k), 1) - 4.0 * res.t[k]));
  }
  c.expect(res.steps() == 1001, "resampled length " + std::to_string(res.steps()));
  c.expect(worst <= 1e-12, "resample error " + num(worst));

  const double nan = std::numeric_limits<double>::quiet_NaN();
  MatrixXd gaps(6, 2);
  gaps << nan, 2.0,
          1.0, nan,
          nan, nan,
          nan, 8.0,
          7.0, nan,
          nan, nan;
  MatrixXd expected(6, 2);
  expected << 1.0, 2.0,
              1.0, 4.0,
              3.0, 6.0,
              5.0, 8.0,
              7.0, 8.0,
              7.0, 8.0;
  const Episode filled = fill_gaps(make_episode("gaps", d, gaps), 1.0);
  c.expect((filled.channels - expected).cwiseAbs().maxCoeff() <= 1e-12, "gap fill");

  MatrixXd many = MatrixXd::Ones(2000, 2);
  many(10, 0) = nan;
  many(20, 0) = nan;
  c.expect(filled.channels.allFinite(), "gap fill finite");
  bool accepted = true;
  try {
    fill_gaps(make_episode("two", d, many));
  } catch (const Error& e) {
    accepted = e.code() != ErrorCode::ExcessiveMissing;
  }
  c.expect(accepted, "2 of 2000 missing (0.1%) accepted");
  many(30, 0) = nan;
  bool rejected = false;
  try {
    fill_gaps(make_episode("three", d, many));
  } catch (const Error& e) {
    rejected = e.code() == ErrorCode::ExcessiveMissing;
  }
  c.expect(rejected, "3 of 2000 missing rejected");
  c.note("round trip " + num(rt) + ", resample " + num(worst));
}

std::map<std::string, std::string> output_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    out[fs::relative(e.path(), root).string()] = read_text(e.path());
  }
  return out;
}

// 10. Two invocations of generate, train-anomaly and eval-forecast give identical outputs.
void determinism(Check& c) {
  TempDir dir("acceptance_det");
  std::size_t files = 0;
  for (const char* run : {"a", "b"}) {
    const fs::path base = dir / run;
    const auto call = [&](std::vector<std::string> args) {
      args.insert(args.begin(), "sefc");
      const int code = cli::run_cli(args);
      c.expect(code == 0, args[1] + " exit " + std::to_string(code));
    };
    call({"generate", "--out", (base / "gen").string(), "--n-healthy", "6", "--fault", "additional_axis_payload=2",
          "--seed", "10"});
    const std::string eps = (base / "gen" / "episodes").string();
    call({"train-anomaly", "--data", eps, "--out", (base / "train").string(), "--epochs", "4", "--stride", "4",
          "--seed", "10", "--select-healthy"});
    call({"eval-forecast", "--data", eps, "--out", (base / "forecast").string(), "--model",
          "kinematic_zero,linear,tcn", "--horizon", "50,100", "--epochs", "2", "--stride", "32", "--starts", "2",
          "--seed", "10"});
  }
  for (const char* sub : {"gen", "train", "forecast"}) {
    const auto a = output_files(dir / "a" / sub);
    const auto b = output_files(dir / "b" / sub);
    c.expect(!a.empty(), std::string(sub) + " wrote files");
    c.expect(a.size() == b.size(), std::string(sub) + " file count");
    for (const auto& [name, text] : a) {
      const auto it = b.find(name);
      c.expect(it != b.end() && it->second == text, std::string(sub) + "/" + name + " differs");
    }
    files += a.size();
  }
  c.note(std::to_string(files) + " files compared");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"adapter fidelity", adapter_fidelity},
      {"gradient correctness", gradient_correctness},
      {"AUROC oracle equivalence", auroc_oracle},
      {"desk-scale anomaly experiment", anomaly_experiment},
      {"MC-MAE invariance", mc_mae_invariance},
      {"Euler rollout and survival", euler_survival},
      {"W1 correctness", w1_correctness},
      {"gap pipeline end-to-end", gap_pipeline},
      {"ingestion exactness", ingestion_exactness},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!c.ok()) ++failed;
    std::printf("%s  %2zu %-32s %7.2fs  %s\n", c.ok() ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), secs,
                c.summary().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

#include "sefc/gap.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sefc/errors.hpp"
#include "sefc/stats.hpp"

namespace sefc {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

namespace {

/// Row indices per phase label, labels in order of first appearance.
std::vector<std::pair<std::string, std::vector<Index>>> phase_rows(const Episode& ep) {
  std::vector<std::pair<std::string, std::vector<Index>>> out;
  for (std::size_t i = 0; i < ep.phase.size(); ++i) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == ep.phase[i]; });
    if (it == out.end()) {
      out.push_back({ep.phase[i], {}});
      it = std::prev(out.end());
    }
    it->second.push_back(static_cast<Index>(i));
  }
  return out;
}

const std::vector<Index>* rows_for(const std::vector<std::pair<std::string, std::vector<Index>>>& runs,
                                   const std::string& label) {
  for (const auto& [name, rows] : runs) {
    if (name == label) return &rows;
  }
  return nullptr;
}

MatrixXd select(const MatrixXd& values, const std::vector<ChannelDescriptor>& channels,
                const std::vector<std::string>& names) {
  MatrixXd out(values.rows(), static_cast<Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    auto it = std::find_if(channels.begin(), channels.end(),
                           [&](const ChannelDescriptor& d) { return d.canonical_name == names[k]; });
    if (it == channels.end()) throw Error(ErrorCode::MissingChannel, "missing channel " + names[k], names[k]);
    out.col(static_cast<Index>(k)) = values.col(static_cast<Index>(it - channels.begin()));
  }
  return out;
}

MatrixXd orientation_rotvec(const MatrixXd& values, const std::vector<ChannelDescriptor>& channels,
                            const GapChannels& spec) {
  if (spec.orientation == OrientationKind::Rotvec) {
    if (spec.orientation_channels.size() != 3) throw Error(ErrorCode::InvalidConfig, "rotvec needs 3 channels");
    return select(values, channels, spec.orientation_channels);
  }
  if (spec.orientation_channels.size() != 4) throw Error(ErrorCode::InvalidConfig, "quaternion needs 4 channels");
  const MatrixXd q = select(values, channels, spec.orientation_channels);
  MatrixXd out(q.rows(), 3);
  for (Index i = 0; i < q.rows(); ++i) out.row(i) = quat_to_rotvec(q(i, 0), q(i, 1), q(i, 2), q(i, 3)).transpose();
  return out;
}

double rmse(const MatrixXd& a, const MatrixXd& b) { return std::sqrt((a - b).array().square().mean()); }

bool spans_more_than_pi(const MatrixXd& m) {
  for (Index c = 0; c < m.cols(); ++c) {
    if (m.col(c).maxCoeff() - m.col(c).minCoeff() > std::numbers::pi) return true;
  }
  return false;
}

}  // namespace

AlignedPair phase_align(const EpisodePair& pair) {
  const auto real_runs = phase_rows(pair.real);
  const auto sim_runs = phase_rows(pair.sim);
  AlignedPair out;
  out.pair_key = pair.pair_key;
  out.real_channels = pair.real.descriptors;
  out.sim_channels = pair.sim.descriptors;

  Index total = 0;
  for (const auto& [label, rows] : real_runs) {
    if (rows_for(sim_runs, label)) {
      out.phases.push_back(label);
      total += static_cast<Index>(rows.size());
    } else {
      out.skipped.push_back(label);
    }
  }
  for (const auto& [label, rows] : sim_runs) {
    if (!rows_for(real_runs, label)) out.skipped.push_back(label);
  }
  if (out.phases.empty()) throw Error(ErrorCode::NoCommonPhases, "episodes share no phase", pair.pair_key);

  out.real.resize(total, pair.real.channels.cols());
  out.sim.resize(total, pair.sim.channels.cols());
  Index at = 0;
  for (const auto& label : out.phases) {
    const auto& rr = *rows_for(real_runs, label);
    const auto& sr = *rows_for(sim_runs, label);
    const auto nr = static_cast<Index>(rr.size());
    const auto ns = static_cast<Index>(sr.size());
    for (Index i = 0; i < nr; ++i, ++at) {
      out.real.row(at) = pair.real.channels.row(rr[static_cast<std::size_t>(i)]);
      // Sim position u·(ns − 1) with u = i/(nr − 1), split into integer and remainder parts so grid
      // points that coincide are copied rather than interpolated.
      const Index num = nr == 1 ? 0 : i * (ns - 1);
      const Index den = nr == 1 ? 1 : nr - 1;
      const Index lo = num / den;
      const Index hi = std::min(lo + 1, ns - 1);
      const double frac = static_cast<double>(num % den) / static_cast<double>(den);
      const auto a = pair.sim.channels.row(sr[static_cast<std::size_t>(lo)]);
      const auto b = pair.sim.channels.row(sr[static_cast<std::size_t>(hi)]);
      out.sim.row(at) = frac == 0.0 ? Eigen::RowVectorXd(a) : Eigen::RowVectorXd(a + frac * (b - a));
    }
  }
  return out;
}

GapChannels gap_preset(const std::string& name) {
  GapChannels c;
  c.joints = axis_names("feedback_pos", 6);
  c.tcp_pos = {"feedback_pos_cartesian_0", "feedback_pos_cartesian_1", "feedback_pos_cartesian_2"};
  if (name == "rtde") {
    c.orientation = OrientationKind::Rotvec;
    c.orientation_channels = {"feedback_pos_cartesian_3", "feedback_pos_cartesian_4", "feedback_pos_cartesian_5"};
    c.effort = axis_names("effort_current", 6);
  } else if (name == "isaac") {
    c.orientation = OrientationKind::Quaternion;
    c.orientation_channels = axis_names("feedback_quat_cartesian", 4);
    c.effort = axis_names("effort_motor_torque", 6);
  } else {
    throw Error(ErrorCode::UnknownAdapter, "unknown gap preset '" + name + "'", name);
  }
  return c;
}

Eigen::Vector3d quat_to_rotvec(double w, double x, double y, double z) {
  const double norm = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(norm > 0.0)) throw Error(ErrorCode::NumericalInstability, "zero quaternion");
  double s = w < 0.0 ? -1.0 / norm : 1.0 / norm;
  w *= s;
  x *= s;
  y *= s;
  z *= s;
  const double v = std::sqrt(x * x + y * y + z * z);
  if (v < 1e-12) return {2.0 * x, 2.0 * y, 2.0 * z};
  const double k = 2.0 * std::atan2(v, w) / v;
  return {k * x, k * y, k * z};
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyInput, "W1 needs two non-empty samples");
  for (const auto* v : {&a, &b}) {
    for (double x : *v) {
      if (std::isnan(x)) throw Error(ErrorCode::NumericalInstability, "NaN sample in W1");
    }
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Quantile steps of a sit at k/n = k·m/(n·m), of b at l/m = l·n/(n·m).
  const auto n = static_cast<std::uint64_t>(a.size());
  const auto m = static_cast<std::uint64_t>(b.size());
  const double denom = static_cast<double>(n) * static_cast<double>(m);
  std::uint64_t cur = 0;
  std::size_t i = 0, j = 0;
  double total = 0.0;
  while (i < a.size() && j < b.size()) {
    const std::uint64_t next_a = (i + 1) * m;
    const std::uint64_t next_b = (j + 1) * n;
    const std::uint64_t next = std::min(next_a, next_b);
    total += static_cast<double>(next - cur) * std::abs(a[i] - b[j]);
    cur = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return total / denom;
}

GapMetrics pair_metrics(const AlignedPair& aligned, const GapChannels& real, const GapChannels& sim) {
  GapMetrics g;
  g.pair_key = aligned.pair_key;
  auto attempt = [&](std::size_t slot, auto&& compute) {
    try {
      g.values[slot] = compute();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingChannel && e.code() != ErrorCode::InvalidConfig &&
          e.code() != ErrorCode::ShapeMismatch) {
        throw;
      }
      g.absent_reason[slot] = e.what();
    }
  };
  const auto& R = aligned.real;
  const auto& S = aligned.sim;
  const auto& rc = aligned.real_channels;
  const auto& sc = aligned.sim_channels;
  if (aligned.samples() == 0) throw Error(ErrorCode::EmptyInput, "aligned pair has no samples", aligned.pair_key);

  attempt(0, [&] {
    return rmse(select(S, sc, sim.joints), select(R, rc, real.joints)) * 180.0 / std::numbers::pi;
  });
  attempt(1, [&] { return rmse(select(S, sc, sim.tcp_pos), select(R, rc, real.tcp_pos)) * 1000.0; });
  attempt(2, [&] {
    const MatrixXd d = select(S, sc, sim.tcp_pos) - select(R, rc, real.tcp_pos);
    return std::sqrt(d.rowwise().squaredNorm().mean()) * 1000.0;
  });
  attempt(3, [&] {
    const MatrixXd rs = orientation_rotvec(S, sc, sim);
    const MatrixXd rr = orientation_rotvec(R, rc, real);
    g.rotvec_wrap_flag = spans_more_than_pi(rs) || spans_more_than_pi(rr);
    return rmse(rs, rr) * 1000.0;
  });
  attempt(4, [&] {
    if (real.effort.size() != sim.effort.size() || real.effort.empty()) {
      throw Error(ErrorCode::ShapeMismatch, "effort channel lists differ in length");
    }
    const MatrixXd er = select(R, rc, real.effort);
    const MatrixXd es = select(S, sc, sim.effort);
    double sum = 0.0;
    for (Index c = 0; c < er.cols(); ++c) {
      sum += wasserstein1({er.col(c).data(), er.col(c).data() + er.rows()},
                          {es.col(c).data(), es.col(c).data() + es.rows()});
    }
    return sum / static_cast<double>(er.cols());
  });
  return g;
}

GapSummary batch_summary(const std::vector<GapMetrics>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "gap summary needs at least one pair");
  GapSummary s;
  s.n_pairs = pairs.size();
  for (std::size_t k = 0; k < kGapMetricNames.size(); ++k) {
    GapStat row;
    row.metric = kGapMetricNames[k];
    std::vector<double> v;
    for (const auto& p : pairs) {
      if (p.values[k]) v.push_back(*p.values[k]);
    }
    row.n = v.size();
    if (!v.empty()) {
      row.mean = mean_of(v);
      std::sort(v.begin(), v.end());
      row.median = percentile_sorted(v, 0.5);
      row.p10 = percentile_sorted(v, 0.1);
      row.p90 = percentile_sorted(v, 0.9);
    }
    s.rows.push_back(row);
  }
  return s;
}

std::string gap_pairs_csv(const std::vector<GapMetrics>& pairs) {
  std::string out = "pair_key,metric,value\n";
  for (const auto& p : pairs) {
    for (std::size_t k = 0; k < kGapMetricNames.size(); ++k) {
      out += p.pair_key + ',' + kGapMetricNames[k] + ',' + (p.values[k] ? format_real(*p.values[k]) : "") + '\n';
    }
  }
  return out;
}

std::string gap_summary_csv(const GapSummary& summary) {
  std::string out = "metric,mean,median,p10,p90\n";
  for (const auto& r : summary.rows) {
    if (r.n == 0) {
      out += r.metric + ",,,,\n";
      continue;
    }
    out += r.metric + ',' + format_real(r.mean) + ',' + format_real(r.median) + ',' + format_real(r.p10) + ',' +
           format_real(r.p90) + '\n';
  }
  return out;
}

json gap_summary_json(const GapSummary& summary) {
  json rows = json::array();
  for (const auto& r : summary.rows) {
    rows.push_back({{"metric", r.metric},
                    {"n", r.n},
                    {"mean", r.mean},
                    {"median", r.median},
                    {"p10", r.p10},
                    {"p90", r.p90}});
  }
  return {{"n_pairs", summary.n_pairs}, {"metrics", rows}};
}

}  // namespace sefc

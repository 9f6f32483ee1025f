#pragma once

#include "japs/config.hpp"
#include "japs/errors.hpp"
#include "japs/metrics.hpp"
#include "japs/orchestrator.hpp"
#include "japs/scenario.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace japs {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentName {
  DetectionCurve,
  Convergence,
  TxBeampattern,
  RxBeampattern,
  RateVsGamma,
  RateVsPmax,
  RateVsJ,
  RateVsM,
  RateVsN,
  TopologyCompare,
};

inline const std::vector<std::pair<ExperimentName, std::string>>& experiment_names() {
  static const std::vector<std::pair<ExperimentName, std::string>> names = {
      {ExperimentName::DetectionCurve, "detection_curve"},
      {ExperimentName::Convergence, "convergence"},
      {ExperimentName::TxBeampattern, "tx_beampattern"},
      {ExperimentName::RxBeampattern, "rx_beampattern"},
      {ExperimentName::RateVsGamma, "rate_vs_gamma"},
      {ExperimentName::RateVsPmax, "rate_vs_pmax"},
      {ExperimentName::RateVsJ, "rate_vs_J"},
      {ExperimentName::RateVsM, "rate_vs_M"},
      {ExperimentName::RateVsN, "rate_vs_N"},
      {ExperimentName::TopologyCompare, "topology_compare"},
  };
  return names;
}

inline std::string to_string(ExperimentName e) {
  for (const auto& [k, v] : experiment_names()) {
    if (k == e) return v;
  }
  return "?";
}

inline ExperimentName parse_experiment(const std::string& s) {
  for (const auto& [k, v] : experiment_names()) {
    if (v == s) return k;
  }
  throw ConfigError("unknown experiment '" + s + "'");
}

inline bool is_sweep(ExperimentName e) {
  switch (e) {
    case ExperimentName::RateVsGamma:
    case ExperimentName::RateVsPmax:
    case ExperimentName::RateVsJ:
    case ExperimentName::RateVsM:
    case ExperimentName::RateVsN:
    case ExperimentName::TopologyCompare:
    case ExperimentName::DetectionCurve: return true;
    default: return false;
  }
}

/// Name of the swept quantity, as written to the metadata.
inline std::string sweep_parameter(ExperimentName e) {
  switch (e) {
    case ExperimentName::DetectionCurve: return "sensing_sinr_db";
    case ExperimentName::Convergence: return "iteration";
    case ExperimentName::RateVsGamma: return "gamma_sense_db";
    case ExperimentName::RateVsPmax: return "p_max_pbs_dbm";
    case ExperimentName::RateVsJ: return "J";
    case ExperimentName::RateVsM: return "M";
    case ExperimentName::RateVsN: return "N";
    case ExperimentName::TopologyCompare: return "topology(0=random,1=circular,2=linear)";
    default: return "none";
  }
}

inline std::vector<double> default_grid(ExperimentName e) {
  switch (e) {
    case ExperimentName::DetectionCurve: {
      std::vector<double> g;
      for (int db = -10; db <= 20; ++db) g.push_back(db);
      return g;
    }
    case ExperimentName::RateVsGamma: return {6, 8, 10, 12};
    case ExperimentName::RateVsPmax: return {26, 28, 30, 32};
    case ExperimentName::RateVsJ: return {1, 2, 3, 4};
    case ExperimentName::RateVsM: return {4, 6, 8};
    case ExperimentName::RateVsN: return {4, 6, 8};
    case ExperimentName::TopologyCompare: return {0, 1, 2};
    default: return {0};
  }
}

inline std::vector<Scheme> default_schemes(ExperimentName e) {
  switch (e) {
    case ExperimentName::DetectionCurve: return {};
    case ExperimentName::Convergence:
    case ExperimentName::TxBeampattern:
    case ExperimentName::RxBeampattern:
    case ExperimentName::TopologyCompare: return {Scheme::JAPS};
    default:
      return {Scheme::JAPS, Scheme::ActiveOnly, Scheme::PassiveOnly, Scheme::CommOnly, Scheme::RzfBaseline};
  }
}

struct ExperimentSpec {
  ExperimentName name = ExperimentName::RateVsGamma;
  int trials = 20;
  std::uint64_t seed = 1;
  ScenarioConfig config;              // defaults plus overrides
  std::vector<Scheme> schemes;        // empty: experiment default
  std::vector<double> sweepGrid;      // empty: experiment default
  std::string outputDir;              // empty: nothing written
  double pFa = 1e-2;                  // false-alarm probability for the p_detect column
  std::vector<double> pFaGrid = {1e-4, 1e-3, 1e-2, 1e-1};  // detection_curve only
  std::vector<double> angleGridDeg;   // empty: 1 degree steps over [-90, 90]
  bool sbsPatterns = false;
  int threads = 1;
};

inline void validate(const ExperimentSpec& s) {
  if (s.trials < 1) throw ConfigError("trials must be >= 1");
  if (s.threads < 1) throw ConfigError("threads must be >= 1");
  if (!(s.pFa > 0.0 && s.pFa < 1.0)) throw ConfigError("p_fa must lie in (0, 1)");
  for (double p : s.pFaGrid) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("p_fa grid entries must lie in (0, 1)");
  }
  validate(s.config);
}

/// One (sweepValue, scheme, trial) outcome. Metrics are NaN unless status is "ok".
struct ResultRow {
  double sweepValue = 0.0;
  std::string scheme;
  std::uint64_t trialSeed = 0;
  double sumRate = std::numeric_limits<double>::quiet_NaN();
  double rateDlTotal = std::numeric_limits<double>::quiet_NaN();
  double rateUlTotal = std::numeric_limits<double>::quiet_NaN();
  double sensingSinrDb = std::numeric_limits<double>::quiet_NaN();
  double pDetect = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  double wallTime = 0.0;
  std::string status = "ok";  // ok | infeasible | error

  bool ok() const { return status == "ok"; }
  auto key() const { return std::make_tuple(sweepValue, scheme, trialSeed); }
};

struct Aggregate {
  double sweepValue = 0.0;
  std::string scheme;
  int count = 0;
  double meanSumRate = 0.0, seSumRate = 0.0;
  double meanSensingSinrDb = 0.0;
  double meanPDetect = 0.0;
};

struct BeamCurve {
  std::string name;
  std::vector<double> gainDb;
};

struct BeampatternSamples {
  std::vector<double> anglesRad;
  std::vector<BeamCurve> curves;
};

struct BeampatternRecord {
  std::string scheme;
  std::uint64_t trialSeed = 0;
  BeampatternSamples samples;
  double targetAngle = 0.0;           // at the PBS
  std::vector<double> dlAngles;       // [d] at the PBS
  std::vector<double> ulAngles;       // [u] at the PBS
};

struct ResultTable {
  std::string experiment;
  std::string sweepParameter;
  std::vector<ResultRow> rows;
  std::vector<BeampatternRecord> beampatterns;

  static const std::vector<std::string>& columns() {
    static const std::vector<std::string> c = {
        "sweep_value", "scheme", "trial_seed", "sum_rate_bps_hz", "rate_dl_total_bps_hz", "rate_ul_total_bps_hz",
        "sensing_sinr_db", "p_detect", "iterations", "status"};
    return c;
  }

  int count_status(const std::string& status) const {
    return static_cast<int>(std::count_if(rows.begin(), rows.end(), [&](const ResultRow& r) { return r.status == status; }));
  }
  double failed_fraction() const {
    if (rows.empty()) return 0.0;
    return static_cast<double>(rows.size() - count_status("ok")) / static_cast<double>(rows.size());
  }
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Standard error of the mean (sample standard deviation / sqrt(n)).
inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double gain_db(double g, double peak) {
  constexpr double floorDb = -300.0;
  if (!(peak > 0.0) || !(g > 0.0)) return floorDb;
  return std::max(10.0 * std::log10(g / peak), floorDb);
}

inline BeamCurve normalized(std::string name, const std::vector<double>& g) {
  const double peak = g.empty() ? 0.0 : *std::max_element(g.begin(), g.end());
  BeamCurve c{std::move(name), {}};
  for (double x : g) c.gainDb.push_back(gain_db(x, peak));
  return c;
}

}  // namespace detail

inline std::vector<double> default_angle_grid_deg() {
  std::vector<double> g;
  for (int a = -90; a <= 90; ++a) g.push_back(a);
  return g;
}

/// Transmit gain a_t^H X a_t and receive gains |f^H a_r|^2 of the sensing
/// filter and each UL filter on the PBS block, each in dB relative to its
/// own maximum. With `sbsBlocks` the same receive curves are added per SBS.
inline BeampatternSamples beampattern_export(const BeamformerSolution& s, const ChannelSet& c,
                                             const std::vector<double>& anglesRad, bool sbsBlocks = false) {
  BeampatternSamples out;
  out.anglesRad = anglesRad;
  const CMat x = s.total_covariance();
  std::vector<double> tx;
  for (double th : anglesRad) tx.push_back(std::max(quad_form(x, steering_vector(th, c.M, c.spacing)), 0.0));
  out.curves.push_back(detail::normalized("tx", tx));

  auto receive_curve = [&](const CVec& f, int iota) {
    std::vector<double> g;
    const int off = c.row_offset(iota), n = c.row_count(iota);
    for (double th : anglesRad) {
      g.push_back(f.size() == 0 ? 0.0 : std::norm(f.segment(off, n).dot(steering_vector(th, n, c.spacing))));
    }
    return g;
  };
  const int last = sbsBlocks ? c.J : 0;
  for (int iota = 0; iota <= last; ++iota) {
    const std::string suffix = iota == 0 ? "" : "_sbs" + std::to_string(iota);
    out.curves.push_back(detail::normalized("rx_sense" + suffix, receive_curve(s.u, iota)));
    for (std::size_t u = 0; u < s.vU.size(); ++u) {
      out.curves.push_back(detail::normalized("rx_ul_" + std::to_string(u) + suffix, receive_curve(s.vU[u], iota)));
    }
  }
  return out;
}

/// Configuration of one grid point of a sweep.
inline ScenarioConfig apply_sweep(ScenarioConfig cfg, ExperimentName e, double value) {
  auto integral = [&](const char* what) {
    const double r = std::round(value);
    if (std::abs(value - r) > 1e-9 || r < 1) {
      throw ConfigError(std::string("grid value for ") + what + " must be a positive integer");
    }
    return static_cast<int>(r);
  };
  switch (e) {
    case ExperimentName::RateVsGamma: cfg.gammaSenseDb = value; break;
    case ExperimentName::RateVsPmax: cfg.pMaxPbsDbm = value; break;
    case ExperimentName::RateVsJ: cfg.J = integral("J"); break;
    case ExperimentName::RateVsM: cfg.M = integral("M"); break;
    case ExperimentName::RateVsN: cfg.N0 = cfg.N1 = integral("N"); break;
    case ExperimentName::TopologyCompare: {
      const int k = static_cast<int>(std::round(value));
      if (k < 0 || k > 2 || std::abs(value - k) > 1e-9) throw ConfigError("topology grid values must be 0, 1 or 2");
      cfg.topology = static_cast<Topology>(k);
      break;
    }
    default: break;
  }
  validate(cfg);
  return cfg;
}

namespace detail {

inline ResultRow row_from(const RunOutcome& r, double sweep, Scheme scheme, std::uint64_t seed, double pFa, double wall) {
  ResultRow row;
  row.sweepValue = sweep;
  row.scheme = to_string(scheme);
  row.trialSeed = seed;
  row.sumRate = r.metrics.sumRate;
  row.rateDlTotal = r.metrics.rate_dl_total();
  row.rateUlTotal = r.metrics.rate_ul_total();
  row.sensingSinrDb = linear_to_db(r.metrics.sinrSense);
  row.pDetect = detection_probability(r.metrics.sinrSense, pFa);
  row.iterations = static_cast<int>(r.trace.iterations.size());
  row.wallTime = wall;
  return row;
}

struct TrialOutput {
  std::vector<ResultRow> rows;
  std::vector<BeampatternRecord> patterns;
};

/// Every requested scheme on one shared channel realization.
inline TrialOutput run_trial(const ExperimentSpec& spec, const std::vector<Scheme>& schemes, double sweep,
                             std::uint64_t seed) {
  TrialOutput out;
  const ScenarioConfig cfg = apply_sweep(spec.config, spec.name, sweep);
  const Scenario scenario = make_scenario(cfg, seed);
  const bool beams = spec.name == ExperimentName::TxBeampattern || spec.name == ExperimentName::RxBeampattern;
  std::vector<double> grid = spec.angleGridDeg.empty() ? default_angle_grid_deg() : spec.angleGridDeg;
  for (double& a : grid) a *= std::numbers::pi / 180.0;

  std::optional<RunOutcome> japs;
  // JAPS first so that CommOnly can also start from its solution.
  std::vector<Scheme> order = schemes;
  std::stable_partition(order.begin(), order.end(), [](Scheme s) { return s == Scheme::JAPS; });
  for (Scheme scheme : order) {
    AlgorithmOptions opt;
    opt.scheme = scheme;
    opt.maxOuterIters = cfg.tolerances.maxOuterIters;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      RunOutcome r = optimize(scenario.channels, cfg, opt);
      if (scheme == Scheme::CommOnly && japs) {
        RunOutcome warm = optimize(scenario.channels, cfg, opt, &japs->solution);
        if (warm.metrics.sumRate > r.metrics.sumRate) r = std::move(warm);
      }
      const double wall = seconds_since(t0);
      if (spec.name == ExperimentName::Convergence) {
        for (std::size_t k = 0; k < r.trace.iterations.size(); ++k) {
          const IterationRecord& it = r.trace.iterations[k];
          ResultRow row;
          row.sweepValue = static_cast<double>(k + 1);
          row.scheme = to_string(scheme);
          row.trialSeed = seed;
          row.sumRate = it.sumRate;
          row.rateDlTotal = it.rateDlTotal;
          row.rateUlTotal = it.rateUlTotal;
          row.sensingSinrDb = linear_to_db(it.sensingSinr);
          row.pDetect = detection_probability(it.sensingSinr, spec.pFa);
          row.iterations = static_cast<int>(k + 1);
          row.wallTime = it.wallTime;
          out.rows.push_back(row);
        }
      } else {
        out.rows.push_back(row_from(r, sweep, scheme, seed, spec.pFa, wall));
      }
      if (beams) {
        BeampatternRecord b;
        b.scheme = to_string(scheme);
        b.trialSeed = seed;
        b.samples = beampattern_export(r.solution, r.channels, grid, spec.sbsPatterns);
        b.targetAngle = scenario.geometry.theta;
        b.dlAngles = scenario.geometry.thetaDl;
        for (const auto& t : scenario.geometry.thetaUl) b.ulAngles.push_back(t[0]);
        out.patterns.push_back(std::move(b));
      }
      if (scheme == Scheme::JAPS) japs = std::move(r);
    } catch (const InfeasibleSensing&) {
      ResultRow row;
      row.sweepValue = spec.name == ExperimentName::Convergence ? 0.0 : sweep;
      row.scheme = to_string(scheme);
      row.trialSeed = seed;
      row.wallTime = seconds_since(t0);
      row.status = "infeasible";
      out.rows.push_back(row);
    } catch (const Error&) {
      ResultRow row;
      row.sweepValue = spec.name == ExperimentName::Convergence ? 0.0 : sweep;
      row.scheme = to_string(scheme);
      row.trialSeed = seed;
      row.wallTime = seconds_since(t0);
      row.status = "error";
      out.rows.push_back(row);
    }
  }
  return out;
}

inline std::string pfa_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pfa=%g", p);
  return buf;
}

}  // namespace detail

inline void write_results_csv(const ResultTable& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  const auto& cols = ResultTable::columns();
  for (std::size_t i = 0; i < cols.size(); ++i) f << (i ? "," : "") << cols[i];
  f << '\n';
  for (const auto& r : t.rows) {
    f << detail::fmt(r.sweepValue) << ',' << r.scheme << ',' << r.trialSeed << ',' << detail::fmt(r.sumRate) << ','
      << detail::fmt(r.rateDlTotal) << ',' << detail::fmt(r.rateUlTotal) << ',' << detail::fmt(r.sensingSinrDb) << ','
      << detail::fmt(r.pDetect) << ',' << r.iterations << ',' << r.status << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Reads a results CSV written by write_results_csv. Wall times are not
/// part of that file and come back as 0.
inline ResultTable read_results_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || detail::split_csv_line(line) != ResultTable::columns()) {
    throw SchemaMismatch("'" + path + "' does not carry the result-table header");
  }
  ResultTable t;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != ResultTable::columns().size()) {
      throw SchemaMismatch(path + ":" + std::to_string(lineno) + ": wrong number of cells");
    }
    try {
      ResultRow r;
      r.sweepValue = std::stod(cells[0]);
      r.scheme = cells[1];
      r.trialSeed = std::stoull(cells[2]);
      r.sumRate = std::stod(cells[3]);
      r.rateDlTotal = std::stod(cells[4]);
      r.rateUlTotal = std::stod(cells[5]);
      r.sensingSinrDb = std::stod(cells[6]);
      r.pDetect = std::stod(cells[7]);
      r.iterations = std::stoi(cells[8]);
      r.status = cells[9];
      t.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw SchemaMismatch(path + ":" + std::to_string(lineno) + ": unparsable cell");
    }
  }
  return t;
}

/// Mean and standard error per (sweepValue, scheme) over "ok" rows. With
/// `pairedOnly`, a scheme's trial contributes only if that scheme is "ok" at
/// every sweep value, so each scheme's curve averages one fixed set of
/// realizations.
inline std::vector<Aggregate> aggregate(const ResultTable& t, bool pairedOnly = false) {
  std::set<std::pair<std::string, std::uint64_t>> excluded;
  if (pairedOnly) {
    for (const auto& r : t.rows) {
      if (!r.ok()) excluded.insert({r.scheme, r.trialSeed});
    }
  }
  std::map<std::pair<double, std::string>, std::vector<const ResultRow*>> groups;
  for (const auto& r : t.rows) {
    if (r.ok() && !excluded.count({r.scheme, r.trialSeed})) groups[{r.sweepValue, r.scheme}].push_back(&r);
  }
  std::vector<Aggregate> out;
  for (const auto& [key, rows] : groups) {
    Aggregate a;
    a.sweepValue = key.first;
    a.scheme = key.second;
    a.count = static_cast<int>(rows.size());
    std::vector<double> rate, sinr, pd;
    for (const ResultRow* r : rows) {
      rate.push_back(r->sumRate);
      sinr.push_back(r->sensingSinrDb);
      pd.push_back(r->pDetect);
    }
    a.meanSumRate = detail::mean_of(rate);
    a.seSumRate = detail::stderr_of(rate);
    a.meanSensingSinrDb = detail::mean_of(sinr);
    a.meanPDetect = detail::mean_of(pd);
    out.push_back(a);
  }
  return out;
}

inline void write_aggregates_csv(const std::vector<Aggregate>& agg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << "sweep_value,scheme,count,mean_sum_rate_bps_hz,stderr_sum_rate_bps_hz,mean_sensing_sinr_db,mean_p_detect\n";
  for (const auto& a : agg) {
    f << detail::fmt(a.sweepValue) << ',' << a.scheme << ',' << a.count << ',' << detail::fmt(a.meanSumRate) << ','
      << detail::fmt(a.seSumRate) << ',' << detail::fmt(a.meanSensingSinrDb) << ',' << detail::fmt(a.meanPDetect)
      << '\n';
  }
}

inline void write_beampatterns_csv(const ResultTable& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << "scheme,trial_seed,curve,angle_deg,gain_db\n";
  for (const auto& b : t.beampatterns) {
    for (const auto& c : b.samples.curves) {
      for (std::size_t i = 0; i < c.gainDb.size(); ++i) {
        f << b.scheme << ',' << b.trialSeed << ',' << c.name << ','
          << detail::fmt(b.samples.anglesRad[i] * 180.0 / std::numbers::pi) << ',' << detail::fmt(c.gainDb[i]) << '\n';
      }
    }
  }
}

inline void write_beam_directions_csv(const ResultTable& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << "scheme,trial_seed,direction,angle_deg\n";
  const double deg = 180.0 / std::numbers::pi;
  for (const auto& b : t.beampatterns) {
    f << b.scheme << ',' << b.trialSeed << ",target," << detail::fmt(b.targetAngle * deg) << '\n';
    for (std::size_t d = 0; d < b.dlAngles.size(); ++d) {
      f << b.scheme << ',' << b.trialSeed << ",dl_" << d << ',' << detail::fmt(b.dlAngles[d] * deg) << '\n';
    }
    for (std::size_t u = 0; u < b.ulAngles.size(); ++u) {
      f << b.scheme << ',' << b.trialSeed << ",ul_" << u << ',' << detail::fmt(b.ulAngles[u] * deg) << '\n';
    }
  }
}

inline void write_timing_csv(const ResultTable& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << "sweep_value,scheme,trial_seed,wall_time_s\n";
  for (const auto& r : t.rows) {
    f << detail::fmt(r.sweepValue) << ',' << r.scheme << ',' << r.trialSeed << ',' << detail::fmt(r.wallTime) << '\n';
  }
}

inline nlohmann::json experiment_metadata(const ExperimentSpec& spec, const ResultTable& t,
                                          const std::vector<Scheme>& schemes, const std::vector<double>& grid) {
  nlohmann::json j;
  j["experiment"] = t.experiment;
  j["sweep_parameter"] = t.sweepParameter;
  j["sweep_grid"] = grid;
  j["trials"] = spec.trials;
  j["master_seed"] = spec.seed;
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < spec.trials; ++k) seeds.push_back(trial_seed(spec.seed, static_cast<std::uint64_t>(k)));
  j["trial_seeds"] = seeds;
  std::vector<std::string> names;
  for (Scheme s : schemes) names.push_back(to_string(s));
  j["schemes"] = names;
  j["p_fa"] = spec.pFa;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(spec.config)) cfg[k] = v;
  j["config"] = cfg;
  j["rows"] = t.rows.size();
  j["rows_infeasible"] = t.count_status("infeasible");
  j["rows_error"] = t.count_status("error");
  j["versions"] = {{"japs", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__},
                   {"cxx_standard", __cplusplus}};
  j["units"] = {{"rates", "bits/s/Hz"}, {"sinr", "dB"}, {"wall_time", "seconds"}, {"angles", "degrees"}};
  return j;
}

/// Runs every (sweepValue, trial) pair with all schemes on one shared
/// channel realization per pair. Trials may run on several threads; rows
/// are sorted by (sweepValue, scheme, trial) before anything is written.
inline ResultTable run_experiment(const ExperimentSpec& spec) {
  validate(spec);
  const std::vector<double> grid = spec.sweepGrid.empty() ? default_grid(spec.name) : spec.sweepGrid;
  if (is_sweep(spec.name) && grid.empty()) throw ConfigError("sweep grid must not be empty");
  const std::vector<Scheme> schemes = spec.schemes.empty() ? default_schemes(spec.name) : spec.schemes;

  ResultTable t;
  t.experiment = to_string(spec.name);
  t.sweepParameter = sweep_parameter(spec.name);

  if (spec.name == ExperimentName::DetectionCurve) {
    for (double db : grid) {
      for (double pFa : spec.pFaGrid) {
        ResultRow r;
        r.sweepValue = db;
        r.scheme = detail::pfa_label(pFa);
        r.sensingSinrDb = db;
        r.pDetect = detection_probability(db_to_linear(db), pFa);
        r.sumRate = r.rateDlTotal = r.rateUlTotal = 0.0;
        t.rows.push_back(r);
      }
    }
  } else {
    for (double v : grid) apply_sweep(spec.config, spec.name, v);  // config errors before any work
    const std::vector<double> points = is_sweep(spec.name) ? grid : std::vector<double>{0.0};
    std::vector<std::pair<double, std::uint64_t>> jobs;
    for (double v : points) {
      for (int k = 0; k < spec.trials; ++k) jobs.emplace_back(v, trial_seed(spec.seed, static_cast<std::uint64_t>(k)));
    }
    std::vector<detail::TrialOutput> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next++) < jobs.size();) {
        results[i] = detail::run_trial(spec, schemes, jobs[i].first, jobs[i].second);
      }
    };
    const int n = std::min<int>(spec.threads, static_cast<int>(jobs.size()));
    std::vector<std::thread> pool;
    for (int k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (auto& r : results) {
      t.rows.insert(t.rows.end(), r.rows.begin(), r.rows.end());
      for (auto& b : r.patterns) t.beampatterns.push_back(std::move(b));
    }
  }
  std::stable_sort(t.rows.begin(), t.rows.end(), [](const ResultRow& a, const ResultRow& b) { return a.key() < b.key(); });
  std::stable_sort(t.beampatterns.begin(), t.beampatterns.end(), [](const auto& a, const auto& b) {
    return std::tie(a.scheme, a.trialSeed) < std::tie(b.scheme, b.trialSeed);
  });

  if (!spec.outputDir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(spec.outputDir);
    const fs::path dir(spec.outputDir);
    write_results_csv(t, (dir / "results.csv").string());
    write_timing_csv(t, (dir / "timing.csv").string());
    write_aggregates_csv(aggregate(t), (dir / "aggregates.csv").string());
    write_aggregates_csv(aggregate(t, true), (dir / "aggregates_paired.csv").string());
    if (!t.beampatterns.empty()) {
      write_beampatterns_csv(t, (dir / "beampatterns.csv").string());
      write_beam_directions_csv(t, (dir / "beam_directions.csv").string());
    }
    std::ofstream meta(dir / "metadata.json");
    meta << experiment_metadata(spec, t, schemes, grid).dump(2) << '\n';
  }
  return t;
}

/// Paired per-trial difference first - second at one sweep value.
struct PairedDifference {
  double sweepValue = 0.0;
  std::string first, second;
  int count = 0;
  double mean = 0.0, stderrMean = 0.0;
  double minimum = 0.0, maximum = 0.0;
  bool expectPerTrial = false;  // the ordering must hold on every trial
  bool violated = false;        // expected first >= second broken
};

struct ComparisonReport {
  std::vector<PairedDifference> differences;
  int violations() const {
    return static_cast<int>(std::count_if(differences.begin(), differences.end(),
                                          [](const PairedDifference& d) { return d.violated; }));
  }
};

/// Expected orderings: CommOnly >= JAPS per trial (relaxation), and JAPS
/// above each restricted or benchmark scheme on average.
inline std::vector<std::tuple<std::string, std::string, bool>> expected_orderings() {
  return {{"comm_only", "japs", true},
          {"japs", "active_only", false},
          {"japs", "passive_only", false},
          {"japs", "rzf", false}};
}

/// Merges tables (identical duplicate rows collapse; conflicting ones are a
/// schema error) and reports paired sum-rate differences for every scheme
/// pair at every sweep value, over trials where both schemes are "ok".
inline ComparisonReport summarize(const std::vector<ResultTable>& tables, double slack = 1e-9) {
  if (tables.empty()) throw SchemaMismatch("nothing to summarize");
  std::map<std::tuple<double, std::string, std::uint64_t>, ResultRow> merged;
  for (const auto& t : tables) {
    if (t.experiment != tables.front().experiment || t.sweepParameter != tables.front().sweepParameter) {
      throw SchemaMismatch("tables come from different experiments ('" + tables.front().experiment + "' vs '" +
                           t.experiment + "')");
    }
    for (const auto& r : t.rows) {
      auto [it, inserted] = merged.emplace(r.key(), r);
      if (!inserted) {
        const ResultRow& o = it->second;
        const bool same = o.status == r.status &&
                          (o.sumRate == r.sumRate || (std::isnan(o.sumRate) && std::isnan(r.sumRate)));
        if (!same) throw SchemaMismatch("conflicting rows for scheme '" + r.scheme + "' trial " + std::to_string(r.trialSeed));
      }
    }
  }
  std::set<double> sweeps;
  std::set<std::string> schemes;
  std::set<std::uint64_t> trials;
  for (const auto& [k, r] : merged) {
    sweeps.insert(std::get<0>(k));
    schemes.insert(std::get<1>(k));
    trials.insert(std::get<2>(k));
  }
  // One orientation per scheme pair: the expected one if any, else name order.
  std::vector<std::pair<std::string, std::string>> pairs;
  for (auto a = schemes.begin(); a != schemes.end(); ++a) {
    for (auto b = std::next(a); b != schemes.end(); ++b) {
      std::pair<std::string, std::string> p{*a, *b};
      for (const auto& [x, y, per] : expected_orderings()) {
        if (x == *b && y == *a) p = {*b, *a};
      }
      pairs.push_back(p);
    }
  }
  ComparisonReport rep;
  for (double sv : sweeps) {
    for (const auto& [a, b] : pairs) {
      PairedDifference d;
      d.sweepValue = sv;
      d.first = a;
      d.second = b;
      std::vector<double> diffs;
      for (std::uint64_t tr : trials) {
        const auto ia = merged.find({sv, a, tr});
        const auto ib = merged.find({sv, b, tr});
        if (ia == merged.end() || ib == merged.end() || !ia->second.ok() || !ib->second.ok()) continue;
        diffs.push_back(ia->second.sumRate - ib->second.sumRate);
      }
      d.count = static_cast<int>(diffs.size());
      if (!diffs.empty()) {
        d.mean = detail::mean_of(diffs);
        d.stderrMean = detail::stderr_of(diffs);
        d.minimum = *std::min_element(diffs.begin(), diffs.end());
        d.maximum = *std::max_element(diffs.begin(), diffs.end());
      }
      for (const auto& [x, y, per] : expected_orderings()) {
        if (x == a && y == b && d.count > 0) {
          d.expectPerTrial = per;
          d.violated = per ? d.minimum < -slack : d.mean < -slack;
        }
      }
      rep.differences.push_back(d);
    }
  }
  return rep;
}

inline void write_report_csv(const ComparisonReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << "sweep_value,first,second,count,mean_diff_bps_hz,stderr_diff_bps_hz,min_diff_bps_hz,max_diff_bps_hz,"
       "expected_order,violated\n";
  for (const auto& d : r.differences) {
    std::string expected = "none";
    for (const auto& [x, y, per] : expected_orderings()) {
      if (x == d.first && y == d.second) expected = per ? "per_trial" : "mean";
    }
    f << detail::fmt(d.sweepValue) << ',' << d.first << ',' << d.second << ',' << d.count << ',' << detail::fmt(d.mean)
      << ',' << detail::fmt(d.stderrMean) << ',' << detail::fmt(d.minimum) << ',' << detail::fmt(d.maximum) << ','
      << expected << ',' << (d.violated ? "yes" : "no") << '\n';
  }
}

}  // namespace japs

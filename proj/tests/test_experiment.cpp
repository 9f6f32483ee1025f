#include "japs/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <unistd.h>

using namespace japs;
namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("japs_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<double> radians(const std::vector<double>& deg) {
  std::vector<double> r;
  for (double d : deg) r.push_back(d * kDeg);
  return r;
}

const BeamCurve& curve(const BeampatternSamples& s, const std::string& name) {
  for (const auto& c : s.curves) {
    if (c.name == name) return c;
  }
  throw std::runtime_error("no curve " + name);
}

}  // namespace

TEST(Experiment, NamesAndGrids) {
  for (const auto& [e, name] : experiment_names()) EXPECT_EQ(parse_experiment(name), e);
  EXPECT_THROW(parse_experiment("rate_vs_banana"), ConfigError);
  EXPECT_EQ(default_grid(ExperimentName::RateVsGamma), (std::vector<double>{6, 8, 10, 12}));
  EXPECT_EQ(default_grid(ExperimentName::DetectionCurve).front(), -10.0);
  EXPECT_FALSE(is_sweep(ExperimentName::Convergence));
  EXPECT_EQ(sweep_parameter(ExperimentName::RateVsGamma), "gamma_sense_db");
}

TEST(Experiment, BadInputsAreConfigErrors) {
  ExperimentSpec s;
  s.trials = 0;
  EXPECT_THROW(run_experiment(s), ConfigError);
  s = {};
  s.pFa = 1.5;
  EXPECT_THROW(run_experiment(s), ConfigError);
  s = {};
  s.name = ExperimentName::RateVsM;
  s.sweepGrid = {4.5};
  EXPECT_THROW(run_experiment(s), ConfigError);
  s = {};
  s.name = ExperimentName::TopologyCompare;
  s.sweepGrid = {3};
  EXPECT_THROW(run_experiment(s), ConfigError);
}

TEST(Experiment, DetectionCurveMatchesClosedForm) {
  ExperimentSpec s;
  s.name = ExperimentName::DetectionCurve;
  const ResultTable t = run_experiment(s);
  EXPECT_EQ(t.rows.size(), default_grid(s.name).size() * s.pFaGrid.size());
  for (const auto& r : t.rows) {
    const double pfa = std::stod(r.scheme.substr(4));
    const double sinr = std::pow(10.0, r.sweepValue / 10.0);
    EXPECT_NEAR(r.pDetect, std::pow(pfa, 1.0 / (1.0 + sinr)), 1e-10);
  }
}

TEST(Experiment, ConvergenceTraceNondecreasing) {
  ExperimentSpec s;
  s.name = ExperimentName::Convergence;
  s.trials = 1;
  const ResultTable t = run_experiment(s);
  ASSERT_GE(t.rows.size(), 2u);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    EXPECT_EQ(t.rows[k].sweepValue, static_cast<double>(k + 1));
    if (k > 0) EXPECT_GE(t.rows[k].sumRate, t.rows[k - 1].sumRate * (1.0 - 1e-6));
  }
}

TEST(Experiment, RateFallsWithSensingThreshold) {
  ExperimentSpec s;
  s.name = ExperimentName::RateVsGamma;
  s.trials = 4;
  s.schemes = {Scheme::JAPS};
  const auto agg = aggregate(run_experiment(s), true);
  ASSERT_EQ(agg.size(), 4u);
  for (std::size_t k = 1; k < agg.size(); ++k) {
    EXPECT_GT(agg[k].sweepValue, agg[k - 1].sweepValue);
    EXPECT_LE(agg[k].meanSumRate, agg[k - 1].meanSumRate + 1e-9);
  }
}

TEST(Experiment, ReproducibleFilesAndSchema) {
  ExperimentSpec s;
  s.name = ExperimentName::RateVsGamma;
  s.trials = 2;
  s.sweepGrid = {8, 10};
  s.schemes = {Scheme::JAPS, Scheme::CommOnly, Scheme::RzfBaseline};
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  s.outputDir = a.string();
  const ResultTable ta = run_experiment(s);
  s.outputDir = b.string();
  s.threads = 2;
  run_experiment(s);
  EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
  EXPECT_EQ(slurp(a / "aggregates.csv"), slurp(b / "aggregates.csv"));
  EXPECT_TRUE(fs::exists(a / "metadata.json"));
  EXPECT_TRUE(fs::exists(a / "timing.csv"));

  const ResultTable back = read_results_csv((a / "results.csv").string());
  ASSERT_EQ(back.rows.size(), ta.rows.size());
  for (std::size_t k = 0; k < back.rows.size(); ++k) {
    EXPECT_EQ(back.rows[k].key(), ta.rows[k].key());
    EXPECT_EQ(back.rows[k].status, ta.rows[k].status);
    if (ta.rows[k].ok()) EXPECT_EQ(back.rows[k].sumRate, ta.rows[k].sumRate);
  }
  const std::string header = slurp(a / "results.csv").substr(0, slurp(a / "results.csv").find('\n'));
  EXPECT_NE(header.find("bps_hz"), std::string::npos);
  EXPECT_NE(header.find("_db"), std::string::npos);
  EXPECT_NE(slurp(a / "timing.csv").find("wall_time_s"), std::string::npos);

  std::ofstream bad(a / "broken.csv");
  bad << "sweep_value,scheme\n1,japs\n";
  bad.close();
  EXPECT_THROW(read_results_csv((a / "broken.csv").string()), SchemaMismatch);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Beampattern, IsotropicIsFlat) {
  ScenarioConfig cfg;
  const ChannelSet c = make_scenario(cfg, 1).channels;
  BeamformerSolution s;
  s.set_vectors(CMat::Zero(c.M, 0));
  s.vR = CMat::Identity(c.M, c.M) / c.M;
  const auto grid = radians(default_angle_grid_deg());
  const BeampatternSamples b = beampattern_export(s, c, grid);
  const auto& tx = curve(b, "tx").gainDb;
  ASSERT_EQ(tx.size(), grid.size());
  EXPECT_LE(*std::max_element(tx.begin(), tx.end()) - *std::min_element(tx.begin(), tx.end()), 1e-8);
}

TEST(Beampattern, MatchedFilterPeak) {
  ScenarioConfig cfg;
  const ChannelSet c = make_scenario(cfg, 1).channels;
  const auto grid = radians(default_angle_grid_deg());
  for (double deg : {-55.0, -20.0, 0.0, 30.0, 47.5}) {
    BeamformerSolution s;
    s.set_vectors(steering_vector(deg * kDeg, c.M, c.spacing));
    s.vR = CMat::Zero(c.M, c.M);
    const BeampatternSamples b = beampattern_export(s, c, grid);
    const auto& tx = curve(b, "tx").gainDb;
    const auto peak = std::max_element(tx.begin(), tx.end()) - tx.begin();
    EXPECT_LE(std::abs(grid[peak] / kDeg - deg), 1.0 + 1e-9);
    EXPECT_EQ(*std::max_element(tx.begin(), tx.end()), 0.0);
  }
}

TEST(Beampattern, SampleCountsAndSbsCurves) {
  ScenarioConfig cfg;
  const ChannelSet c = make_scenario(cfg, 2).channels;
  const RunOutcome r = optimize(c, cfg, {});
  const std::vector<double> grid = radians({-30, 0, 30, 60});
  const BeampatternSamples pbs = beampattern_export(r.solution, c, grid);
  EXPECT_EQ(pbs.curves.size(), static_cast<std::size_t>(2 + c.U()));
  for (const auto& cv : pbs.curves) EXPECT_EQ(cv.gainDb.size(), grid.size());
  const BeampatternSamples all = beampattern_export(r.solution, c, grid, true);
  EXPECT_EQ(all.curves.size(), static_cast<std::size_t>(1 + (1 + c.U()) * (1 + c.J)));
}

TEST(Summarize, IdenticalTablesAndDominance) {
  ExperimentSpec s;
  s.name = ExperimentName::RateVsGamma;
  s.trials = 3;
  s.sweepGrid = {10};
  s.schemes = {Scheme::JAPS, Scheme::CommOnly};
  const ResultTable t = run_experiment(s);

  ResultTable same = t;
  for (auto& r : same.rows) r.scheme = r.scheme == "japs" ? "japs_copy" : r.scheme;
  std::vector<ResultTable> both = {t, same};
  for (const auto& d : summarize(both).differences) {
    if (d.first.starts_with("japs") && d.second.starts_with("japs")) {
      EXPECT_EQ(d.mean, 0.0);
      EXPECT_EQ(d.minimum, 0.0);
      EXPECT_EQ(d.maximum, 0.0);
    }
  }

  const ComparisonReport rep = summarize({t, t});  // duplicates collapse
  EXPECT_EQ(rep.violations(), 0);
  bool seen = false;
  for (const auto& d : rep.differences) {
    if (d.first == "comm_only" && d.second == "japs") {
      seen = true;
      EXPECT_TRUE(d.expectPerTrial);
      EXPECT_GE(d.minimum, 0.0);
    }
  }
  EXPECT_TRUE(seen);

  EXPECT_THROW(summarize({}), SchemaMismatch);
  ResultTable other = t;
  other.experiment = "rate_vs_pmax";
  EXPECT_THROW(summarize({t, other}), SchemaMismatch);
  ResultTable conflicting = t;
  conflicting.rows[0].sumRate += 1.0;
  EXPECT_THROW(summarize({t, conflicting}), SchemaMismatch);
}

#include "japs/japs.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(',', start);
    const std::string item = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!item.empty()) out.push_back(item);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s)) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw japs::ConfigError("bad grid value '" + item + "'");
    }
  }
  if (out.empty()) throw japs::ConfigError("--grid needs at least one value");
  return out;
}

struct RunArgs {
  std::string experiment;
  std::string configPath;
  int trials = 20;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string schemes;
  std::string grid;
  std::vector<std::string> sets;
  double pFa = 1e-2;
  int threads = 1;
  bool sbsPatterns = false;
  bool quiet = false;
};

int run(const RunArgs& a) {
  japs::ExperimentSpec spec;
  spec.name = japs::parse_experiment(a.experiment);
  japs::ScenarioConfig cfg;
  if (!a.configPath.empty()) {
    auto loaded = japs::load_config_file(a.configPath);
    cfg = loaded.config;
  }
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw japs::ConfigError("--set expects key=value, got '" + kv + "'");
    japs::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  japs::validate(cfg);
  spec.config = cfg;
  spec.trials = a.trials;
  spec.seed = a.seed.value_or(cfg.seed);
  spec.outputDir = a.out;
  spec.pFa = a.pFa;
  spec.threads = a.threads;
  spec.sbsPatterns = a.sbsPatterns;
  for (const auto& s : split(a.schemes)) spec.schemes.push_back(japs::parse_scheme(s));
  if (!a.grid.empty()) spec.sweepGrid = parse_grid(a.grid);

  if (!a.quiet) {
    for (const auto& line : japs::describe_conversions(cfg)) std::cerr << "config " << line << '\n';
  }
  const japs::ResultTable t = japs::run_experiment(spec);
  const int infeasible = t.count_status("infeasible");
  const int errors = t.count_status("error");
  if (!a.quiet) {
    std::cerr << t.experiment << ": " << t.rows.size() << " rows (" << infeasible << " infeasible, " << errors
              << " failed) written to " << a.out << '\n';
  }
  if (t.failed_fraction() > 0.10) {
    std::cerr << "partial failure: " << (infeasible + errors) << " of " << t.rows.size()
              << " scheme runs did not produce a solution (" << infeasible << " infeasible, " << errors
              << " solver errors)\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

int summarize_dirs(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<japs::ResultTable> tables;
  for (const auto& d : dirs) {
    const std::filesystem::path dir(d);
    japs::ResultTable t = japs::read_results_csv((dir / "results.csv").string());
    std::ifstream meta(dir / "metadata.json");
    if (meta) {
      const auto j = nlohmann::json::parse(meta);
      t.experiment = j.value("experiment", "");
      t.sweepParameter = j.value("sweep_parameter", "");
    }
    tables.push_back(std::move(t));
  }
  const japs::ComparisonReport rep = japs::summarize(tables);
  japs::write_report_csv(rep, out);
  for (const auto& d : rep.differences) {
    if (!d.violated) continue;
    std::cerr << "ordering violated at " << d.sweepValue << ": " << d.first << " - " << d.second
              << (d.expectPerTrial ? " min " : " mean ") << (d.expectPerTrial ? d.minimum : d.mean) << '\n';
  }
  std::cerr << rep.differences.size() << " comparisons, " << rep.violations() << " ordering violations -> " << out
            << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative multi-static ISAC beamforming experiments"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* runCmd = app.add_subcommand("run", "run one experiment and write CSV + metadata");
  std::string experimentHelp = "experiment:";
  for (const auto& [k, v] : japs::experiment_names()) experimentHelp += " " + v;
  runCmd->add_option("experiment", ra.experiment, experimentHelp)->required();
  runCmd->add_option("--config", ra.configPath, "key = value config file");
  runCmd->add_option("--set", ra.sets, "override one config key (key=value), repeatable");
  runCmd->add_option("--trials", ra.trials, "Monte Carlo trials per grid point")->check(CLI::PositiveNumber);
  runCmd->add_option("--seed", ra.seed, "master seed (default: config seed)");
  runCmd->add_option("--out", ra.out, "output directory");
  runCmd->add_option("--schemes", ra.schemes, "comma list of japs,active_only,passive_only,comm_only,rzf");
  runCmd->add_option("--grid", ra.grid, "comma list of sweep values");
  runCmd->add_option("--pfa", ra.pFa, "false-alarm probability for the p_detect column");
  runCmd->add_option("--threads", ra.threads, "worker threads")->check(CLI::PositiveNumber);
  runCmd->add_flag("--sbs-patterns", ra.sbsPatterns, "also export SBS receive patterns");
  runCmd->add_flag("--quiet", ra.quiet, "no progress output");

  std::vector<std::string> dirs;
  std::string reportPath = "report.csv";
  auto* sumCmd = app.add_subcommand("summarize", "paired scheme differences over result directories");
  sumCmd->add_option("dirs", dirs, "directories written by run")->required();
  sumCmd->add_option("--out", reportPath, "report CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (runCmd->parsed()) return run(ra);
    return summarize_dirs(dirs, reportPath);
  } catch (const japs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const japs::SchemaMismatch& e) {
    std::cerr << "schema mismatch: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

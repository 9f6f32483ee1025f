#pragma once

#include "japs/errors.hpp"
#include "japs/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace japs {

enum class Topology { Random, Circular, Linear };

inline std::string to_string(Topology t) {
  switch (t) {
    case Topology::Random: return "random";
    case Topology::Circular: return "circular";
    case Topology::Linear: return "linear";
  }
  return "random";
}

inline Topology parse_topology(const std::string& s) {
  if (s == "random") return Topology::Random;
  if (s == "circular") return Topology::Circular;
  if (s == "linear") return Topology::Linear;
  throw ConfigError("unknown topology '" + s + "' (expected random|circular|linear)");
}

/// Path-loss exponents per link class.
struct PathLossExponents {
  double pbsTarget = 2.3;  // kept for completeness; the sensing gain model uses 1/(2d)
  double targetSbs = 2.3;
  double pbsUe = 2.4;   // PBS -> DL UE and UL UE -> PBS
  double ueSbs = 2.5;   // UL UE -> SBS
  double ueUe = 2.5;    // UL UE -> DL UE
};

struct Tolerances {
  double eta1Init = 1e4;      // initial rank-one penalty factor
  double etaScale = 0.7;      // penalty factor scaling per outer layer step
  double epsInner = 1e-2;     // relative change stop for the SCA inner layer
  double epsRankOne = 1e-5;   // max nuclear-minus-spectral gap
  double xiOuter = 1e-4;      // relative sum-rate change stop for the AO loop
  int maxOuterIters = 50;     // penalty (outer layer) iterations
  int maxInnerIters = 30;     // SCA (inner layer) iterations
  double conicTol = 1e-9;     // duality-gap target of each convex subproblem
};

/// Every physical and algorithmic parameter of one scenario. Power-like
/// quantities are stored in the units they are configured in (dB / dBm);
/// the *Linear() accessors return linear values (W for powers).
struct ScenarioConfig {
  int M = 6;
  int N0 = 6;
  int N1 = 6;
  int J = 3;
  int D = 2;
  int U = 2;
  double pMaxPbsDbm = 30.0;
  double pMaxUeDbm = 16.0;
  double noiseDlDbm = -80.0;
  double noiseUlDbm = -80.0;
  double noiseSenseDbm = -80.0;
  double gammaSenseDb = 10.0;
  double ricianFactorDb = 3.0;
  double c0Db = -30.0;
  double l0 = 1.0;
  PathLossExponents kappa;
  double betaSiDb = -110.0;
  double sigma0 = 0.01;
  double antennaSpacing = 0.5;
  double wavelength = 0.1;
  double arraySeparation = 2.0;
  Topology topology = Topology::Random;
  double regionSize = 500.0;
  std::uint64_t seed = 1;
  bool fixedUeAngles = true;
  double commPowerFraction = 0.8;
  Tolerances tolerances;

  double pMaxPbs() const { return dbm_to_watt(pMaxPbsDbm); }
  double pMaxUe() const { return dbm_to_watt(pMaxUeDbm); }
  double noiseDl() const { return dbm_to_watt(noiseDlDbm); }
  double noiseUl() const { return dbm_to_watt(noiseUlDbm); }
  double noiseSense() const { return dbm_to_watt(noiseSenseDbm); }
  double gammaSense() const { return db_to_linear(gammaSenseDb); }
  double ricianFactor() const { return db_to_linear(ricianFactorDb); }
  double c0() const { return db_to_linear(c0Db); }
  double betaSi() const { return db_to_linear(betaSiDb); }
  int receiveRows() const { return N0 + J * N1; }
};

inline void validate(const ScenarioConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(c.M >= 1 && c.N0 >= 1 && c.N1 >= 1 && c.J >= 1 && c.D >= 1 && c.U >= 1,
          "all antenna and node counts must be >= 1");
  for (double v : {c.pMaxPbsDbm, c.pMaxUeDbm, c.noiseDlDbm, c.noiseUlDbm, c.noiseSenseDbm,
                   c.gammaSenseDb, c.ricianFactorDb, c.c0Db, c.betaSiDb}) {
    require(std::isfinite(v), "dB quantities must be finite");
  }
  require(c.antennaSpacing > 0.0, "antenna_spacing must be > 0");
  require(c.gammaSense() > 0.0, "gamma_sense must be > 0 (linear)");
  require(c.l0 > 0.0 && c.wavelength > 0.0 && c.regionSize > 0.0, "lengths must be > 0");
  require(c.sigma0 > 0.0, "sigma0 must be > 0");
  require(c.arraySeparation > 0.0, "array_separation must be > 0");
  require(c.commPowerFraction > 0.0 && c.commPowerFraction < 1.0,
          "comm_power_fraction must lie in (0, 1)");
  const auto& t = c.tolerances;
  require(t.eta1Init > 0.0, "eta1_init must be > 0");
  require(t.etaScale > 0.0 && t.etaScale < 1.0, "eta_scale must lie in (0, 1)");
  require(t.epsInner > 0.0 && t.epsRankOne > 0.0 && t.xiOuter > 0.0 && t.conicTol > 0.0,
          "tolerances must be > 0");
  require(t.maxOuterIters >= 1 && t.maxInnerIters >= 1, "iteration caps must be >= 1");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for '" + key + "': '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for '" + key + "': '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean value for '" + key + "': '" + v + "'");
}

using Setter = std::function<void(ScenarioConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  auto i = [](int ScenarioConfig::*m) {
    return Setter([m](ScenarioConfig& c, const std::string& k, const std::string& v) {
      c.*m = static_cast<int>(parse_int(k, v));
    });
  };
  auto d = [](double ScenarioConfig::*m) {
    return Setter([m](ScenarioConfig& c, const std::string& k, const std::string& v) {
      c.*m = parse_double(k, v);
    });
  };
  auto kd = [](double PathLossExponents::*m) {
    return Setter([m](ScenarioConfig& c, const std::string& k, const std::string& v) {
      c.kappa.*m = parse_double(k, v);
    });
  };
  auto td = [](double Tolerances::*m) {
    return Setter([m](ScenarioConfig& c, const std::string& k, const std::string& v) {
      c.tolerances.*m = parse_double(k, v);
    });
  };
  auto ti = [](int Tolerances::*m) {
    return Setter([m](ScenarioConfig& c, const std::string& k, const std::string& v) {
      c.tolerances.*m = static_cast<int>(parse_int(k, v));
    });
  };
  static const std::map<std::string, Setter> table = {
      {"M", i(&ScenarioConfig::M)},
      {"N0", i(&ScenarioConfig::N0)},
      {"N1", i(&ScenarioConfig::N1)},
      {"J", i(&ScenarioConfig::J)},
      {"D", i(&ScenarioConfig::D)},
      {"U", i(&ScenarioConfig::U)},
      {"p_max_pbs_dbm", d(&ScenarioConfig::pMaxPbsDbm)},
      {"p_max_ue_dbm", d(&ScenarioConfig::pMaxUeDbm)},
      {"noise_dl_dbm", d(&ScenarioConfig::noiseDlDbm)},
      {"noise_ul_dbm", d(&ScenarioConfig::noiseUlDbm)},
      {"noise_sense_dbm", d(&ScenarioConfig::noiseSenseDbm)},
      {"gamma_sense_db", d(&ScenarioConfig::gammaSenseDb)},
      {"rician_factor_db", d(&ScenarioConfig::ricianFactorDb)},
      {"c0_db", d(&ScenarioConfig::c0Db)},
      {"l0_m", d(&ScenarioConfig::l0)},
      {"kappa_pbs_target", kd(&PathLossExponents::pbsTarget)},
      {"kappa_target_sbs", kd(&PathLossExponents::targetSbs)},
      {"kappa_pbs_ue", kd(&PathLossExponents::pbsUe)},
      {"kappa_ue_sbs", kd(&PathLossExponents::ueSbs)},
      {"kappa_ue_ue", kd(&PathLossExponents::ueUe)},
      {"beta_si_db", d(&ScenarioConfig::betaSiDb)},
      {"sigma0", d(&ScenarioConfig::sigma0)},
      {"antenna_spacing", d(&ScenarioConfig::antennaSpacing)},
      {"wavelength_m", d(&ScenarioConfig::wavelength)},
      {"array_separation", d(&ScenarioConfig::arraySeparation)},
      {"topology",
       [](ScenarioConfig& c, const std::string&, const std::string& v) {
         c.topology = parse_topology(v);
       }},
      {"region_size_m", d(&ScenarioConfig::regionSize)},
      {"seed",
       [](ScenarioConfig& c, const std::string& k, const std::string& v) {
         c.seed = static_cast<std::uint64_t>(parse_int(k, v));
       }},
      {"fixed_ue_angles",
       [](ScenarioConfig& c, const std::string& k, const std::string& v) {
         c.fixedUeAngles = parse_bool(k, v);
       }},
      {"comm_power_fraction", d(&ScenarioConfig::commPowerFraction)},
      {"eta1_init", td(&Tolerances::eta1Init)},
      {"eta_scale", td(&Tolerances::etaScale)},
      {"eps_inner", td(&Tolerances::epsInner)},
      {"eps_rank_one", td(&Tolerances::epsRankOne)},
      {"xi_outer", td(&Tolerances::xiOuter)},
      {"max_outer_iters", ti(&Tolerances::maxOuterIters)},
      {"max_inner_iters", ti(&Tolerances::maxInnerIters)},
      {"conic_tol", td(&Tolerances::conicTol)},
  };
  return table;
}

}  // namespace detail

/// Applies one `key = value` assignment. Throws ConfigError on unknown keys.
inline void set_config_value(ScenarioConfig& c, const std::string& key, const std::string& value) {
  const auto& t = detail::setters();
  const auto it = t.find(key);
  if (it == t.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(c, key, value);
}

struct LoadedConfig {
  ScenarioConfig config;
  std::vector<std::string> conversions;  // dB -> linear notes for logging
};

/// Human-readable dB -> linear conversions of the power-like fields.
inline std::vector<std::string> describe_conversions(const ScenarioConfig& c) {
  std::vector<std::string> out;
  auto add = [&](const char* name, double db, double lin, const char* unit) {
    std::ostringstream os;
    os << name << ": " << db << " -> " << lin << ' ' << unit;
    out.push_back(os.str());
  };
  add("p_max_pbs", c.pMaxPbsDbm, c.pMaxPbs(), "W");
  add("p_max_ue", c.pMaxUeDbm, c.pMaxUe(), "W");
  add("noise_dl", c.noiseDlDbm, c.noiseDl(), "W");
  add("noise_ul", c.noiseUlDbm, c.noiseUl(), "W");
  add("noise_sense", c.noiseSenseDbm, c.noiseSense(), "W");
  add("gamma_sense", c.gammaSenseDb, c.gammaSense(), "(linear)");
  add("rician_factor", c.ricianFactorDb, c.ricianFactor(), "(linear)");
  add("c0", c.c0Db, c.c0(), "(linear)");
  add("beta_si", c.betaSiDb, c.betaSi(), "(linear)");
  return out;
}

/// Parses flat `key = value` text; `#` starts a comment. Unset keys keep
/// their defaults. The result is validated.
inline LoadedConfig parse_config(const std::string& text, ScenarioConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    set_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  validate(base);
  return {base, describe_conversions(base)};
}

inline LoadedConfig load_config_file(const std::string& path, ScenarioConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), base);
}

/// Serializes every key in the flat format accepted by parse_config.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ScenarioConfig& c) {
  auto num = [](double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
  };
  const auto& t = c.tolerances;
  return {
      {"M", std::to_string(c.M)},
      {"N0", std::to_string(c.N0)},
      {"N1", std::to_string(c.N1)},
      {"J", std::to_string(c.J)},
      {"D", std::to_string(c.D)},
      {"U", std::to_string(c.U)},
      {"p_max_pbs_dbm", num(c.pMaxPbsDbm)},
      {"p_max_ue_dbm", num(c.pMaxUeDbm)},
      {"noise_dl_dbm", num(c.noiseDlDbm)},
      {"noise_ul_dbm", num(c.noiseUlDbm)},
      {"noise_sense_dbm", num(c.noiseSenseDbm)},
      {"gamma_sense_db", num(c.gammaSenseDb)},
      {"rician_factor_db", num(c.ricianFactorDb)},
      {"c0_db", num(c.c0Db)},
      {"l0_m", num(c.l0)},
      {"kappa_pbs_target", num(c.kappa.pbsTarget)},
      {"kappa_target_sbs", num(c.kappa.targetSbs)},
      {"kappa_pbs_ue", num(c.kappa.pbsUe)},
      {"kappa_ue_sbs", num(c.kappa.ueSbs)},
      {"kappa_ue_ue", num(c.kappa.ueUe)},
      {"beta_si_db", num(c.betaSiDb)},
      {"sigma0", num(c.sigma0)},
      {"antenna_spacing", num(c.antennaSpacing)},
      {"wavelength_m", num(c.wavelength)},
      {"array_separation", num(c.arraySeparation)},
      {"topology", to_string(c.topology)},
      {"region_size_m", num(c.regionSize)},
      {"seed", std::to_string(c.seed)},
      {"fixed_ue_angles", c.fixedUeAngles ? "true" : "false"},
      {"comm_power_fraction", num(c.commPowerFraction)},
      {"eta1_init", num(t.eta1Init)},
      {"eta_scale", num(t.etaScale)},
      {"eps_inner", num(t.epsInner)},
      {"eps_rank_one", num(t.epsRankOne)},
      {"xi_outer", num(t.xiOuter)},
      {"max_outer_iters", std::to_string(t.maxOuterIters)},
      {"max_inner_iters", std::to_string(t.maxInnerIters)},
      {"conic_tol", num(t.conicTol)},
  };
}

}  // namespace japs

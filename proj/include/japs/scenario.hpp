#pragma once

#include "japs/config.hpp"
#include "japs/errors.hpp"
#include "japs/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace japs {

using Engine = std::mt19937_64;
using Point = Eigen::Vector2d;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Draw categories. Every random entity gets its own engine so that, e.g.,
/// adding a fourth SBS leaves the first three (and all UEs) unchanged.
enum class Stream : std::uint64_t {
  Target = 1,
  Sbs,
  DlUe,
  UlUe,
  DlChannel,
  UlChannel,
  CrossChannel,
  Rcs,
};

/// Master seed plus a deterministic substream derivation.
class SeedTree {
public:
  explicit SeedTree(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }

  Engine stream(Stream s, std::uint64_t index = 0) const {
    const std::uint64_t tag = splitmix64(static_cast<std::uint64_t>(s) * 0x100000001B3ULL + index);
    return Engine(splitmix64(seed_ ^ tag));
  }

private:
  std::uint64_t seed_;
};

/// Seed of Monte Carlo trial `trial` under a master seed.
inline std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial) {
  return master ^ splitmix64(trial + 0xA5A5A5A5ULL);
}

/// Unit-norm ULA response: element k is exp(j 2 pi k spacing sin(angle)) / sqrt(n).
inline CVec steering_vector(double angle, int n, double spacing) {
  CVec a(n);
  const double s = std::sin(angle);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int k = 0; k < n; ++k) {
    a(k) = std::polar(scale, 2.0 * std::numbers::pi * k * spacing * s);
  }
  return a;
}

/// Large-scale gain c0 * (distance / l0)^(-exponent).
inline double path_loss(double distance, double exponent, double c0Linear, double l0) {
  return c0Linear * std::pow(distance / l0, -exponent);
}

/// Standard circularly-symmetric complex Gaussian vector (unit variance per entry).
inline CVec complex_gaussian(int n, Engine& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  CVec g(n);
  for (int k = 0; k < n; ++k) {
    const double re = nd(rng);
    const double im = nd(rng);
    g(k) = Complex(re, im);
  }
  return g;
}

/// Rician small-scale draw with a unit-norm LoS component.
inline CVec draw_rician(const CVec& los, double ricianLinear, Engine& rng) {
  if (ricianLinear >= 1e12) return los;
  const CVec g = complex_gaussian(static_cast<int>(los.size()), rng);
  return std::sqrt(ricianLinear / (ricianLinear + 1.0)) * los +
         std::sqrt(1.0 / (ricianLinear + 1.0)) * g;
}

struct Geometry {
  Point pbs;
  Point target;
  std::vector<Point> sbs;
  std::vector<Point> dlUe;
  std::vector<Point> ulUe;
  // Unit broadside directions of each array; the array axis is the broadside
  // rotated by +90 degrees.
  Point pbsBroadside{1.0, 0.0};
  std::vector<Point> sbsBroadside;

  double theta = 0.0;                     // target angle at the PBS
  std::vector<double> phi;                // target angle at SBS j
  std::vector<double> thetaDl;            // DL UE d at the PBS
  std::vector<std::vector<double>> thetaUl;  // [u][iota], iota = 0 is the PBS
  std::vector<double> dTarget;            // [iota] receiver-to-target distance
  std::vector<double> distDl;             // [d]
  std::vector<std::vector<double>> distUl;   // [u][iota]
  std::vector<std::vector<double>> distCross;  // [d][u]
};

/// ULA angle of `p` seen from an array at `origin` with the given broadside.
/// Points behind the array fold onto the front half-plane, which is what a
/// linear array physically observes.
inline double ula_angle(const Point& origin, const Point& broadside, const Point& p) {
  const Point r = p - origin;
  const double n = r.norm();
  const Point axis(-broadside.y(), broadside.x());
  return std::asin(std::clamp(r.dot(axis) / n, -1.0, 1.0));
}

namespace detail {

inline bool in_region(const Point& p, double size) {
  return p.x() >= 0.0 && p.x() <= size && p.y() >= 0.0 && p.y() <= size;
}

inline Point uniform_point(Engine& rng, double size) {
  std::uniform_real_distribution<double> u(0.0, size);
  const double x = u(rng);
  const double y = u(rng);
  return {x, y};
}

constexpr double kEndfireGuard = 1e-6;  // rad
constexpr double kMinDistance = 1.0;    // m

inline bool acceptable(const Point& origin, const Point& broadside, const Point& p) {
  if ((p - origin).norm() < kMinDistance) return false;
  return std::abs(ula_angle(origin, broadside, p)) < std::numbers::pi / 2 - kEndfireGuard;
}

}  // namespace detail

/// Places every node per the topology kind and derives all angles and
/// distances. Draws come from per-entity substreams of `seeds`.
inline Geometry generate_topology(Topology kind, const ScenarioConfig& cfg, const SeedTree& seeds) {
  constexpr double kPi = std::numbers::pi;
  const double R = cfg.regionSize;
  Geometry g;
  g.sbs.resize(cfg.J);
  g.sbsBroadside.resize(cfg.J);

  switch (kind) {
    case Topology::Random: {
      g.pbs = {0.0, R / 2};
      g.target = {R / 2, R / 2};
      for (int j = 0; j < cfg.J; ++j) {
        Engine rng = seeds.stream(Stream::Sbs, j);
        g.sbs[j] = detail::uniform_point(rng, R);
        int tries = 0;
        while ((g.sbs[j] - g.pbs).norm() < detail::kMinDistance ||
               (g.sbs[j] - g.target).norm() < detail::kMinDistance) {
          if (++tries > 1000) throw RegionTooSmall("cannot place SBS");
          g.sbs[j] = detail::uniform_point(rng, R);
        }
      }
      break;
    }
    case Topology::Circular: {
      constexpr double radius = 200.0;
      if (2.0 * radius > R) throw RegionTooSmall("circular topology needs a 400 m region");
      g.pbs = {R / 2, R / 2};
      for (int j = 0; j < cfg.J; ++j) {
        const double a = 2.0 * kPi * j / cfg.J;
        g.sbs[j] = g.pbs + radius * Point(std::cos(a), std::sin(a));
      }
      Engine rng = seeds.stream(Stream::Target);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      int tries = 0;
      do {
        if (++tries > 1000) throw RegionTooSmall("cannot place target");
        const double r = radius * std::sqrt(u01(rng));
        const double a = 2.0 * kPi * u01(rng);
        g.target = g.pbs + r * Point(std::cos(a), std::sin(a));
      } while (!detail::acceptable(g.pbs, g.pbsBroadside, g.target));
      break;
    }
    case Topology::Linear: {
      constexpr double lineOffset = 200.0;   // PBS to SBS line
      constexpr double spacing = 60.0;
      constexpr double targetOffset = 80.0;  // SBS line to target line
      if (lineOffset > R || spacing * (cfg.J - 1) > R) {
        throw RegionTooSmall("linear topology does not fit in the region");
      }
      g.pbs = {0.0, R / 2};
      const double y0 = R / 2 - spacing * (cfg.J - 1) / 2.0;
      for (int j = 0; j < cfg.J; ++j) g.sbs[j] = {lineOffset, y0 + spacing * j};
      Engine rng = seeds.stream(Stream::Target);
      std::uniform_real_distribution<double> uy(0.0, R);
      int tries = 0;
      do {
        if (++tries > 1000) throw RegionTooSmall("cannot place target");
        g.target = {lineOffset - targetOffset, uy(rng)};
      } while (!detail::acceptable(g.pbs, g.pbsBroadside, g.target));
      break;
    }
  }

  for (int j = 0; j < cfg.J; ++j) {
    const Point toPbs = g.pbs - g.sbs[j];
    g.sbsBroadside[j] = toPbs.norm() > 0 ? Point(toPbs / toPbs.norm()) : Point(1.0, 0.0);
  }

  auto place_ue = [&](Stream s, int index, double fixedAngle, bool fixed) {
    Engine rng = seeds.stream(s, index);
    std::uniform_real_distribution<double> ud(50.0 * R / 500.0, 250.0 * R / 500.0);
    for (int tries = 0; tries < 1000; ++tries) {
      Point p;
      if (fixed) {
        const double dist = ud(rng);
        const Point axis(-g.pbsBroadside.y(), g.pbsBroadside.x());
        p = g.pbs + dist * (std::cos(fixedAngle) * g.pbsBroadside + std::sin(fixedAngle) * axis);
      } else {
        p = detail::uniform_point(rng, R);
      }
      if (!detail::in_region(p, R) || !detail::acceptable(g.pbs, g.pbsBroadside, p)) continue;
      bool ok = true;
      for (int j = 0; j < cfg.J && ok; ++j) ok = detail::acceptable(g.sbs[j], g.sbsBroadside[j], p);
      if (ok) return p;
    }
    throw RegionTooSmall("cannot place UE inside the region");
  };

  constexpr double deg = kPi / 180.0;
  const double dlPreset[] = {-55.0 * deg, 30.0 * deg};
  const double ulPreset[] = {-70.0 * deg, 20.0 * deg};
  g.dlUe.resize(cfg.D);
  g.ulUe.resize(cfg.U);
  for (int d = 0; d < cfg.D; ++d) {
    const bool fixed = cfg.fixedUeAngles && d < 2;
    g.dlUe[d] = place_ue(Stream::DlUe, d, fixed ? dlPreset[d] : 0.0, fixed);
  }
  for (int u = 0; u < cfg.U; ++u) {
    const bool fixed = cfg.fixedUeAngles && u < 2;
    g.ulUe[u] = place_ue(Stream::UlUe, u, fixed ? ulPreset[u] : 0.0, fixed);
  }

  // SBS positions must see the target off endfire.
  for (int j = 0; j < cfg.J; ++j) {
    if (!detail::acceptable(g.sbs[j], g.sbsBroadside[j], g.target)) {
      // Rotate the SBS array slightly; the broadside stays within 1 degree of the PBS direction.
      const double a = 0.5 * deg;
      const Point b = g.sbsBroadside[j];
      g.sbsBroadside[j] = {std::cos(a) * b.x() - std::sin(a) * b.y(),
                           std::sin(a) * b.x() + std::cos(a) * b.y()};
    }
  }

  g.theta = ula_angle(g.pbs, g.pbsBroadside, g.target);
  g.dTarget.push_back((g.target - g.pbs).norm());
  for (int j = 0; j < cfg.J; ++j) {
    g.phi.push_back(ula_angle(g.sbs[j], g.sbsBroadside[j], g.target));
    g.dTarget.push_back((g.target - g.sbs[j]).norm());
  }
  for (int d = 0; d < cfg.D; ++d) {
    g.thetaDl.push_back(ula_angle(g.pbs, g.pbsBroadside, g.dlUe[d]));
    g.distDl.push_back((g.dlUe[d] - g.pbs).norm());
  }
  g.thetaUl.assign(cfg.U, {});
  g.distUl.assign(cfg.U, {});
  for (int u = 0; u < cfg.U; ++u) {
    g.thetaUl[u].push_back(ula_angle(g.pbs, g.pbsBroadside, g.ulUe[u]));
    g.distUl[u].push_back((g.ulUe[u] - g.pbs).norm());
    for (int j = 0; j < cfg.J; ++j) {
      g.thetaUl[u].push_back(ula_angle(g.sbs[j], g.sbsBroadside[j], g.ulUe[u]));
      g.distUl[u].push_back((g.ulUe[u] - g.sbs[j]).norm());
    }
  }
  g.distCross.assign(cfg.D, std::vector<double>(cfg.U));
  for (int d = 0; d < cfg.D; ++d) {
    for (int u = 0; u < cfg.U; ++u) {
      g.distCross[d][u] = std::max((g.dlUe[d] - g.ulUe[u]).norm(), detail::kMinDistance);
    }
  }
  return g;
}

struct NoisePowers {
  double dl = 0.0;
  double ul = 0.0;
  double sense = 0.0;
};

struct ChannelSet {
  int M = 0, N0 = 0, N1 = 0, J = 0;
  std::vector<CVec> hDl;                       // [d], length M
  std::vector<CVec> hUl;                       // [u], length N0 + J N1
  CMat hSi;                                    // N0 x M
  std::vector<std::vector<Complex>> hCross;    // [d][u]
  std::vector<Complex> alpha;                  // [iota]
  std::vector<CMat> aBlocks;                   // [iota]
  CMat aStacked;
  CMat gEffective;
  CMat b0;
  NoisePowers noise;
  double spacing = 0.5;

  int D() const { return static_cast<int>(hDl.size()); }
  int U() const { return static_cast<int>(hUl.size()); }
  int rows() const { return N0 + J * N1; }
  int row_offset(int iota) const { return iota == 0 ? 0 : N0 + (iota - 1) * N1; }
  int row_count(int iota) const { return iota == 0 ? N0 : N1; }
};

/// Residual self-interference between two parallel ULAs `separation`
/// wavelengths apart: entry (l, m) = sqrt(beta) exp(-j 2 pi r_lm / lambda).
inline CMat self_interference(int n0, int m, double betaSiLinear, double spacing,
                              double separation, double wavelength) {
  CMat h(n0, m);
  const double amp = std::sqrt(betaSiLinear);
  for (int l = 0; l < n0; ++l) {
    for (int k = 0; k < m; ++k) {
      const double along = (l - k) * spacing;
      const double r = wavelength * std::hypot(along, separation);
      h(l, k) = std::polar(amp, -2.0 * std::numbers::pi * r / wavelength);
    }
  }
  return h;
}

/// Rebuilds aStacked, gEffective and b0 from aBlocks and hSi.
inline void restack(ChannelSet& c) {
  const int rows = c.rows();
  c.aStacked = CMat::Zero(rows, c.M);
  for (int i = 0; i <= c.J; ++i) {
    c.aStacked.middleRows(c.row_offset(i), c.row_count(i)) = c.aBlocks[i];
  }
  c.gEffective = CMat::Zero(rows, c.M);
  c.gEffective.topRows(c.N0) = c.hSi;
  c.b0 = c.aStacked + c.gEffective;
}

inline ChannelSet build_channels(const Geometry& g, const ScenarioConfig& cfg, const SeedTree& seeds) {
  ChannelSet c;
  c.M = cfg.M;
  c.N0 = cfg.N0;
  c.N1 = cfg.N1;
  c.J = cfg.J;
  c.spacing = cfg.antennaSpacing;
  c.noise = {cfg.noiseDl(), cfg.noiseUl(), cfg.noiseSense()};
  const double K = cfg.ricianFactor();
  const double c0 = cfg.c0();
  const double dx = cfg.antennaSpacing;

  for (int d = 0; d < cfg.D; ++d) {
    Engine rng = seeds.stream(Stream::DlChannel, d);
    const double beta = path_loss(g.distDl[d], cfg.kappa.pbsUe, c0, cfg.l0);
    c.hDl.push_back(std::sqrt(beta) * draw_rician(steering_vector(g.thetaDl[d], cfg.M, dx), K, rng));
  }
  for (int u = 0; u < cfg.U; ++u) {
    CVec h(c.rows());
    for (int i = 0; i <= cfg.J; ++i) {
      Engine rng = seeds.stream(Stream::UlChannel, (static_cast<std::uint64_t>(u) << 20) + i);
      const int n = i == 0 ? cfg.N0 : cfg.N1;
      const double kappa = i == 0 ? cfg.kappa.pbsUe : cfg.kappa.ueSbs;
      const double beta = path_loss(g.distUl[u][i], kappa, c0, cfg.l0);
      h.segment(c.row_offset(i), n) =
          std::sqrt(beta) * draw_rician(steering_vector(g.thetaUl[u][i], n, dx), K, rng);
    }
    c.hUl.push_back(h);
  }
  c.hCross.assign(cfg.D, std::vector<Complex>(cfg.U));
  for (int d = 0; d < cfg.D; ++d) {
    for (int u = 0; u < cfg.U; ++u) {
      Engine rng = seeds.stream(Stream::CrossChannel, (static_cast<std::uint64_t>(d) << 20) + u);
      const double beta = path_loss(g.distCross[d][u], cfg.kappa.ueUe, c0, cfg.l0);
      c.hCross[d][u] = std::sqrt(beta) * complex_gaussian(1, rng)(0);
    }
  }
  c.hSi = self_interference(cfg.N0, cfg.M, cfg.betaSi(), dx, cfg.arraySeparation, cfg.wavelength);

  const CVec at = steering_vector(g.theta, cfg.M, dx);
  for (int i = 0; i <= cfg.J; ++i) {
    Engine rng = seeds.stream(Stream::Rcs, i);
    std::exponential_distribution<double> mag(1.0 / cfg.sigma0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const double m = mag(rng);
    const Complex sigma = std::polar(m, phase(rng));
    const Complex a = sigma / (2.0 * g.dTarget[i]);
    c.alpha.push_back(a);
    const double angle = i == 0 ? g.theta : g.phi[i - 1];
    const int n = i == 0 ? cfg.N0 : cfg.N1;
    c.aBlocks.push_back(a * outer(steering_vector(angle, n, dx), at));
  }
  restack(c);
  return c;
}

/// Which receivers (iota = 0 is the PBS, 1..J the SBSs) take part in sensing
/// fusion and uplink reception.
struct ReceiverMask {
  std::vector<bool> active;

  static ReceiverMask all(int J) { return {std::vector<bool>(J + 1, true)}; }
  static ReceiverMask pbs_only(int J) {
    ReceiverMask m{std::vector<bool>(J + 1, false)};
    m.active[0] = true;
    return m;
  }
  static ReceiverMask sbs_only(int J) {
    ReceiverMask m{std::vector<bool>(J + 1, true)};
    m.active[0] = false;
    return m;
  }
};

/// 0/1 indicator over the stacked receive rows.
inline RVec mask_rows(const ChannelSet& c, const ReceiverMask& mask) {
  RVec r = RVec::Zero(c.rows());
  for (int i = 0; i <= c.J; ++i) {
    if (i < static_cast<int>(mask.active.size()) && mask.active[i]) {
      r.segment(c.row_offset(i), c.row_count(i)).setOnes();
    }
  }
  return r;
}

/// Copy of `c` with every masked receiver's rows zeroed.
inline ChannelSet apply_receiver_mask(const ChannelSet& c, const ReceiverMask& mask) {
  ChannelSet m = c;
  for (int i = 0; i <= c.J; ++i) {
    if (i < static_cast<int>(mask.active.size()) && mask.active[i]) continue;
    const int off = c.row_offset(i), n = c.row_count(i);
    for (auto& h : m.hUl) h.segment(off, n).setZero();
    m.aBlocks[i].setZero();
    if (i == 0) m.hSi.setZero();
  }
  restack(m);
  return m;
}

struct Scenario {
  Geometry geometry;
  ChannelSet channels;
};

inline Scenario make_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  const SeedTree seeds(seed);
  Scenario s;
  s.geometry = generate_topology(cfg.topology, cfg, seeds);
  s.channels = build_channels(s.geometry, cfg, seeds);
  return s;
}

}  // namespace japs

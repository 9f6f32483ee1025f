#pragma once

#include <stdexcept>
#include <string>

namespace japs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class RegionTooSmall : public Error {
public:
  using Error::Error;
};

class ZeroFilter : public Error {
public:
  using Error::Error;
};

// conic backend
class Infeasible : public Error {
public:
  using Error::Error;
};

class LineSearchStall : public Error {
public:
  using Error::Error;
};

class MaxIterations : public Error {
public:
  using Error::Error;
};

// transmit beamforming
class DegenerateExpansion : public Error {
public:
  using Error::Error;
};

class NoRankOneConvergence : public Error {
public:
  using Error::Error;
};

// receive side
class InfeasiblePower : public Error {
public:
  using Error::Error;
};

/// The sensing SINR threshold cannot be met. Carries the best value found.
class InfeasibleSensing : public Error {
public:
  InfeasibleSensing(const std::string& what, double achieved)
      : Error(what), achieved_(achieved) {}
  double achieved() const { return achieved_; }

private:
  double achieved_;
};

class NonMonotoneTrace : public Error {
public:
  using Error::Error;
};

class SchemaMismatch : public Error {
public:
  using Error::Error;
};

}  // namespace japs

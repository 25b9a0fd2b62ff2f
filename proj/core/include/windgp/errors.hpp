#pragma once

#include <stdexcept>
#include <string>

namespace windgp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- dataset ----
class ZeroVariance : public Error {
public:
  explicit ZeroVariance(int dimension)
      : Error("feature dimension " + std::to_string(dimension) +
              " has zero variance; cannot standardize"),
        dimension(dimension) {}
  int dimension;
};

class OutOfRange : public Error {
public:
  explicit OutOfRange(const std::string& msg) : Error(msg) {}
};

// ---- scada ----
class FileNotFound : public Error {
public:
  explicit FileNotFound(const std::string& path)
      : Error("file not found: " + path) {}
};

class SchemaMismatch : public Error {
public:
  explicit SchemaMismatch(const std::string& what) : Error(what) {}
};

// ---- kernels ----
class DimensionMismatch : public Error {
public:
  explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};

class NonPositiveLengthscale : public Error {
public:
  NonPositiveLengthscale() : Error("lengthscales must be strictly positive") {}
  explicit NonPositiveLengthscale(const std::string& msg) : Error(msg) {}
};

class NonPositiveLatent : public Error {
public:
  explicit NonPositiveLatent(const std::string& msg) : Error(msg) {}
};

class IllegalNoise : public Error {
public:
  IllegalNoise() : Error("include_noise is only legal when both input sets are identical") {}
  explicit IllegalNoise(const std::string& msg) : Error(msg) {}
};

class SingularLatentGram : public Error {
public:
  explicit SingularLatentGram(const std::string& msg) : Error(msg) {}
};

// ---- gp-core ----
class SingularGram : public Error {
public:
  explicit SingularGram(const std::string& msg) : Error(msg) {}
};

class NegativeVariance : public Error {
public:
  explicit NegativeVariance(const std::string& msg) : Error(msg) {}
};

// ---- inference ----
class NonFiniteGradient : public Error {
public:
  explicit NonFiniteGradient(const std::string& msg) : Error(msg) {}
};

class DivergedToInfinity : public Error {
public:
  explicit DivergedToInfinity(const std::string& msg) : Error(msg) {}
};

class AllRestartsFailed : public Error {
public:
  AllRestartsFailed() : Error("every restart of the optimization failed") {}
  explicit AllRestartsFailed(const std::string& msg) : Error(msg) {}
};

// ---- metrics ----
class NonPositiveVariance : public Error {
public:
  explicit NonPositiveVariance(const std::string& msg) : Error(msg) {}
};

class EmptySet : public Error {
public:
  EmptySet() : Error("operation requested on an empty set") {}
  explicit EmptySet(const std::string& msg) : Error(msg) {}
};

class NonPositiveRatedPower : public Error {
public:
  NonPositiveRatedPower() : Error("rated power must be strictly positive") {}
  explicit NonPositiveRatedPower(const std::string& msg) : Error(msg) {}
};

// ---- experiment ----
class MissingModel : public Error {
public:
  explicit MissingModel(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace windgp

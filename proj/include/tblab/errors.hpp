#pragma once

#include <stdexcept>
#include <string>

namespace tblab {

// error families map to CLI exit codes: config 2, data 3, numeric 4

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- model ----

struct InvalidToken : DataError {
  explicit InvalidToken(const std::string& msg) : DataError(msg) {}
};

struct NumericalOverflow : NumericError {
  int layer = -1;
  int position = -1;
  NumericalOverflow(const std::string& msg, int layer_, int pos_)
      : NumericError(msg), layer(layer_), position(pos_) {}
};

struct TraceMismatch : NumericError {
  explicit TraceMismatch(const std::string& msg) : NumericError(msg) {}
};

struct InvalidMask : ConfigError {
  explicit InvalidMask(const std::string& msg) : ConfigError(msg) {}
};

// ---- dataset ----

struct WorldExhausted : DataError {
  explicit WorldExhausted(const std::string& msg) : DataError(msg) {}
};

struct NoCandidate : DataError {
  explicit NoCandidate(const std::string& msg) : DataError(msg) {}
};

struct CorpusTooSmall : DataError {
  explicit CorpusTooSmall(const std::string& msg) : DataError(msg) {}
};

// ---- editing / attribution ----

struct IncompleteBatch : DataError {
  explicit IncompleteBatch(const std::string& msg) : DataError(msg) {}
};

struct DegenerateState : NumericError {
  explicit DegenerateState(const std::string& msg) : NumericError(msg) {}
};

}  // namespace tblab

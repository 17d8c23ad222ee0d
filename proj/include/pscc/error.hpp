#pragma once

#include <stdexcept>
#include <string>

namespace pscc {

// Error taxonomy shared by library and CLI. Each class maps to a distinct
// process exit code (see tools/pscc_main.cpp).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite value surfaced during computation; message names the stage.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Metric is mathematically undefined for the given inputs (e.g. single-class
// AUC).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Sample synthesis could not satisfy its post-conditions within the retry
// budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace pscc

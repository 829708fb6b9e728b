#pragma once

#include <stdexcept>
#include <string>

namespace egsnet {

// Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Maps to CLI exit code 3 (checkpoint/data/report incompatibilities).
class ArtifactMismatchError : public std::runtime_error {
 public:
  explicit ArtifactMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

// Everything else maps to exit code 1.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace egsnet

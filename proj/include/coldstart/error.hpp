#pragma once

#include <stdexcept>
#include <string>

namespace coldstart {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (ratings files, caches, splits).
class DataError : public Error {
 public:
  using Error::Error;
};

// Shape mismatches, non-SPD matrices, non-finite values.
class NumericsError : public Error {
 public:
  using Error::Error;
};

class InterviewError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Missing, stale or corrupt on-disk artifacts.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace coldstart

#pragma once

#include <stdexcept>
#include <string>

namespace nrt {

// Error taxonomy. Each type maps to one failure class the CLI translates
// into an exit code (usage errors -> 2, everything else -> 1).

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct CorpusError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  using Error::Error;
};

struct UsageError : Error {
  using Error::Error;
};

}  // namespace nrt

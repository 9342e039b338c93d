#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsdd {

// Shape or length disagreement between a network and its inputs.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// A loss or gradient went non-finite during optimization.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& context, std::size_t step)
      : std::runtime_error(context + " diverged at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Errors raised by the binary dataset reader.
class DatasetFormatError : public std::runtime_error {
 public:
  enum class Kind { kMalformedHeader, kTruncated, kTrailingData, kLabelOutOfRange, kIo };

  DatasetFormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Wraps a lower-level failure with the round and phase where it happened.
class RoundError : public std::runtime_error {
 public:
  RoundError(int round, const std::string& phase, const std::string& cause)
      : std::runtime_error("round " + std::to_string(round) + " [" + phase + "]: " + cause),
        round_(round),
        phase_(phase) {}

  int round() const { return round_; }
  const std::string& phase() const { return phase_; }

 private:
  int round_;
  std::string phase_;
};

}  // namespace fedsdd

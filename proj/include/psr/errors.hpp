#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psr {

// Argument outside the mathematical domain of an operation (negative time, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Invalid configuration value (too few candidates, empty generator, ...).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Incompatible array shapes or grids.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dataset on disk does not match its manifest.
struct CorruptDatasetError : std::runtime_error {
  CorruptDatasetError(const std::string& file, const std::string& what)
      : std::runtime_error(file + ": " + what), file_(file) {}
  const std::string& file() const noexcept { return file_; }

 private:
  std::string file_;
};

struct VersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A solver iterate became non-finite.
struct DivergenceError : std::runtime_error {
  DivergenceError(std::size_t iteration, const std::string& what)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

// Linear algebra failed where it should not (factorization of an SPD system).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace psr

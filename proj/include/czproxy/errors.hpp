#pragma once

#include <stdexcept>
#include <string>

namespace czp {

// Base class for every error the library throws. The CLI maps these onto
// process exit codes: ConfigError -> 1, DivergenceError -> 3, the rest -> 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / dimension mismatch between tensors.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Out-of-range index (targets, pair indices, vocabulary ids).
class IndexError : public Error {
 public:
  explicit IndexError(const std::string& msg) : Error(msg) {}
};

// A documented precondition was violated (non-normalized distribution,
// unseen label in a training batch, non-orthonormal basis, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// backward() called twice on the same graph.
class StaleGraphError : public ContractError {
 public:
  explicit StaleGraphError(const std::string& msg) : ContractError(msg) {}
};

// Numerically degenerate input (near-zero row passed to l2_normalize, ...).
class DegenerateInputError : public ContractError {
 public:
  explicit DegenerateInputError(const std::string& msg) : ContractError(msg) {}
};

// Malformed or truncated file (VPTF, space.json, labels, checkpoints).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration value (tau <= 0, bad flag value, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A requested unseen split would leave a primitive with no seen composition.
class InfeasibleSplitError : public ContractError {
 public:
  explicit InfeasibleSplitError(const std::string& msg) : ContractError(msg) {}
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

}  // namespace czp

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace hierreconc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structure construction.
class OverlapError : public Error {
 public:
  using Error::Error;
};
class NestingError : public Error {
 public:
  using Error::Error;
};
class EmptyNodeError : public Error {
 public:
  using Error::Error;
};
class NonDivisorError : public Error {
 public:
  using Error::Error;
};
class NotATreeError : public Error {
 public:
  using Error::Error;
};
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Distributions and fitting.
class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};
class UnderdispersedError : public Error {
 public:
  using Error::Error;
};

// Reconciliation.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// Every importance weight at a node underflowed to zero.
class AllZeroWeightsError : public Error {
 public:
  AllZeroWeightsError(std::string node, const std::string& detail)
      : Error("all importance weights are zero at node " + node +
              (detail.empty() ? std::string{} : ": " + detail)),
        node_(std::move(node)) {}

  const std::string& node() const noexcept { return node_; }

 private:
  std::string node_;
};

class ZeroDensityStartError : public Error {
 public:
  using Error::Error;
};
class SupportTooLargeError : public Error {
 public:
  using Error::Error;
};

// Metrics.
class ZeroReferenceError : public Error {
 public:
  using Error::Error;
};
class FlatTrainSeriesError : public Error {
 public:
  using Error::Error;
};
class InvalidIntervalError : public Error {
 public:
  using Error::Error;
};
class DegenerateDenominatorError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file or configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace hierreconc

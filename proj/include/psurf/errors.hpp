#pragma once

#include <stdexcept>
#include <string>

namespace psurf {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied parameter (non-positive sizes, bad thresholds, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  enum class Kind { MissingFile, BadHeader, SizeMismatch, BadSpacing, NonFinite };

  LoadError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class DegenerateFaceError : public Error {
 public:
  using Error::Error;
};

/// Mesh or region topology is not what an operation requires.
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Assumption (A) violated: zero-area face or vertex normals not spanning R^3.
class AssumptionError : public Error {
 public:
  AssumptionError(int surface_id, const std::string& what)
      : Error(what), surface_id_(surface_id) {}
  int surface_id() const noexcept { return surface_id_; }

 private:
  int surface_id_;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double residual = 0.0)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Time-step control could not find an admissible step above tau_min.
class StagnationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EmptyRegionError : public Error {
 public:
  EmptyRegionError(int region, const std::string& what) : Error(what), region_(region) {}
  int region() const noexcept { return region_; }

 private:
  int region_;
};

/// A topology surgery could not be completed; the input set is unchanged.
class SurgeryAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace psurf

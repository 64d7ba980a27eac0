#pragma once

#include <stdexcept>
#include <string>

namespace gformula {

// Base class for all engine errors. The `kind` prefix names the owning
// subsystem so CLI output can point at the failing module.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct StructuralError : Error {
  explicit StructuralError(const std::string& m) : Error("structural error", m) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error("validation error", m) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error("parse error", m) {}
};

struct NameError : Error {
  explicit NameError(const std::string& m) : Error("name error", m) {}
};

struct TypeError : Error {
  explicit TypeError(const std::string& m) : Error("type error", m) {}
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& m) : Error("argument error", m) {}
};

struct BoundsError : Error {
  explicit BoundsError(const std::string& m) : Error("bounds error", m) {}
};

struct FitError : Error {
  explicit FitError(const std::string& m) : Error("fit error", m) {}
};

struct DataError : Error {
  explicit DataError(const std::string& m) : Error("data error", m) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("shape error", m) {}
};

struct SimulationError : Error {
  explicit SimulationError(const std::string& m) : Error("simulation error", m) {}
};

struct InterventionError : Error {
  explicit InterventionError(const std::string& m) : Error("intervention error", m) {}
};

struct PluginError : Error {
  explicit PluginError(const std::string& m) : Error("plugin contract error", m) {}
};

struct InferenceError : Error {
  explicit InferenceError(const std::string& m) : Error("inference error", m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config error", m) {}
};

struct UnsupportedError : Error {
  explicit UnsupportedError(const std::string& m) : Error("unsupported mode", m) {}
};

struct SizeError : Error {
  explicit SizeError(const std::string& m) : Error("size error", m) {}
};

}  // namespace gformula

#pragma once

#include <stdexcept>
#include <string>

namespace enlg {

/// Base of every error thrown by the library. `kind()` is a stable short tag
/// used in CLI diagnostics and tests.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define ENLG_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(tag, what) {}       \
  };

ENLG_DEFINE_ERROR(IoError, "io")
ENLG_DEFINE_ERROR(SchemaError, "schema")
ENLG_DEFINE_ERROR(RowError, "row")
ENLG_DEFINE_ERROR(SpecError, "spec")
ENLG_DEFINE_ERROR(LookupError, "lookup")
ENLG_DEFINE_ERROR(SplitError, "split")
ENLG_DEFINE_ERROR(RangeError, "range")
ENLG_DEFINE_ERROR(ConfigError, "config")
ENLG_DEFINE_ERROR(LengthError, "length")
ENLG_DEFINE_ERROR(FormatError, "format")
ENLG_DEFINE_ERROR(VersionError, "version")
ENLG_DEFINE_ERROR(KindMismatchError, "kind-mismatch")
ENLG_DEFINE_ERROR(TrainingError, "training")
ENLG_DEFINE_ERROR(ParameterError, "parameter")
ENLG_DEFINE_ERROR(ComparisonError, "comparison")
ENLG_DEFINE_ERROR(DependencyError, "dependency")

#undef ENLG_DEFINE_ERROR

}  // namespace enlg

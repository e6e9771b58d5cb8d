#pragma once

#include <stdexcept>
#include <string>

namespace linex {

// Coarse error classes; the CLI maps each to a distinct exit code.
enum class ErrorClass { config, io, protocol, convergence, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

#define LINEX_DEFINE_ERROR(Name, Class)                                           \
  class Name : public Error {                                                     \
   public:                                                                        \
    explicit Name(const std::string& what) : Error(ErrorClass::Class, what) {}    \
  };

LINEX_DEFINE_ERROR(ConfigError, config)
LINEX_DEFINE_ERROR(IoError, io)
LINEX_DEFINE_ERROR(SchemaError, io)
LINEX_DEFINE_ERROR(EmptyDataset, io)
LINEX_DEFINE_ERROR(TrainError, numeric)
LINEX_DEFINE_ERROR(SpawnError, protocol)
LINEX_DEFINE_ERROR(ProtocolError, protocol)
LINEX_DEFINE_ERROR(TimeoutError, protocol)
LINEX_DEFINE_ERROR(SingularSystem, numeric)
LINEX_DEFINE_ERROR(InnerDivergence, convergence)
LINEX_DEFINE_ERROR(DegenerateGamma, numeric)
LINEX_DEFINE_ERROR(DegenerateClass, numeric)
LINEX_DEFINE_ERROR(DegenerateVariance, numeric)

#undef LINEX_DEFINE_ERROR

/// Process exit code for an error class: 2 config, 3 io, 4 protocol,
/// 5 convergence, 6 numeric.
int exit_code(ErrorClass cls) noexcept;

}  // namespace linex

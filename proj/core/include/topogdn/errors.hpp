#pragma once

#include <stdexcept>
#include <string>

namespace topogdn {

/// Base of every error the library throws. The CLI maps `kind()` onto exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { Dimension, Domain, Contract, Parse, Data, Config, Spec, Io, Numeric };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

#define TOPOGDN_DEFINE_ERROR(Name, K)                                           \
  class Name : public Error {                                                   \
   public:                                                                      \
    explicit Name(const std::string& what) : Error(Kind::K, what) {}            \
  };

TOPOGDN_DEFINE_ERROR(DimensionError, Dimension)
TOPOGDN_DEFINE_ERROR(DomainError, Domain)
TOPOGDN_DEFINE_ERROR(ContractError, Contract)
TOPOGDN_DEFINE_ERROR(ParseError, Parse)
TOPOGDN_DEFINE_ERROR(DataError, Data)
TOPOGDN_DEFINE_ERROR(ConfigError, Config)
TOPOGDN_DEFINE_ERROR(SpecError, Spec)
TOPOGDN_DEFINE_ERROR(IoError, Io)
TOPOGDN_DEFINE_ERROR(NumericError, Numeric)

#undef TOPOGDN_DEFINE_ERROR

}  // namespace topogdn

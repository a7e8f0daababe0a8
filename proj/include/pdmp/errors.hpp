#pragma once

#include <stdexcept>
#include <string>

namespace pdmp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : Error { using Error::Error; };
struct SpecError : Error { using Error::Error; };
struct PreconditionError : Error { using Error::Error; };
struct ContractivityViolation : Error { using Error::Error; };
struct AssumptionA1Suspect : Error { using Error::Error; };
struct FlowDomainError : Error { using Error::Error; };
struct EnvelopeError : Error { using Error::Error; };
struct ResidualMassError : Error { using Error::Error; };
struct NumericalError : Error { using Error::Error; };
struct NotDissipative : Error { using Error::Error; };

}  // namespace pdmp

#pragma once

#include <stdexcept>
#include <string>

namespace eulerstab {

// Every failure raised by the library derives from Error and names the module
// it came from, so the CLI can attribute numerical failures.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

#define EULERSTAB_DEFINE_ERROR(Name, Module)                              \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(Module, what) {}       \
  }

// monotone_calculus
EULERSTAB_DEFINE_ERROR(MonotonicityViolation, "monotone_calculus");
EULERSTAB_DEFINE_ERROR(CoercivityViolation, "monotone_calculus");
EULERSTAB_DEFINE_ERROR(QuadratureFailure, "monotone_calculus");
EULERSTAB_DEFINE_ERROR(RegularityViolation, "monotone_calculus");
EULERSTAB_DEFINE_ERROR(ProfileFormatError, "monotone_calculus");
// grid_domain
EULERSTAB_DEFINE_ERROR(InvalidSpec, "grid_domain");
EULERSTAB_DEFINE_ERROR(SolverFailure, "grid_domain");
EULERSTAB_DEFINE_ERROR(GridMismatch, "grid_domain");
EULERSTAB_DEFINE_ERROR(SnapshotError, "grid_domain");
// spectral
EULERSTAB_DEFINE_ERROR(ConvergenceFailure, "spectral");
EULERSTAB_DEFINE_ERROR(MassViolation, "spectral");
// steady_flows
EULERSTAB_DEFINE_ERROR(NoConvergence, "steady_flows");
EULERSTAB_DEFINE_ERROR(ResonanceError, "steady_flows");
// energy_casimir
EULERSTAB_DEFINE_ERROR(RootBracketFailure, "energy_casimir");
EULERSTAB_DEFINE_ERROR(ClassViolation, "energy_casimir");
// rearrangement
EULERSTAB_DEFINE_ERROR(SupportViolation, "rearrangement");
// simulator
EULERSTAB_DEFINE_ERROR(CFLViolation, "simulator");
// cli_harness
EULERSTAB_DEFINE_ERROR(ConfigError, "cli_harness");

#undef EULERSTAB_DEFINE_ERROR

}  // namespace eulerstab

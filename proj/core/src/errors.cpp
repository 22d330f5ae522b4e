#include "levyshell/errors.hpp"

#include <cstdio>

namespace levyshell {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Resource: return "resource";
    case ErrorKind::BlowUp: return "blow-up";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::Undetermined: return "undetermined";
  }
  return "unknown";
}

namespace {
std::string blow_up_message(double time, double norm) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "state norm %.3e left the finite region at t=%.9g", norm, time);
  return buf;
}
}  // namespace

BlowUpError::BlowUpError(double time, double norm)
    : Error(ErrorKind::BlowUp, blow_up_message(time, norm)), time_(time), norm_(norm) {}

}  // namespace levyshell

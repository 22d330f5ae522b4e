#pragma once

#include <stdexcept>
#include <string>

namespace levyshell {

enum class ErrorKind {
  Domain,        // argument outside the mathematical domain
  Parameter,     // invalid model or measure parameters
  Shape,         // mismatched vector lengths
  Resource,      // work would exceed a configured cap
  BlowUp,        // state left the finite region
  Infeasible,    // estimator cannot produce a usable answer
  Undetermined,  // numerical evidence cannot decide
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

class BlowUpError : public Error {
public:
  BlowUpError(double time, double norm);
  double time() const { return time_; }
  double norm() const { return norm_; }

private:
  double time_;
  double norm_;
};

}  // namespace levyshell

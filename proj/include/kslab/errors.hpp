#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kslab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (sizes, ranges, guards).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Region layout violates disjointness of the control sets or the
/// observation-overlap condition. `clause()` names the failing clause.
class ViolatedGeometry : public Error {
 public:
  explicit ViolatedGeometry(std::string clause)
      : Error("violated geometry: " + clause), clause_(std::move(clause)) {}
  const std::string& clause() const { return clause_; }

 private:
  std::string clause_;
};

/// Banded solve could not be trusted.
class IllConditioned : public Error {
 public:
  IllConditioned(const std::string& what, double condition_estimate)
      : Error(what), condition_(condition_estimate) {}
  double condition_estimate() const { return condition_; }

 private:
  double condition_;
};

/// Fixed-point iteration stalled before reaching the requested tolerance.
class NonContraction : public Error {
 public:
  NonContraction(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

/// A constructed weight function failed one of its audited properties.
class AuditFailed : public Error {
 public:
  explicit AuditFailed(std::string property)
      : Error("audit failed: " + property), property_(std::move(property)) {}
  const std::string& property() const { return property_; }

 private:
  std::string property_;
};

/// Generic numerical failure inside a solver stage.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Configuration or input data violate their constraints; carries every
/// violation found, not only the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> issues)
      : Error(join(issues)), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string out = "validation failed";
    for (std::size_t i = 0; i < issues.size(); ++i) out += (i ? "; " : ": ") + issues[i];
    return out;
  }
  std::vector<std::string> issues_;
};

/// Malformed configuration text.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A pipeline stage failed; wraps the underlying message.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, bool validation = false)
      : Error("stage " + stage + ": " + what), stage_(std::move(stage)),
        validation_(validation) {}
  const std::string& stage() const { return stage_; }
  /// True when the cause was a validation-type error.
  bool validation() const { return validation_; }

 private:
  std::string stage_;
  bool validation_;
};

/// Runs f, rethrowing any failure as StageError(name, ...). Errors in the
/// inputs (validation, geometry, arguments) keep validation() = true.
template <class F>
auto with_stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ValidationError& e) {
    throw StageError(name, e.what(), true);
  } catch (const ViolatedGeometry& e) {
    throw StageError(name, e.what(), true);
  } catch (const ParseError& e) {
    throw StageError(name, e.what(), true);
  } catch (const InvalidArgument& e) {
    throw StageError(name, e.what(), true);
  } catch (const AuditFailed& e) {
    throw StageError(name, e.what(), true);
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace kslab

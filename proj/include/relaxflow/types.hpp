#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace relaxflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A time-dependent velocity field v(x, t).
using VelocityFn = std::function<Vector(const Vector& x, double t)>;

/// Numeric failure raised during a computation. Carries the module and
/// operation that produced it so callers (the CLI in particular) can report
/// where a run went wrong.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string module, std::string operation, const std::string& what)
      : std::runtime_error(module + "::" + operation + ": " + what),
        module_(std::move(module)),
        operation_(std::move(operation)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& operation() const noexcept { return operation_; }

 private:
  std::string module_;
  std::string operation_;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace relaxflow

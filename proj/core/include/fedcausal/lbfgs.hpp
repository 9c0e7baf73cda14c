#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedcausal {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LineSearchConfig {
  /// Sufficient-decrease constant of the Armijo test.
  double c1 = 1e-4;
  /// Step multiplier applied after each rejected trial.
  double shrink = 0.5;
  int max_steps = 40;
};

struct SolverConfig {
  int max_iterations = 100;
  /// Stop once the infinity norm of the projected gradient falls below this.
  double gradient_tolerance = 1e-7;
  /// Number of (s, y) pairs kept for the inverse-Hessian approximation.
  int history_size = 10;
  LineSearchConfig line_search;
  /// Relative decrease (f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1) below which the
  /// solve stops. Zero disables the test.
  double function_tolerance = 0.0;

  void validate() const;
};

enum class SolverStatus { Converged, FunctionTolerance, MaxIterations, LineSearchFailed };

std::string to_string(SolverStatus status);

struct SolverResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  double projected_gradient_norm = 0.0;
  SolverStatus status = SolverStatus::MaxIterations;
  /// Objective value at x0 followed by the value at every accepted iterate.
  std::vector<double> trace;
};

/// Evaluates the objective at x, writes the gradient into grad and returns the value.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

/// Limited-memory BFGS with Armijo backtracking.
///
/// `lower` is either empty (unconstrained) or holds one lower bound per
/// coordinate (use -infinity for free coordinates). Bounded coordinates are
/// kept feasible by projecting every line-search trial, which is how the
/// nonnegative halves of an L1 split x = x⁺ - x⁻ are handled.
///
/// Throws SolverError if the objective is not finite at x0.
SolverResult minimize(const Objective& objective, std::vector<double> x0,
                      const SolverConfig& config, std::span<const double> lower = {});

}  // namespace fedcausal

#include "fedcausal/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace fedcausal {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double inf_norm(std::span<const double> v) {
  double best = 0.0;
  for (double x : v) best = std::max(best, std::abs(x));
  return best;
}

struct CorrectionPair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

class BoundSet {
 public:
  explicit BoundSet(std::span<const double> lower) : lower_(lower) {}

  [[nodiscard]] bool bounded() const { return !lower_.empty(); }

  void project(std::span<double> x) const {
    if (!bounded()) return;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::max(x[i], lower_[i]);
  }

  /// Coordinate i is pinned when it sits on its bound and descent would push it out.
  [[nodiscard]] bool pinned(std::span<const double> x, std::span<const double> g,
                            std::size_t i) const {
    return bounded() && x[i] <= lower_[i] && g[i] > 0.0;
  }

 private:
  std::span<const double> lower_;
};

// Two-loop recursion on the free coordinates.
void two_loop(const std::deque<CorrectionPair>& history, std::span<const double> free_grad,
              std::span<double> direction) {
  std::copy(free_grad.begin(), free_grad.end(), direction.begin());
  std::vector<double> alpha(history.size());
  for (std::size_t k = history.size(); k-- > 0;) {
    const auto& p = history[k];
    alpha[k] = p.rho * dot(p.s, direction);
    for (std::size_t i = 0; i < direction.size(); ++i) direction[i] -= alpha[k] * p.y[i];
  }
  if (!history.empty()) {
    const auto& last = history.back();
    const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
    for (double& v : direction) v *= gamma;
  }
  for (std::size_t k = 0; k < history.size(); ++k) {
    const auto& p = history[k];
    const double beta = p.rho * dot(p.y, direction);
    for (std::size_t i = 0; i < direction.size(); ++i) direction[i] += (alpha[k] - beta) * p.s[i];
  }
  for (double& v : direction) v = -v;
}

}  // namespace

void SolverConfig::validate() const {
  if (max_iterations <= 0) throw std::invalid_argument("SolverConfig.max_iterations must be > 0");
  if (!(gradient_tolerance > 0.0)) {
    throw std::invalid_argument("SolverConfig.gradient_tolerance must be > 0");
  }
  if (history_size <= 0) throw std::invalid_argument("SolverConfig.history_size must be > 0");
  if (!(line_search.c1 > 0.0 && line_search.c1 < 1.0)) {
    throw std::invalid_argument("SolverConfig.line_search.c1 must lie in (0,1)");
  }
  if (!(line_search.shrink > 0.0 && line_search.shrink < 1.0)) {
    throw std::invalid_argument("SolverConfig.line_search.shrink must lie in (0,1)");
  }
  if (line_search.max_steps <= 0) {
    throw std::invalid_argument("SolverConfig.line_search.max_steps must be > 0");
  }
  if (function_tolerance < 0.0) {
    throw std::invalid_argument("SolverConfig.function_tolerance must be >= 0");
  }
}

std::string to_string(SolverStatus status) {
  switch (status) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::FunctionTolerance: return "function_tolerance";
    case SolverStatus::MaxIterations: return "max_iterations";
    case SolverStatus::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

SolverResult minimize(const Objective& objective, std::vector<double> x0,
                      const SolverConfig& config, std::span<const double> lower) {
  config.validate();
  const std::size_t n = x0.size();
  if (!lower.empty() && lower.size() != n) {
    throw std::invalid_argument("minimize: bound vector length does not match x0");
  }
  const BoundSet bounds(lower);

  SolverResult result;
  result.x = std::move(x0);
  bounds.project(result.x);

  std::vector<double> grad(n);
  double value = objective(result.x, grad);
  result.evaluations = 1;
  if (!std::isfinite(value)) throw SolverError("minimize: objective is not finite at x0");
  result.trace.push_back(value);

  std::deque<CorrectionPair> history;
  std::vector<double> free_grad(n), direction(n), trial(n), trial_grad(n);

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      free_grad[i] = bounds.pinned(result.x, grad, i) ? 0.0 : grad[i];
    }
    result.projected_gradient_norm = inf_norm(free_grad);
    if (result.projected_gradient_norm <= config.gradient_tolerance) {
      result.status = SolverStatus::Converged;
      result.value = value;
      return result;
    }

    bool accepted = false;
    // Second attempt restarts from steepest descent with an empty memory.
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) {
        if (history.empty()) break;
        history.clear();
      }
      two_loop(history, free_grad, direction);
      for (std::size_t i = 0; i < n; ++i) {
        if (bounds.pinned(result.x, grad, i)) direction[i] = 0.0;
      }
      if (dot(direction, grad) >= 0.0) {
        history.clear();
        for (std::size_t i = 0; i < n; ++i) direction[i] = -free_grad[i];
      }

      double step = 1.0;
      if (history.empty()) step = std::min(1.0, 1.0 / std::max(inf_norm(direction), 1e-300));

      for (int ls = 0; ls < config.line_search.max_steps; ++ls) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = result.x[i] + step * direction[i];
        bounds.project(trial);
        double predicted = 0.0;
        bool moved = false;
        for (std::size_t i = 0; i < n; ++i) {
          const double dx = trial[i] - result.x[i];
          predicted += grad[i] * dx;
          moved = moved || dx != 0.0;
        }
        if (!moved) break;
        const double trial_value = objective(trial, trial_grad);
        ++result.evaluations;
        if (std::isfinite(trial_value) &&
            trial_value <= value + config.line_search.c1 * predicted) {
          CorrectionPair pair{std::vector<double>(n), std::vector<double>(n), 0.0};
          for (std::size_t i = 0; i < n; ++i) {
            pair.s[i] = trial[i] - result.x[i];
            pair.y[i] = trial_grad[i] - grad[i];
          }
          const double sy = dot(pair.s, pair.y);
          if (sy > 1e-12 * dot(pair.y, pair.y) && sy > 0.0) {
            pair.rho = 1.0 / sy;
            history.push_back(std::move(pair));
            if (history.size() > static_cast<std::size_t>(config.history_size)) {
              history.pop_front();
            }
          }
          const double previous = value;
          std::swap(result.x, trial);
          std::swap(grad, trial_grad);
          value = trial_value;
          result.trace.push_back(value);
          result.iterations = iter + 1;
          accepted = true;

          const double scale = std::max({std::abs(previous), std::abs(value), 1.0});
          if (config.function_tolerance > 0.0 &&
              (previous - value) <= config.function_tolerance * scale) {
            result.status = SolverStatus::FunctionTolerance;
            result.value = value;
            return result;
          }
          break;
        }
        step *= config.line_search.shrink;
      }
    }
    if (!accepted) {
      result.status = SolverStatus::LineSearchFailed;
      result.value = value;
      return result;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    free_grad[i] = bounds.pinned(result.x, grad, i) ? 0.0 : grad[i];
  }
  result.projected_gradient_norm = inf_norm(free_grad);
  result.status = result.projected_gradient_norm <= config.gradient_tolerance
                      ? SolverStatus::Converged
                      : SolverStatus::MaxIterations;
  result.value = value;
  return result;
}

}  // namespace fedcausal

#pragma once

// Deterministic bound-constrained minimizer for low-dimensional, cheap,
// polynomial-like costs: exhaustive grid, coordinate refinement around the
// best grid points, then a Nelder-Mead polish projected onto the box.
// Ties always go to the lexicographically smallest point.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace chenflow {

struct BoxSearchConfig {
  std::size_t grid_points = 21;  // per axis
  std::size_t refine_rounds = 12;
  std::size_t multistart = 3;
  std::size_t polish_iterations = 200;
  double polish_tolerance = 1e-15;

  void validate() const {
    if (grid_points < 2) throw std::invalid_argument("optimizer: need at least 2 grid points per axis");
    if (multistart == 0) throw std::invalid_argument("optimizer: multistart must be >= 1");
  }

  bool operator==(const BoxSearchConfig&) const = default;
};

struct BoxSearchResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  double grid_best = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
};

namespace detail {

inline bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

struct Candidate {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
};

/// NaN costs never win.
inline bool better(const Candidate& a, const Candidate& b) {
  if (std::isnan(a.value)) return false;
  if (std::isnan(b.value)) return true;
  if (a.value != b.value) return a.value < b.value;
  return lex_less(a.x, b.x);
}

}  // namespace detail

template <class Cost>
BoxSearchResult minimize_in_box(Cost&& cost, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const BoxSearchConfig& config) {
  using detail::Candidate;
  config.validate();
  const Eigen::Index dim = lower.size();
  if (upper.size() != dim || dim == 0) throw std::invalid_argument("optimizer: bad box");
  if ((upper.array() < lower.array()).any()) throw std::invalid_argument("optimizer: empty box");

  BoxSearchResult result;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++result.evaluations;
    return static_cast<double>(cost(x));
  };
  auto clamp = [&](Eigen::VectorXd x) {
    return x.cwiseMax(lower).cwiseMin(upper).eval();
  };

  const std::size_t g = config.grid_points;
  const Eigen::VectorXd spacing = (upper - lower) / static_cast<double>(g - 1);

  // Grid pass, first axis most significant, so enumeration order is
  // lexicographic and strict improvement keeps the smallest tie.
  std::vector<Candidate> starts;
  std::vector<std::size_t> digits(static_cast<std::size_t>(dim), 0);
  for (;;) {
    Candidate c;
    c.x.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const std::size_t k = digits[static_cast<std::size_t>(i)];
      c.x[i] = (k + 1 == g) ? upper[i] : lower[i] + spacing[i] * static_cast<double>(k);
    }
    c.value = eval(c.x);
    auto pos = std::find_if(starts.begin(), starts.end(), [&](const Candidate& s) { return detail::better(c, s); });
    if (static_cast<std::size_t>(pos - starts.begin()) < config.multistart) {
      starts.insert(pos, std::move(c));
      if (starts.size() > config.multistart) starts.pop_back();
    }
    Eigen::Index axis = dim - 1;
    while (axis >= 0 && ++digits[static_cast<std::size_t>(axis)] == g) {
      digits[static_cast<std::size_t>(axis)] = 0;
      --axis;
    }
    if (axis < 0) break;
  }
  result.grid_best = starts.front().value;

  Candidate best = starts.front();
  for (Candidate incumbent : starts) {
    // Coordinate refinement, step shrinking by thirds.
    Eigen::VectorXd step = spacing;
    for (std::size_t round = 0; round < config.refine_rounds; ++round) {
      for (Eigen::Index i = 0; i < dim; ++i) {
        for (double sign : {-1.0, 1.0}) {
          Candidate trial{incumbent.x, 0.0};
          trial.x[i] = std::clamp(incumbent.x[i] + sign * step[i], lower[i], upper[i]);
          if (trial.x[i] == incumbent.x[i]) continue;
          trial.value = eval(trial.x);
          if (detail::better(trial, incumbent)) incumbent = std::move(trial);
        }
      }
      step /= 3.0;
    }

    // Nelder-Mead polish with every trial point projected onto the box.
    if (config.polish_iterations > 0) {
      std::vector<Candidate> simplex;
      simplex.push_back(incumbent);
      const Eigen::VectorXd initial = (spacing / 9.0).cwiseMax(1e-9);
      for (Eigen::Index i = 0; i < dim; ++i) {
        Candidate v{incumbent.x, 0.0};
        v.x[i] += (incumbent.x[i] + initial[i] <= upper[i]) ? initial[i] : -initial[i];
        v.x = clamp(v.x);
        v.value = eval(v.x);
        simplex.push_back(std::move(v));
      }
      auto order = [&] { std::sort(simplex.begin(), simplex.end(), detail::better); };
      order();
      for (std::size_t it = 0; it < config.polish_iterations; ++it) {
        const double spread = simplex.back().value - simplex.front().value;
        if (!(spread > config.polish_tolerance * (std::abs(simplex.front().value) + 1e-300))) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (std::size_t k = 0; k + 1 < simplex.size(); ++k) centroid += simplex[k].x;
        centroid /= static_cast<double>(dim);
        const Candidate& worst = simplex.back();

        auto point = [&](double coef) {
          Candidate c{clamp(centroid + coef * (worst.x - centroid)), 0.0};
          c.value = eval(c.x);
          return c;
        };
        Candidate reflected = point(-1.0);
        if (detail::better(reflected, simplex.front())) {
          Candidate expanded = point(-2.0);
          simplex.back() = detail::better(expanded, reflected) ? std::move(expanded) : std::move(reflected);
        } else if (detail::better(reflected, simplex[simplex.size() - 2])) {
          simplex.back() = std::move(reflected);
        } else {
          const bool outside = detail::better(reflected, worst);
          Candidate contracted = point(outside ? -0.5 : 0.5);
          if (detail::better(contracted, outside ? reflected : worst)) {
            simplex.back() = std::move(contracted);
          } else {
            for (std::size_t k = 1; k < simplex.size(); ++k) {
              simplex[k].x = clamp(simplex.front().x + 0.5 * (simplex[k].x - simplex.front().x));
              simplex[k].value = eval(simplex[k].x);
            }
          }
        }
        order();
      }
      if (detail::better(simplex.front(), incumbent)) incumbent = simplex.front();
    }

    if (detail::better(incumbent, best)) best = std::move(incumbent);
  }

  result.x = std::move(best.x);
  result.value = best.value;
  return result;
}

}  // namespace chenflow

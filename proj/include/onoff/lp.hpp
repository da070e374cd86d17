#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onoff/matrix.hpp"
#include "onoff/model.hpp"
#include "onoff/scheme.hpp"

namespace onoff {

// Column meaning of a query-design LP: the variable p(q, x | u).
struct LpVariable {
  QuerySet q;
  Source x = 0;
  Source u = 0;
};

// min objective . v  subject to  constraints v = rhs, v >= 0.
struct LpProblem {
  int n = 0;
  std::vector<double> objective;
  Matrix constraints;
  std::vector<double> rhs;
  std::vector<LpVariable> legend;
  std::size_t mass_rows = 0;
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  double optimum = 0.0;
  std::vector<double> values;
  std::size_t pivots = 0;
};

// Dense tableaus above this many cells are refused with CapacityError.
inline constexpr double kMaxTableauCells = 3e7;
inline constexpr std::size_t kMaxPivots = 1'000'000;

// Query-design LP for one step. Without `cap` every nonempty q is allowed;
// with it only |q| in {1..cap, n}. `prior` weights the objective over u and
// defaults to uniform.
LpProblem build_lp(const ConditionalLaw& law, std::optional<int> cap = std::nullopt,
                   std::span<const double> prior = {});

// Two-phase primal simplex on a dense tableau with Bland's rule.
LpSolution solve(const std::vector<double>& objective, const Matrix& constraints,
                 const std::vector<double>& rhs);
LpSolution solve(const LpProblem& problem);

// Largest violation of the equality rows or the sign constraints.
double constraint_violation(const LpProblem& problem, std::span<const double> values);

// Plain-text dump: objective row, constraint rows, then the column legend.
std::string dump(const LpProblem& problem);

// Reads an optimal assignment back as a set-valued QueryDistribution.
QueryDistribution to_distribution(const LpProblem& problem, const LpSolution& solution);

// Optimum of the full LP for `law`, or of the capped LP when `cap` is given.
double lp_optimum(const ConditionalLaw& law, std::optional<int> cap = std::nullopt,
                  std::span<const double> prior = {});

}  // namespace onoff

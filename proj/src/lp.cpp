#include "onoff/lp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "onoff/errors.hpp"

namespace onoff {
namespace {

constexpr double kPivotTolerance = 1e-9;
constexpr double kCostTolerance = 1e-10;
constexpr double kPhaseOneTolerance = 1e-8;

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// All k-subsets of {0..n-1} as masks, in lexicographic order of members.
void append_subsets(int n, int k, std::vector<QuerySet>& out) {
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    std::uint64_t mask = 0;
    for (int i : idx) mask |= std::uint64_t{1} << i;
    out.emplace_back(mask);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

std::vector<double> checked_prior(std::span<const double> prior, int n) {
  if (prior.empty()) return std::vector<double>(n, 1.0 / n);
  if (static_cast<int>(prior.size()) != n) throw ConfigError("build_lp: prior has wrong size");
  double sum = 0.0;
  for (double p : prior) {
    if (!(p >= 0.0)) throw ConfigError("build_lp: prior must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kRowSumTolerance) throw ConfigError("build_lp: prior must sum to 1");
  return {prior.begin(), prior.end()};
}

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_((rows + 1) * (cols + 1)) {}

  double& at(std::size_t r, std::size_t c) { return data_[r * (cols_ + 1) + c]; }
  double& rhs(std::size_t r) { return at(r, cols_); }
  double& cost(std::size_t c) { return at(rows_, c); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double inv = 1.0 / at(pr, pc);
    double* prow = &at(pr, 0);
    for (std::size_t c = 0; c <= cols_; ++c) prow[c] *= inv;
    prow[pc] = 1.0;
    for (std::size_t r = 0; r <= rows_; ++r) {
      if (r == pr) continue;
      double* row = &at(r, 0);
      const double f = row[pc];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c <= cols_; ++c) row[c] -= f * prow[c];
      row[pc] = 0.0;
    }
  }

  void drop_row(std::size_t r) {
    const std::size_t width = cols_ + 1;
    data_.erase(data_.begin() + r * width, data_.begin() + (r + 1) * width);
    --rows_;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

enum class RunResult { kOptimal, kUnbounded };

// Bland's rule: lowest-index improving column, ratio ties to lowest basic index.
RunResult run_simplex(Tableau& t, std::vector<std::size_t>& basis, std::size_t eligible,
                      std::size_t& pivots) {
  while (true) {
    std::size_t enter = eligible;
    for (std::size_t c = 0; c < eligible; ++c) {
      if (t.cost(c) < -kCostTolerance) {
        enter = c;
        break;
      }
    }
    if (enter == eligible) return RunResult::kOptimal;

    std::size_t leave = t.rows();
    double best = 0.0;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      const double a = t.at(r, enter);
      if (a <= kPivotTolerance) continue;
      const double ratio = t.rhs(r) / a;
      if (leave == t.rows() || ratio < best - 1e-12) {
        best = ratio;
        leave = r;
      } else if (ratio <= best + 1e-12 && basis[r] < basis[leave]) {
        leave = r;
      }
    }
    if (leave == t.rows()) return RunResult::kUnbounded;
    if (++pivots > kMaxPivots) throw NumericalError("simplex: pivot limit exceeded");
    t.pivot(leave, enter);
    basis[leave] = enter;
  }
}

}  // namespace

LpProblem build_lp(const ConditionalLaw& law, std::optional<int> cap,
                   std::span<const double> prior) {
  const int n = law.n();
  if (cap && *cap < 1) throw ConfigError("build_lp: cardinality cap must be at least 1");
  const std::vector<double> weights = checked_prior(prior, n);

  std::vector<int> sizes;
  for (int k = 1; k <= n; ++k) {
    if (!cap || k <= *cap || k == n) sizes.push_back(k);
  }
  double set_count = 0.0;
  double col_count = 0.0;
  for (int k : sizes) {
    set_count += binomial(n, k);
    col_count += binomial(n, k) * k * n;
  }
  const double row_count = static_cast<double>(n) * n + (n - 1) * set_count;
  if (n > kMaxSources || (row_count + 1) * (col_count + row_count + 1) > kMaxTableauCells) {
    throw CapacityError("build_lp: LP too large for the dense solver; use a cardinality cap");
  }

  std::vector<QuerySet> queries;
  for (int k : sizes) append_subsets(n, k, queries);
  std::sort(queries.begin(), queries.end());

  LpProblem lp;
  lp.n = n;
  for (const QuerySet& q : queries) {
    for (Source u = 0; u < n; ++u) {
      for (Source x : q.members()) {
        lp.legend.push_back({q, x, u});
        lp.objective.push_back(weights[u] * q.size());
      }
    }
  }
  const std::size_t cols = lp.legend.size();
  const std::size_t mass_rows = static_cast<std::size_t>(n) * n;
  const std::size_t rows = mass_rows + (n - 1) * queries.size();
  lp.constraints = Matrix(rows, cols);
  lp.rhs.assign(rows, 0.0);
  lp.mass_rows = mass_rows;
  for (Source u = 0; u < n; ++u) {
    for (Source x = 0; x < n; ++x) lp.rhs[u * n + x] = law(u, x);
  }

  std::size_t col = 0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    for (Source u = 0; u < n; ++u) {
      for ([[maybe_unused]] Source x : queries[qi].members()) {
        const LpVariable& v = lp.legend[col];
        lp.constraints(v.u * n + v.x, col) = 1.0;
        // Privacy: p(q | u) - p(q | 0) = 0 for u = 1..n-1.
        const std::size_t base = mass_rows + qi * (n - 1);
        if (u == 0) {
          for (int k = 0; k < n - 1; ++k) lp.constraints(base + k, col) = -1.0;
        } else {
          lp.constraints(base + u - 1, col) = 1.0;
        }
        ++col;
      }
    }
  }
  return lp;
}

LpSolution solve(const std::vector<double>& objective, const Matrix& constraints,
                 const std::vector<double>& rhs) {
  const std::size_t m = constraints.rows();
  const std::size_t n = constraints.cols();
  if (objective.size() != n || rhs.size() != m) {
    throw ConfigError("simplex: dimension mismatch");
  }
  if ((m + 1.0) * (n + m + 1.0) > kMaxTableauCells) {
    throw CapacityError("simplex: tableau too large");
  }

  // Phase one: artificial column n + r for row r, rows sign-flipped so rhs >= 0.
  Tableau t(m, n + m);
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double sign = rhs[r] < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < n; ++c) t.at(r, c) = sign * constraints(r, c);
    t.at(r, n + r) = 1.0;
    t.rhs(r) = sign * rhs[r];
    basis[r] = n + r;
  }
  for (std::size_t c = 0; c <= n + m; ++c) {
    if (c >= n && c < n + m) continue;
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) s += t.at(r, c);
    t.at(m, c) = -s;
  }

  LpSolution sol;
  run_simplex(t, basis, n + m, sol.pivots);
  if (-t.rhs(t.rows()) > kPhaseOneTolerance) {
    sol.status = LpStatus::kInfeasible;
    return sol;
  }

  // Pivot remaining artificials out; rows where that is impossible are redundant.
  for (std::size_t r = 0; r < t.rows();) {
    if (basis[r] < n) {
      ++r;
      continue;
    }
    std::size_t c = 0;
    while (c < n && std::abs(t.at(r, c)) <= kPivotTolerance) ++c;
    if (c < n) {
      t.pivot(r, c);
      basis[r] = c;
      ++r;
    } else {
      t.drop_row(r);
      basis.erase(basis.begin() + r);
    }
  }

  // Phase two objective row in terms of the current basis.
  const std::size_t rows = t.rows();
  for (std::size_t c = 0; c <= n + m; ++c) {
    double v = c < n ? objective[c] : 0.0;
    for (std::size_t r = 0; r < rows; ++r) v -= objective[basis[r]] * t.at(r, c);
    t.at(rows, c) = v;
  }
  if (run_simplex(t, basis, n, sol.pivots) == RunResult::kUnbounded) {
    sol.status = LpStatus::kUnbounded;
    return sol;
  }

  sol.status = LpStatus::kOptimal;
  sol.values.assign(n, 0.0);
  for (std::size_t r = 0; r < rows; ++r) sol.values[basis[r]] = std::max(t.rhs(r), 0.0);
  sol.optimum = 0.0;
  for (std::size_t c = 0; c < n; ++c) sol.optimum += objective[c] * sol.values[c];
  return sol;
}

LpSolution solve(const LpProblem& problem) {
  return solve(problem.objective, problem.constraints, problem.rhs);
}

double constraint_violation(const LpProblem& problem, std::span<const double> values) {
  double worst = 0.0;
  for (double v : values) worst = std::max(worst, -v);
  for (std::size_t r = 0; r < problem.constraints.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < problem.constraints.cols(); ++c) {
      s += problem.constraints(r, c) * values[c];
    }
    worst = std::max(worst, std::abs(s - problem.rhs[r]));
  }
  return worst;
}

std::string dump(const LpProblem& problem) {
  std::ostringstream os;
  os.precision(17);
  os << "min";
  for (std::size_t c = 0; c < problem.objective.size(); ++c) {
    if (problem.objective[c] != 0.0) os << ' ' << problem.objective[c] << "*v" << c;
  }
  os << '\n';
  for (std::size_t r = 0; r < problem.constraints.rows(); ++r) {
    bool any = false;
    for (std::size_t c = 0; c < problem.constraints.cols(); ++c) {
      const double a = problem.constraints(r, c);
      if (a == 0.0) continue;
      os << (any ? " " : "") << a << "*v" << c;
      any = true;
    }
    if (!any) os << '0';
    os << " = " << problem.rhs[r] << '\n';
  }
  for (std::size_t c = 0; c < problem.legend.size(); ++c) {
    const LpVariable& v = problem.legend[c];
    os << "({";
    const auto members = v.q.members();
    for (std::size_t i = 0; i < members.size(); ++i) os << (i ? "," : "") << members[i];
    os << "}," << v.x << ',' << v.u << ") -> " << c << '\n';
  }
  return os.str();
}

QueryDistribution to_distribution(const LpProblem& problem, const LpSolution& solution) {
  if (solution.status != LpStatus::kOptimal) {
    throw ConfigError("to_distribution: LP has no optimal solution");
  }
  std::vector<QueryEntry> entries;
  for (std::size_t c = 0; c < problem.legend.size(); ++c) {
    const double v = solution.values[c];
    if (v <= 1e-14) continue;
    const LpVariable& var = problem.legend[c];
    entries.push_back({MultisetQuery(var.q.members()), var.x, var.u, v});
  }
  return QueryDistribution(problem.n, std::move(entries));
}

double lp_optimum(const ConditionalLaw& law, std::optional<int> cap,
                  std::span<const double> prior) {
  const LpSolution sol = solve(build_lp(law, cap, prior));
  if (sol.status != LpStatus::kOptimal) {
    throw NumericalError("lp_optimum: query-design LP did not reach an optimum");
  }
  return sol.optimum;
}

}  // namespace onoff

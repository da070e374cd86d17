#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "onoff/model.hpp"
#include "onoff/sim.hpp"

namespace onoff {

enum class BoundKind { kOuter1, kOuter2, kInner, kExactN2, kLpC1 };

std::string bound_kind_name(BoundKind kind);

// Expected download per message length, i.e. 1 / R_t.
struct RateBound {
  double inverse_rate = 0.0;
  BoundKind kind = BoundKind::kOuter2;

  double rate() const { return 1.0 / inverse_rate; }
};

// sum_x max_u law(x | u): the converse that ignores the query history.
RateBound outer_bound_2(const ConditionalLaw& law);
// sum_i i theta_i: achievable at the first OFF step after an ON step.
RateBound inner_bound_first_off_step(const ConditionalLaw& law);
// Two sources, P = [[1-a, a], [b, 1-b]]: 1 + |1 - a - b|^gap, and 2 at gap 0.
RateBound exact_rate_n2(double alpha, double beta, std::size_t gap);
// Optimum of the query-design LP restricted to |q| in {1, n}.
RateBound lp_c1_closed_form(const OrderStats& stats);

struct BoundsRow {
  std::size_t t = 0;
  bool on = false;
  double outer2 = 0.0;
  double outer1 = 0.0;
  double inner = 0.0;
  double achieved = 0.0;
  std::optional<double> exact_n2;
  std::optional<double> lp_opt;
};

struct BoundsOptions {
  Policy policy = Policy::kAlgorithm1;
  bool with_lp = false;
  std::size_t max_branches = 10'000'000;
};

// Per-t bounds for t = 0..horizon. outer1 and inner are averaged over the
// query histories that the chosen policy induces.
std::vector<BoundsRow> bounds_over_horizon(const MarkovModel& model,
                                           const PrivacyPattern& pattern, std::size_t horizon,
                                           const BoundsOptions& options = {});

// Columns t, F_t, outer2, outer1, inner, achieved, then exact_n2 and lp_opt
// when present in the first row.
void write_bounds_csv(std::ostream& os, const std::vector<BoundsRow>& rows);

// Closed-form curves for plotting.
struct DecayPoint {
  double sum = 0.0;  // alpha + beta
  std::size_t gap = 0;
  double inverse_rate = 0.0;
};
std::vector<DecayPoint> decay_grid(const std::vector<double>& sums, std::size_t max_gap);

struct SymmetricPoint {
  double stay = 0.0;
  double outer = 0.0;  // inverse rate, outer bound 2
  double inner = 0.0;  // inverse rate, sum_i i theta_i
};
std::vector<SymmetricPoint> symmetric_grid(int n, std::size_t points);

}  // namespace onoff

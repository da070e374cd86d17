#include "onoff/bounds.hpp"

#include <cmath>
#include <iomanip>

#include "onoff/errors.hpp"
#include "onoff/verify.hpp"

namespace onoff {

std::string bound_kind_name(BoundKind kind) {
  switch (kind) {
    case BoundKind::kOuter1: return "outer1";
    case BoundKind::kOuter2: return "outer2";
    case BoundKind::kInner: return "inner";
    case BoundKind::kExactN2: return "exact_n2";
    case BoundKind::kLpC1: return "lp_c1";
  }
  return "unknown";
}

RateBound outer_bound_2(const ConditionalLaw& law) {
  return {lemma1_lower_bound(law), BoundKind::kOuter2};
}

RateBound inner_bound_first_off_step(const ConditionalLaw& law) {
  return {order_stats(law).expected_cardinality(), BoundKind::kInner};
}

RateBound exact_rate_n2(double alpha, double beta, std::size_t gap) {
  if (!(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0)) {
    throw ConfigError("exact_rate_n2: alpha and beta must lie in [0, 1]");
  }
  if (gap == 0) return {2.0, BoundKind::kExactN2};
  return {1.0 + std::pow(std::abs(1.0 - alpha - beta), static_cast<double>(gap)),
          BoundKind::kExactN2};
}

RateBound lp_c1_closed_form(const OrderStats& stats) {
  const double theta1 = stats.thetas.at(0);
  return {theta1 + stats.n() * (1.0 - theta1), BoundKind::kLpC1};
}

std::vector<BoundsRow> bounds_over_horizon(const MarkovModel& model,
                                           const PrivacyPattern& pattern, std::size_t horizon,
                                           const BoundsOptions& options) {
  EnumerationOptions enum_options;
  enum_options.policy = options.policy;
  enum_options.with_lp = options.with_lp;
  enum_options.max_branches = options.max_branches;
  const std::vector<HistoryStep> steps =
      enumerate_histories(model, pattern, horizon, enum_options);

  const int n = model.n();
  std::vector<BoundsRow> rows;
  for (const HistoryStep& s : steps) {
    BoundsRow row;
    row.t = s.t;
    row.on = s.on;
    row.outer1 = s.outer1;
    row.inner = s.inner;
    row.achieved = s.achieved;
    row.lp_opt = s.lp_opt;
    const std::size_t gap = s.t - tau_of(pattern, s.t);
    row.outer2 = gap == 0 ? n : outer_bound_2(step_law(model, gap)).inverse_rate;
    if (n == 2) {
      row.exact_n2 = exact_rate_n2(model.p()(0, 1), model.p()(1, 0), gap).inverse_rate;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_bounds_csv(std::ostream& os, const std::vector<BoundsRow>& rows) {
  const bool exact = !rows.empty() && rows.front().exact_n2.has_value();
  const bool lp = !rows.empty() && rows.front().lp_opt.has_value();
  os << "t,F_t,outer2,outer1,inner,achieved";
  if (exact) os << ",exact_n2";
  if (lp) os << ",lp_opt";
  os << '\n' << std::setprecision(15);
  for (const BoundsRow& r : rows) {
    os << r.t << ',' << (r.on ? 1 : 0) << ',' << r.outer2 << ',' << r.outer1 << ',' << r.inner
       << ',' << r.achieved;
    if (exact) os << ',' << *r.exact_n2;
    if (lp) os << ',' << *r.lp_opt;
    os << '\n';
  }
}

std::vector<DecayPoint> decay_grid(const std::vector<double>& sums, std::size_t max_gap) {
  std::vector<DecayPoint> out;
  for (double sum : sums) {
    if (!(sum >= 0.0 && sum <= 2.0)) throw ConfigError("decay_grid: alpha + beta must be in [0, 2]");
    for (std::size_t gap = 0; gap <= max_gap; ++gap) {
      out.push_back({sum, gap, exact_rate_n2(sum / 2, sum / 2, gap).inverse_rate});
    }
  }
  return out;
}

std::vector<SymmetricPoint> symmetric_grid(int n, std::size_t points) {
  if (points < 2) throw ConfigError("symmetric_grid: need at least two points");
  std::vector<SymmetricPoint> out;
  for (std::size_t k = 0; k < points; ++k) {
    const double stay = static_cast<double>(k) / static_cast<double>(points - 1);
    const ConditionalLaw law(MarkovModel::symmetric(n, stay).p());
    out.push_back({stay, outer_bound_2(law).inverse_rate,
                   inner_bound_first_off_step(law).inverse_rate});
  }
  return out;
}

}  // namespace onoff

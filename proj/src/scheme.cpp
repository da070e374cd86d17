#include "onoff/scheme.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <string>

#include "onoff/errors.hpp"

namespace onoff {
namespace {

// Amounts at or below this are rounding residue of exact-zero quantities.
constexpr double kDust = 1e-15;
// Largest lane shortfall attributed to rounding rather than a bug.
constexpr double kShortfallLimit = 1e-9;
// Builder output is self-checked at this level; the audit uses kTolerance.
constexpr double kSelfCheckTolerance = 1e-8;

void check_source_count(int n) {
  if (n < 1 || n > kMaxSources) {
    throw ConfigError("number of sources must be in [1, " + std::to_string(kMaxSources) + "]");
  }
}

int compare_counts(const MultisetQuery& a, const MultisetQuery& b) {
  const auto& ea = a.elements();
  const auto& eb = b.elements();
  std::size_t i = 0, j = 0;
  while (i < ea.size() || j < eb.size()) {
    const int va = i < ea.size() ? ea[i] : kMaxSources;
    const int vb = j < eb.size() ? eb[j] : kMaxSources;
    const int v = std::min(va, vb);
    std::size_t ca = 0, cb = 0;
    while (i < ea.size() && ea[i] == v) ++i, ++ca;
    while (j < eb.size() && eb[j] == v) ++j, ++cb;
    if (ca != cb) return ca < cb ? -1 : 1;
  }
  return 0;
}

bool entry_less(const QueryEntry& a, const QueryEntry& b) {
  if (a.z.cardinality() != b.z.cardinality()) return a.z.cardinality() < b.z.cardinality();
  if (int c = compare_counts(a.z, b.z); c != 0) return c < 0;
  if (a.x != b.x) return a.x < b.x;
  return a.u < b.u;
}

bool same_key(const QueryEntry& a, const QueryEntry& b) {
  return a.x == b.x && a.u == b.u && a.z == b.z;
}

struct LaneCell {
  Source column;
  double value;
};

using Lane = std::vector<LaneCell>;

// Scans row u of the auxiliary matrix left to right, taking whole cells until
// `target` is met and truncating the last one.
Lane take_from_row(Matrix& aux, const ConditionalLaw& law, Source u, double target,
                   double& shortfall) {
  Lane lane;
  double taken = 0.0;
  for (Source k = 0; k < law.n(); ++k) {
    const double avail = aux(u, k);
    if (avail <= kDust) continue;
    if (taken + avail < target) {
      lane.push_back({k, avail});
      taken += avail;
      aux(u, k) = 0.0;
    } else {
      const double v = target - taken;
      lane.push_back({k, v});
      aux(u, k) = avail - v;
      taken = target;
      break;
    }
  }
  if (taken < target) {
    const double missing = target - taken;
    shortfall = std::max(shortfall, missing);
    if (missing > kShortfallLimit) {
      std::ostringstream msg;
      msg << "build_query_distribution: row " << u << " of the auxiliary matrix is short by "
          << missing;
      throw InternalConsistencyError(msg.str());
    }
    if (!lane.empty()) {
      lane.back().value += missing;
    } else {
      Source best = 0;
      for (Source k = 1; k < law.n(); ++k) {
        if (law(u, k) > law(u, best)) best = k;
      }
      lane.push_back({best, missing});
    }
  }
  return lane;
}

struct Piece {
  std::vector<Source> zeta;
  double nu;
};

// Buffer merge: repeatedly emit the current cell of every lane with the
// smallest remaining value, subtract it, and advance the lane that hit zero.
std::vector<Piece> merge_lanes(const std::vector<Lane>& lanes, double target) {
  if (lanes.empty()) return {Piece{{}, target}};
  const std::size_t count = lanes.size();
  std::vector<std::size_t> pos(count, 0);
  std::vector<double> buffer(count);
  for (std::size_t i = 0; i < count; ++i) buffer[i] = lanes[i][0].value;

  std::vector<Piece> pieces;
  while (true) {
    std::size_t m = 0;
    for (std::size_t i = 1; i < count; ++i) {
      if (buffer[i] < buffer[m]) m = i;
    }
    const double nu = buffer[m];
    if (nu > kDust) {
      Piece piece{std::vector<Source>(count), nu};
      for (std::size_t i = 0; i < count; ++i) piece.zeta[i] = lanes[i][pos[i]].column;
      pieces.push_back(std::move(piece));
    }
    for (double& b : buffer) b -= nu;
    if (++pos[m] == lanes[m].size()) break;
    buffer[m] = lanes[m][pos[m]].value;
  }
  return pieces;
}

// Cheap structural checks on freshly built output, grouped by the sorted z.
void self_check(const QueryDistribution& dist, const ConditionalLaw& law) {
  const int n = dist.n();
  const Matrix marg = dist.marginal();
  const double marginal_gap = marg.max_abs_diff(law.table());
  if (marginal_gap > kSelfCheckTolerance) {
    throw InternalConsistencyError("build_query_distribution: marginal mismatch " +
                                   std::to_string(marginal_gap));
  }
  const auto entries = dist.entries();
  std::vector<double> per_u(n);
  for (std::size_t begin = 0; begin < entries.size();) {
    std::size_t end = begin;
    std::fill(per_u.begin(), per_u.end(), 0.0);
    while (end < entries.size() && entries[end].z == entries[begin].z) {
      const auto& e = entries[end];
      if (!e.z.contains(e.x)) {
        throw InternalConsistencyError("build_query_distribution: undecodable entry");
      }
      per_u[e.u] += e.prob;
      ++end;
    }
    const auto [lo, hi] = std::minmax_element(per_u.begin(), per_u.end());
    if (*hi - *lo > kSelfCheckTolerance) {
      throw InternalConsistencyError("build_query_distribution: query depends on u");
    }
    begin = end;
  }
}

}  // namespace

QuerySet QuerySet::full(int n) {
  check_source_count(n);
  return QuerySet(n == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1);
}

QuerySet QuerySet::of(std::initializer_list<Source> members) {
  std::uint64_t mask = 0;
  for (Source x : members) mask |= std::uint64_t{1} << x;
  return QuerySet(mask);
}

int QuerySet::size() const { return std::popcount(mask_); }

std::vector<Source> QuerySet::members() const {
  std::vector<Source> out;
  for (std::uint64_t m = mask_; m != 0; m &= m - 1) out.push_back(std::countr_zero(m));
  return out;
}

MultisetQuery::MultisetQuery(std::vector<Source> elements) {
  elements_.reserve(elements.size());
  for (Source x : elements) {
    if (x < 0 || x >= kMaxSources) throw ConfigError("MultisetQuery: source out of range");
    elements_.push_back(static_cast<std::uint8_t>(x));
  }
  std::sort(elements_.begin(), elements_.end());
}

MultisetQuery MultisetQuery::from_counts(std::span<const int> counts) {
  std::vector<Source> elements;
  for (std::size_t x = 0; x < counts.size(); ++x) {
    if (counts[x] < 0) throw ConfigError("MultisetQuery: negative multiplicity");
    elements.insert(elements.end(), counts[x], static_cast<Source>(x));
  }
  return MultisetQuery(std::move(elements));
}

int MultisetQuery::multiplicity(Source x) const {
  const auto [lo, hi] = std::equal_range(elements_.begin(), elements_.end(),
                                         static_cast<std::uint8_t>(x));
  return static_cast<int>(hi - lo);
}

std::vector<int> MultisetQuery::counts(int n) const {
  std::vector<int> c(n, 0);
  for (auto e : elements_) {
    if (e >= n) throw ConfigError("MultisetQuery: element outside ground set");
    ++c[e];
  }
  return c;
}

QuerySet MultisetQuery::support() const {
  std::uint64_t mask = 0;
  for (auto e : elements_) mask |= std::uint64_t{1} << e;
  return QuerySet(mask);
}

bool MultisetQuery::is_set() const {
  return std::adjacent_find(elements_.begin(), elements_.end()) == elements_.end();
}

bool counts_less(const MultisetQuery& a, const MultisetQuery& b) {
  return compare_counts(a, b) < 0;
}

QueryDistribution::QueryDistribution(int n, std::vector<QueryEntry> entries) : n_(n) {
  check_source_count(n);
  for (const auto& e : entries) {
    if (e.x < 0 || e.x >= n || e.u < 0 || e.u >= n) {
      throw ConfigError("QueryDistribution: source index out of range");
    }
    if (e.z.cardinality() > n) throw ConfigError("QueryDistribution: |z| exceeds n");
    if (!e.z.elements().empty() && e.z.elements().back() >= n) {
      throw ConfigError("QueryDistribution: query element out of range");
    }
    if (!(e.prob >= 0.0)) throw ConfigError("QueryDistribution: negative probability");
  }
  std::sort(entries.begin(), entries.end(), entry_less);
  entries_.reserve(entries.size());
  for (auto& e : entries) {
    if (!entries_.empty() && same_key(entries_.back(), e)) {
      entries_.back().prob += e.prob;
    } else {
      entries_.push_back(std::move(e));
    }
  }
  std::erase_if(entries_, [](const QueryEntry& e) { return e.prob <= 0.0; });
}

bool QueryDistribution::is_set_view() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const QueryEntry& e) { return e.z.is_set(); });
}

double QueryDistribution::expected_cardinality() const {
  double total = 0.0;
  for (const auto& e : entries_) total += e.z.cardinality() * e.prob;
  return total / n_;
}

double QueryDistribution::expected_set_cardinality() const {
  double total = 0.0;
  for (const auto& e : entries_) total += e.z.support().size() * e.prob;
  return total / n_;
}

Matrix QueryDistribution::marginal() const {
  Matrix m(n_, n_);
  for (const auto& e : entries_) m(e.u, e.x) += e.prob;
  return m;
}

QueryDistribution build_query_distribution(const ConditionalLaw& law, const OrderStats& stats,
                                           BuildTrace* trace) {
  const int n = law.n();
  check_source_count(n);
  if (stats.n() != n) throw ConfigError("build_query_distribution: stats/law size mismatch");

  Matrix aux(n, n);
  for (Source u = 0; u < n; ++u) {
    for (Source j = 0; j < n; ++j) aux(u, j) = std::max(law(u, j) - stats.deltas[j], 0.0);
  }

  const int last_stage = std::min(stats.sigma + 1, n);
  if (trace != nullptr) {
    trace->pieces.assign(last_stage, 0);
    trace->tuples.assign(last_stage, 0);
    trace->max_lane_shortfall = 0.0;
  }

  std::vector<QueryEntry> out;
  std::vector<char> in_prefix(n);
  double shortfall = 0.0;
  for (int stage = 1; stage <= last_stage; ++stage) {
    for (Source x = 0; x < n; ++x) {
      const auto& ord = stats.orderings[x];
      const double upper = std::min(stats.deltas[x], law(ord[stage - 1], x));
      const double lower = stage > 1 ? law(ord[stage - 2], x) : 0.0;
      const double target = upper - lower;
      if (target <= kDust) continue;

      std::vector<Lane> lanes;
      lanes.reserve(stage - 1);
      for (int i = 0; i < stage - 1; ++i) {
        lanes.push_back(take_from_row(aux, law, ord[i], target, shortfall));
      }
      const std::vector<Piece> pieces = merge_lanes(lanes, target);

      std::fill(in_prefix.begin(), in_prefix.end(), 0);
      for (int i = 0; i < stage - 1; ++i) in_prefix[ord[i]] = 1;
      for (const Piece& piece : pieces) {
        std::vector<Source> elements = piece.zeta;
        elements.push_back(x);
        const MultisetQuery z(std::move(elements));
        for (int i = 0; i < stage - 1; ++i) out.push_back({z, piece.zeta[i], ord[i], piece.nu});
        for (Source u = 0; u < n; ++u) {
          if (!in_prefix[u]) out.push_back({z, x, u, piece.nu});
        }
      }
      if (trace != nullptr) {
        trace->pieces[stage - 1] += pieces.size();
        trace->tuples[stage - 1] += pieces.size() * static_cast<std::size_t>(n);
      }
    }
  }
  if (trace != nullptr) trace->max_lane_shortfall = shortfall;

  QueryDistribution dist(n, std::move(out));
  self_check(dist, law);
  return dist;
}

QueryDistribution project_to_sets(const QueryDistribution& dist) {
  std::vector<QueryEntry> projected;
  projected.reserve(dist.entries().size());
  for (const auto& e : dist.entries()) {
    projected.push_back({MultisetQuery(e.z.support().members()), e.x, e.u, e.prob});
  }
  return QueryDistribution(dist.n(), std::move(projected));
}

QuerySet on_step_query(int n) { return QuerySet::full(n); }

PolicyN2::PolicyN2(double alpha, double beta) : alpha_(alpha), beta_(beta) {
  if (!(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0)) {
    throw ConfigError("PolicyN2: alpha and beta must lie in [0, 1]");
  }
}

N2QueryLaw PolicyN2::query_law(Source x_tau, Source x_t, int prev_card, Parity parity) const {
  if (x_tau < 0 || x_tau > 1 || x_t < 0 || x_t > 1) {
    throw ConfigError("PolicyN2: sources must be 0 or 1");
  }
  if (prev_card != 1 && prev_card != 2) throw ConfigError("PolicyN2: prev_card must be 1 or 2");

  auto single = [&](Source x) {
    N2QueryLaw q;
    (x == 0 ? q.first : q.second) = 1.0;
    return q;
  };
  auto split = [&](Source x, double p_single) {
    N2QueryLaw q;
    (x == 0 ? q.first : q.second) = p_single;
    q.both = 1.0 - p_single;
    return q;
  };

  // A singleton query reveals x_{t-1}; from then on the request is sent as is.
  if (prev_card == 1) return single(x_t);

  const double a = alpha_;
  const double b = beta_;
  const double sum = a + b;
  if (std::abs(sum - 1.0) <= 1e-12) return single(x_t);

  if (sum < 1.0) {
    if (x_tau != x_t) return single(x_t);
    return x_t == 0 ? split(0, b / (1.0 - a)) : split(1, a / (1.0 - b));
  }
  // Negative correlation: the chain alternates, so after an odd gap the likely
  // request differs from x_tau and that is the one that needs hiding.
  const bool hide_when_equal = parity == Parity::kEven;
  if ((x_tau == x_t) != hide_when_equal) return single(x_t);
  return x_t == 0 ? split(0, (1.0 - a) / b) : split(1, (1.0 - b) / a);
}

N2QueryLaw policy_n2(double alpha, double beta, Source x_tau, Source x_t, int prev_card,
                     Parity parity) {
  return PolicyN2(alpha, beta).query_law(x_tau, x_t, prev_card, parity);
}

QueryKernel::QueryKernel(int n, std::vector<std::vector<KernelOutcome>> outcomes)
    : n_(n), outcomes_(std::move(outcomes)) {
  check_source_count(n);
  if (outcomes_.size() != static_cast<std::size_t>(n) * n) {
    throw ConfigError("QueryKernel: need one outcome list per (u, x) pair");
  }
  for (const auto& list : outcomes_) {
    for (const auto& o : list) support_.push_back(o.y);
  }
  std::sort(support_.begin(), support_.end());
  support_.erase(std::unique(support_.begin(), support_.end()), support_.end());
}

QueryKernel QueryKernel::from_distribution(const QueryDistribution& set_view,
                                           const ConditionalLaw& law) {
  const int n = set_view.n();
  if (law.n() != n) throw ConfigError("QueryKernel: law/distribution size mismatch");
  std::vector<std::vector<KernelOutcome>> outcomes(static_cast<std::size_t>(n) * n);
  for (const auto& e : set_view.entries()) {
    const double px = law(e.u, e.x);
    if (px <= 0.0) continue;
    outcomes[static_cast<std::size_t>(e.u) * n + e.x].push_back({e.z.support(), e.prob / px});
  }
  for (auto& list : outcomes) {
    std::sort(list.begin(), list.end(),
              [](const KernelOutcome& a, const KernelOutcome& b) { return a.y < b.y; });
    // Merge supports that only met after projection to sets.
    std::vector<KernelOutcome> merged;
    for (const auto& o : list) {
      if (!merged.empty() && merged.back().y == o.y) {
        merged.back().prob += o.prob;
      } else {
        merged.push_back(o);
      }
    }
    list = std::move(merged);
  }
  return QueryKernel(n, std::move(outcomes));
}

QueryKernel QueryKernel::constant(int n, QuerySet y) {
  return QueryKernel(n, std::vector<std::vector<KernelOutcome>>(
                            static_cast<std::size_t>(n) * n, {KernelOutcome{y, 1.0}}));
}

QueryKernel QueryKernel::reveal(int n) {
  std::vector<std::vector<KernelOutcome>> outcomes(static_cast<std::size_t>(n) * n);
  for (Source u = 0; u < n; ++u) {
    for (Source x = 0; x < n; ++x) {
      outcomes[static_cast<std::size_t>(u) * n + x] = {{QuerySet::singleton(x), 1.0}};
    }
  }
  return QueryKernel(n, std::move(outcomes));
}

QueryKernel QueryKernel::from_policy_n2(const PolicyN2& policy, int prev_card, Parity parity) {
  std::vector<std::vector<KernelOutcome>> outcomes(4);
  for (Source u = 0; u < 2; ++u) {
    for (Source x = 0; x < 2; ++x) {
      const N2QueryLaw q = policy.query_law(u, x, prev_card, parity);
      auto& list = outcomes[u * 2 + x];
      if (q.first > 0.0) list.push_back({QuerySet::of({0}), q.first});
      if (q.second > 0.0) list.push_back({QuerySet::of({1}), q.second});
      if (q.both > 0.0) list.push_back({QuerySet::of({0, 1}), q.both});
    }
  }
  return QueryKernel(2, std::move(outcomes));
}

double QueryKernel::weight(QuerySet y, Source u, Source x) const {
  for (const auto& o : outcomes(u, x)) {
    if (o.y == y) return o.prob;
  }
  return 0.0;
}

}  // namespace onoff

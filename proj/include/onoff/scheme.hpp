#pragma once

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "onoff/model.hpp"

namespace onoff {

// Query sets are 64-bit masks, so schemes are limited to 64 sources.
inline constexpr int kMaxSources = 64;

// A subset of sources; bit i is source i.
class QuerySet {
 public:
  constexpr QuerySet() = default;
  constexpr explicit QuerySet(std::uint64_t mask) : mask_(mask) {}

  static QuerySet full(int n);
  static QuerySet singleton(Source x) { return QuerySet(std::uint64_t{1} << x); }
  static QuerySet of(std::initializer_list<Source> members);

  std::uint64_t mask() const { return mask_; }
  bool contains(Source x) const { return (mask_ >> x) & 1U; }
  int size() const;
  bool empty() const { return mask_ == 0; }
  std::vector<Source> members() const;

  auto operator<=>(const QuerySet&) const = default;

 private:
  std::uint64_t mask_ = 0;
};

// A multiset over sources, kept as a sorted element list.
class MultisetQuery {
 public:
  MultisetQuery() = default;
  explicit MultisetQuery(std::vector<Source> elements);
  static MultisetQuery from_counts(std::span<const int> counts);

  int cardinality() const { return static_cast<int>(elements_.size()); }
  int multiplicity(Source x) const;
  bool contains(Source x) const { return multiplicity(x) > 0; }
  std::vector<int> counts(int n) const;
  QuerySet support() const;
  bool is_set() const;
  const std::vector<std::uint8_t>& elements() const { return elements_; }

  bool operator==(const MultisetQuery&) const = default;

 private:
  std::vector<std::uint8_t> elements_;
};

// Lexicographic order of the multiplicity vectors (the serialized form).
bool counts_less(const MultisetQuery& a, const MultisetQuery& b);

// One support point of p(z, x | u).
struct QueryEntry {
  MultisetQuery z;
  Source x = 0;
  Source u = 0;
  double prob = 0.0;
};

// Sparse conditional law p(z, x | u) over multiset queries. Entries are kept
// in canonical order (|z|, z, x, u) with duplicates merged and zeros dropped.
class QueryDistribution {
 public:
  QueryDistribution(int n, std::vector<QueryEntry> entries);

  int n() const { return n_; }
  std::span<const QueryEntry> entries() const { return entries_; }
  bool is_set_view() const;

  // E|Z| and E|Set(Z)|. Both are averaged over a uniform u; they do not
  // depend on u when the query is independent of it.
  double expected_cardinality() const;
  double expected_set_cardinality() const;

  // (u, x) -> sum_z p(z, x | u).
  Matrix marginal() const;

 private:
  int n_;
  std::vector<QueryEntry> entries_;
};

// Per-stage counters recorded by the builder. Index is |z| - 1.
struct BuildTrace {
  std::vector<std::size_t> pieces;
  std::vector<std::size_t> tuples;
  double max_lane_shortfall = 0.0;
};

// Sparse p(z, x | u) with z independent of u, x in z, marginals equal to the
// law, and P(|Z| = i) = theta_i. `stats` must come from order_stats(law).
QueryDistribution build_query_distribution(const ConditionalLaw& law, const OrderStats& stats,
                                           BuildTrace* trace = nullptr);

// Replaces each multiset by its support and merges equal supports.
QueryDistribution project_to_sets(const QueryDistribution& dist);

// Query sent while privacy is ON.
QuerySet on_step_query(int n);

enum class Parity { kEven, kOdd };

// Distribution over the three queries {0}, {1}, {0,1} of the two-source scheme.
struct N2QueryLaw {
  double first = 0.0;
  double second = 0.0;
  double both = 0.0;
};

// Closed-form optimal scheme for two sources, P = [[1-a, a], [b, 1-b]].
class PolicyN2 {
 public:
  PolicyN2(double alpha, double beta);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  // `prev_card` is |q_{t-1}|; `parity` is the parity of t - tau.
  N2QueryLaw query_law(Source x_tau, Source x_t, int prev_card, Parity parity) const;

 private:
  double alpha_;
  double beta_;
};

N2QueryLaw policy_n2(double alpha, double beta, Source x_tau, Source x_t, int prev_card,
                     Parity parity);

struct KernelOutcome {
  QuerySet y;
  double prob = 0.0;
};

// Sampling view of a step scheme: w(y | u, x) for every reachable (u, x).
class QueryKernel {
 public:
  QueryKernel(int n, std::vector<std::vector<KernelOutcome>> outcomes);

  // w(y | u, x) = p(y, x | u) / p(x | u) from a set-view distribution.
  static QueryKernel from_distribution(const QueryDistribution& set_view,
                                       const ConditionalLaw& law);
  static QueryKernel constant(int n, QuerySet y);
  static QueryKernel reveal(int n);
  static QueryKernel from_policy_n2(const PolicyN2& policy, int prev_card, Parity parity);

  int n() const { return n_; }
  std::span<const KernelOutcome> outcomes(Source u, Source x) const {
    return outcomes_[static_cast<std::size_t>(u) * n_ + x];
  }
  double weight(QuerySet y, Source u, Source x) const;
  // Every query with positive weight somewhere, sorted by mask.
  const std::vector<QuerySet>& support() const { return support_; }

 private:
  int n_;
  std::vector<std::vector<KernelOutcome>> outcomes_;
  std::vector<QuerySet> support_;
};

}  // namespace onoff

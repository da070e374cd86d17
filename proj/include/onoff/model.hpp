#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "onoff/matrix.hpp"

namespace onoff {

// Tolerance for feasibility and equality tests on probabilities.
inline constexpr double kTolerance = 1e-9;
// Rows of stochastic matrices must sum to one this closely.
inline constexpr double kRowSumTolerance = 1e-12;

// Sources are numbered 0..n-1 throughout the library.
using Source = int;

// Markov request process: transition matrix p (row i is P(i, .)) and the
// initial distribution pi0.
class MarkovModel {
 public:
  MarkovModel(Matrix p, std::vector<double> pi0);

  // p = [[1-alpha, alpha], [beta, 1-beta]].
  static MarkovModel two_state(double alpha, double beta);
  static MarkovModel two_state(double alpha, double beta, std::vector<double> pi0);
  // Stays with probability `stay`, moves to each other state with (1-stay)/(n-1).
  static MarkovModel symmetric(int n, double stay);

  int n() const { return static_cast<int>(p_.rows()); }
  const Matrix& p() const { return p_; }
  const std::vector<double>& pi0() const { return pi0_; }

 private:
  Matrix p_;
  std::vector<double> pi0_;
};

enum class Privacy : std::uint8_t { kOff = 0, kOn = 1 };

// Privacy status F_0..F_T. F_0 is always ON.
class PrivacyPattern {
 public:
  explicit PrivacyPattern(std::vector<Privacy> flags);

  // "1" is ON, "0" is OFF, index 0 first.
  static PrivacyPattern parse(std::string_view text);
  // F_0 = ON, then each later step ON independently with probability p_on.
  static PrivacyPattern bernoulli(std::size_t length, double p_on, std::uint64_t seed);

  std::size_t size() const { return flags_.size(); }
  bool on(std::size_t t) const { return flags_.at(t) == Privacy::kOn; }
  const std::vector<Privacy>& flags() const { return flags_; }
  std::string str() const;

 private:
  std::vector<Privacy> flags_;
};

// Last time at or before t that privacy was ON.
std::size_t tau_of(const PrivacyPattern& pattern, std::size_t t);

// A two-argument law p(X = x | U = u), stored with u as the row index.
class ConditionalLaw {
 public:
  explicit ConditionalLaw(Matrix table);

  int n() const { return static_cast<int>(table_.rows()); }
  double operator()(Source u, Source x) const { return table_(u, x); }
  const Matrix& table() const { return table_; }

 private:
  Matrix table_;
};

// k-step transition law P^k.
ConditionalLaw step_law(const MarkovModel& model, unsigned long long k);

// Per-column ordering of the likelihoods and the quantities derived from it.
// Index conventions: orderings[x][i] is the source with the (i+1)-th smallest
// p(x | .); lambdas[i], thetas[i] belong to rank i+1; sigma is the largest
// rank i (1-based) with lambda_i <= 1, so 1 <= sigma <= n.
struct OrderStats {
  std::vector<std::vector<Source>> orderings;
  std::vector<double> lambdas;
  std::vector<double> thetas;
  int sigma = 0;
  std::vector<double> deltas;

  int n() const { return static_cast<int>(lambdas.size()); }
  // sum_i i * theta_i, the expected multiset size of the constructed query.
  double expected_cardinality() const;

  bool operator==(const OrderStats&) const = default;
};

OrderStats order_stats(const ConditionalLaw& law);

}  // namespace onoff

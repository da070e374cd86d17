#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "onoff/matrix.hpp"
#include "onoff/model.hpp"
#include "onoff/scheme.hpp"
#include "onoff/sim.hpp"

namespace onoff {

struct AuditOptions {
  // Weights over u for the mutual information; empty means uniform.
  std::vector<double> prior;
  // The cardinality law only holds for the multiset builder output.
  bool check_cardinality = true;
};

struct AuditReport {
  double privacy_gap = 0.0;           // over multisets z
  std::string privacy_worst_query;    // "{0,0,2}" style
  Source privacy_worst_u = 0;
  Source privacy_worst_v = 0;
  double set_privacy_gap = 0.0;       // over projected sets y
  double mutual_information = 0.0;    // I(U; Y) in bits, entropy form
  double mutual_information_kl = 0.0; // same quantity as KL(joint || product)
  std::size_t decodability_violations = 0;
  double marginal_gap = 0.0;
  Source marginal_worst_u = 0;
  Source marginal_worst_x = 0;
  double cardinality_gap = 0.0;
  int cardinality_worst = 0;          // |z| with the largest gap
  bool cardinality_checked = true;
  bool passed = false;
};

AuditReport audit_distribution(const QueryDistribution& dist, const ConditionalLaw& law,
                               const OrderStats& stats, const AuditOptions& options = {});

// Any private, decodable scheme for `law` has E|Y| at least this.
double lemma1_lower_bound(const ConditionalLaw& law);

// Mutual information in bits of a joint table (rows and columns are the two
// variables). Entropy form and KL form are computed independently.
double mutual_information_bits(const Matrix& joint);
double mutual_information_kl_bits(const Matrix& joint);

// Exact path enumeration of (X at every ON time, X_t, Q_1..Q_t) under a policy.
struct PathCheck {
  double mi_latest = 0.0;  // I(X_tau; Q_t | Q_[t-1]) in bits
  double mi_all_on = 0.0;  // I(X_{ON times}; Q_t | Q_[t-1]) in bits
  bool holds = false;      // both below kTolerance
  std::size_t histories = 0;
};

// Step laws here come from the enumerated joint itself, not from the filter,
// so this is an independent check of the belief recursion as well.
PathCheck proposition1_check(const MarkovModel& model, const PrivacyPattern& pattern,
                             std::size_t t, Policy policy);

std::string format_query(const MultisetQuery& z);

}  // namespace onoff

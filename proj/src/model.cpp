#include "onoff/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "onoff/errors.hpp"

namespace onoff {
namespace {

void check_distribution(std::span<const double> values, const char* what) {
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError(std::string(what) + ": entry outside [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowSumTolerance) {
    throw ConfigError(std::string(what) + ": does not sum to 1");
  }
}

}  // namespace

MarkovModel::MarkovModel(Matrix p, std::vector<double> pi0)
    : p_(std::move(p)), pi0_(std::move(pi0)) {
  if (!p_.square()) throw ConfigError("MarkovModel: transition matrix must be square");
  if (p_.rows() < 2) throw ConfigError("MarkovModel: need at least two sources");
  if (pi0_.size() != p_.rows()) throw ConfigError("MarkovModel: pi0 has wrong length");
  for (std::size_t r = 0; r < p_.rows(); ++r) check_distribution(p_.row(r), "MarkovModel row");
  check_distribution(pi0_, "MarkovModel pi0");
}

MarkovModel MarkovModel::two_state(double alpha, double beta) {
  return two_state(alpha, beta, {0.5, 0.5});
}

MarkovModel MarkovModel::two_state(double alpha, double beta, std::vector<double> pi0) {
  return MarkovModel(Matrix{{1.0 - alpha, alpha}, {beta, 1.0 - beta}}, std::move(pi0));
}

MarkovModel MarkovModel::symmetric(int n, double stay) {
  if (n < 2) throw ConfigError("MarkovModel::symmetric: need n >= 2");
  Matrix p(n, n, (1.0 - stay) / (n - 1));
  for (int i = 0; i < n; ++i) p(i, i) = stay;
  return MarkovModel(std::move(p), std::vector<double>(n, 1.0 / n));
}

PrivacyPattern::PrivacyPattern(std::vector<Privacy> flags) : flags_(std::move(flags)) {
  if (flags_.empty()) throw ConfigError("PrivacyPattern: empty pattern");
  if (flags_.front() != Privacy::kOn) throw ConfigError("PrivacyPattern: F_0 must be ON");
}

PrivacyPattern PrivacyPattern::parse(std::string_view text) {
  std::vector<Privacy> flags;
  flags.reserve(text.size());
  for (char c : text) {
    if (c == '1') {
      flags.push_back(Privacy::kOn);
    } else if (c == '0') {
      flags.push_back(Privacy::kOff);
    } else {
      throw ConfigError("PrivacyPattern: expected only '0' and '1', found '" +
                        std::string(1, c) + "'");
    }
  }
  return PrivacyPattern(std::move(flags));
}

PrivacyPattern PrivacyPattern::bernoulli(std::size_t length, double p_on, std::uint64_t seed) {
  if (length == 0) throw ConfigError("PrivacyPattern: empty pattern");
  if (!(p_on >= 0.0 && p_on <= 1.0)) throw ConfigError("PrivacyPattern: p_on outside [0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<Privacy> flags(length, Privacy::kOff);
  flags[0] = Privacy::kOn;
  for (std::size_t t = 1; t < length; ++t) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u < p_on) flags[t] = Privacy::kOn;
  }
  return PrivacyPattern(std::move(flags));
}

std::string PrivacyPattern::str() const {
  std::string s;
  s.reserve(flags_.size());
  for (Privacy f : flags_) s.push_back(f == Privacy::kOn ? '1' : '0');
  return s;
}

std::size_t tau_of(const PrivacyPattern& pattern, std::size_t t) {
  if (t >= pattern.size()) throw std::out_of_range("tau_of: time index past end of pattern");
  for (std::size_t i = t + 1; i-- > 0;) {
    if (pattern.on(i)) return i;
  }
  return 0;  // unreachable, F_0 is ON
}

ConditionalLaw::ConditionalLaw(Matrix table) : table_(std::move(table)) {
  if (!table_.square() || table_.rows() == 0) {
    throw ConfigError("ConditionalLaw: table must be square and nonempty");
  }
  for (std::size_t r = 0; r < table_.rows(); ++r) {
    check_distribution(table_.row(r), "ConditionalLaw row");
  }
}

ConditionalLaw step_law(const MarkovModel& model, unsigned long long k) {
  if (k == 0) throw ConfigError("step_law: k must be positive");
  return ConditionalLaw(matrix_power(model.p(), k));
}

double OrderStats::expected_cardinality() const {
  double e = 0.0;
  for (std::size_t i = 0; i < thetas.size(); ++i) e += static_cast<double>(i + 1) * thetas[i];
  return e;
}

OrderStats order_stats(const ConditionalLaw& law) {
  const int n = law.n();
  OrderStats s;
  s.orderings.assign(n, std::vector<Source>(n));
  for (Source x = 0; x < n; ++x) {
    auto& ord = s.orderings[x];
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(),
                     [&](Source a, Source b) { return law(a, x) < law(b, x); });
  }

  s.lambdas.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (Source x = 0; x < n; ++x) s.lambdas[i] += law(s.orderings[x][i], x);
  }

  s.thetas.assign(n, 0.0);
  double prev = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cur = std::min(1.0, s.lambdas[i]);
    s.thetas[i] = cur - prev;
    prev = cur;
  }

  // lambda_1 <= 1 holds exactly; the slack only absorbs rounding in the sums.
  s.sigma = 1;
  for (int i = 0; i < n; ++i) {
    if (s.lambdas[i] <= 1.0 + kTolerance) s.sigma = i + 1;
  }

  s.deltas.assign(n, 0.0);
  if (s.sigma == n) {
    for (Source j = 0; j < n; ++j) s.deltas[j] = law(s.orderings[j][n - 1], j);
    return s;
  }

  // Greedy choice between the sigma-th and (sigma+1)-th order statistics.
  std::vector<double> a(n), b(n);
  double sum_a = 0.0;
  for (Source j = 0; j < n; ++j) {
    a[j] = law(s.orderings[j][s.sigma - 1], j);
    b[j] = law(s.orderings[j][s.sigma], j);
    sum_a += a[j];
  }
  double run = 0.0;
  double sum_b_before = 0.0;
  for (Source j = 0; j < n; ++j) {
    run += b[j] - a[j];
    if (run <= 1.0 - sum_a) {
      s.deltas[j] = b[j];
      sum_b_before += b[j];
      continue;
    }
    double sum_a_after = 0.0;
    for (Source k = j + 1; k < n; ++k) sum_a_after += a[k];
    s.deltas[j] = std::clamp(1.0 - sum_b_before - sum_a_after, a[j], b[j]);
    for (Source k = j + 1; k < n; ++k) s.deltas[k] = a[k];
    break;
  }
  return s;
}

}  // namespace onoff

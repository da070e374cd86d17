#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "onoff/matrix.hpp"
#include "onoff/model.hpp"
#include "onoff/scheme.hpp"

namespace onoff {

enum class Policy { kAlgorithm1, kN2ClosedForm, kNaive, kFullDownload };

Policy parse_policy(std::string_view name);
std::string policy_name(Policy policy);

// Joint law of (X_tau, X_{t-1}) given the queries seen so far.
class BeliefState {
 public:
  explicit BeliefState(Matrix joint);

  // State right after the ON step at time 0.
  static BeliefState initial(const MarkovModel& model);

  const Matrix& joint() const { return joint_; }
  int n() const { return static_cast<int>(joint_.rows()); }
  std::vector<double> tau_marginal() const;

  // (x_tau, x_t) -> p(x_tau, x_t | history), one chain step ahead.
  Matrix predict(const Matrix& transition) const;
  // p(x_t | x_tau, history). Rows with no mass use the predictive marginal of
  // x_t, which is a convex mix of the other rows.
  ConditionalLaw next_law(const Matrix& transition) const;

  bool operator==(const BeliefState&) const = default;

 private:
  Matrix joint_;
};

// ON step: tau moves to t and the joint becomes diag(p(x_t | history)).
BeliefState collapse(const BeliefState& belief, const Matrix& transition);

struct BeliefUpdate {
  BeliefState belief;
  double evidence;  // p(y | history)
};

// Bayes step after observing query y produced by `kernel` at an OFF step.
// Throws NumericalError when y has (numerically) zero probability.
BeliefUpdate belief_update(const BeliefState& belief, const Matrix& transition,
                           const QueryKernel& kernel, QuerySet y);

// What the user side knows when it has to pick a query.
struct StepContext {
  std::size_t gap = 1;  // t - tau
  int prev_card = 0;    // |q_{t-1}|
};

// Per-step scheme for an OFF step, built from the current belief. Kernels are
// cached on the exact bits of the step law, so repeated beliefs are cheap.
class SchemeFactory {
 public:
  SchemeFactory(const MarkovModel& model, Policy policy);

  Policy policy() const { return policy_; }
  std::shared_ptr<const QueryKernel> kernel(const ConditionalLaw& law, const StepContext& ctx);
  std::size_t cache_size() const { return cache_.size(); }

 private:
  int n_;
  Policy policy_;
  std::optional<PolicyN2> n2_;
  std::map<std::vector<std::uint64_t>, std::shared_ptr<const QueryKernel>> cache_;
};

// Branch enumeration over realized query histories. Capacity is the maximum
// number of live branches; exceeding it throws CapacityError.
struct EnumerationOptions {
  Policy policy = Policy::kAlgorithm1;
  bool merge_identical = true;
  bool with_lp = false;
  std::size_t max_branches = 10'000'000;
  double prune_below = 1e-12;
};

struct HistoryStep {
  std::size_t t = 0;
  bool on = false;
  double outer1 = 0.0;    // sum_h p(h) sum_x max_u p(x | u, h)
  double inner = 0.0;     // sum_h p(h) sum_i i theta_i(h)
  double achieved = 0.0;  // E|Q_t| under the enumerated policy
  std::optional<double> lp_opt;
  std::size_t branches = 0;
  double mass = 0.0;  // total probability kept after pruning
};

std::vector<HistoryStep> enumerate_histories(const MarkovModel& model,
                                             const PrivacyPattern& pattern,
                                             std::size_t horizon,
                                             const EnumerationOptions& options = {});

// Fixed-length bit string, packed little-endian into 64-bit words.
class BitString {
 public:
  BitString() = default;
  explicit BitString(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

  std::size_t size() const { return bits_; }
  bool bit(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
  void set(std::size_t i, bool v);
  void append(const BitString& other);
  BitString slice(std::size_t offset, std::size_t length) const;
  std::vector<std::uint64_t>& words() { return words_; }

  bool operator==(const BitString&) const = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

// N fresh uniform L-bit messages per time step.
class ServerState {
 public:
  ServerState(int n, std::size_t message_bits, std::uint64_t seed, std::uint64_t stream);

  void refresh();
  int n() const { return static_cast<int>(messages_.size()); }
  std::size_t message_bits() const { return message_bits_; }
  const BitString& message(Source i) const { return messages_.at(i); }
  // Concatenation of the queried messages in ascending source order.
  BitString answer(QuerySet q) const;

 private:
  std::size_t message_bits_;
  std::vector<BitString> messages_;
  std::mt19937_64 rng_;
};

// Recovers W_x from an answer to q; x must be in q.
BitString decode(const BitString& answer, QuerySet q, Source x, std::size_t message_bits);

struct TraceRecord {
  std::size_t t = 0;
  bool on = false;
  Source x = 0;
  QuerySet q;
  std::size_t len_bits = 0;
  bool decode_ok = false;
};

using Episode = std::vector<TraceRecord>;

struct SimConfig {
  std::size_t message_bits = 64;
  std::uint64_t seed = 0;
  Policy policy = Policy::kAlgorithm1;
};

// One episode over the full pattern. `factory` may be shared across episodes
// of the same model and policy.
Episode run_episode(const MarkovModel& model, const PrivacyPattern& pattern,
                    const SimConfig& config, std::uint64_t episode_index,
                    SchemeFactory& factory);
std::vector<Episode> run_episodes(const MarkovModel& model, const PrivacyPattern& pattern,
                                  const SimConfig& config, std::size_t episodes);

// Pooled chi-square test of X_tau against Q_t within each q_[t-1] stratum.
struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  std::size_t strata = 0;
  std::size_t samples = 0;
  bool reliable = true;  // every tested cell had expected count >= 30
};

ChiSquareResult empirical_privacy_audit(const std::vector<Episode>& episodes, std::size_t t);

}  // namespace onoff

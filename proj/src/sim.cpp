#include "onoff/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <utility>

#include <boost/math/special_functions/gamma.hpp>

#include "onoff/errors.hpp"
#include "onoff/lp.hpp"

namespace onoff {
namespace {

// Below this a query is treated as impossible for the current history.
constexpr double kMinEvidence = 1e-12;
// Kernel caches are dropped wholesale once they grow past this many entries.
constexpr std::size_t kMaxCachedKernels = 100'000;

void append_bits(std::vector<std::uint64_t>& key, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (double v : m.row(r)) key.push_back(std::bit_cast<std::uint64_t>(v));
  }
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename Weights>
std::size_t sample_index(std::mt19937_64& rng, const Weights& weights) {
  const double r = uniform01(rng);
  double acc = 0.0;
  std::size_t last = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (r < acc) return i;
  }
  if (last == weights.size()) throw NumericalError("sampling from an empty distribution");
  return last;
}

struct Posterior {
  Matrix joint;
  double evidence;
};

Posterior posterior(const Matrix& pred, const QueryKernel& kernel, QuerySet y) {
  const int n = static_cast<int>(pred.rows());
  Matrix post(n, n);
  double total = 0.0;
  for (Source u = 0; u < n; ++u) {
    for (Source x = 0; x < n; ++x) {
      if (pred(u, x) == 0.0) continue;
      const double v = pred(u, x) * kernel.weight(y, u, x);
      post(u, x) = v;
      total += v;
    }
  }
  return {std::move(post), total};
}

Matrix normalized(Matrix m, double total) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (double& v : m.row(r)) v /= total;
  }
  return m;
}

double column_max_sum(const ConditionalLaw& law) {
  double s = 0.0;
  for (Source x = 0; x < law.n(); ++x) {
    double mx = 0.0;
    for (Source u = 0; u < law.n(); ++u) mx = std::max(mx, law(u, x));
    s += mx;
  }
  return s;
}

}  // namespace

Policy parse_policy(std::string_view name) {
  if (name == "algorithm1") return Policy::kAlgorithm1;
  if (name == "n2_closed_form") return Policy::kN2ClosedForm;
  if (name == "naive") return Policy::kNaive;
  if (name == "full_download") return Policy::kFullDownload;
  throw ConfigError("unknown policy '" + std::string(name) +
                    "' (expected algorithm1, n2_closed_form, naive or full_download)");
}

std::string policy_name(Policy policy) {
  switch (policy) {
    case Policy::kAlgorithm1: return "algorithm1";
    case Policy::kN2ClosedForm: return "n2_closed_form";
    case Policy::kNaive: return "naive";
    case Policy::kFullDownload: return "full_download";
  }
  return "unknown";
}

BeliefState::BeliefState(Matrix joint) : joint_(std::move(joint)) {
  if (!joint_.square() || joint_.rows() < 1) throw ConfigError("BeliefState: joint must be square");
  for (std::size_t r = 0; r < joint_.rows(); ++r) {
    for (double v : joint_.row(r)) {
      if (!(v >= 0.0)) throw NumericalError("BeliefState: negative or NaN mass");
    }
  }
  if (std::abs(joint_.total() - 1.0) > kTolerance) {
    throw NumericalError("BeliefState: joint does not sum to 1");
  }
}

BeliefState BeliefState::initial(const MarkovModel& model) {
  Matrix joint(model.n(), model.n());
  for (Source i = 0; i < model.n(); ++i) joint(i, i) = model.pi0()[i];
  return BeliefState(std::move(joint));
}

std::vector<double> BeliefState::tau_marginal() const {
  std::vector<double> m(n());
  for (Source u = 0; u < n(); ++u) m[u] = joint_.row_sum(u);
  return m;
}

Matrix BeliefState::predict(const Matrix& transition) const { return joint_ * transition; }

ConditionalLaw BeliefState::next_law(const Matrix& transition) const {
  const Matrix pred = predict(transition);
  const int n = this->n();
  std::vector<double> marginal(n);
  for (Source x = 0; x < n; ++x) marginal[x] = pred.col_sum(x);
  const double total = pred.total();
  Matrix law(n, n);
  for (Source u = 0; u < n; ++u) {
    const double mass = pred.row_sum(u);
    for (Source x = 0; x < n; ++x) {
      law(u, x) = mass > 0.0 ? pred(u, x) / mass : marginal[x] / total;
    }
  }
  return ConditionalLaw(std::move(law));
}

BeliefState collapse(const BeliefState& belief, const Matrix& transition) {
  const Matrix pred = belief.predict(transition);
  const int n = belief.n();
  Matrix joint(n, n);
  for (Source x = 0; x < n; ++x) joint(x, x) = pred.col_sum(x);
  return BeliefState(std::move(joint));
}

BeliefUpdate belief_update(const BeliefState& belief, const Matrix& transition,
                           const QueryKernel& kernel, QuerySet y) {
  Posterior post = posterior(belief.predict(transition), kernel, y);
  if (!(post.evidence >= kMinEvidence)) {
    throw NumericalError("belief_update: observed query has zero probability");
  }
  return {BeliefState(normalized(std::move(post.joint), post.evidence)), post.evidence};
}

SchemeFactory::SchemeFactory(const MarkovModel& model, Policy policy)
    : n_(model.n()), policy_(policy) {
  if (policy == Policy::kN2ClosedForm) {
    if (model.n() != 2) throw ConfigError("policy n2_closed_form requires exactly two sources");
    n2_.emplace(model.p()(0, 1), model.p()(1, 0));
  }
}

std::shared_ptr<const QueryKernel> SchemeFactory::kernel(const ConditionalLaw& law,
                                                         const StepContext& ctx) {
  std::vector<std::uint64_t> key;
  switch (policy_) {
    case Policy::kFullDownload:
    case Policy::kNaive:
      break;
    case Policy::kN2ClosedForm:
      key = {static_cast<std::uint64_t>(ctx.prev_card), ctx.gap % 2};
      break;
    case Policy::kAlgorithm1:
      append_bits(key, law.table());
      break;
  }
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  if (cache_.size() >= kMaxCachedKernels) cache_.clear();

  std::shared_ptr<const QueryKernel> made;
  switch (policy_) {
    case Policy::kFullDownload:
      made = std::make_shared<QueryKernel>(QueryKernel::constant(n_, QuerySet::full(n_)));
      break;
    case Policy::kNaive:
      made = std::make_shared<QueryKernel>(QueryKernel::reveal(n_));
      break;
    case Policy::kN2ClosedForm: {
      const int prev = std::clamp(ctx.prev_card, 1, 2);
      const Parity parity = ctx.gap % 2 == 0 ? Parity::kEven : Parity::kOdd;
      made = std::make_shared<QueryKernel>(QueryKernel::from_policy_n2(*n2_, prev, parity));
      break;
    }
    case Policy::kAlgorithm1: {
      const QueryDistribution dist = build_query_distribution(law, order_stats(law));
      made = std::make_shared<QueryKernel>(QueryKernel::from_distribution(project_to_sets(dist), law));
      break;
    }
  }
  cache_.emplace(std::move(key), made);
  return made;
}

std::vector<HistoryStep> enumerate_histories(const MarkovModel& model,
                                             const PrivacyPattern& pattern,
                                             std::size_t horizon,
                                             const EnumerationOptions& options) {
  if (horizon >= pattern.size()) {
    throw ConfigError("enumerate_histories: pattern shorter than horizon + 1");
  }
  const int n = model.n();
  const Matrix& p = model.p();
  SchemeFactory factory(model, options.policy);

  struct Branch {
    BeliefState belief;
    double prob;
    int prev_card;
  };
  std::vector<Branch> branches{{BeliefState::initial(model), 1.0, n}};

  std::vector<HistoryStep> steps;
  HistoryStep first;
  first.t = 0;
  first.on = true;
  first.outer1 = first.inner = first.achieved = n;
  if (options.with_lp) first.lp_opt = n;
  first.branches = 1;
  first.mass = 1.0;
  steps.push_back(first);

  std::size_t gap = 0;
  for (std::size_t t = 1; t <= horizon; ++t) {
    HistoryStep step;
    step.t = t;
    step.on = pattern.on(t);
    std::vector<Branch> next;

    if (step.on) {
      gap = 0;
      step.outer1 = step.inner = step.achieved = n;
      if (options.with_lp) step.lp_opt = n;
      for (const Branch& b : branches) next.push_back({collapse(b.belief, p), b.prob, n});
    } else {
      ++gap;
      double lp_total = 0.0;
      for (const Branch& b : branches) {
        const ConditionalLaw law = b.belief.next_law(p);
        step.outer1 += b.prob * column_max_sum(law);
        step.inner += b.prob * order_stats(law).expected_cardinality();
        if (options.with_lp) lp_total += b.prob * lp_optimum(law);

        const auto kernel = factory.kernel(law, {gap, b.prev_card});
        const Matrix pred = b.belief.predict(p);
        for (QuerySet y : kernel->support()) {
          Posterior post = posterior(pred, *kernel, y);
          if (post.evidence <= 0.0) continue;
          step.achieved += b.prob * post.evidence * y.size();
          const double child = b.prob * post.evidence;
          if (child < options.prune_below || post.evidence < kMinEvidence) continue;
          next.push_back({BeliefState(normalized(std::move(post.joint), post.evidence)), child,
                          y.size()});
          if (next.size() > options.max_branches) {
            throw CapacityError("history enumeration exceeded " +
                                std::to_string(options.max_branches) +
                                " branches; use Monte Carlo simulation instead");
          }
        }
      }
      if (options.with_lp) step.lp_opt = lp_total;
    }

    if (options.merge_identical) {
      std::map<std::vector<std::uint64_t>, std::size_t> index;
      std::vector<Branch> merged;
      for (Branch& b : next) {
        std::vector<std::uint64_t> key{static_cast<std::uint64_t>(b.prev_card)};
        append_bits(key, b.belief.joint());
        auto [it, inserted] = index.emplace(std::move(key), merged.size());
        if (inserted) {
          merged.push_back(std::move(b));
        } else {
          merged[it->second].prob += b.prob;
        }
      }
      next = std::move(merged);
    }
    branches = std::move(next);
    step.branches = branches.size();
    for (const Branch& b : branches) step.mass += b.prob;
    steps.push_back(step);
  }
  return steps;
}

void BitString::set(std::size_t i, bool v) {
  const std::uint64_t m = std::uint64_t{1} << (i % 64);
  if (v) {
    words_[i / 64] |= m;
  } else {
    words_[i / 64] &= ~m;
  }
}

void BitString::append(const BitString& other) {
  if (bits_ % 64 == 0) {
    words_.insert(words_.end(), other.words_.begin(), other.words_.end());
    bits_ += other.bits_;
    return;
  }
  const std::size_t start = bits_;
  bits_ += other.bits_;
  words_.resize((bits_ + 63) / 64, 0);
  for (std::size_t i = 0; i < other.bits_; ++i) set(start + i, other.bit(i));
}

BitString BitString::slice(std::size_t offset, std::size_t length) const {
  if (offset + length > bits_) throw std::out_of_range("BitString::slice out of range");
  BitString out(length);
  if (offset % 64 == 0) {
    std::copy_n(words_.begin() + offset / 64, out.words_.size(), out.words_.begin());
    if (length % 64 != 0) out.words_.back() &= (std::uint64_t{1} << (length % 64)) - 1;
    return out;
  }
  for (std::size_t i = 0; i < length; ++i) out.set(i, bit(offset + i));
  return out;
}

ServerState::ServerState(int n, std::size_t message_bits, std::uint64_t seed, std::uint64_t stream)
    : message_bits_(message_bits), messages_(n, BitString(message_bits)), rng_(seeded(seed, stream)) {
  if (message_bits == 0) throw ConfigError("message length must be positive");
  refresh();
}

void ServerState::refresh() {
  for (BitString& m : messages_) {
    for (std::uint64_t& w : m.words()) w = rng_();
    if (message_bits_ % 64 != 0) m.words().back() &= (std::uint64_t{1} << (message_bits_ % 64)) - 1;
  }
}

BitString ServerState::answer(QuerySet q) const {
  BitString out;
  for (Source i : q.members()) out.append(messages_.at(i));
  return out;
}

BitString decode(const BitString& answer, QuerySet q, Source x, std::size_t message_bits) {
  if (!q.contains(x)) throw InternalConsistencyError("decode: requested source not in query");
  const std::uint64_t below = q.mask() & ((std::uint64_t{1} << x) - 1);
  return answer.slice(static_cast<std::size_t>(std::popcount(below)) * message_bits, message_bits);
}

Episode run_episode(const MarkovModel& model, const PrivacyPattern& pattern,
                    const SimConfig& config, std::uint64_t episode_index,
                    SchemeFactory& factory) {
  const int n = model.n();
  const Matrix& p = model.p();
  std::mt19937_64 requests = seeded(config.seed, 2 * episode_index);
  ServerState server(n, config.message_bits, config.seed, 2 * episode_index + 1);

  Episode episode;
  episode.reserve(pattern.size());
  BeliefState belief = BeliefState::initial(model);
  Source x = static_cast<Source>(sample_index(requests, model.pi0()));
  Source x_tau = x;
  std::size_t gap = 0;
  int prev_card = n;

  for (std::size_t t = 0; t < pattern.size(); ++t) {
    if (t > 0) {
      x = static_cast<Source>(sample_index(requests, p.row(x)));
      server.refresh();
    }
    QuerySet q;
    if (pattern.on(t)) {
      q = on_step_query(n);
      if (t > 0) belief = collapse(belief, p);
      x_tau = x;
      gap = 0;
    } else {
      ++gap;
      const auto kernel = factory.kernel(belief.next_law(p), {gap, prev_card});
      const auto outcomes = kernel->outcomes(x_tau, x);
      std::vector<double> weights(outcomes.size());
      for (std::size_t i = 0; i < outcomes.size(); ++i) weights[i] = outcomes[i].prob;
      q = outcomes[sample_index(requests, weights)].y;
      belief = belief_update(belief, p, *kernel, q).belief;
    }
    prev_card = q.size();

    const BitString reply = server.answer(q);
    TraceRecord rec;
    rec.t = t;
    rec.on = pattern.on(t);
    rec.x = x;
    rec.q = q;
    rec.len_bits = reply.size();
    rec.decode_ok = q.contains(x) && decode(reply, q, x, config.message_bits) == server.message(x);
    episode.push_back(rec);
  }
  return episode;
}

std::vector<Episode> run_episodes(const MarkovModel& model, const PrivacyPattern& pattern,
                                  const SimConfig& config, std::size_t episodes) {
  SchemeFactory factory(model, config.policy);
  std::vector<Episode> out;
  out.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    out.push_back(run_episode(model, pattern, config, e, factory));
  }
  return out;
}

ChiSquareResult empirical_privacy_audit(const std::vector<Episode>& episodes, std::size_t t) {
  using Table = std::map<std::pair<Source, std::uint64_t>, std::size_t>;
  std::map<std::vector<std::uint64_t>, Table> strata;
  ChiSquareResult result;
  for (const Episode& ep : episodes) {
    if (ep.size() <= t || ep[t].on) continue;
    std::size_t tau = t;
    while (!ep[tau].on) --tau;
    std::vector<std::uint64_t> key;
    for (std::size_t s = 1; s < t; ++s) key.push_back(ep[s].q.mask());
    ++strata[key][{ep[tau].x, ep[t].q.mask()}];
    ++result.samples;
  }

  for (const auto& [key, table] : strata) {
    std::map<Source, double> rows;
    std::map<std::uint64_t, double> cols;
    double total = 0.0;
    for (const auto& [cell, count] : table) {
      rows[cell.first] += count;
      cols[cell.second] += count;
      total += count;
    }
    ++result.strata;
    if (rows.size() < 2 || cols.size() < 2) continue;
    for (const auto& [r, rsum] : rows) {
      for (const auto& [c, csum] : cols) {
        const double expected = rsum * csum / total;
        if (expected < 30.0) result.reliable = false;
        const auto it = table.find({r, c});
        const double observed = it == table.end() ? 0.0 : static_cast<double>(it->second);
        result.statistic += (observed - expected) * (observed - expected) / expected;
      }
    }
    result.dof += static_cast<int>((rows.size() - 1) * (cols.size() - 1));
  }
  result.p_value =
      result.dof > 0 ? boost::math::gamma_q(result.dof / 2.0, result.statistic / 2.0) : 1.0;
  return result;
}

}  // namespace onoff

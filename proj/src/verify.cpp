#include "onoff/verify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <sstream>

#include "onoff/errors.hpp"

namespace onoff {
namespace {

constexpr std::size_t kMaxPathStates = 10'000'000;

struct GroupGap {
  double gap = 0.0;
  std::string query;
  Source hi = 0;
  Source lo = 0;
};

// Entries of a canonical distribution are contiguous per z. Returns the worst
// spread of p(z | u) over u and fills `cond` with one row of p(z | u) per z.
GroupGap group_spread(const QueryDistribution& dist, std::vector<std::vector<double>>* cond) {
  const int n = dist.n();
  const auto entries = dist.entries();
  GroupGap worst;
  for (std::size_t begin = 0; begin < entries.size();) {
    std::vector<double> per_u(n, 0.0);
    std::size_t end = begin;
    while (end < entries.size() && entries[end].z == entries[begin].z) {
      per_u[entries[end].u] += entries[end].prob;
      ++end;
    }
    const auto [lo, hi] = std::minmax_element(per_u.begin(), per_u.end());
    if (*hi - *lo > worst.gap || worst.query.empty()) {
      worst.gap = *hi - *lo;
      worst.query = format_query(entries[begin].z);
      worst.hi = static_cast<Source>(hi - per_u.begin());
      worst.lo = static_cast<Source>(lo - per_u.begin());
    }
    if (cond != nullptr) cond->push_back(std::move(per_u));
    begin = end;
  }
  return worst;
}

std::vector<double> audit_prior(const std::vector<double>& prior, int n) {
  if (prior.empty()) return std::vector<double>(n, 1.0 / n);
  if (static_cast<int>(prior.size()) != n) throw ConfigError("audit: prior has wrong size");
  return prior;
}

double plogp(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

// Row-indexed joint table built from sparse keyed masses.
template <typename RowKey>
Matrix keyed_joint(const std::map<std::pair<RowKey, std::uint64_t>, double>& cells,
                   double scale) {
  std::map<RowKey, std::size_t> rows;
  std::map<std::uint64_t, std::size_t> cols;
  for (const auto& [key, p] : cells) {
    rows.emplace(key.first, rows.size());
    cols.emplace(key.second, cols.size());
  }
  Matrix m(rows.size(), cols.size());
  for (const auto& [key, p] : cells) m(rows[key.first], cols[key.second]) += p / scale;
  return m;
}

}  // namespace

std::string format_query(const MultisetQuery& z) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < z.elements().size(); ++i) {
    os << (i ? "," : "") << static_cast<int>(z.elements()[i]);
  }
  os << '}';
  return os.str();
}

double mutual_information_bits(const Matrix& joint) {
  double h_col = 0.0;
  double h_col_given_row = 0.0;
  for (std::size_t c = 0; c < joint.cols(); ++c) h_col -= plogp(joint.col_sum(c));
  for (std::size_t r = 0; r < joint.rows(); ++r) {
    const double pr = joint.row_sum(r);
    if (pr <= 0.0) continue;
    double h = 0.0;
    for (double v : joint.row(r)) h -= plogp(v / pr);
    h_col_given_row += pr * h;
  }
  return h_col - h_col_given_row;
}

double mutual_information_kl_bits(const Matrix& joint) {
  std::vector<double> rows(joint.rows());
  std::vector<double> cols(joint.cols());
  for (std::size_t r = 0; r < joint.rows(); ++r) rows[r] = joint.row_sum(r);
  for (std::size_t c = 0; c < joint.cols(); ++c) cols[c] = joint.col_sum(c);
  double kl = 0.0;
  for (std::size_t r = 0; r < joint.rows(); ++r) {
    for (std::size_t c = 0; c < joint.cols(); ++c) {
      const double p = joint(r, c);
      if (p > 0.0) kl += p * std::log2(p / (rows[r] * cols[c]));
    }
  }
  return kl;
}

AuditReport audit_distribution(const QueryDistribution& dist, const ConditionalLaw& law,
                               const OrderStats& stats, const AuditOptions& options) {
  const int n = dist.n();
  if (law.n() != n || stats.n() != n) throw ConfigError("audit: dimension mismatch");
  const std::vector<double> prior = audit_prior(options.prior, n);

  AuditReport report;
  for (const QueryEntry& e : dist.entries()) {
    if (!e.z.contains(e.x)) ++report.decodability_violations;
  }

  const Matrix marg = dist.marginal();
  for (Source u = 0; u < n; ++u) {
    for (Source x = 0; x < n; ++x) {
      const double gap = std::abs(marg(u, x) - law(u, x));
      if (gap > report.marginal_gap) {
        report.marginal_gap = gap;
        report.marginal_worst_u = u;
        report.marginal_worst_x = x;
      }
    }
  }

  const GroupGap z_gap = group_spread(dist, nullptr);
  report.privacy_gap = z_gap.gap;
  report.privacy_worst_query = z_gap.query;
  report.privacy_worst_u = z_gap.hi;
  report.privacy_worst_v = z_gap.lo;

  std::vector<std::vector<double>> set_cond;
  report.set_privacy_gap = group_spread(project_to_sets(dist), &set_cond).gap;
  Matrix joint(n, set_cond.size());
  for (std::size_t y = 0; y < set_cond.size(); ++y) {
    for (Source u = 0; u < n; ++u) joint(u, y) = prior[u] * set_cond[y][u];
  }
  report.mutual_information = mutual_information_bits(joint);
  report.mutual_information_kl = mutual_information_kl_bits(joint);

  report.cardinality_checked = options.check_cardinality;
  Matrix by_size(n, n + 1);
  for (const QueryEntry& e : dist.entries()) {
    by_size(e.u, std::min(e.z.cardinality(), n)) += e.prob;
  }
  for (Source u = 0; u < n; ++u) {
    for (int i = 1; i <= n; ++i) {
      const double gap = std::abs(by_size(u, i) - stats.thetas[i - 1]);
      if (gap > report.cardinality_gap) {
        report.cardinality_gap = gap;
        report.cardinality_worst = i;
      }
    }
  }

  report.passed = report.decodability_violations == 0 && report.marginal_gap <= kTolerance &&
                  report.privacy_gap <= kTolerance && report.set_privacy_gap <= kTolerance &&
                  report.mutual_information <= kTolerance &&
                  (!report.cardinality_checked || report.cardinality_gap <= kTolerance);
  return report;
}

double lemma1_lower_bound(const ConditionalLaw& law) {
  double total = 0.0;
  for (Source x = 0; x < law.n(); ++x) {
    double best = 0.0;
    for (Source u = 0; u < law.n(); ++u) best = std::max(best, law(u, x));
    total += best;
  }
  return total;
}

PathCheck proposition1_check(const MarkovModel& model, const PrivacyPattern& pattern,
                             std::size_t t, Policy policy) {
  if (t == 0 || t >= pattern.size()) throw ConfigError("proposition1_check: t out of range");
  const int n = model.n();
  const Matrix& p = model.p();
  SchemeFactory factory(model, policy);
  const std::uint64_t full = QuerySet::full(n).mask();

  // Path state: request values at every ON time so far, then the current request.
  using State = std::vector<Source>;
  using Paths = std::map<State, double>;
  std::map<std::vector<std::uint64_t>, Paths> histories;
  for (Source x = 0; x < n; ++x) {
    if (model.pi0()[x] > 0.0) histories[{}][{x, x}] = model.pi0()[x];
  }

  PathCheck result;
  std::size_t gap = 0;
  for (std::size_t s = 1; s <= t; ++s) {
    const bool on = pattern.on(s);
    gap = on ? 0 : gap + 1;
    std::map<std::vector<std::uint64_t>, Paths> next;
    std::size_t states = 0;

    for (const auto& [hist, paths] : histories) {
      std::shared_ptr<const QueryKernel> kernel;
      if (!on) {
        // p(x_s | x_tau, hist) straight from the path masses.
        Matrix pred(n, n);
        for (const auto& [state, mass] : paths) {
          const Source tau_x = state[state.size() - 2];
          for (Source x = 0; x < n; ++x) pred(tau_x, x) += mass * p(state.back(), x);
        }
        Matrix law(n, n);
        const double total = pred.total();
        for (Source u = 0; u < n; ++u) {
          const double row = pred.row_sum(u);
          for (Source x = 0; x < n; ++x) {
            law(u, x) = row > 0.0 ? pred(u, x) / row : pred.col_sum(x) / total;
          }
        }
        const int prev_card = hist.empty() ? n : std::popcount(hist.back());
        kernel = factory.kernel(ConditionalLaw(std::move(law)), {gap, prev_card});
      }

      double hist_mass = 0.0;
      for (const auto& [state, mass] : paths) hist_mass += mass;
      std::map<std::pair<Source, std::uint64_t>, double> h_latest;
      std::map<std::pair<State, std::uint64_t>, double> h_all;

      for (const auto& [state, mass] : paths) {
        for (Source x = 0; x < n; ++x) {
          const double step = mass * p(state.back(), x);
          if (step <= 0.0) continue;
          State base(state.begin(), state.end() - 1);
          if (on) base.push_back(x);
          const Source tau_x = base.back();
          auto emit = [&](std::uint64_t y, double w) {
            State child = base;
            child.push_back(x);
            std::vector<std::uint64_t> key = hist;
            key.push_back(y);
            next[key][child] += step * w;
            if (s == t) {
              h_latest[{tau_x, y}] += step * w;
              h_all[{base, y}] += step * w;
            }
            if (++states > kMaxPathStates) {
              throw CapacityError("proposition1_check: too many path states");
            }
          };
          if (on) {
            emit(full, 1.0);
          } else {
            for (const KernelOutcome& o : kernel->outcomes(tau_x, x)) {
              if (o.prob > 0.0) emit(o.y.mask(), o.prob);
            }
          }
        }
      }

      if (s == t && !on) {
        result.mi_latest += hist_mass * mutual_information_bits(keyed_joint(h_latest, hist_mass));
        result.mi_all_on += hist_mass * mutual_information_bits(keyed_joint(h_all, hist_mass));
        ++result.histories;
      }
    }
    histories = std::move(next);
  }
  result.holds = result.mi_latest <= kTolerance && result.mi_all_on <= kTolerance;
  return result;
}

}  // namespace onoff

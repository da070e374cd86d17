#include <gtest/gtest.h>

#include <cmath>

#include "onoff/verify.hpp"
#include "test_util.hpp"

namespace onoff {
namespace {

using testing::Gen;

QueryDistribution naive_scheme(const ConditionalLaw& law) {
  std::vector<QueryEntry> entries;
  for (Source u = 0; u < law.n(); ++u) {
    for (Source x = 0; x < law.n(); ++x) {
      if (law(u, x) > 0.0) entries.push_back({MultisetQuery({x}), x, u, law(u, x)});
    }
  }
  return QueryDistribution(law.n(), std::move(entries));
}

QueryDistribution two_source_scheme(double a, double b) {
  const ConditionalLaw law(MarkovModel::two_state(a, b).p());
  const PolicyN2 policy(a, b);
  std::vector<QueryEntry> entries;
  for (Source u = 0; u < 2; ++u) {
    for (Source x = 0; x < 2; ++x) {
      const N2QueryLaw q = policy.query_law(u, x, 2, Parity::kOdd);
      const double p = law(u, x);
      if (q.first > 0) entries.push_back({MultisetQuery({0}), x, u, p * q.first});
      if (q.second > 0) entries.push_back({MultisetQuery({1}), x, u, p * q.second});
      if (q.both > 0) entries.push_back({MultisetQuery({0, 1}), x, u, p * q.both});
    }
  }
  return QueryDistribution(2, std::move(entries));
}

TEST(Audit, BuilderOnWorkedExamplePasses) {
  const ConditionalLaw law(testing::example_matrix());
  const OrderStats stats = order_stats(law);
  const AuditReport r = audit_distribution(build_query_distribution(law, stats), law, stats);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.privacy_gap, 1e-12);
  EXPECT_LT(r.set_privacy_gap, 1e-12);
  EXPECT_LT(r.marginal_gap, 1e-12);
  EXPECT_LT(r.cardinality_gap, 1e-12);
  EXPECT_LT(std::abs(r.mutual_information), 1e-12);
  EXPECT_EQ(r.decodability_violations, 0u);
}

TEST(Audit, OptimalTwoSourceSchemeIsPrivate) {
  const QueryDistribution d = two_source_scheme(0.2, 0.2);
  // P(Q = {A} | X_0 = A) = 0.8 * 0.25 and P(Q = {A} | X_0 = B) = 0.2 * 1.
  double a_given_a = 0.0, a_given_b = 0.0;
  for (const QueryEntry& e : d.entries()) {
    if (e.z == MultisetQuery({0})) (e.u == 0 ? a_given_a : a_given_b) += e.prob;
  }
  EXPECT_NEAR(a_given_a, 0.2, 1e-15);
  EXPECT_NEAR(a_given_b, 0.2, 1e-15);
  const ConditionalLaw law(MarkovModel::two_state(0.2, 0.2).p());
  AuditOptions opts;
  opts.check_cardinality = false;
  const AuditReport r = audit_distribution(d, law, order_stats(law), opts);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.privacy_gap, 1e-15);
}

TEST(Audit, NaiveSchemeLeaksExactly) {
  const ConditionalLaw law(MarkovModel::two_state(0.2, 0.2).p());
  const AuditReport r = audit_distribution(naive_scheme(law), law, order_stats(law));
  EXPECT_FALSE(r.passed);
  // With q = {x_1}, I(X_0; Q_1) = I(X_0; X_1) = 1 - h(0.2) under a uniform prior.
  const double oracle = 1.0 - testing::binary_entropy(0.2);
  EXPECT_NEAR(r.mutual_information, oracle, 1e-12);
  EXPECT_NEAR(r.mutual_information_kl, oracle, 1e-12);
  EXPECT_NEAR(r.privacy_gap, 0.6, 1e-12);
}

TEST(Audit, FlagsEachKindOfDefect) {
  const ConditionalLaw law(testing::example_matrix());
  const OrderStats stats = order_stats(law);
  const QueryDistribution good = build_query_distribution(law, stats);

  std::vector<QueryEntry> entries(good.entries().begin(), good.entries().end());
  entries[0].prob += 0.01;
  const AuditReport shifted = audit_distribution(QueryDistribution(3, entries), law, stats);
  EXPECT_FALSE(shifted.passed);
  EXPECT_NEAR(shifted.marginal_gap, 0.01, 1e-12);
  EXPECT_EQ(shifted.marginal_worst_u, entries[0].u);
  EXPECT_EQ(shifted.marginal_worst_x, entries[0].x);
  EXPECT_NEAR(shifted.privacy_gap, 0.01, 1e-12);
  EXPECT_EQ(shifted.privacy_worst_query, format_query(entries[0].z));

  entries.assign(good.entries().begin(), good.entries().end());
  for (QueryEntry& e : entries) {
    if (e.z.cardinality() == 1) {
      e.z = MultisetQuery({(e.x + 1) % 3});
      break;
    }
  }
  EXPECT_EQ(audit_distribution(QueryDistribution(3, entries), law, stats).decodability_violations,
            1u);
}

TEST(Audit, CardinalityCheckCanBeDisabled) {
  const ConditionalLaw law(testing::example_matrix());
  const OrderStats stats = order_stats(law);
  const QueryDistribution sets = project_to_sets(build_query_distribution(law, stats));
  AuditOptions opts;
  opts.check_cardinality = false;
  EXPECT_TRUE(audit_distribution(sets, law, stats, opts).passed);
}

TEST(Audit, RandomBuilderOutputsPass) {
  Gen g(600);
  for (int rep = 0; rep < 500; ++rep) {
    const int n = g.range(2, 5);
    const ConditionalLaw law = g.law(n);
    const OrderStats stats = order_stats(law);
    const QueryDistribution d = build_query_distribution(law, stats);
    const AuditReport r = audit_distribution(d, law, stats);
    ASSERT_TRUE(r.passed) << rep;
    ASSERT_NEAR(r.mutual_information, r.mutual_information_kl, 1e-10);
    ASSERT_LE(lemma1_lower_bound(law), project_to_sets(d).expected_set_cardinality() + 1e-9);
  }
}

TEST(ConverseBound, Examples) {
  EXPECT_NEAR(lemma1_lower_bound(ConditionalLaw(testing::example_matrix())), 1.6, 1e-12);
  EXPECT_EQ(lemma1_lower_bound(ConditionalLaw(Matrix::identity(5))), 5.0);
  const ConditionalLaw uniform(Matrix(4, 4, 0.25));
  EXPECT_NEAR(lemma1_lower_bound(uniform), 1.0, 1e-15);
}

TEST(MutualInformation, TwoFormsAgree) {
  Gen g(601);
  for (int rep = 0; rep < 300; ++rep) {
    const int r = g.range(1, 5), c = g.range(1, 6);
    Matrix j(r, c);
    double total = 0.0;
    for (int a = 0; a < r; ++a) {
      for (int b = 0; b < c; ++b) {
        j(a, b) = g.uniform() < 0.3 ? 0.0 : g.uniform();
        total += j(a, b);
      }
    }
    if (total == 0.0) continue;
    for (int a = 0; a < r; ++a) {
      for (int b = 0; b < c; ++b) j(a, b) /= total;
    }
    ASSERT_NEAR(mutual_information_bits(j), mutual_information_kl_bits(j), 1e-10);
    ASSERT_GE(mutual_information_kl_bits(j), -1e-12);
  }
  // Product tables carry no information; a diagonal carries log2(k).
  EXPECT_NEAR(mutual_information_bits(Matrix{{0.06, 0.14}, {0.24, 0.56}}), 0.0, 1e-12);
  EXPECT_NEAR(mutual_information_bits(Matrix{{0.25, 0, 0, 0}, {0, 0.25, 0, 0}, {0, 0, 0.25, 0}, {0, 0, 0, 0.25}}), 2.0, 1e-12);
}

TEST(PathCheck, SingleOnEpoch) {
  const MarkovModel m = MarkovModel::two_state(0.2, 0.2);
  const PathCheck c = proposition1_check(m, PrivacyPattern::parse("100"), 2, Policy::kAlgorithm1);
  EXPECT_TRUE(c.holds);
  EXPECT_NEAR(c.mi_latest, c.mi_all_on, 1e-15);
}

TEST(PathCheck, SeveralOnEpochs) {
  const MarkovModel m = MarkovModel::two_state(0.3, 0.1);
  for (const char* pattern : {"101", "1010", "10100", "11010"}) {
    const PrivacyPattern p = PrivacyPattern::parse(pattern);
    for (std::size_t t = 1; t < p.size(); ++t) {
      for (Policy pol : {Policy::kAlgorithm1, Policy::kN2ClosedForm}) {
        const PathCheck c = proposition1_check(m, p, t, pol);
        EXPECT_TRUE(c.holds) << pattern << " t=" << t << " mi=" << c.mi_latest << "," << c.mi_all_on;
      }
    }
  }
}

TEST(PathCheck, LeakyPolicyFailsCoherently) {
  const MarkovModel m = MarkovModel::two_state(0.2, 0.2);
  const PathCheck c = proposition1_check(m, PrivacyPattern::parse("1010"), 3, Policy::kNaive);
  EXPECT_FALSE(c.holds);
  EXPECT_GT(c.mi_latest, 0.1);
  EXPECT_GE(c.mi_all_on, c.mi_latest - 1e-12);
  const PathCheck first = proposition1_check(m, PrivacyPattern::parse("10"), 1, Policy::kNaive);
  EXPECT_NEAR(first.mi_latest, 1.0 - testing::binary_entropy(0.2), 1e-12);
}

TEST(PathCheck, RandomInstancesStayPrivate) {
  Gen g(602);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = g.range(2, 3);
    const MarkovModel m(g.stochastic(n, Gen::Shape::kDense), std::vector<double>(n, 1.0 / n));
    std::string pattern = "1";
    for (int i = 0; i < 3; ++i) pattern.push_back(g.uniform() < 0.3 ? '1' : '0');
    const PrivacyPattern p = PrivacyPattern::parse(pattern);
    for (std::size_t t = 1; t < p.size(); ++t) {
      const PathCheck c = proposition1_check(m, p, t, Policy::kAlgorithm1);
      ASSERT_TRUE(c.holds) << pattern << " t=" << t << " mi=" << c.mi_latest << "," << c.mi_all_on;
    }
  }
}

}  // namespace
}  // namespace onoff

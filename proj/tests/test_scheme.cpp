#include <gtest/gtest.h>

#include <set>
#include <tuple>

#include "onoff/errors.hpp"
#include "onoff/scheme.hpp"
#include "test_util.hpp"

namespace onoff {
namespace {

using testing::Gen;

TEST(QuerySet, Basics) {
  const QuerySet q = QuerySet::of({0, 2});
  EXPECT_EQ(q.mask(), 5u);
  EXPECT_TRUE(q.contains(2));
  EXPECT_FALSE(q.contains(1));
  EXPECT_EQ(q.size(), 2);
  EXPECT_EQ(q.members(), (std::vector<Source>{0, 2}));
  EXPECT_EQ(QuerySet::full(3).mask(), 7u);
  EXPECT_EQ(QuerySet::full(64).size(), 64);
  EXPECT_EQ(on_step_query(2), QuerySet::of({0, 1}));
  EXPECT_EQ(on_step_query(5).size(), 5);
}

TEST(MultisetQuery, CountsAndSupport) {
  const MultisetQuery z({2, 0, 2});
  EXPECT_EQ(z.cardinality(), 3);
  EXPECT_EQ(z.multiplicity(2), 2);
  EXPECT_EQ(z.multiplicity(1), 0);
  EXPECT_EQ(z.counts(3), (std::vector<int>{1, 0, 2}));
  EXPECT_EQ(z.support(), QuerySet::of({0, 2}));
  EXPECT_FALSE(z.is_set());
  EXPECT_TRUE(MultisetQuery({1, 0}).is_set());
  const std::vector<int> counts{1, 0, 2};
  EXPECT_EQ(MultisetQuery::from_counts(counts), z);
}

TEST(MultisetQuery, CountsOrderIsLexicographicOnMultiplicities) {
  // Compare against sorting the count vectors themselves.
  Gen g(3);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<Source> a, b;
    for (int i = g.range(0, 4); i > 0; --i) a.push_back(g.range(0, 3));
    for (int i = g.range(0, 4); i > 0; --i) b.push_back(g.range(0, 3));
    const MultisetQuery za(a), zb(b);
    EXPECT_EQ(counts_less(za, zb), za.counts(4) < zb.counts(4));
  }
}

TEST(QueryDistribution, CanonicalizesEntries) {
  const QueryDistribution d(2, {{MultisetQuery({0, 1}), 0, 1, 0.25},
                                {MultisetQuery({0}), 0, 0, 0.5},
                                {MultisetQuery({0, 1}), 0, 1, 0.25},
                                {MultisetQuery({1}), 1, 0, 0.0}});
  ASSERT_EQ(d.entries().size(), 2u);
  EXPECT_EQ(d.entries()[0].z, MultisetQuery({0}));
  EXPECT_DOUBLE_EQ(d.entries()[1].prob, 0.5);
  EXPECT_THROW(QueryDistribution(2, {{MultisetQuery({0}), 0, 0, -0.1}}), ConfigError);
  EXPECT_THROW(QueryDistribution(2, {{MultisetQuery({0}), 2, 0, 0.1}}), ConfigError);
  EXPECT_THROW(QueryDistribution(2, {{MultisetQuery({0, 0, 1}), 0, 0, 0.1}}), ConfigError);
}

TEST(ProjectToSets, MergesEqualSupports) {
  const QueryDistribution d(3, {{MultisetQuery({0, 0, 1}), 0, 0, 0.1},
                                {MultisetQuery({0, 1}), 0, 0, 0.2}});
  const QueryDistribution s = project_to_sets(d);
  ASSERT_EQ(s.entries().size(), 1u);
  EXPECT_EQ(s.entries()[0].z, MultisetQuery({0, 1}));
  EXPECT_NEAR(s.entries()[0].prob, 0.3, 1e-15);
}

TEST(ProjectToSets, SetsAreUnchanged) {
  const QueryDistribution d(2, {{MultisetQuery({0, 1}), 0, 0, 0.4},
                                {MultisetQuery({0}), 0, 0, 0.6}});
  const QueryDistribution s = project_to_sets(d);
  ASSERT_EQ(s.entries().size(), d.entries().size());
  for (std::size_t i = 0; i < s.entries().size(); ++i) {
    EXPECT_EQ(s.entries()[i].z, d.entries()[i].z);
    EXPECT_EQ(s.entries()[i].prob, d.entries()[i].prob);
  }
}

TEST(Builder, WorkedExample) {
  const ConditionalLaw law(testing::example_matrix());
  const OrderStats stats = order_stats(law);
  const QueryDistribution d = build_query_distribution(law, stats);
  EXPECT_NEAR(d.expected_cardinality(), 1.6, 1e-9);
  EXPECT_LE(d.expected_set_cardinality(), 1.6 + 1e-9);
  const auto inv = testing::check_invariants(d, law);
  EXPECT_LE(inv.marginal_gap, 1e-12);
  EXPECT_LE(inv.independence_gap, 1e-12);
  EXPECT_EQ(inv.undecodable, 0);
  EXPECT_NEAR(inv.size_law[1], 0.5, 1e-12);
  EXPECT_NEAR(inv.size_law[2], 0.4, 1e-12);
  EXPECT_NEAR(inv.size_law[3], 0.1, 1e-12);
  const QueryDistribution sets = project_to_sets(d);
  EXPECT_LE(sets.expected_set_cardinality(), 1.6 + 1e-9);
  EXPECT_LE(testing::check_invariants(sets, law).independence_gap, 1e-12);
}

TEST(Builder, TwoStateFirstOffStep) {
  const ConditionalLaw law(Matrix{{0.8, 0.2}, {0.2, 0.8}});
  const QueryDistribution d = build_query_distribution(law, order_stats(law));
  // theta = (0.4, 0.6) since the two column minima sum to 0.4.
  EXPECT_NEAR(d.expected_cardinality(), 1.6, 1e-12);
  EXPECT_NEAR(1.0 / d.expected_set_cardinality(), 0.625, 1e-12);
}

TEST(Builder, IdenticalRowsGiveSingletons) {
  const ConditionalLaw law(Matrix{{0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}});
  const QueryDistribution d = build_query_distribution(law, order_stats(law));
  for (const QueryEntry& e : d.entries()) {
    EXPECT_EQ(e.z, MultisetQuery({e.x}));
    EXPECT_NEAR(e.prob, law(e.u, e.x), 1e-15);
  }
  EXPECT_NEAR(d.expected_set_cardinality(), 1.0, 1e-12);
}

TEST(Builder, IdentityGivesFullSet) {
  const ConditionalLaw law(Matrix::identity(4));
  const QueryDistribution d = build_query_distribution(law, order_stats(law));
  for (const QueryEntry& e : d.entries()) EXPECT_EQ(e.z.support(), QuerySet::full(4));
  EXPECT_NEAR(d.expected_set_cardinality(), 4.0, 1e-12);
  EXPECT_EQ(d.entries().size(), 4u);
}

TEST(Builder, RejectsMismatchedStats) {
  const ConditionalLaw law(Matrix{{0.8, 0.2}, {0.2, 0.8}});
  const OrderStats other = order_stats(ConditionalLaw(testing::example_matrix()));
  EXPECT_THROW(build_query_distribution(law, other), ConfigError);
}

TEST(Builder, RandomLawsSatisfyAllInvariants) {
  Gen g(31337);
  for (int rep = 0; rep < 500; ++rep) {
    const int n = g.range(2, 5);
    const ConditionalLaw law = g.law(n);
    const OrderStats stats = order_stats(law);
    const QueryDistribution d = build_query_distribution(law, stats);
    const auto inv = testing::check_invariants(d, law);
    ASSERT_LE(inv.marginal_gap, 1e-9) << rep;
    ASSERT_LE(inv.mass_gap, 1e-9) << rep;
    ASSERT_LE(inv.independence_gap, 1e-9) << rep;
    ASSERT_EQ(inv.undecodable, 0) << rep;
    ASSERT_LE(inv.size_spread, 1e-9) << rep;
    double expected = 0.0;
    for (int i = 1; i <= n; ++i) {
      ASSERT_NEAR(inv.size_law[i], stats.thetas[i - 1], 1e-9) << rep << " i=" << i;
      expected += i * stats.thetas[i - 1];
    }
    ASSERT_NEAR(d.expected_cardinality(), expected, 1e-9);
    for (const QueryEntry& e : d.entries()) {
      ASSERT_GT(e.prob, 0.0);
      ASSERT_LE(e.z.cardinality(), n);
    }

    // Converse sandwich for the transmitted set query.
    const double ey = project_to_sets(d).expected_set_cardinality();
    ASSERT_GE(ey, testing::column_max_sum(law) - 1e-9) << rep;
    ASSERT_LE(ey, expected + 1e-9) << rep;
  }
}

TEST(Builder, Deterministic) {
  Gen g(8);
  for (int rep = 0; rep < 50; ++rep) {
    const ConditionalLaw law = g.law(g.range(2, 6));
    const OrderStats stats = order_stats(law);
    const QueryDistribution a = build_query_distribution(law, stats);
    const QueryDistribution b = build_query_distribution(law, stats);
    ASSERT_EQ(a.entries().size(), b.entries().size());
    for (std::size_t i = 0; i < a.entries().size(); ++i) {
      ASSERT_EQ(a.entries()[i].z, b.entries()[i].z);
      ASSERT_EQ(a.entries()[i].x, b.entries()[i].x);
      ASSERT_EQ(a.entries()[i].u, b.entries()[i].u);
      ASSERT_EQ(a.entries()[i].prob, b.entries()[i].prob);
    }
  }
}

TEST(Builder, SupportGrowsPolynomially) {
  Gen g(404);
  for (int rep = 0; rep < 300; ++rep) {
    const int n = g.range(2, 10);
    const ConditionalLaw law = g.law(n);
    const OrderStats stats = order_stats(law);
    BuildTrace trace;
    const QueryDistribution d = build_query_distribution(law, stats, &trace);
    // At most max(1, (l-1) n) pieces per column x in stage l.
    for (std::size_t l = 1; l <= trace.pieces.size(); ++l) {
      const std::size_t per_x = std::max<std::size_t>(1, (l - 1) * n);
      ASSERT_LE(trace.pieces[l - 1], per_x * n) << "stage " << l;
    }
    std::vector<std::set<std::tuple<std::vector<std::uint8_t>, Source, Source>>> groups(n + 1);
    for (const QueryEntry& e : d.entries()) groups[e.z.cardinality()].insert({e.z.elements(), e.x, e.u});
    for (int l = 1; l <= n; ++l) {
      ASSERT_LE(groups[l].size(), static_cast<std::size_t>((stats.sigma + 1) * n * n));
    }
    ASSERT_LE(trace.max_lane_shortfall, 1e-9);
  }
}

TEST(PolicyN2, ReferenceSchemeRows) {
  const PolicyN2 p(0.2, 0.2);
  auto expect = [](N2QueryLaw q, double a, double b, double ab) {
    EXPECT_NEAR(q.first, a, 1e-12);
    EXPECT_NEAR(q.second, b, 1e-12);
    EXPECT_NEAR(q.both, ab, 1e-12);
  };
  expect(p.query_law(0, 0, 2, Parity::kOdd), 0.25, 0.0, 0.75);
  expect(p.query_law(0, 1, 2, Parity::kOdd), 0.0, 1.0, 0.0);
  expect(p.query_law(1, 0, 2, Parity::kOdd), 1.0, 0.0, 0.0);
  expect(p.query_law(1, 1, 2, Parity::kOdd), 0.0, 0.25, 0.75);
  // Positive correlation does not depend on parity.
  expect(p.query_law(0, 0, 2, Parity::kEven), 0.25, 0.0, 0.75);
}

TEST(PolicyN2, NegativeCorrelationCases) {
  const double a = 0.7, b = 0.9;
  const PolicyN2 p(a, b);
  const N2QueryLaw even_aa = p.query_law(0, 0, 2, Parity::kEven);
  EXPECT_NEAR(even_aa.first, (1 - a) / b, 1e-12);
  EXPECT_NEAR(even_aa.both, (a + b - 1) / b, 1e-12);
  EXPECT_NEAR(p.query_law(0, 1, 2, Parity::kEven).second, 1.0, 1e-12);
  EXPECT_NEAR(p.query_law(1, 0, 2, Parity::kEven).first, 1.0, 1e-12);
  EXPECT_NEAR(p.query_law(1, 1, 2, Parity::kEven).second, (1 - b) / a, 1e-12);

  EXPECT_NEAR(p.query_law(0, 0, 2, Parity::kOdd).first, 1.0, 1e-12);
  EXPECT_NEAR(p.query_law(0, 1, 2, Parity::kOdd).second, (1 - b) / a, 1e-12);
  EXPECT_NEAR(p.query_law(0, 1, 2, Parity::kOdd).both, (a + b - 1) / a, 1e-12);
  EXPECT_NEAR(p.query_law(1, 0, 2, Parity::kOdd).first, (1 - a) / b, 1e-12);
  EXPECT_NEAR(p.query_law(1, 1, 2, Parity::kOdd).second, 1.0, 1e-12);
}

TEST(PolicyN2, SingletonIsAbsorbingAndIndependentCaseIsSingleton) {
  for (double a : {0.1, 0.5, 0.9}) {
    for (double b : {0.2, 0.5, 0.95}) {
      const N2QueryLaw q = policy_n2(a, b, 0, 1, 1, Parity::kEven);
      EXPECT_EQ(q.second, 1.0);
      EXPECT_EQ(q.both, 0.0);
    }
  }
  const N2QueryLaw ind = policy_n2(0.3, 0.7, 0, 0, 2, Parity::kOdd);
  EXPECT_EQ(ind.first, 1.0);
}

TEST(PolicyN2, DegenerateChainsDownloadBoth) {
  // alpha + beta = 0: the request never changes, so x_t would reveal x_tau.
  EXPECT_NEAR(policy_n2(0.0, 0.0, 0, 0, 2, Parity::kOdd).both, 1.0, 1e-15);
  // alpha + beta = 2: the request alternates deterministically.
  EXPECT_NEAR(policy_n2(1.0, 1.0, 0, 0, 2, Parity::kEven).both, 1.0, 1e-15);
  EXPECT_NEAR(policy_n2(1.0, 1.0, 0, 1, 2, Parity::kOdd).both, 1.0, 1e-15);
  EXPECT_THROW(PolicyN2(1.2, 0.1), ConfigError);
  EXPECT_THROW(policy_n2(0.2, 0.2, 0, 2, 2, Parity::kOdd), ConfigError);
}

TEST(PolicyN2, RowsAreDistributions) {
  Gen g(12);
  for (int rep = 0; rep < 500; ++rep) {
    const PolicyN2 p(g.uniform(), g.uniform());
    for (int u = 0; u < 2; ++u) {
      for (int x = 0; x < 2; ++x) {
        for (int card : {1, 2}) {
          for (Parity par : {Parity::kEven, Parity::kOdd}) {
            const N2QueryLaw q = p.query_law(u, x, card, par);
            ASSERT_NEAR(q.first + q.second + q.both, 1.0, 1e-12);
            for (double v : {q.first, q.second, q.both}) {
              ASSERT_GE(v, -1e-12);
              ASSERT_LE(v, 1.0 + 1e-12);
            }
            // Decodability: the wanted source is always downloaded.
            ASSERT_EQ(x == 0 ? q.second : q.first, 0.0);
          }
        }
      }
    }
  }
}

TEST(QueryKernel, FromDistributionRowsSumToOne) {
  Gen g(21);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = g.range(2, 5);
    const ConditionalLaw law = g.law(n);
    const QueryKernel k = QueryKernel::from_distribution(
        project_to_sets(build_query_distribution(law, order_stats(law))), law);
    for (Source u = 0; u < n; ++u) {
      for (Source x = 0; x < n; ++x) {
        if (law(u, x) <= 0.0) continue;
        double s = 0.0;
        for (const KernelOutcome& o : k.outcomes(u, x)) {
          ASSERT_TRUE(o.y.contains(x));
          s += o.prob;
        }
        ASSERT_NEAR(s, 1.0, 1e-9);
      }
    }
    ASSERT_TRUE(std::is_sorted(k.support().begin(), k.support().end()));
  }
}

TEST(QueryKernel, SimpleKernels) {
  const QueryKernel full = QueryKernel::constant(3, QuerySet::full(3));
  EXPECT_EQ(full.weight(QuerySet::full(3), 2, 1), 1.0);
  const QueryKernel naive = QueryKernel::reveal(3);
  EXPECT_EQ(naive.weight(QuerySet::singleton(1), 0, 1), 1.0);
  EXPECT_EQ(naive.weight(QuerySet::singleton(0), 0, 1), 0.0);
  EXPECT_EQ(naive.support().size(), 3u);
  const QueryKernel n2 = QueryKernel::from_policy_n2(PolicyN2(0.2, 0.2), 2, Parity::kOdd);
  EXPECT_NEAR(n2.weight(QuerySet::of({0, 1}), 0, 0), 0.75, 1e-12);
}

}  // namespace
}  // namespace onoff

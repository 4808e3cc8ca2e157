#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stats.hpp"

using namespace polling::stats;

namespace {

std::vector<double> normal_draws(std::mt19937_64& g, std::size_t n, double mu = 0, double sd = 1)
{
    std::normal_distribution<double> d(mu, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(g);
    return v;
}

// Student t cdf for 2 degrees of freedom
double t2_cdf(double t) { return 0.5 + t / (2 * std::sqrt(2 + t * t)); }

}  // namespace

TEST(OneSampleT, Examples)
{
    const std::vector<double> x{1, 2, 3};
    EXPECT_EQ(t_test_one_sample(x, 2).statistic, 0.0);
    EXPECT_NEAR(t_test_one_sample(x, 2).p_two, 1.0, 1e-12);
    const auto r = t_test_one_sample(x, 0);
    EXPECT_NEAR(r.statistic, 2 * std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(r.statistic, 3.4641, 1e-4);
    EXPECT_EQ(r.df, 2.0);
    EXPECT_NEAR(r.p_two, 2 * (1 - t2_cdf(r.statistic)), 1e-10);
    EXPECT_NEAR(r.p_two, 0.0742, 1e-4);
    EXPECT_NEAR(r.p_less, t2_cdf(r.statistic), 1e-10);
}

TEST(OneSampleT, DegenerateInput)
{
    const std::vector<double> c{2, 2, 2}, one{1};
    EXPECT_THROW(t_test_one_sample(c, 0), DegenerateSample);
    EXPECT_THROW(t_test_one_sample(one, 0), DegenerateSample);
}

TEST(Welch, Examples)
{
    const std::vector<double> x{1, 2, 3, 4}, y{3, 4, 5, 6};
    EXPECT_EQ(welch_t_test(x, x).statistic, 0.0);
    const auto r = welch_t_test(x, y);
    EXPECT_NEAR(r.statistic, -2 / std::sqrt(5.0 / 6), 1e-12);
    EXPECT_NEAR(r.statistic, -2.1909, 1e-4);
    EXPECT_NEAR(r.df, 6.0, 1e-12);
    EXPECT_LT(r.p_less, 0.05);
    EXPECT_GT(r.p_greater, 0.95);
}

TEST(Welch, UnequalVarianceDf)
{
    const std::vector<double> x{1, 2, 3}, y{0, 10, 20, 30, 40};
    const double sx = 1.0 / 3, sy = 250.0 / 5;
    const double df = (sx + sy) * (sx + sy) / (sx * sx / 2 + sy * sy / 4);
    EXPECT_NEAR(welch_t_test(x, y).df, df, 1e-10);
}

TEST(Welch, EqualsPooledForEqualDesigns)
{
    std::mt19937_64 g(11);
    for (int k = 0; k < 20; ++k) {
        auto x = normal_draws(g, 30);
        auto y = normal_draws(g, 30);
        // rescale y to the sample variance of x
        const double m = mean(y), f = std::sqrt(variance(x) / variance(y));
        for (auto& v : y) v = m + 0.3 + (v - m) * f;
        const auto w = welch_t_test(x, y), p = pooled_t_test(x, y);
        EXPECT_NEAR(w.statistic, p.statistic, 1e-10);
        EXPECT_NEAR(w.df, p.df, 1e-8);
        EXPECT_NEAR(w.p_two, p.p_two, 1e-8);
    }
}

TEST(MannWhitney, TiedExample)
{
    const std::vector<double> x{1, 2}, y{1, 2};
    const auto r = mann_whitney_u(x, y);
    EXPECT_EQ(r.u_xy, 2.0);
    EXPECT_EQ(r.u_yx, 2.0);
    EXPECT_FALSE(r.exact);
}

TEST(MannWhitney, Complementary)
{
    std::mt19937_64 g(2);
    for (int k = 0; k < 20; ++k) {
        const auto x = normal_draws(g, 7 + k), y = normal_draws(g, 30);
        const auto r = mann_whitney_u(x, y);
        EXPECT_DOUBLE_EQ(r.u_xy + r.u_yx, static_cast<double>(x.size() * y.size()));
        EXPECT_DOUBLE_EQ(r.u_yx, u_statistic(y, x));
    }
}

TEST(MannWhitney, ExactDistributionByEnumeration)
{
    // all placements of 4 x-values among 9 ranks
    const std::size_t n = 4, m = 5;
    std::vector<double> count(n * m + 1, 0.0);
    int total = 0;
    for (unsigned mask = 0; mask < (1u << (n + m)); ++mask) {
        if (std::popcount(mask) != static_cast<int>(n)) continue;
        int u = 0, ys_below = 0;
        for (std::size_t r = 0; r < n + m; ++r) {
            if (mask >> r & 1u) u += ys_below;
            else ++ys_below;
        }
        count[static_cast<std::size_t>(u)] += 1;
        ++total;
    }
    const auto pmf = exact_u_distribution(n, m);
    ASSERT_EQ(pmf.size(), count.size());
    for (std::size_t u = 0; u < pmf.size(); ++u) EXPECT_NEAR(pmf[u], count[u] / total, 1e-14);
}

TEST(MannWhitney, ExactAndNormalAgree)
{
    std::mt19937_64 g(5);
    for (int k = 0; k < 30; ++k) {
        const auto x = normal_draws(g, 20, 0.4), y = normal_draws(g, 20);
        const auto ex = mann_whitney_u(x, y);
        ASSERT_TRUE(ex.exact);
        auto x2 = x;
        x2.push_back(x.back());  // a tie forces the normal path
        const auto ap = mann_whitney_u(x2, y);
        ASSERT_FALSE(ap.exact);
        // compare the exact p against the continuity-corrected normal p on the same sample
        const double nm = 400, mu = nm / 2, sd = std::sqrt(nm * 41 / 12);
        const double z = (ex.u_xy - mu + 0.5) / sd;
        EXPECT_NEAR(ex.p_less, 0.5 * std::erfc(-z / std::sqrt(2.0)), 0.01);
    }
}

TEST(MannWhitney, SeparatedSamples)
{
    std::vector<double> x, y;
    for (int i = 0; i < 10; ++i) {
        x.push_back(i);
        y.push_back(100 + i);
    }
    const auto r = mann_whitney_u(x, y);
    EXPECT_TRUE(r.exact);
    EXPECT_EQ(r.u_xy, 0.0);
    EXPECT_NEAR(r.p_less, 1.0 / 184756, 1e-15);
}

TEST(K2, NormalSamplesCalibrated)
{
    std::mt19937_64 g(20240611);
    int kept = 0;
    for (int k = 0; k < 100; ++k)
        if (!dagostino_k2(normal_draws(g, 10000)).reject_at(0.05)) ++kept;
    EXPECT_GE(kept, 90);
    double s = 0;
    for (int k = 0; k < 2000; ++k) s += dagostino_k2(normal_draws(g, 500)).statistic;
    EXPECT_GE(s / 2000, 1.8);
    EXPECT_LE(s / 2000, 2.2);
}

TEST(K2, ExponentialRejected)
{
    std::mt19937_64 g(3);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> x(10000);
    for (auto& v : x) v = e(g);
    const auto r = dagostino_k2(x);
    EXPECT_LT(r.p_two, 1e-6);
    EXPECT_NEAR(r.g1, 2.0, 0.3);
}

TEST(K2, Degenerate)
{
    std::vector<double> c(50, 1.0), small(10, 1.0);
    small[0] = 2;
    EXPECT_THROW(dagostino_k2(c), DegenerateSample);
    EXPECT_THROW(dagostino_k2(small), DegenerateSample);
}

TEST(Pearson, Extremes)
{
    const std::vector<double> x{1, 2, 3, 4}, up{2, 4, 6, 8}, down{8, 6, 4, 2}, c{1, 1, 1, 1};
    EXPECT_NEAR(pearson_r(x, up), 1.0, 1e-15);
    EXPECT_NEAR(pearson_r(x, down), -1.0, 1e-15);
    EXPECT_THROW(pearson_r(x, c), DegenerateSample);
    const std::vector<double> a{1, 2, 3}, b{1, 3, 2};
    EXPECT_NEAR(pearson_r(a, b), 0.5, 1e-15);
}

TEST(PValues, RangeAndTwoSidedRelation)
{
    std::mt19937_64 g(8);
    for (int k = 0; k < 50; ++k) {
        const auto x = normal_draws(g, 25, 0.1 * k), y = normal_draws(g, 25);
        for (const TestResult& r : {static_cast<TestResult>(welch_t_test(x, y)), t_test_one_sample(x, 0.0),
                                    static_cast<TestResult>(mann_whitney_u(x, y))}) {
            for (double p : {r.p_two, r.p_less, r.p_greater}) {
                EXPECT_GE(p, 0.0);
                EXPECT_LE(p, 1.0);
            }
        }
        const auto w = welch_t_test(x, y);
        EXPECT_NEAR(w.p_two, 2 * std::min(w.p_less, w.p_greater), 1e-12);
        EXPECT_NEAR(w.p_less + w.p_greater, 1.0, 1e-12);
    }
}

TEST(Summary, Fields)
{
    std::mt19937_64 g(1);
    const auto x = normal_draws(g, 4000, 5, 2);
    const auto s = summarize(x);
    EXPECT_NEAR(s.mean, 5, 0.1);
    EXPECT_NEAR(s.std, 2, 0.1);
    EXPECT_LE(s.min, s.mean);
    EXPECT_GE(s.max, s.mean);
    EXPECT_TRUE(s.normal);
    const std::vector<double> a{3, 5}, b{1, 1};
    EXPECT_EQ(difference(a, b), (std::vector<double>{2, 4}));
}

#include <gtest/gtest.h>

#include "baseline_policies.hpp"

using namespace polling;

namespace {

ScenarioConfig asym_var()
{
    ScenarioConfig c;
    c.lambda1 = c.lambda2 = 0.8;
    c.serve1 = DurationDist::gamma(1, 0.4);
    c.serve2 = DurationDist::gamma(30, 0.4 / 30);
    c.switch12 = DurationDist::gamma(30, 4.0 / 30);
    c.switch21 = DurationDist::gamma(1, 0.4);
    return c;
}

ScenarioConfig slow_mode()
{
    ScenarioConfig c;
    c.lambda1 = 1.5;
    c.lambda2 = 0.4;
    c.serve1 = DurationDist::gamma(30, 0.1 / 30);
    c.serve2 = DurationDist::gamma(20, 0.5 / 20);
    c.switch12 = DurationDist::gamma(30, 2.0 / 30);
    c.switch21 = DurationDist::gamma(20, 3.0 / 20);
    c.c1 = 2;
    c.c2 = 1;
    return c;
}

ScenarioConfig swapped(const ScenarioConfig& c)
{
    ScenarioConfig s = c;
    std::swap(s.lambda1, s.lambda2);
    std::swap(s.serve1, s.serve2);
    std::swap(s.switch12, s.switch21);
    std::swap(s.c1, s.c2);
    return s;
}

}  // namespace

TEST(Exhaustive, Examples)
{
    EXPECT_EQ(exhaustive_policy({3, 0, 0, 0}), Action::serve);
    EXPECT_EQ(exhaustive_policy({0, 2, 0, 0}), Action::switch_over);
    EXPECT_EQ(exhaustive_policy({0, 0, 1, 0}), Action::idle);
    EXPECT_EQ(exhaustive_policy({4, 0, 1, 0}), Action::switch_over);
    EXPECT_THROW(exhaustive_policy({1, 0, 0, 1}), ContractViolation);
}

TEST(Exhaustive, NeverIdlesWithWork)
{
    const auto t = exhaustive_table(6, 6);
    for (int n1 = 0; n1 <= 6; ++n1)
        for (int n2 = 0; n2 <= 6; ++n2)
            for (int l1 = 0; l1 <= 1; ++l1) {
                const Action a = t.at(n1, n2, l1);
                EXPECT_EQ(a == Action::idle, n1 + n2 == 0);
                if (a == Action::serve) EXPECT_GT(l1 == 0 ? n1 : n2, 0);
            }
}

TEST(Heuristic, PriorityQueueBranch)
{
    const auto c = slow_mode();
    bool m2 = false;
    EXPECT_EQ(heuristic_policy(c, {4, 0, 0, 0}, m2), Action::serve);
    EXPECT_NEAR(c.lambda2 * c.switch21.mean(), 1.2, 1e-12);
    EXPECT_EQ(heuristic_policy(c, {0, 2, 0, 0}, m2), Action::switch_over);
    EXPECT_EQ(heuristic_policy(c, {0, 1, 0, 0}, m2), Action::idle);
}

TEST(Heuristic, SecondQueueBranch)
{
    const auto c = slow_mode();
    bool m2 = false;
    EXPECT_EQ(heuristic_policy(c, {3, 2, 1, 0}, m2), Action::serve);
    EXPECT_TRUE(m2);
    m2 = true;
    // empty queue 2 resets the flag; lambda1 * s12 = 3
    EXPECT_EQ(heuristic_policy(c, {3, 0, 1, 0}, m2), Action::idle);
    EXPECT_FALSE(m2);
    EXPECT_EQ(heuristic_policy(c, {4, 0, 1, 0}, m2), Action::switch_over);
}

TEST(Heuristic, SwitchesWhenPhiTestFails)
{
    auto c = slow_mode();
    c.c1 = 1e-3;
    c.c2 = 1e-3;
    c.lambda2 = 0.0005;  // keeps c1 lambda1 > c2 lambda2
    bool m2 = false;
    EXPECT_EQ(heuristic_policy(c, {2, 3, 1, 0}, m2), Action::serve);
    EXPECT_TRUE(m2);
    EXPECT_EQ(heuristic_policy(c, {2, 2, 1, 0}, m2), Action::switch_over);
    EXPECT_FALSE(m2);
}

TEST(Heuristic, PreconditionsAsserted)
{
    bool m2 = false;
    EXPECT_FALSE(heuristic_applicable(asym_var()));
    EXPECT_THROW(heuristic_policy(asym_var(), {1, 1, 0, 0}, m2), HeuristicNotApplicable);
    auto c = slow_mode();
    c.lambda1 = 20;
    EXPECT_THROW(heuristic_policy(c, {1, 1, 0, 0}, m2), HeuristicNotApplicable);
    EXPECT_TRUE(heuristic_applicable(slow_mode()));
}

TEST(LimitCycle, AsymVarPureBowTie)
{
    const auto lc = analyze_limit_cycle(asym_var());
    EXPECT_EQ(lc.kind, CycleKind::pure_bow_tie);
    EXPECT_EQ(lc.alpha1, 0.0);
    EXPECT_NEAR(lc.rho, 0.64, 1e-12);
    EXPECT_NEAR(lc.C[0].x1, 0.0, 1e-12);
    EXPECT_NEAR(lc.C[0].x2, 0.8 * (0.4 + 0.32 * 4.4 / 0.36), 1e-12);
    EXPECT_NEAR(lc.C[0].x2, 3.4489, 1e-4);
    EXPECT_EQ(lc.C[1].x1, lc.C[0].x1);
    EXPECT_EQ(lc.C[1].x2, lc.C[0].x2);
}

TEST(LimitCycle, SlowModeTruncated)
{
    const auto lc = analyze_limit_cycle(slow_mode());
    EXPECT_NEAR(lc.slow_mode_value, 3 * 0.35 - 2.6 * 0.8, 1e-12);
    EXPECT_NEAR(lc.slow_mode_value, -1.03, 1e-9);
    EXPECT_EQ(lc.kind, CycleKind::truncated_bow_tie);
    EXPECT_GT(lc.alpha1, 0.0);
    EXPECT_LE(std::abs(lc.a * lc.alpha1 * lc.alpha1 + lc.b * lc.alpha1 + lc.c), 1e-9);
    for (const auto& p : lc.C) {
        EXPECT_GE(p.x1, 0.0);
        EXPECT_GE(p.x2, 0.0);
    }
    EXPECT_GT(lc.C[1].x2, lc.C[0].x2);
}

TEST(LimitCycle, SymmetricUnderQueueExchange)
{
    ScenarioConfig c;
    c.lambda1 = 0.3;
    c.lambda2 = 0.3;
    c.serve1 = c.serve2 = DurationDist::gamma(4, 0.25);
    c.switch12 = DurationDist::gamma(2, 1.0);
    c.switch21 = DurationDist::gamma(2, 1.5);
    const auto a = analyze_limit_cycle(c);
    const auto b = analyze_limit_cycle(swapped(c));
    EXPECT_EQ(a.kind, CycleKind::pure_bow_tie);
    // queue exchange maps C1 <-> C4 and C3 <-> C5 with swapped coordinates
    EXPECT_NEAR(a.C[0].x2, b.C[3].x1, 1e-12);
    EXPECT_NEAR(a.C[3].x1, b.C[0].x2, 1e-12);
    EXPECT_NEAR(a.C[2].x1, b.C[4].x2, 1e-12);
    EXPECT_NEAR(a.C[2].x2, b.C[4].x1, 1e-12);
}

TEST(LimitCycle, UnstableRejected)
{
    auto c = slow_mode();
    c.lambda1 = 20;
    EXPECT_THROW(analyze_limit_cycle(c), UnstableScenario);
}

TEST(TruncationBounds, Examples)
{
    LimitCycle lc;
    for (auto& p : lc.C) p = {1.0, 1.0};
    lc.C[0] = {0.0, 3.45};
    lc.C[3] = {3.45, 0.0};
    EXPECT_EQ(truncation_bounds(lc, 4.0), (std::pair<int, int>{14, 14}));
    EXPECT_EQ(truncation_bounds(lc, 1.0), (std::pair<int, int>{4, 4}));
    LimitCycle zero;
    EXPECT_EQ(truncation_bounds(zero), (std::pair<int, int>{1, 1}));
}

TEST(LimitCycle, ReportFields)
{
    const auto j = limit_cycle_report(analyze_limit_cycle(asym_var()));
    EXPECT_EQ(j.at("kind"), "PureBowTie");
    EXPECT_TRUE(j.contains("C5"));
    EXPECT_GE(j.at("recommended").at("X2").get<int>(), 14);
}

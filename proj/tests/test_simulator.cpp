#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "simulator.hpp"
#include "smdp_builder.hpp"

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
    c.X1 = c.X2 = 40;
    c.N1 = c.N2 = 35;
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
    c.X1 = c.X2 = 40;
    return c;
}

ScenarioConfig no_arrivals()
{
    ScenarioConfig c;
    c.lambda1 = c.lambda2 = 0.0;
    c.serve1 = c.serve2 = DurationDist::deterministic(1.0);
    c.switch12 = c.switch21 = DurationDist::deterministic(0.5);
    c.X1 = c.X2 = 5;
    return c;
}

DecisionFn always(Action a)
{
    return [a](const PollingState&, bool&) { return a; };
}

}  // namespace

TEST(StepCost, Examples)
{
    EXPECT_NEAR(step_wise_cost(1, 0, {}, 200, 1, 1, 0.05), 19.99909, 1e-5);
    EXPECT_EQ(step_wise_cost(0, 0, {}, 3, 1, 1, 0.05), 0.0);
    const std::vector<ArrivalEvent> last{{0, 3.0}};
    EXPECT_EQ(step_wise_cost(0, 0, last, 3, 1, 1, 0.05), 0.0);
    const std::vector<ArrivalEvent> mid{{1, 1.0}};
    EXPECT_NEAR(step_wise_cost(0, 0, mid, 3, 1, 2, 0.05), 2 / 0.05 * (std::exp(-0.05) - std::exp(-0.15)), 1e-12);
}

TEST(Rollout, SingleServiceNoArrivals)
{
    const double cost = rollout(no_arrivals(), exhaustive_decision(), InitialDist::point({1, 0, 0, 0}), 3, 10.0);
    EXPECT_NEAR(cost, (1 - std::exp(-0.05)) / 0.05, 1e-12);
    EXPECT_NEAR(cost, 0.97541, 1e-5);
}

TEST(Rollout, EmptySystemWithoutArrivals)
{
    const auto r = simulate(no_arrivals(), exhaustive_decision(), InitialDist::point({0, 0, 1, 0}), 3);
    EXPECT_EQ(r.cost, 0.0);
    EXPECT_EQ(r.end_time, 0.0);
}

TEST(Rollout, CommonRandomNumbersBitIdentical)
{
    const auto cfg = slow_mode();
    const auto init = InitialDist::uniform(cfg.X1, cfg.X2);
    RolloutOptions o;
    o.record = true;
    const auto a = simulate(cfg, heuristic_decision(cfg), init, 99, o);
    const auto b = simulate(cfg, heuristic_decision(cfg), init, 99, o);
    EXPECT_EQ(a.cost, b.cost);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
        EXPECT_EQ(a.trace[k].x, b.trace[k].x);
        EXPECT_EQ(a.trace[k].dt, b.trace[k].dt);
    }
    EXPECT_NE(a.cost, simulate(cfg, heuristic_decision(cfg), init, 100, o).cost);
}

TEST(Rollout, SharedEnvironmentUntilDivergence)
{
    const auto cfg = slow_mode();
    RolloutOptions o;
    o.record = true;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto init = InitialDist::uniform(cfg.X1, cfg.X2);
        const auto a = simulate(cfg, exhaustive_decision(), init, seed, o);
        const auto b = simulate(cfg, heuristic_decision(cfg), init, seed, o);
        for (std::size_t k = 0; k < std::min(a.trace.size(), b.trace.size()); ++k) {
            ASSERT_EQ(a.trace[k].x.n1, b.trace[k].x.n1);
            ASSERT_EQ(a.trace[k].x.n2, b.trace[k].x.n2);
            ASSERT_EQ(a.trace[k].t, b.trace[k].t);
            if (a.trace[k].x.l2 != b.trace[k].x.l2) break;
            ASSERT_EQ(a.trace[k].dt, b.trace[k].dt);
        }
    }
}

TEST(Rollout, TraceInvariants)
{
    const auto cfg = asym_var();
    RolloutOptions o;
    o.record = true;
    const auto r = simulate(cfg, exhaustive_decision(), InitialDist::uniform(cfg.X1, cfg.X2), 5, o);
    ASSERT_FALSE(r.trace.empty());
    EXPECT_EQ(r.trace.front().t, 0.0);
    for (std::size_t k = 0; k + 1 < r.trace.size(); ++k) {
        EXPECT_NEAR(r.trace[k + 1].t, r.trace[k].t + r.trace[k].dt, 1e-9);
        EXPECT_GE(r.trace[k].cost, 0.0);
    }
    EXPECT_LT(r.trace.back().t, o.horizon);
    EXPECT_GE(r.end_time, o.horizon);
}

TEST(Rollout, CostEqualsTrajectoryIntegral)
{
    // rebuild n(t) from the arrival substreams and the service completions
    const auto cfg = slow_mode();
    RolloutOptions o;
    o.record = true;
    for (std::uint64_t seed : {3u, 8u, 21u}) {
        const auto r = simulate(cfg, heuristic_decision(cfg), InitialDist::uniform(cfg.X1, cfg.X2), seed, o);
        std::vector<std::pair<double, int>> events;  // (time, +1 class c / -1 class c encoded)
        for (int c = 0; c < 2; ++c) {
            CounterStream s(seed, c == 0 ? StreamTag::arrival1 : StreamTag::arrival2);
            const double lam = c == 0 ? cfg.lambda1 : cfg.lambda2;
            double t = 0;
            while (true) {
                t += -std::log1p(-s.uniform()) / lam;
                if (t > r.end_time) break;
                events.push_back({t, c + 1});
            }
        }
        for (const auto& e : r.trace)
            if (e.x.l2 == 1) events.push_back({e.t + e.dt, -(e.x.l1 + 1)});
        std::sort(events.begin(), events.end());
        int n1 = r.trace.front().x.n1, n2 = r.trace.front().x.n2;
        double t = 0, total = 0;
        const double b = cfg.beta;
        for (const auto& [te, code] : events) {
            total += (cfg.c1 * n1 + cfg.c2 * n2) / b * (std::exp(-b * t) - std::exp(-b * te));
            t = te;
            if (code == 1) ++n1;
            else if (code == 2) ++n2;
            else if (code == -1) --n1;
            else --n2;
            ASSERT_GE(n1, 0);
            ASSERT_GE(n2, 0);
        }
        total += (cfg.c1 * n1 + cfg.c2 * n2) / b * (std::exp(-b * t) - std::exp(-b * r.end_time));
        EXPECT_NEAR(total / r.cost, 1.0, 1e-8);
    }
}

TEST(Rollout, IdleDurationsExponential)
{
    ScenarioConfig cfg = asym_var();
    cfg.lambda1 = 0.7;
    cfg.lambda2 = 1.3;
    cfg.X1 = cfg.X2 = 2000;
    RolloutOptions o;
    o.record = true;
    o.horizon = 5100;
    const auto r = simulate(cfg, always(Action::idle), InitialDist::point({0, 0, 0, 0}), 17, o);
    std::vector<double> d;
    for (const auto& e : r.trace) d.push_back(e.dt);
    ASSERT_GE(d.size(), 10000u);
    d.resize(10000);
    std::sort(d.begin(), d.end());
    double D = 0;
    const double n = static_cast<double>(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double F = -std::expm1(-2.0 * d[i]);
        D = std::max({D, F - i / n, (i + 1) / n - F});
    }
    EXPECT_LT(D, 1.628 / std::sqrt(n));
}

TEST(Rollout, OverflowDiagnosed)
{
    auto cfg = asym_var();
    cfg.X1 = cfg.X2 = 2;
    EXPECT_THROW(simulate(cfg, always(Action::idle), InitialDist::point({0, 0, 0, 0}), 1), SimulationOverflow);
}

TEST(Rollout, ServingEmptyQueueRejected)
{
    EXPECT_THROW(simulate(asym_var(), always(Action::serve), InitialDist::point({0, 3, 0, 0}), 1), ContractViolation);
}

TEST(InitialDist, UniformCoversSupport)
{
    const auto d = InitialDist::uniform(3, 2);
    CounterStream rng(4, StreamTag::initial_state);
    std::map<std::tuple<int, int, int>, int> seen;
    for (int k = 0; k < 24000; ++k) {
        const auto x = d.sample(rng);
        ASSERT_LE(x.n1, 3);
        ASSERT_LE(x.n2, 2);
        ++seen[{x.n1, x.n2, x.l1}];
    }
    EXPECT_EQ(seen.size(), 24u);
    for (const auto& [k, v] : seen) EXPECT_NEAR(v, 1000, 150);
}

TEST(InitialDist, WeightedPointMass)
{
    std::vector<double> w(static_cast<std::size_t>(3 * 3 * 2), 0.0);
    w[PolicyTable::index(1, 2, 1, 2)] = 1.0;
    const auto d = InitialDist::weighted(2, 2, w);
    CounterStream rng(4, StreamTag::initial_state);
    for (int k = 0; k < 50; ++k) EXPECT_EQ(d.sample(rng), (PollingState{1, 2, 1, 0}));
}

TEST(SamplePerformance, SizeContract)
{
    PerformanceOptions o;
    o.rollouts = 1;
    EXPECT_THROW(sample_performance(no_arrivals(), exhaustive_decision(), InitialDist::point({1, 1, 0, 0}), 1, o),
                 ContractViolation);
    o.rollouts = 2;
    EXPECT_EQ(sample_performance(no_arrivals(), exhaustive_decision(), InitialDist::point({1, 1, 0, 0}), 1, o).size(), 2u);
}

TEST(SamplePerformance, DegenerateModelConstant)
{
    PerformanceOptions o;
    o.rollouts = 10;
    const auto eta = sample_performance(no_arrivals(), exhaustive_decision(), InitialDist::point({2, 1, 1, 0}), 5, o);
    for (double v : eta) EXPECT_EQ(v, eta[0]);
}

TEST(SamplePerformance, WorkersDoNotChangeResult)
{
    const auto cfg = asym_var();
    PerformanceOptions o;
    o.rollouts = 40;
    o.shuffle_seed = 9;
    const auto init = InitialDist::uniform(cfg.X1, cfg.X2);
    const auto a = sample_performance(cfg, exhaustive_decision(), init, 3, o);
    o.workers = 3;
    EXPECT_EQ(a, sample_performance(cfg, exhaustive_decision(), init, 3, o));
    o.shuffle = false;
    auto c = sample_performance(cfg, exhaustive_decision(), init, 3, o);
    EXPECT_NE(a, c);
    auto sa = a;
    std::sort(sa.begin(), sa.end());
    std::sort(c.begin(), c.end());
    EXPECT_EQ(sa, c);
}

TEST(SamplePerformance, HeuristicBeatsExhaustiveOnSlowMode)
{
    const auto cfg = slow_mode();
    PerformanceOptions o;
    o.rollouts = 2000;
    const auto init = InitialDist::uniform(cfg.X1, cfg.X2);
    const auto exh = sample_performance(cfg, exhaustive_decision(), init, 7, o);
    const auto heu = sample_performance(cfg, heuristic_decision(cfg), init, 7, o);
    double me = 0, mh = 0;
    for (double v : exh) me += v;
    for (double v : heu) mh += v;
    EXPECT_LT(mh, me);
}

TEST(Embedded, AlternationHalfAndHalf)
{
    std::vector<TraceEntry> tr;
    for (int k = 0; k < 100; ++k) tr.push_back({{k % 2, 0, 0, 0}, 0.0, 1.0, static_cast<double>(k)});
    const auto f = embedded_stationary(tr, 0);
    ASSERT_EQ(f.freq.size(), 2u);
    for (const auto& [k, v] : f.freq) EXPECT_DOUBLE_EQ(v, 0.5);
    EXPECT_EQ(f.N1, 100);
    EXPECT_EQ(f.N2, 0);
    EXPECT_THROW(embedded_stationary(tr, 100), ContractViolation);
}

TEST(Embedded, MatchesLinearSolveStationary)
{
    const auto cfg = asym_var();
    const auto m = build_smdp(cfg);
    const auto pi = table_actions(m, exhaustive_table(cfg.X1, cfg.X2));
    // stationary of the plain embedded chain by power iteration
    std::vector<double> p(m.size(), 1.0 / static_cast<double>(m.size())), q(m.size());
    for (int it = 0; it < 5000; ++it) {
        std::fill(q.begin(), q.end(), 0.0);
        for (std::size_t x = 0; x < m.size(); ++x)
            for (const auto& e : m.model(pi[x]).rows[x]) q[static_cast<std::size_t>(e.col)] += p[x] * e.p;
        double s = 0;
        for (double v : q) s += v;
        for (auto& v : q) v /= s;
        std::swap(p, q);
    }
    std::map<std::pair<int, int>, double> oracle;
    for (int n1 = 0; n1 <= cfg.X1; ++n1)
        for (int n2 = 0; n2 <= cfg.X2; ++n2)
            oracle[{n1, n2}] = p[m.index(n1, n2, 0)] + p[m.index(n1, n2, 1)];

    RolloutOptions o;
    o.record = true;
    o.horizon = 100000;
    const auto r = simulate(cfg, exhaustive_decision(), InitialDist::point({0, 0, 0, 0}), 31, o);
    const auto f = embedded_stationary(r.trace);
    double s = 0;
    for (const auto& [k, v] : f.freq) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    const auto marg = f.queue_marginal();
    int compared = 0;
    for (const auto& [cell, v] : oracle) {
        if (v <= 1e-3) continue;
        const auto it = marg.find(cell);
        EXPECT_NEAR(it == marg.end() ? 0.0 : it->second, v, 0.02) << cell.first << ',' << cell.second;
        ++compared;
    }
    EXPECT_GT(compared, 20);
}

TEST(ActionTimes, FractionsSumToOne)
{
    const auto cfg = slow_mode();
    RolloutOptions o;
    o.record = true;
    o.horizon = 2000;
    const auto r = simulate(cfg, heuristic_decision(cfg), InitialDist::point({0, 0, 0, 0}), 2, o);
    const auto t = action_time_fractions(r.trace);
    const auto f = t.fractions();
    EXPECT_NEAR(f[0] + f[1] + f[2], 1.0, 1e-12);
    // long-run work fraction equals rho
    EXPECT_NEAR(f[1], 0.35, 0.03);
}

TEST(Occupancy, PooledStudy)
{
    const auto cfg = asym_var();
    OccupancyOptions o;
    o.rollouts = 5;
    const auto r = occupancy_study(cfg, exhaustive_decision(), InitialDist::uniform(cfg.X1, cfg.X2), o);
    double s = 0;
    for (const auto& [k, v] : r.freq.freq) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_EQ(r.freq.N, r.freq.N1 + r.freq.N2);
}

TEST(Occupancy, MergeIsVisitWeighted)
{
    EmbeddedFrequencies a, b;
    a.freq[{0, 0, 0}] = 1.0;
    a.N = a.N1 = 1;
    b.freq[{1, 0, 0}] = 1.0;
    b.N = b.N1 = 3;
    const std::vector<EmbeddedFrequencies> parts{a, b};
    const auto m = merge_frequencies(parts);
    EXPECT_DOUBLE_EQ((m.freq.at({0, 0, 0})), 0.25);
    EXPECT_DOUBLE_EQ((m.freq.at({1, 0, 0})), 0.75);
}

TEST(Occupancy, LimitCycleMass)
{
    LimitCycle lc;
    lc.C = {Point2{0, 0}, Point2{0, 0}, Point2{0.5, 0.5}, Point2{1, 0}, Point2{0.5, 0}};
    EmbeddedFrequencies f;
    f.freq[{0, 0, 0}] = 0.6;
    f.freq[{0, 0, 1}] = 0.1;
    f.freq[{9, 9, 0}] = 0.3;
    EXPECT_NEAR(limit_cycle_occupancy(f, lc), 0.7, 1e-12);
    EmbeddedFrequencies far;
    far.freq[{20, 20, 0}] = 1.0;
    EXPECT_EQ(limit_cycle_occupancy(far, lc), 0.0);
    EXPECT_THROW(limit_cycle_cells(lc, 10), ContractViolation);
}

TEST(Occupancy, OverallStationary)
{
    const std::vector<double> e{0.5, 0.5}, h{1, 3};
    const auto phi = overall_stationary(e, h);
    EXPECT_DOUBLE_EQ(phi[0], 0.25);
    EXPECT_DOUBLE_EQ(phi[1], 0.75);
}

TEST(Export, CsvLayouts)
{
    std::ostringstream a, b;
    const std::vector<double> v{1.5, 2};
    write_column_csv(a, "eta", v);
    EXPECT_EQ(a.str(), "eta\n1.5\n2\n");
    EmbeddedFrequencies f;
    f.freq[{1, 2, 0}] = 1.0;
    write_frequency_csv(b, f);
    EXPECT_EQ(b.str(), "n1,n2,l1,freq\n1,2,0,1\n");
}

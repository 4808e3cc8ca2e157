#pragma once

// Semi-Markov simulation of the controlled polling system with common
// random numbers, discounted rollouts and trace statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "baseline_policies.hpp"
#include "mdp.hpp"
#include "model_core.hpp"
#include "random.hpp"

namespace polling {

class SimulationOverflow : public ModelError {
public:
    using ModelError::ModelError;
};

/// Decision rule used by the simulator. The flag is per-rollout memory
/// (the heuristic's m2); stateless rules ignore it.
using DecisionFn = std::function<Action(const PollingState&, bool&)>;

inline DecisionFn table_decision(PolicyTable table)
{
    return [t = std::move(table)](const PollingState& x, bool&) { return t.clamped(x.n1, x.n2, x.l1); };
}

inline DecisionFn exhaustive_decision()
{
    return [](const PollingState& x, bool&) { return exhaustive_policy(x); };
}

inline DecisionFn heuristic_decision(const ScenarioConfig& cfg)
{
    if (!heuristic_applicable(cfg)) throw HeuristicNotApplicable("scenario has no priority queue 1");
    return [cfg](const PollingState& x, bool& m2) { return heuristic_policy(cfg, x, m2); };
}

/// Distribution of the initial embedded state over (n1, n2, l1) in 0..X.
class InitialDist {
public:
    static InitialDist uniform(int X1, int X2) { return InitialDist(X1, X2, {}); }

    static InitialDist point(const PollingState& x)
    {
        InitialDist d(0, 0, {});
        d.point_ = x;
        return d;
    }

    /// Weights indexed like PolicyTable::index.
    static InitialDist weighted(int X1, int X2, std::vector<double> w)
    {
        if (w.size() != static_cast<std::size_t>(X1 + 1) * (X2 + 1) * 2) throw ContractViolation("weight vector size mismatch");
        double s = 0.0;
        for (double& v : w) {
            if (!(v >= 0.0)) throw ContractViolation("negative initial weight");
            s += v;
            v = s;
        }
        if (!(s > 0.0)) throw ContractViolation("initial weights sum to zero");
        for (double& v : w) v /= s;
        return InitialDist(X1, X2, std::move(w));
    }

    PollingState sample(CounterStream& rng) const
    {
        if (point_) return *point_;
        const std::size_t n = static_cast<std::size_t>(X1_ + 1) * (X2_ + 1) * 2;
        std::size_t k;
        if (cdf_.empty()) k = static_cast<std::size_t>(rng.below(n));
        else {
            const double u = rng.uniform();
            k = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
            k = std::min(k, n - 1);
        }
        const int l1 = static_cast<int>(k % 2);
        const int cell = static_cast<int>(k / 2);
        return {cell / (X2_ + 1), cell % (X2_ + 1), l1, 0};
    }

private:
    InitialDist(int X1, int X2, std::vector<double> cdf) : X1_(X1), X2_(X2), cdf_(std::move(cdf)) {}
    int X1_, X2_;
    std::vector<double> cdf_;
    std::optional<PollingState> point_;
};

/// Z(c, t, D) = (c / beta)(e^{-beta t} - e^{-beta D})
inline double discounted_step(double c, double t, double D, double beta)
{
    return c / beta * (std::exp(-beta * t) - std::exp(-beta * D));
}

struct ArrivalEvent {
    int cls;     // 0 or 1
    double t;    // relative to the interval start
};

/// Discounted holding cost over one interval of length D, locally discounted.
inline double step_wise_cost(int n1, int n2, std::span<const ArrivalEvent> arrivals, double D, double c1, double c2,
                             double beta)
{
    double c = discounted_step(c1 * n1 + c2 * n2, 0.0, D, beta);
    for (const auto& a : arrivals) c += discounted_step(a.cls == 0 ? c1 : c2, a.t, D, beta);
    return c;
}

struct TraceEntry {
    PollingState x;  // l2 holds the chosen action
    double cost;     // locally discounted c_k
    double dt;
    double t;
};

struct RolloutOptions {
    double horizon = 200.0;
    int cap_factor = 10;  // overflow when n_i > cap_factor * X_i
    bool record = false;
};

struct RolloutResult {
    double cost = 0.0;
    std::vector<TraceEntry> trace;
    double end_time = 0.0;
};

/// Simulates epochs until the first one at or after the horizon.
inline RolloutResult simulate(const ScenarioConfig& cfg, const DecisionFn& policy, const InitialDist& init,
                              std::uint64_t seed, const RolloutOptions& opt = {})
{
    if (!cfg.homogeneous()) throw ModelError("the simulator supports constant arrival rates only");
    if (!(opt.horizon > 0.0)) throw ContractViolation("horizon must be positive");
    SeedStream rng(seed);
    RolloutResult out;
    PollingState x = init.sample(rng.initial);
    x.l2 = 0;

    const std::array<double, 2> lam{cfg.lambda1, cfg.lambda2};
    std::array<double, 2> next{};
    auto draw_gap = [&](int c) {
        return lam[static_cast<std::size_t>(c)] > 0.0
                   ? -std::log1p(-rng.arrival[c].uniform()) / lam[static_cast<std::size_t>(c)]
                   : std::numeric_limits<double>::infinity();
    };
    next[0] = draw_gap(0);
    next[1] = draw_gap(1);

    const int cap1 = opt.cap_factor * cfg.X1;
    const int cap2 = opt.cap_factor * cfg.X2;

    bool m2 = false;
    double t = 0.0;
    std::vector<ArrivalEvent> arrivals;
    while (t < opt.horizon) {
        const Action a = policy(x, m2);
        if (a == Action::serve && x.queue(x.l1) == 0)
            throw ContractViolation("policy serves an empty queue at (" + std::to_string(x.n1) + ", " +
                                    std::to_string(x.n2) + ", " + std::to_string(x.l1) + ")");
        double D, end;
        if (a == Action::idle) {
            end = std::min(next[0], next[1]);
            if (!std::isfinite(end)) break;  // nothing will ever happen
            D = end - t;
        } else {
            D = a == Action::serve ? cfg.serve(x.l1).sample(rng.serve[x.l1].uniform())
                                   : cfg.switch_from(x.l1).sample(rng.switching[x.l1].uniform());
            end = t + D;
        }
        arrivals.clear();
        std::array<int, 2> count{0, 0};
        for (int c = 0; c < 2; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            while (next[cu] < end || (a == Action::idle && next[cu] == end)) {
                arrivals.push_back({c, next[cu] - t});
                ++count[cu];
                next[cu] += draw_gap(c);
            }
        }
        std::sort(arrivals.begin(), arrivals.end(), [](const ArrivalEvent& p, const ArrivalEvent& q) { return p.t < q.t; });

        const double ck = step_wise_cost(x.n1, x.n2, arrivals, D, cfg.c1, cfg.c2, cfg.beta);
        out.cost += std::exp(-cfg.beta * t) * ck;
        if (opt.record) {
            PollingState xs = x;
            xs.l2 = static_cast<int>(a);
            out.trace.push_back({xs, ck, D, t});
        }

        if (a == Action::serve) --x.queue(x.l1);
        else if (a == Action::switch_over) x.l1 = 1 - x.l1;
        x.n1 += count[0];
        x.n2 += count[1];
        if (x.n1 > cap1 || x.n2 > cap2)
            throw SimulationOverflow("queue lengths (" + std::to_string(x.n1) + ", " + std::to_string(x.n2) +
                                     ") exceed the simulation cap; the policy looks unstable");
        t = end;
    }
    out.end_time = t;
    return out;
}

/// Discounted cost of one rollout.
inline double rollout(const ScenarioConfig& cfg, const DecisionFn& policy, const InitialDist& init, std::uint64_t seed,
                      double horizon)
{
    RolloutOptions o;
    o.horizon = horizon;
    return simulate(cfg, policy, init, seed, o).cost;
}

struct PerformanceOptions {
    double horizon = 200.0;
    int rollouts = 10000;
    unsigned workers = 1;
    std::uint64_t shuffle_seed = 0;
    bool shuffle = true;
};

/// M rollouts with seeds derived from seed0, shuffled with an independent seed.
inline std::vector<double> sample_performance(const ScenarioConfig& cfg, const DecisionFn& policy, const InitialDist& init,
                                              std::uint64_t seed0, const PerformanceOptions& opt)
{
    if (opt.rollouts < 2) throw ContractViolation("sample_performance needs at least 2 rollouts");
    const auto M = static_cast<std::size_t>(opt.rollouts);
    std::vector<double> eta(M);
    const unsigned W = std::max(1u, std::min<unsigned>(opt.workers, static_cast<unsigned>(M)));
    if (W == 1) {
        for (std::size_t k = 0; k < M; ++k) eta[k] = rollout(cfg, policy, init, rollout_seed(seed0, k), opt.horizon);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(W);
        for (unsigned w = 0; w < W; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k = w; k < M; k += W) eta[k] = rollout(cfg, policy, init, rollout_seed(seed0, k), opt.horizon);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    if (opt.shuffle) {
        CounterStream rng(opt.shuffle_seed, StreamTag::shuffle);
        shuffle(std::span<double>(eta), rng);
    }
    return eta;
}

// ---------------------------------------------------------------------------
// Trace statistics
// ---------------------------------------------------------------------------

using CellKey = std::tuple<int, int, int>;  // (n1, n2, l1)

struct EmbeddedFrequencies {
    std::map<CellKey, double> freq;
    long long N1 = 0;  // visits with the server at queue 1
    long long N2 = 0;
    long long N = 0;

    /// phi(x1, x2) summed over server locations.
    std::map<std::pair<int, int>, double> queue_marginal() const
    {
        std::map<std::pair<int, int>, double> m;
        for (const auto& [k, v] : freq) m[{std::get<0>(k), std::get<1>(k)}] += v;
        return m;
    }
};

inline std::size_t default_burn_in(std::size_t n) { return n / 10; }

inline EmbeddedFrequencies embedded_stationary(std::span<const TraceEntry> trace, std::optional<std::size_t> burn_in = std::nullopt)
{
    const std::size_t B = burn_in.value_or(default_burn_in(trace.size()));
    if (trace.size() <= B) throw ContractViolation("trace is empty after burn-in");
    EmbeddedFrequencies out;
    std::map<CellKey, long long> count;
    for (std::size_t i = B; i < trace.size(); ++i) {
        const auto& x = trace[i].x;
        ++count[{x.n1, x.n2, x.l1}];
        ++out.N;
        if (x.l1 == 0) ++out.N1;
        else ++out.N2;
    }
    for (const auto& [k, c] : count) out.freq[k] = static_cast<double>(c) / static_cast<double>(out.N);
    return out;
}

struct ActionTimes {
    std::array<double, 3> T1{};  // time per action with the server at queue 1
    std::array<double, 3> T2{};

    double total() const { return T1[0] + T1[1] + T1[2] + T2[0] + T2[1] + T2[2]; }
    double fraction(Action a) const
    {
        const auto i = static_cast<std::size_t>(a);
        return (T1[i] + T2[i]) / total();
    }
    std::array<double, 3> fractions() const { return {fraction(Action::idle), fraction(Action::serve), fraction(Action::switch_over)}; }

    ActionTimes& operator+=(const ActionTimes& o)
    {
        for (std::size_t i = 0; i < 3; ++i) {
            T1[i] += o.T1[i];
            T2[i] += o.T2[i];
        }
        return *this;
    }
};

inline ActionTimes action_time_fractions(std::span<const TraceEntry> trace, std::optional<std::size_t> burn_in = std::nullopt)
{
    const std::size_t B = burn_in.value_or(default_burn_in(trace.size()));
    if (trace.size() <= B) throw ContractViolation("trace is empty after burn-in");
    ActionTimes out;
    for (std::size_t i = B; i < trace.size(); ++i) {
        const auto& e = trace[i];
        auto& T = e.x.l1 == 0 ? out.T1 : out.T2;
        T[static_cast<std::size_t>(e.x.l2)] += e.dt;
    }
    return out;
}

/// Integer cells {floor, ceil}^2 around grid points of the cycle
/// C1 -> C2 -> C3 -> C4 -> C5 -> C1.
inline std::set<std::pair<int, int>> limit_cycle_cells(const LimitCycle& cycle, int grid = 100)
{
    if (grid < 100) throw ContractViolation("grid needs at least 100 points per segment");
    std::set<std::pair<int, int>> cells;
    for (std::size_t s = 0; s < 5; ++s) {
        const Point2& a = cycle.C[s];
        const Point2& b = cycle.C[(s + 1) % 5];
        for (int k = 0; k <= grid; ++k) {
            const double w = static_cast<double>(k) / grid;
            const double x1 = a.x1 + w * (b.x1 - a.x1);
            const double x2 = a.x2 + w * (b.x2 - a.x2);
            const int f1 = static_cast<int>(std::floor(x1)), c1 = static_cast<int>(std::ceil(x1));
            const int f2 = static_cast<int>(std::floor(x2)), c2 = static_cast<int>(std::ceil(x2));
            cells.insert({f1, f2});
            cells.insert({f1, c2});
            cells.insert({c1, f2});
            cells.insert({c1, c2});
        }
    }
    return cells;
}

/// Queue-marginal mass on the integer hull of the fluid cycle.
inline double limit_cycle_occupancy(const EmbeddedFrequencies& f, const LimitCycle& cycle, int grid = 100)
{
    const auto cells = limit_cycle_cells(cycle, grid);
    const auto marg = f.queue_marginal();
    double phi = 0.0;
    for (const auto& c : cells)
        if (auto it = marg.find(c); it != marg.end()) phi += it->second;
    return phi;
}

/// Visit-weighted merge of several frequency tables.
inline EmbeddedFrequencies merge_frequencies(std::span<const EmbeddedFrequencies> parts)
{
    EmbeddedFrequencies out;
    for (const auto& p : parts) {
        out.N += p.N;
        out.N1 += p.N1;
        out.N2 += p.N2;
        for (const auto& [k, v] : p.freq) out.freq[k] += v * static_cast<double>(p.N);
    }
    if (out.N == 0) throw ContractViolation("no visits to merge");
    for (auto& [k, v] : out.freq) v /= static_cast<double>(out.N);
    return out;
}

struct OccupancyOptions {
    int rollouts = 200;
    double horizon = 200.0;
    double burn_in_fraction = 0.1;  // per trace
    std::uint64_t seed = 1;
};

struct OccupancyResult {
    EmbeddedFrequencies freq;
    ActionTimes times;
};

/// Embedded frequencies and action times pooled over independent recorded rollouts.
inline OccupancyResult occupancy_study(const ScenarioConfig& cfg, const DecisionFn& policy, const InitialDist& init,
                                       const OccupancyOptions& opt)
{
    if (opt.rollouts < 1) throw ContractViolation("occupancy study needs at least one rollout");
    RolloutOptions ro;
    ro.horizon = opt.horizon;
    ro.record = true;
    std::vector<EmbeddedFrequencies> parts;
    OccupancyResult out;
    for (int k = 0; k < opt.rollouts; ++k) {
        const auto r = simulate(cfg, policy, init, rollout_seed(opt.seed, static_cast<std::uint64_t>(k)), ro);
        const auto B = static_cast<std::size_t>(opt.burn_in_fraction * static_cast<double>(r.trace.size()));
        if (r.trace.size() <= B) continue;
        parts.push_back(embedded_stationary(r.trace, B));
        out.times += action_time_fractions(r.trace, B);
    }
    out.freq = merge_frequencies(parts);
    return out;
}

/// phi_j = phit_j E[dt_j] / sum_i phit_i E[dt_i]
inline std::vector<double> overall_stationary(std::span<const double> embedded, std::span<const double> mean_holding)
{
    if (embedded.size() != mean_holding.size()) throw ContractViolation("size mismatch");
    std::vector<double> out(embedded.size());
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] = embedded[i] * mean_holding[i];
    if (!(s > 0.0)) throw ContractViolation("zero total holding time");
    for (double& v : out) v /= s;
    return out;
}

inline void write_column_csv(std::ostream& os, const std::string& header, std::span<const double> v)
{
    os << header << '\n';
    os.precision(17);
    for (double x : v) os << x << '\n';
}

inline void write_frequency_csv(std::ostream& os, const EmbeddedFrequencies& f)
{
    os << "n1,n2,l1,freq\n";
    os.precision(17);
    for (const auto& [k, v] : f.freq) os << std::get<0>(k) << ',' << std::get<1>(k) << ',' << std::get<2>(k) << ',' << v << '\n';
}

}  // namespace polling

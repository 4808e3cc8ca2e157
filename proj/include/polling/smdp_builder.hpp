#pragma once

// SMDP kernels and costs over (n1, n2, l1) for the non-preemptive server.
// Serve and switch rows spread arrival-lattice probabilities, pooled at the
// queue capacities; idle rows are the exact race of the two arrival streams.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "arrival_lattice.hpp"
#include "mdp.hpp"
#include "model_core.hpp"

namespace polling {

/// Lattice cells with plain probability below this are dropped.
inline constexpr double kPruneThreshold = 1e-14;

struct EventSummaries {
    std::array<ArrivalSummary, 2> serve;
    std::array<ArrivalSummary, 2> switching;  // by origin queue
};

/// Summaries for mu1, mu2, s12, s21; identical laws are integrated once.
inline EventSummaries build_event_summaries(const ScenarioConfig& cfg, const SummaryOptions& opt = {})
{
    std::vector<std::pair<DurationDist, ArrivalSummary>> cache;
    auto get = [&](const DurationDist& d) -> const ArrivalSummary& {
        for (const auto& [k, v] : cache)
            if (k == d) return v;
        cache.emplace_back(d, summarize_event(cfg, d, opt));
        return cache.back().second;
    };
    EventSummaries s;
    s.serve[0] = get(cfg.serve1);
    s.serve[1] = get(cfg.serve2);
    s.switching[0] = get(cfg.switch12);
    s.switching[1] = get(cfg.switch21);
    return s;
}

struct KernelEntry {
    int col;
    double p;
    double p_beta;
};

struct ActionModel {
    Action action = Action::idle;
    std::vector<std::vector<KernelEntry>> rows;
    std::vector<double> cost;
    std::vector<char> feasible;

    double row_sum(std::size_t r) const
    {
        double s = 0.0;
        for (const auto& e : rows[r]) s += e.p;
        return s;
    }
};

struct SmdpModel {
    ScenarioConfig cfg;
    StateIndexer indexer;  // dims (X1, X2, 1)
    std::array<ActionModel, 3> actions;  // indexed by Action value

    std::size_t size() const { return indexer.size(); }
    std::size_t index(int n1, int n2, int l1) const { return indexer.flatten({n1, n2, l1}); }
    const ActionModel& model(Action a) const { return actions[static_cast<std::size_t>(a)]; }
};

namespace detail {

/// Dense accumulator that hands back touched columns in index order.
class RowScratch {
public:
    explicit RowScratch(std::size_t n) : p_(n, 0.0), pb_(n, 0.0), seen_(n, 0) {}

    void add(int col, double p, double pb)
    {
        const auto c = static_cast<std::size_t>(col);
        if (!seen_[c]) {
            seen_[c] = 1;
            touched_.push_back(col);
        }
        p_[c] += p;
        pb_[c] += pb;
    }

    std::vector<KernelEntry> flush()
    {
        std::sort(touched_.begin(), touched_.end());
        std::vector<KernelEntry> out;
        out.reserve(touched_.size());
        for (int c : touched_) {
            const auto u = static_cast<std::size_t>(c);
            out.push_back({c, p_[u], pb_[u]});
            p_[u] = pb_[u] = 0.0;
            seen_[u] = 0;
        }
        touched_.clear();
        return out;
    }

private:
    std::vector<double> p_, pb_;
    std::vector<char> seen_;
    std::vector<int> touched_;
};

/// Adds base + arrivals, capped at (X1, X2), for one lattice summary.
inline double spread_arrivals(RowScratch& row, const SmdpModel& m, const ArrivalSummary& s, int b1, int b2, int l1)
{
    const int X1 = m.cfg.X1, X2 = m.cfg.X2;
    double moved = 0.0;
    for (int a1 = 0; a1 <= s.N1; ++a1) {
        const int t1 = std::min(b1 + a1, X1);
        for (int a2 = 0; a2 <= s.N2; ++a2) {
            const std::size_t cell = static_cast<std::size_t>(a1 * (s.N2 + 1) + a2);
            const double p = s.P[cell];
            if (p < kPruneThreshold) continue;
            const int t2 = std::min(b2 + a2, X2);
            row.add(static_cast<int>(m.index(t1, t2, l1)), p, s.P_beta[cell]);
            moved += p;
        }
    }
    return moved;
}

inline double kept_mass(const ArrivalSummary& s)
{
    double t = 0.0;
    for (double p : s.P)
        if (p >= kPruneThreshold) t += p;
    return t;
}

}  // namespace detail

/// Kernels and costs for idle, serve and switch at every (n1, n2, l1).
inline SmdpModel build_action_models(const ScenarioConfig& cfg, const EventSummaries& ev)
{
    check_parameters(cfg);
    for (const auto* s : {&ev.serve[0], &ev.serve[1], &ev.switching[0], &ev.switching[1]})
        if (s->P.empty()) throw ModelError("missing arrival summary for an event");

    SmdpModel m;
    m.cfg = cfg;
    m.indexer = StateIndexer({cfg.X1, cfg.X2, 1});
    const std::size_t n = m.indexer.size();
    for (Action a : kActionOrder) {
        auto& am = m.actions[static_cast<std::size_t>(a)];
        am.action = a;
        am.rows.assign(n, {});
        am.cost.assign(n, 0.0);
        am.feasible.assign(n, 0);
    }

    const double gL = cfg.lambda1 + cfg.lambda2;
    const double alpha_idle = gL / (gL + cfg.beta);
    const std::array<double, 2> kept_serve{detail::kept_mass(ev.serve[0]), detail::kept_mass(ev.serve[1])};
    const std::array<double, 2> kept_switch{detail::kept_mass(ev.switching[0]), detail::kept_mass(ev.switching[1])};

    detail::RowScratch row(n);
    for (int n1 = 0; n1 <= cfg.X1; ++n1) {
        for (int n2 = 0; n2 <= cfg.X2; ++n2) {
            const double hold = cfg.holding_rate(n1, n2);
            for (int l1 = 0; l1 <= 1; ++l1) {
                const std::size_t x = m.index(n1, n2, l1);
                const ActionSet A = feasible_actions(n1, n2, l1);

                // idle
                {
                    auto& am = m.actions[0];
                    am.feasible[x] = 1;
                    if (gL > 0.0) {
                        row.add(static_cast<int>(m.index(std::min(n1 + 1, cfg.X1), n2, l1)), cfg.lambda1 / gL,
                                alpha_idle * cfg.lambda1 / gL);
                        row.add(static_cast<int>(m.index(n1, std::min(n2 + 1, cfg.X2), l1)), cfg.lambda2 / gL,
                                alpha_idle * cfg.lambda2 / gL);
                        am.rows[x] = row.flush();
                        // zero-rate class leaves a zero entry behind
                        std::erase_if(am.rows[x], [](const KernelEntry& e) { return e.p == 0.0; });
                    }
                    am.cost[x] = hold / (cfg.beta + gL);
                }

                // serve
                if (A.contains(Action::serve)) {
                    auto& am = m.actions[1];
                    am.feasible[x] = 1;
                    const ArrivalSummary& s = ev.serve[static_cast<std::size_t>(l1)];
                    const double moved = detail::spread_arrivals(row, m, s, n1 - (l1 == 0), n2 - (l1 == 1), l1);
                    am.rows[x] = row.flush();
                    double received = 0.0;
                    for (const auto& e : am.rows[x]) received += e.p;
                    if (std::abs(moved - kept_serve[static_cast<std::size_t>(l1)]) > 1e-12 ||
                        std::abs(received - moved) > 1e-12)
                        throw ModelError("pooling lost mass in serve row " + std::to_string(x));
                    am.cost[x] = hold * s.C_H + s.C_I;
                }

                // switch
                {
                    auto& am = m.actions[2];
                    am.feasible[x] = 1;
                    const ArrivalSummary& s = ev.switching[static_cast<std::size_t>(l1)];
                    const double moved = detail::spread_arrivals(row, m, s, n1, n2, 1 - l1);
                    am.rows[x] = row.flush();
                    double received = 0.0;
                    for (const auto& e : am.rows[x]) received += e.p;
                    if (std::abs(moved - kept_switch[static_cast<std::size_t>(l1)]) > 1e-12 ||
                        std::abs(received - moved) > 1e-12)
                        throw ModelError("pooling lost mass in switch row " + std::to_string(x));
                    am.cost[x] = hold * s.C_H + s.C_I + cfg.switch_cost(l1);
                }
            }
        }
    }
    return m;
}

inline SmdpModel build_smdp(const ScenarioConfig& cfg, const SummaryOptions& opt = {})
{
    return build_action_models(cfg, build_event_summaries(cfg, opt));
}

/// Cost vector of one action, zero at infeasible states.
inline std::vector<double> build_cost_vector(const SmdpModel& m, Action a)
{
    return m.model(a).cost;
}

/// Solver view: discounted weight w = P_beta entry.
inline Mdp to_mdp(const SmdpModel& m)
{
    Mdp out;
    out.choices.resize(m.size());
    for (std::size_t x = 0; x < m.size(); ++x) {
        for (Action a : kActionOrder) {
            const auto& am = m.model(a);
            if (!am.feasible[x]) continue;
            Choice c{a, am.cost[x], {}};
            c.next.reserve(am.rows[x].size());
            for (const auto& e : am.rows[x]) c.next.push_back({e.col, e.p, e.p_beta});
            out.choices[x].push_back(std::move(c));
        }
    }
    return out;
}

/// Policy over the SMDP state space, read off a solved Mdp policy.
inline PolicyTable smdp_policy_table(const SmdpModel& m, const Policy& pi)
{
    PolicyTable t(m.cfg.X1, m.cfg.X2);
    for (int n1 = 0; n1 <= m.cfg.X1; ++n1)
        for (int n2 = 0; n2 <= m.cfg.X2; ++n2)
            for (int l1 = 0; l1 <= 1; ++l1) t.set(n1, n2, l1, pi.action[m.index(n1, n2, l1)]);
    return t;
}

/// Per-state actions of a decision table, for evaluation on the SMDP.
inline std::vector<Action> table_actions(const SmdpModel& m, const PolicyTable& t)
{
    std::vector<Action> pi(m.size());
    for (int n1 = 0; n1 <= m.cfg.X1; ++n1)
        for (int n2 = 0; n2 <= m.cfg.X2; ++n2)
            for (int l1 = 0; l1 <= 1; ++l1) pi[m.index(n1, n2, l1)] = t.clamped(n1, n2, l1);
    return pi;
}

inline void write_action_model_csv(std::ostream& os, const SmdpModel& m, Action a)
{
    const auto& am = m.model(a);
    os << "idx_from,idx_to,p,p_beta,cost\n";
    os.precision(17);
    for (std::size_t x = 0; x < am.rows.size(); ++x)
        for (const auto& e : am.rows[x]) os << x << ',' << e.col << ',' << e.p << ',' << e.p_beta << ',' << am.cost[x] << '\n';
}

}  // namespace polling

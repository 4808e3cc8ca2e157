#pragma once

// Uniformised CTMDP models for all-exponential durations: the preemptive
// server over (n1, n2, l1) and the non-preemptive one over (n1, n2, l1, l2)
// with instantaneous linking edges from decision to dynamics states.

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mdp.hpp"
#include "model_core.hpp"

namespace polling {

struct UniformRates {
    double lambda1, lambda2;
    std::array<double, 2> mu;  // service rates
    std::array<double, 2> s;   // switch-over rates by origin
    double gamma;              // lambda1 + lambda2 + max(mu, s)
    double alpha;              // gamma / (gamma + beta)
    double gamma_lambda;       // lambda1 + lambda2
    double alpha_idle;         // gamma_lambda / (gamma_lambda + beta)
};

/// Exponential law, or Gamma with unit shape.
inline bool memoryless(const DurationDist& d)
{
    return d.is_exponential() || (d.kind() == DistKind::gamma && d.first() == 1.0);
}

/// Same scenario with every duration replaced by the exponential of equal mean.
inline ScenarioConfig exponential_approximation(ScenarioConfig cfg)
{
    for (auto* d : {&cfg.serve1, &cfg.serve2, &cfg.switch12, &cfg.switch21}) *d = DurationDist::exponential(1.0 / d->mean());
    return cfg;
}

inline UniformRates uniform_rates(const ScenarioConfig& cfg)
{
    check_parameters(cfg);
    if (!cfg.homogeneous()) throw ModelError("uniformised models need constant arrival rates");
    for (const auto* d : {&cfg.serve1, &cfg.serve2, &cfg.switch12, &cfg.switch21})
        if (!memoryless(*d)) throw ModelError("uniformised models need exponential durations");
    UniformRates r{};
    r.lambda1 = cfg.lambda1;
    r.lambda2 = cfg.lambda2;
    r.mu = {1.0 / cfg.serve1.mean(), 1.0 / cfg.serve2.mean()};
    r.s = {1.0 / cfg.switch12.mean(), 1.0 / cfg.switch21.mean()};
    r.gamma_lambda = r.lambda1 + r.lambda2;
    r.gamma = r.gamma_lambda + std::max({r.mu[0], r.mu[1], r.s[0], r.s[1]});
    r.alpha = r.gamma / (r.gamma + cfg.beta);
    r.alpha_idle = r.gamma_lambda / (r.gamma_lambda + cfg.beta);
    return r;
}

namespace detail {

/// Row builder merging duplicate targets (boundary folding).
struct ArcList {
    std::vector<Arc> arcs;
    void add(int to, double p, double disc)
    {
        if (p == 0.0) return;
        for (auto& a : arcs)
            if (a.to == to) {
                a.p += p;
                a.w += disc * p;
                return;
            }
        arcs.push_back({to, p, disc * p});
    }
};

}  // namespace detail

struct PreemptiveModel {
    ScenarioConfig cfg;
    UniformRates rates;
    StateIndexer indexer;  // (X1, X2, 1)
    std::vector<double> cost;  // action invariant
    Mdp mdp;

    std::size_t index(int n1, int n2, int l1) const { return indexer.flatten({n1, n2, l1}); }
};

inline PreemptiveModel build_preemptive(const ScenarioConfig& cfg)
{
    PreemptiveModel m;
    m.cfg = cfg;
    m.rates = uniform_rates(cfg);
    m.indexer = StateIndexer({cfg.X1, cfg.X2, 1});
    const auto& r = m.rates;
    const double g = r.gamma;
    m.cost.assign(m.indexer.size(), 0.0);
    m.mdp.choices.resize(m.indexer.size());
    for (int n1 = 0; n1 <= cfg.X1; ++n1)
        for (int n2 = 0; n2 <= cfg.X2; ++n2)
            for (int l1 = 0; l1 <= 1; ++l1) {
                const auto x = static_cast<int>(m.index(n1, n2, l1));
                const double c = cfg.holding_rate(n1, n2) / (g + cfg.beta);
                m.cost[static_cast<std::size_t>(x)] = c;
                auto arrivals = [&](detail::ArcList& row) {
                    row.add(static_cast<int>(m.index(std::min(n1 + 1, cfg.X1), n2, l1)), r.lambda1 / g, r.alpha);
                    row.add(static_cast<int>(m.index(n1, std::min(n2 + 1, cfg.X2), l1)), r.lambda2 / g, r.alpha);
                };
                for (Action a : feasible_actions(n1, n2, l1).ordered()) {
                    detail::ArcList row;
                    double event = 0.0;
                    if (a == Action::serve) {
                        event = r.mu[static_cast<std::size_t>(l1)];
                        row.add(static_cast<int>(m.index(n1 - (l1 == 0), n2 - (l1 == 1), l1)), event / g, r.alpha);
                    } else if (a == Action::switch_over) {
                        event = r.s[static_cast<std::size_t>(l1)];
                        row.add(static_cast<int>(m.index(n1, n2, 1 - l1)), event / g, r.alpha);
                    }
                    arrivals(row);
                    row.add(x, 1.0 - (event + r.lambda1 + r.lambda2) / g, r.alpha);
                    m.mdp.choices[static_cast<std::size_t>(x)].push_back({a, c, std::move(row.arcs)});
                }
            }
    return m;
}

struct NonPreemptiveModel {
    ScenarioConfig cfg;
    UniformRates rates;
    StateIndexer indexer;  // (X1, X2, 1, 2)
    Mdp mdp;

    std::size_t size() const { return indexer.size(); }
    std::size_t index(int n1, int n2, int l1, int l2) const { return indexer.flatten({n1, n2, l1, l2}); }
    static bool is_decision(std::size_t idx) { return idx % 3 == 0; }
};

inline NonPreemptiveModel build_nonpreemptive(const ScenarioConfig& cfg)
{
    NonPreemptiveModel m;
    m.cfg = cfg;
    m.rates = uniform_rates(cfg);
    m.indexer = StateIndexer({cfg.X1, cfg.X2, 1, 2});
    const auto& r = m.rates;
    const double g = r.gamma;
    const double gL = r.gamma_lambda;
    m.mdp.choices.resize(m.size());
    for (int n1 = 0; n1 <= cfg.X1; ++n1)
        for (int n2 = 0; n2 <= cfg.X2; ++n2)
            for (int l1 = 0; l1 <= 1; ++l1) {
                const double hold = cfg.holding_rate(n1, n2);
                const int up1 = std::min(n1 + 1, cfg.X1);
                const int up2 = std::min(n2 + 1, cfg.X2);

                // decision state
                {
                    auto& ch = m.mdp.choices[m.index(n1, n2, l1, 0)];
                    for (Action a : feasible_actions(n1, n2, l1).ordered()) {
                        if (a == Action::idle) {
                            detail::ArcList row;
                            if (gL > 0.0) {
                                row.add(static_cast<int>(m.index(up1, n2, l1, 0)), r.lambda1 / gL, r.alpha_idle);
                                row.add(static_cast<int>(m.index(n1, up2, l1, 0)), r.lambda2 / gL, r.alpha_idle);
                            }
                            ch.push_back({a, hold / (gL + cfg.beta), std::move(row.arcs)});
                        } else {
                            const int l2 = static_cast<int>(a);
                            ch.push_back({a, 0.0, {{static_cast<int>(m.index(n1, n2, l1, l2)), 1.0, 1.0}}});
                        }
                    }
                }

                // service and switch-over in progress
                for (int l2 = 1; l2 <= 2; ++l2) {
                    const auto x = static_cast<int>(m.index(n1, n2, l1, l2));
                    detail::ArcList row;
                    double event;
                    if (l2 == 1) {
                        event = r.mu[static_cast<std::size_t>(l1)];
                        // n_{l1} = 0 is unreachable here; completion is clamped
                        const int d1 = std::max(n1 - (l1 == 0), 0);
                        const int d2 = std::max(n2 - (l1 == 1), 0);
                        row.add(static_cast<int>(m.index(d1, d2, l1, 0)), event / g, r.alpha);
                    } else {
                        event = r.s[static_cast<std::size_t>(l1)];
                        row.add(static_cast<int>(m.index(n1, n2, 1 - l1, 0)), event / g, r.alpha);
                    }
                    row.add(static_cast<int>(m.index(up1, n2, l1, l2)), r.lambda1 / g, r.alpha);
                    row.add(static_cast<int>(m.index(n1, up2, l1, l2)), r.lambda2 / g, r.alpha);
                    row.add(x, 1.0 - (event + r.lambda1 + r.lambda2) / g, r.alpha);
                    m.mdp.choices[static_cast<std::size_t>(x)].push_back(
                        {static_cast<Action>(l2), hold / (g + cfg.beta), std::move(row.arcs)});
                }
            }
    return m;
}

/// Decision-state actions of a non-preemptive policy as an (n1, n2, l1) table.
inline PolicyTable ctmdp_policy_table(const NonPreemptiveModel& m, const Policy& pi)
{
    PolicyTable t(m.cfg.X1, m.cfg.X2);
    for (int n1 = 0; n1 <= m.cfg.X1; ++n1)
        for (int n2 = 0; n2 <= m.cfg.X2; ++n2)
            for (int l1 = 0; l1 <= 1; ++l1) t.set(n1, n2, l1, pi.action[m.index(n1, n2, l1, 0)]);
    return t;
}

inline PolicyTable preemptive_policy_table(const PreemptiveModel& m, const Policy& pi)
{
    PolicyTable t(m.cfg.X1, m.cfg.X2);
    for (int n1 = 0; n1 <= m.cfg.X1; ++n1)
        for (int n2 = 0; n2 <= m.cfg.X2; ++n2)
            for (int l1 = 0; l1 <= 1; ++l1) t.set(n1, n2, l1, pi.action[m.index(n1, n2, l1)]);
    return t;
}

// ---------------------------------------------------------------------------
// State-value graph
// ---------------------------------------------------------------------------

struct QNode {
    int state;
    Action action;
    double cost;
    double discount;
    std::vector<Arc> nbrs;  // p plain, w = discount * p
};

/// Q-nodes stored contiguously per state; nodes of state s are
/// [begin[s], begin[s+1]).
struct ValueGraph {
    std::vector<QNode> nodes;
    std::vector<std::size_t> begin;

    std::size_t states() const { return begin.empty() ? 0 : begin.size() - 1; }
};

inline ValueGraph build_value_graph(const Mdp& mdp)
{
    ValueGraph g;
    g.begin.reserve(mdp.size() + 1);
    for (std::size_t s = 0; s < mdp.size(); ++s) {
        g.begin.push_back(g.nodes.size());
        for (const auto& c : mdp.choices[s]) {
            QNode q{static_cast<int>(s), c.action, c.cost, 0.0, {}};
            double P = 0.0, W = 0.0;
            for (const auto& a : c.next) {
                q.nbrs.push_back(a);
                P += a.p;
                W += a.w;
            }
            q.discount = P > 0.0 ? W / P : 0.0;
            g.nodes.push_back(std::move(q));
        }
    }
    g.begin.push_back(g.nodes.size());
    return g;
}

inline ValueGraph build_value_graph(const NonPreemptiveModel& m)
{
    return build_value_graph(m.mdp);
}

}  // namespace polling

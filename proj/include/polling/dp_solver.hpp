#pragma once

// Discounted dynamic programming on an Mdp: exact policy evaluation by
// sparse LU, greedy improvement, policy iteration and Gauss-Seidel value
// iteration over a ValueGraph.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "ctmdp.hpp"
#include "mdp.hpp"
#include "random.hpp"

namespace polling {

class SolverError : public ModelError {
public:
    using ModelError::ModelError;
};

/// Relative slack under which two Q values count as tied.
inline constexpr double kTieTolerance = 1e-10;

inline const Choice& chosen(const Mdp& mdp, std::size_t s, Action a)
{
    const Choice* c = mdp.find(s, a);
    if (!c) throw ContractViolation("policy picks infeasible action " + std::string(to_string(a)) + " at state " + std::to_string(s));
    return *c;
}

/// Cycle of zero-cost, undiscounted, certain edges (which makes I - P singular).
inline std::optional<std::vector<int>> find_linking_cycle(const Mdp& mdp, const std::vector<Action>* pi = nullptr)
{
    const std::size_t n = mdp.size();
    auto linking = [&](std::size_t s, std::vector<int>& out) {
        out.clear();
        for (const auto& c : mdp.choices[s]) {
            if (pi && c.action != (*pi)[s]) continue;
            if (c.cost != 0.0) continue;
            for (const auto& a : c.next)
                if (a.w >= 1.0 - 1e-15) out.push_back(a.to);
        }
    };
    std::vector<char> colour(n, 0);  // 0 new, 1 on stack, 2 done
    std::vector<int> parent(n, -1);
    std::vector<int> nb;
    for (std::size_t root = 0; root < n; ++root) {
        if (colour[root]) continue;
        std::vector<std::pair<int, std::vector<int>>> stack;
        linking(root, nb);
        stack.emplace_back(static_cast<int>(root), nb);
        colour[root] = 1;
        while (!stack.empty()) {
            auto& [s, rest] = stack.back();
            if (rest.empty()) {
                colour[static_cast<std::size_t>(s)] = 2;
                stack.pop_back();
                continue;
            }
            const int t = rest.back();
            rest.pop_back();
            if (colour[static_cast<std::size_t>(t)] == 1) {
                std::vector<int> cyc{t};
                for (int u = s; u != t && u >= 0; u = parent[static_cast<std::size_t>(u)]) cyc.push_back(u);
                return cyc;
            }
            if (colour[static_cast<std::size_t>(t)] == 0) {
                parent[static_cast<std::size_t>(t)] = s;
                colour[static_cast<std::size_t>(t)] = 1;
                linking(static_cast<std::size_t>(t), nb);
                stack.emplace_back(t, nb);
            }
        }
    }
    return std::nullopt;
}

/// Solves (I - W_pi) J = C_pi exactly.
inline std::vector<double> policy_evaluate(const Mdp& mdp, const std::vector<Action>& pi)
{
    const std::size_t n = mdp.size();
    if (pi.size() != n) throw ContractViolation("policy size does not match the state space");
    if (auto cyc = find_linking_cycle(mdp, &pi))
        throw SolverError("policy contains a cycle of linking transitions through state " + std::to_string(cyc->front()));

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd C(static_cast<Eigen::Index>(n));
    double cmax = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const Choice& c = chosen(mdp, s, pi[s]);
        C[static_cast<Eigen::Index>(s)] = c.cost;
        cmax = std::max(cmax, std::abs(c.cost));
        trip.emplace_back(static_cast<int>(s), static_cast<int>(s), 1.0);
        for (const auto& a : c.next)
            if (a.w != 0.0) trip.emplace_back(static_cast<int>(s), a.to, -a.w);
    }
    if (cmax == 0.0) return std::vector<double>(n, 0.0);

    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw SolverError("sparse LU factorisation failed: " + lu.lastErrorMessage());
    Eigen::VectorXd J = lu.solve(C);
    if (lu.info() != Eigen::Success) throw SolverError("sparse LU solve failed");
    const double res = (A * J - C).lpNorm<Eigen::Infinity>();
    if (!(res <= 1e-8 * cmax)) throw SolverError("policy evaluation residual " + std::to_string(res) + " too large");
    return std::vector<double>(J.data(), J.data() + J.size());
}

inline double q_value(const Choice& c, const std::vector<double>& J)
{
    double q = c.cost;
    for (const auto& a : c.next) q += a.w * J[static_cast<std::size_t>(a.to)];
    return q;
}

/// First action (in idle < serve < switch order) whose Q is within the tie
/// tolerance of the minimum.
inline Action greedy_action(const std::vector<Choice>& choices, const std::vector<double>& J)
{
    if (choices.empty()) throw ContractViolation("state without feasible actions");
    double best = std::numeric_limits<double>::infinity();
    double qs[3];
    for (std::size_t i = 0; i < choices.size(); ++i) {
        qs[i] = q_value(choices[i], J);
        best = std::min(best, qs[i]);
    }
    const double tol = kTieTolerance * std::max(1.0, std::abs(best));
    for (std::size_t i = 0; i < choices.size(); ++i)
        if (qs[i] <= best + tol) return choices[i].action;
    return choices.front().action;
}

/// Returns the greedy policy and whether it differs from current.
inline std::pair<std::vector<Action>, bool> policy_improve(const Mdp& mdp, const std::vector<double>& J,
                                                           const std::vector<Action>* current = nullptr)
{
    std::vector<Action> out(mdp.size());
    bool changed = false;
    for (std::size_t s = 0; s < mdp.size(); ++s) {
        out[s] = greedy_action(mdp.choices[s], J);
        if (current && (*current)[s] != out[s]) changed = true;
    }
    return {out, current ? changed : true};
}

/// (T J)(s) = min_a Q(s, a).
inline std::vector<double> bellman_operator(const Mdp& mdp, const std::vector<double>& J)
{
    std::vector<double> out(mdp.size());
    for (std::size_t s = 0; s < mdp.size(); ++s) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : mdp.choices[s]) best = std::min(best, q_value(c, J));
        out[s] = best;
    }
    return out;
}

/// Uniformly random feasible action per state.
inline std::vector<Action> random_policy(const Mdp& mdp, std::uint64_t seed)
{
    CounterStream rng(seed, StreamTag::seeds);
    std::vector<Action> pi(mdp.size());
    for (std::size_t s = 0; s < mdp.size(); ++s)
        pi[s] = mdp.choices[s][static_cast<std::size_t>(rng.below(mdp.choices[s].size()))].action;
    return pi;
}

inline constexpr std::uint64_t kDefaultPolicySeed = 20240611;

struct PolicyIterationOptions {
    int maxiter = 100;
    bool keep_snapshots = false;
    std::optional<std::vector<Action>> pi0;  // random feasible start when empty
    std::uint64_t seed = kDefaultPolicySeed;
};

inline Policy policy_iteration(const Mdp& mdp, const PolicyIterationOptions& opt = {})
{
    if (opt.maxiter < 1) throw ContractViolation("maxiter must be >= 1");
    Policy out;
    out.action = opt.pi0 ? *opt.pi0 : random_policy(mdp, opt.seed);
    for (int k = 0; k < opt.maxiter; ++k) {
        out.J = policy_evaluate(mdp, out.action);
        if (opt.keep_snapshots) out.snapshots.push_back(out.J);
        out.iterations = k + 1;
        auto [next, changed] = policy_improve(mdp, out.J, &out.action);
        if (!changed) {
            out.converged = true;
            return out;
        }
        out.action = std::move(next);
    }
    out.J = policy_evaluate(mdp, out.action);
    return out;
}

struct ValueIterationOptions {
    std::optional<double> eps;  // 1e-8 * max cost when empty
    int maxiter = 100000;
};

/// Gauss-Seidel sweeps over the contiguous Q-node list; J(s) refreshes as
/// soon as the last node of s is evaluated.
inline Policy value_iterate(const ValueGraph& g, const ValueIterationOptions& opt = {})
{
    const std::size_t n = g.states();
    double cmax = 0.0;
    for (const auto& q : g.nodes) cmax = std::max(cmax, std::abs(q.cost));
    const double eps = opt.eps.value_or(1e-8 * std::max(cmax, 1e-300));
    if (!(eps > 0.0)) throw ContractViolation("eps must be positive");

    Policy out;
    out.J.assign(n, 0.0);
    double delta = std::numeric_limits<double>::infinity();
    int sweep = 0;
    while (sweep < opt.maxiter) {
        ++sweep;
        delta = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k = g.begin[s]; k < g.begin[s + 1]; ++k) {
                const QNode& q = g.nodes[k];
                double v = q.cost;
                for (const auto& a : q.nbrs) v += a.w * out.J[static_cast<std::size_t>(a.to)];
                best = std::min(best, v);
            }
            delta = std::max(delta, std::abs(best - out.J[s]));
            out.J[s] = best;
        }
        if (delta <= eps) break;
    }
    out.iterations = sweep;
    out.final_delta = delta;
    out.converged = delta <= eps;
    if (!out.converged)
        throw SolverError("value iteration did not converge in " + std::to_string(sweep) + " sweeps (delta " +
                          std::to_string(delta) + ")");

    out.action.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        double best = std::numeric_limits<double>::infinity();
        double qs[3];
        const std::size_t b = g.begin[s], e = g.begin[s + 1];
        for (std::size_t k = b; k < e; ++k) {
            const QNode& q = g.nodes[k];
            double v = q.cost;
            for (const auto& a : q.nbrs) v += a.w * out.J[static_cast<std::size_t>(a.to)];
            qs[k - b] = v;
            best = std::min(best, v);
        }
        const double tol = kTieTolerance * std::max(1.0, std::abs(best));
        for (std::size_t k = b; k < e; ++k)
            if (qs[k - b] <= best + tol) {
                out.action[s] = g.nodes[k].action;
                break;
            }
    }
    return out;
}

}  // namespace polling

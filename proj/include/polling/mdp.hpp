#pragma once

// Solver-facing MDP representation shared by the SMDP and CTMDP builders.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "model_core.hpp"

namespace polling {

/// p: plain transition probability; w: discounted weight (alpha * p for
/// CTMDP rows, E[P e^{-beta T}] for SMDP rows).
struct Arc {
    int to;
    double p;
    double w;
};

struct Choice {
    Action action;
    double cost = 0.0;
    std::vector<Arc> next;
};

/// Per state, the available choices in the order idle < serve < switch.
/// States with a single choice are not decision states.
struct Mdp {
    std::vector<std::vector<Choice>> choices;

    std::size_t size() const { return choices.size(); }

    const Choice* find(std::size_t s, Action a) const
    {
        for (const auto& c : choices[s])
            if (c.action == a) return &c;
        return nullptr;
    }
};

/// Action chosen at each state of an Mdp.
struct Policy {
    std::vector<Action> action;
    int iterations = 0;
    bool converged = false;
    std::vector<std::vector<double>> snapshots;  // J after each evaluation
    std::vector<double> J;
    double final_delta = 0.0;  // value iteration only
};

/// Decision table over (n1, n2, l1), flat index (n1 (X2+1) + n2) 2 + l1.
class PolicyTable {
public:
    PolicyTable() = default;
    PolicyTable(int X1, int X2) : X1_(X1), X2_(X2), a_(static_cast<std::size_t>(X1 + 1) * (X2 + 1) * 2, Action::idle) {}

    int X1() const noexcept { return X1_; }
    int X2() const noexcept { return X2_; }
    std::size_t size() const noexcept { return a_.size(); }

    static std::size_t index(int n1, int n2, int l1, int X2)
    {
        return (static_cast<std::size_t>(n1) * (X2 + 1) + n2) * 2 + l1;
    }

    Action at(int n1, int n2, int l1) const
    {
        if (n1 < 0 || n2 < 0 || n1 > X1_ || n2 > X2_ || (l1 != 0 && l1 != 1))
            throw std::out_of_range("policy lookup outside table");
        return a_[index(n1, n2, l1, X2_)];
    }
    void set(int n1, int n2, int l1, Action a) { a_[index(n1, n2, l1, X2_)] = a; }

    /// Lookup with queue lengths clamped to the table.
    Action clamped(int n1, int n2, int l1) const
    {
        return at(std::min(n1, X1_), std::min(n2, X2_), l1);
    }

    friend bool operator==(const PolicyTable&, const PolicyTable&) = default;

private:
    int X1_ = 0;
    int X2_ = 0;
    std::vector<Action> a_;
};

/// CSV rows n1,n2,l1,action for one server location.
inline void write_policy_csv(std::ostream& os, const PolicyTable& pt, int l1, bool header = true)
{
    if (header) os << "n1,n2,l1,action\n";
    for (int n1 = 0; n1 <= pt.X1(); ++n1)
        for (int n2 = 0; n2 <= pt.X2(); ++n2) os << n1 << ',' << n2 << ',' << l1 << ',' << to_string(pt.at(n1, n2, l1)) << '\n';
}

/// Both server locations under one header.
inline void write_policy_csv(std::ostream& os, const PolicyTable& pt)
{
    write_policy_csv(os, pt, 0);
    write_policy_csv(os, pt, 1, false);
}

}  // namespace polling

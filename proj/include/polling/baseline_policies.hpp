#pragma once

// Exhaustive service, the priority-queue heuristic and the fluid
// limit-cycle screen.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "json.hpp"
#include "mdp.hpp"
#include "model_core.hpp"

namespace polling {

/// Serve a non-empty current queue, else switch to a non-empty other queue, else idle.
inline Action exhaustive_policy(const PollingState& x)
{
    if (x.l2 != 0) throw ContractViolation("exhaustive policy consulted while busy");
    if (x.queue(x.l1) > 0) return Action::serve;
    if (x.queue(1 - x.l1) > 0) return Action::switch_over;
    return Action::idle;
}

inline PolicyTable exhaustive_table(int X1, int X2)
{
    PolicyTable t(X1, X2);
    for (int n1 = 0; n1 <= X1; ++n1)
        for (int n2 = 0; n2 <= X2; ++n2)
            for (int l1 = 0; l1 <= 1; ++l1) t.set(n1, n2, l1, exhaustive_policy({n1, n2, l1, 0}));
    return t;
}

class HeuristicNotApplicable : public ModelError {
public:
    using ModelError::ModelError;
};

/// Priority-queue heuristic with queue 1 as the priority queue. m2 records
/// whether a queue 2 job has been served during the current visit; it is
/// owned by the caller and updated in place.
inline Action heuristic_policy(const ScenarioConfig& cfg, const PollingState& x, bool& m2)
{
    const double mu1 = 1.0 / cfg.serve1.mean();
    const double mu2 = 1.0 / cfg.serve2.mean();
    const double rho = cfg.lambda1 / mu1 + cfg.lambda2 / mu2;
    if (!(rho < 1.0)) throw HeuristicNotApplicable("heuristic needs rho < 1");
    if (!(cfg.c1 * cfg.lambda1 > cfg.c2 * cfg.lambda2))
        throw HeuristicNotApplicable("heuristic needs queue 1 as priority queue (c1 lambda1 > c2 lambda2)");
    if (x.l2 != 0) throw ContractViolation("heuristic consulted while busy");

    const double ts12 = cfg.switch12.mean();
    const double ts21 = cfg.switch21.mean();
    if (x.l1 == 0) {
        if (x.n1 > 0) return Action::serve;
        if (x.n2 > cfg.lambda2 * ts21) return Action::switch_over;
        return Action::idle;
    }
    if (x.n2 > 0) {
        const double phi = (x.n1 + cfg.lambda1 * ts12) / (x.n1 + mu1 * ts12 + (mu1 - cfg.lambda1) * ts21);
        if (phi <= cfg.c1 * mu1 * rho + cfg.c2 * mu2 * (1.0 - rho)) {
            m2 = true;
            return Action::serve;
        }
        if (!m2) {
            m2 = true;
            return Action::serve;
        }
        m2 = false;
        return Action::switch_over;
    }
    m2 = false;
    if (x.n1 > cfg.lambda1 * ts12) return Action::switch_over;
    return Action::idle;
}

inline bool heuristic_applicable(const ScenarioConfig& cfg)
{
    return cfg.c1 * cfg.lambda1 > cfg.c2 * cfg.lambda2 && stability_report(cfg).stable;
}

// ---------------------------------------------------------------------------
// Fluid limit cycle
// ---------------------------------------------------------------------------

enum class CycleKind { pure_bow_tie, truncated_bow_tie };

inline const char* to_string(CycleKind k)
{
    return k == CycleKind::pure_bow_tie ? "PureBowTie" : "TruncatedBowTie";
}

struct Point2 {
    double x1 = 0.0;
    double x2 = 0.0;
};

struct LimitCycle {
    std::array<Point2, 5> C;  // C1..C5
    double alpha1 = 0.0;
    CycleKind kind = CycleKind::pure_bow_tie;
    double slow_mode_value = 0.0;  // c1 l1 rho - (c1 l1 - c2 l2)(1 - rho2)
    double a = 0.0, b = 0.0, c = 0.0;
    double rho = 0.0, rho1 = 0.0, rho2 = 0.0;
};

class AnalysisError : public ModelError {
public:
    using ModelError::ModelError;
};

/// Corners of the fluid optimal cycle given alpha1 (0 for the pure curve).
inline std::array<Point2, 5> cycle_corners(const ScenarioConfig& cfg, double alpha1)
{
    const double l1 = cfg.lambda1, l2 = cfg.lambda2;
    const double r1 = l1 * cfg.serve1.mean(), r2 = l2 * cfg.serve2.mean();
    const double r = r1 + r2;
    const double s12 = cfg.switch12.mean(), s21 = cfg.switch21.mean();
    const double S = s12 + s21;
    std::array<Point2, 5> C;
    C[0] = {0.0, l2 * (s21 + r1 * S * (1.0 + alpha1 * r2) / (1.0 - r))};
    C[1] = {0.0, l2 * (s21 + S * (alpha1 * (1.0 - r1) * (1.0 - r2) + r1) / (1.0 - r))};
    C[2] = {l1 * s12, l2 * S * ((1.0 + alpha1 * (1.0 - r1)) * (1.0 - r2) / (1.0 - r))};
    C[3] = {l1 * (s12 + r2 * S * (1.0 + alpha1 * (1.0 - r1)) / (1.0 - r)), 0.0};
    C[4] = {l1 * S * ((1.0 + alpha1 * r2) * (1.0 - r2) / (1.0 - r)), l2 * s21};
    return C;
}

inline LimitCycle analyze_limit_cycle(const ScenarioConfig& cfg)
{
    const StabilityReport st = stability_report(cfg);
    if (!st.stable) throw UnstableScenario("limit cycle needs rho < 1");
    LimitCycle lc;
    lc.rho = st.rho;
    lc.rho1 = st.rho1;
    lc.rho2 = st.rho2;
    const double w1 = cfg.c1 * cfg.lambda1, w2 = cfg.c2 * cfg.lambda2;
    const double r1 = st.rho1, r2 = st.rho2;
    lc.a = w1 * r2 * r2 * (1.0 - r1) + w2 * (1.0 - r1) * (1.0 - r1) * (1.0 - r2);
    lc.b = 2.0 * w1 * r2 * r2 + 2.0 * w2 * (1.0 - r1) * (1.0 - r2);
    lc.c = w1 * st.rho - (w1 - w2) * (1.0 - r2);
    lc.slow_mode_value = lc.c;

    if (!(lc.slow_mode_value < 0.0)) {
        lc.kind = CycleKind::pure_bow_tie;
        lc.alpha1 = 0.0;
    } else {
        lc.kind = CycleKind::truncated_bow_tie;
        const double disc = lc.b * lc.b - 4.0 * lc.a * lc.c;
        const double re_sqrt = disc >= 0.0 ? std::sqrt(disc) : 0.0;
        double alpha = 0.0;
        bool found = false;
        for (int n = 1; n <= 2; ++n) {
            const double root = (-lc.b + (n == 1 ? -1.0 : 1.0) * re_sqrt) / (2.0 * lc.a);
            if (root > 0.0) {
                alpha += root;
                found = true;
            }
        }
        if (!found) throw AnalysisError("no positive alpha1 root of the slow-mode quadratic");
        lc.alpha1 = alpha;
    }
    lc.C = cycle_corners(cfg, lc.alpha1);
    return lc;
}

/// ceil(margin * largest corner coordinate) per queue, at least 1.
inline std::pair<int, int> truncation_bounds(const LimitCycle& lc, double margin = 4.0)
{
    double m1 = 0.0, m2 = 0.0;
    for (const auto& p : lc.C) {
        m1 = std::max(m1, p.x1);
        m2 = std::max(m2, p.x2);
    }
    auto bound = [&](double m) { return std::max(1, static_cast<int>(std::ceil(margin * m - 1e-12))); };
    return {bound(m1), bound(m2)};
}

inline nlohmann::json limit_cycle_report(const LimitCycle& lc, double margin = 4.0)
{
    nlohmann::json j;
    j["kind"] = to_string(lc.kind);
    j["alpha1"] = lc.alpha1;
    j["slow_mode_value"] = lc.slow_mode_value;
    j["rho"] = lc.rho;
    for (int i = 0; i < 5; ++i) j["C" + std::to_string(i + 1)] = {lc.C[static_cast<std::size_t>(i)].x1, lc.C[static_cast<std::size_t>(i)].x2};
    const auto [X1, X2] = truncation_bounds(lc, margin);
    j["recommended"] = {{"X1", X1}, {"X2", X2}};
    return j;
}

}  // namespace polling

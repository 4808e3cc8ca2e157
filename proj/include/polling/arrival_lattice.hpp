#pragma once

// Truncated bi-variate Poisson birth process counting arrivals of the two
// classes during one action interval, its transient solution by explicit
// Euler steps, and the duration-weighted integrals built on top of it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "model_core.hpp"

namespace polling {

/// Raised when a mesh does not reach far enough into a duration's tail.
class CoverageError : public ModelError {
public:
    CoverageError(const std::string& what, double tail) : ModelError(what), tail_mass(tail) {}
    double tail_mass;
};

/// Raised for an explicit Euler step that is too large.
class StabilityError : public ModelError {
public:
    using ModelError::ModelError;
};

struct LatticeEntry {
    int col;
    double value;
};

/// Sparse generator on the flattened (n_lambda1, n_lambda2) lattice; each
/// row stores its diagonal and at most two birth targets.
class GeneratorMatrix {
public:
    GeneratorMatrix(int N1, int N2, TruncationMode mode) : N1_(N1), N2_(N2), mode_(mode)
    {
        if (N1 < 1 || N2 < 1) throw ModelError("lattice needs N1, N2 >= 1");
        const std::size_t n = size();
        diag_.assign(n, 0.0);
        off_.assign(n, {});
    }

    int N1() const noexcept { return N1_; }
    int N2() const noexcept { return N2_; }
    TruncationMode mode() const noexcept { return mode_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(N1_ + 1) * static_cast<std::size_t>(N2_ + 1); }

    int index(int n1, int n2) const noexcept { return n1 * (N2_ + 1) + n2; }
    int n1_of(std::size_t idx) const noexcept { return static_cast<int>(idx) / (N2_ + 1); }
    int n2_of(std::size_t idx) const noexcept { return static_cast<int>(idx) % (N2_ + 1); }

    double diagonal(std::size_t row) const { return diag_[row]; }
    const std::vector<LatticeEntry>& births(std::size_t row) const { return off_[row]; }

    void set_row(std::size_t row, double diag, std::vector<LatticeEntry> births)
    {
        diag_[row] = diag;
        off_[row] = std::move(births);
    }

    /// All stored entries of one row, diagonal first.
    std::vector<LatticeEntry> row(std::size_t r) const
    {
        std::vector<LatticeEntry> out;
        out.push_back({static_cast<int>(r), diag_[r]});
        out.insert(out.end(), off_[r].begin(), off_[r].end());
        return out;
    }

    double row_sum(std::size_t r) const
    {
        double s = diag_[r];
        for (const auto& e : off_[r]) s += e.value;
        return s;
    }

    /// Largest total outflow rate, max_i |Q_ii|.
    double gamma_max() const
    {
        double g = 0.0;
        for (double d : diag_) g = std::max(g, -d);
        return g;
    }

    /// out = phi Q
    void left_multiply(const std::vector<double>& phi, std::vector<double>& out) const
    {
        out.assign(phi.size(), 0.0);
        for (std::size_t i = 0; i < phi.size(); ++i) {
            const double p = phi[i];
            if (p == 0.0) continue;
            out[i] += p * diag_[i];
            for (const auto& e : off_[i]) out[static_cast<std::size_t>(e.col)] += p * e.value;
        }
    }

private:
    int N1_;
    int N2_;
    TruncationMode mode_;
    std::vector<double> diag_;
    std::vector<std::vector<LatticeEntry>> off_;
};

inline std::pair<double, double> lattice_rates(const ScenarioConfig& cfg, int n1, int n2)
{
    if (cfg.rate_fn) {
        auto r = cfg.rate_fn(n1, n2);
        if (!(r.first >= 0.0) || !(r.second >= 0.0))
            throw ModelError("rate_fn returned a negative rate at (" + std::to_string(n1) + ", " +
                             std::to_string(n2) + ")");
        return r;
    }
    return {cfg.lambda1, cfg.lambda2};
}

inline GeneratorMatrix build_generator(const ScenarioConfig& cfg)
{
    GeneratorMatrix Q(cfg.N1, cfg.N2, cfg.truncation_mode);
    const bool absorbing = cfg.truncation_mode == TruncationMode::absorbing;
    for (int n1 = 0; n1 <= cfg.N1; ++n1) {
        for (int n2 = 0; n2 <= cfg.N2; ++n2) {
            const auto [l1, l2] = lattice_rates(cfg, n1, n2);
            const bool grow1 = n1 < cfg.N1;
            const bool grow2 = n2 < cfg.N2;
            std::vector<LatticeEntry> births;
            if (grow1 && l1 > 0.0) births.push_back({Q.index(n1 + 1, n2), l1});
            if (grow2 && l2 > 0.0) births.push_back({Q.index(n1, n2 + 1), l2});
            double diag;
            if (absorbing) diag = -((grow1 ? l1 : 0.0) + (grow2 ? l2 : 0.0));
            else diag = -(l1 + l2);
            Q.set_row(static_cast<std::size_t>(Q.index(n1, n2)), diag == 0.0 ? 0.0 : diag, std::move(births));
        }
    }
    return Q;
}

// ---------------------------------------------------------------------------
// Forward Euler
// ---------------------------------------------------------------------------

inline constexpr double kEulerStabilityFactor = 0.1;
inline constexpr double kNegativeClamp = -1e-12;
inline constexpr double kTailProbability = 1e-9;

/// Largest admissible explicit step for this generator.
inline double max_stable_dt(const GeneratorMatrix& Q)
{
    const double g = Q.gamma_max();
    return g > 0.0 ? kEulerStabilityFactor / g : std::numeric_limits<double>::infinity();
}

/// Step used when none is supplied: min(1e-3/gamma_max, t_end/2000).
inline double default_dt(const GeneratorMatrix& Q, double t_end)
{
    double dt = t_end > 0.0 ? t_end / 2000.0 : 1e-3;
    const double g = Q.gamma_max();
    if (g > 0.0) dt = std::min(dt, 1e-3 / g);
    return dt;
}

/// Incremental integrator of d phi/dt = phi Q from phi(0) = e_0.
class EulerStepper {
public:
    EulerStepper(const GeneratorMatrix& Q, double dt) : Q_(&Q), dt_(dt), phi_(Q.size(), 0.0)
    {
        if (!(dt > 0.0)) throw ModelError("Euler step must be positive");
        if (dt > max_stable_dt(Q) * (1.0 + 1e-12))
            throw StabilityError("Euler step " + std::to_string(dt) + " exceeds 0.1/gamma_max = " +
                                 std::to_string(max_stable_dt(Q)));
        phi_[0] = 1.0;
    }

    const std::vector<double>& phi() const noexcept { return phi_; }
    double time() const noexcept { return t_; }
    double dt() const noexcept { return dt_; }

    /// Advances by h <= dt (defaults to dt).
    void step(double h = -1.0)
    {
        if (h < 0.0) h = dt_;
        Q_->left_multiply(phi_, scratch_);
        for (std::size_t i = 0; i < phi_.size(); ++i) {
            double v = phi_[i] + h * scratch_[i];
            if (v < 0.0) {
                if (v < kNegativeClamp)
                    throw ModelError("negative transient probability " + std::to_string(v) + " at index " +
                                     std::to_string(i));
                v = 0.0;
            }
            phi_[i] = v;
        }
        t_ += h;
    }

private:
    const GeneratorMatrix* Q_;
    double dt_;
    double t_ = 0.0;
    std::vector<double> phi_;
    std::vector<double> scratch_;
};

struct TransientMesh {
    int N1 = 0;
    int N2 = 0;
    TruncationMode mode = TruncationMode::absorbing;
    std::vector<double> times;
    std::vector<std::vector<double>> phi;

    double t_end() const { return times.empty() ? 0.0 : times.back(); }

    /// Linear interpolation between mesh points.
    std::vector<double> at(double t) const
    {
        if (t <= 0.0) return phi.front();
        if (t >= times.back()) {
            if (t > times.back() * (1.0 + 1e-12) + 1e-15)
                throw CoverageError("mesh ends at " + std::to_string(times.back()) + " before t = " + std::to_string(t), 1.0);
            return phi.back();
        }
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
        const double w = (t - times[k]) / (times[k + 1] - times[k]);
        std::vector<double> out(phi[k].size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - w) * phi[k][i] + w * phi[k + 1][i];
        return out;
    }
};

/// Stores phi at every step on [0, t_end]; the last step is shortened to hit t_end.
inline TransientMesh transient_mesh(const GeneratorMatrix& Q, double t_end, double dt)
{
    if (!(t_end >= 0.0)) throw ModelError("t_end must be non-negative");
    EulerStepper st(Q, dt);
    TransientMesh m;
    m.N1 = Q.N1();
    m.N2 = Q.N2();
    m.mode = Q.mode();
    m.times.push_back(0.0);
    m.phi.push_back(st.phi());
    const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
    for (std::size_t k = 0; k < steps; ++k) {
        const double h = std::min(dt, t_end - st.time());
        if (h <= 0.0) break;
        st.step(h);
        m.times.push_back(st.time());
        m.phi.push_back(st.phi());
    }
    return m;
}

inline void write_mesh_csv(std::ostream& os, const TransientMesh& m)
{
    os << "t,idx,n1,n2,phi\n";
    os.precision(17);
    for (std::size_t k = 0; k < m.times.size(); ++k)
        for (std::size_t i = 0; i < m.phi[k].size(); ++i)
            os << m.times[k] << ',' << i << ',' << static_cast<int>(i) / (m.N2 + 1) << ','
               << static_cast<int>(i) % (m.N2 + 1) << ',' << m.phi[k][i] << '\n';
}

// ---------------------------------------------------------------------------
// Duration-weighted integrals
// ---------------------------------------------------------------------------

/// Cutoff time where the duration's upper tail drops below 1e-9.
inline double tail_cutoff(const DurationDist& f)
{
    return f.quantile(1.0 - kTailProbability);
}

/// E[phi(T_e) e^{-beta T_e}] over the stored mesh (beta omitted: undiscounted).
/// Integrates against cdf increments, trapezoid in phi.
inline std::vector<double> expected_arrival_probs(const TransientMesh& mesh, const DurationDist& f,
                                                  std::optional<double> beta = std::nullopt)
{
    const double b = beta.value_or(0.0);
    if (f.kind() == DistKind::deterministic) {
        std::vector<double> v = mesh.at(f.first());
        const double d = std::exp(-b * f.first());
        for (double& x : v) x *= d;
        return v;
    }
    const double need = tail_cutoff(f);
    if (mesh.t_end() < need * (1.0 - 1e-9)) {
        const double tail = 1.0 - f.cdf(mesh.t_end());
        throw CoverageError("mesh ends at " + std::to_string(mesh.t_end()) + " but the duration needs " +
                                std::to_string(need) + " (truncated tail mass " + std::to_string(tail) + ")",
                            tail);
    }
    std::vector<double> out(mesh.phi.front().size(), 0.0);
    double F0 = f.cdf(0.0);
    for (std::size_t k = 0; k + 1 < mesh.times.size(); ++k) {
        const double F1 = f.cdf(mesh.times[k + 1]);
        const double dF = F1 - F0;
        F0 = F1;
        if (dF <= 0.0) continue;
        const double w0 = 0.5 * dF * std::exp(-b * mesh.times[k]);
        const double w1 = 0.5 * dF * std::exp(-b * mesh.times[k + 1]);
        const auto& p0 = mesh.phi[k];
        const auto& p1 = mesh.phi[k + 1];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w0 * p0[i] + w1 * p1[i];
    }
    return out;
}

/// E[(1 - e^{-beta T})/beta]: discounted time spent by one existing customer.
inline double holding_cost_existing(const DurationDist& f, double beta)
{
    if (!(beta > 0.0)) throw ModelError("beta must be positive");
    return (1.0 - f.laplace(beta)) / beta;
}

/// Discounted holding cost of the customers arriving during the interval,
/// closed form for constant rates: (c1 l1 + c2 l2) E[1 - e^{-bT}(1 + bT)] / b^2.
inline double homogeneous_arrival_cost(const DurationDist& f, double beta, double weighted_rate)
{
    if (weighted_rate == 0.0) return 0.0;
    const double inner = 1.0 - f.laplace(beta) - beta * f.laplace_t(beta);
    return weighted_rate * std::max(inner, 0.0) / (beta * beta);
}

/// Holding cost of interval arrivals. Constant rates use the closed form;
/// rate_fn goes through the mesh, integrating
/// Phi(t) = int_0^t e^{-beta s} sum_j phi_j(s) (c1 n1_j + c2 n2_j) ds against f.
inline double holding_cost_arrivals(const TransientMesh& mesh, const DurationDist& f, const ScenarioConfig& cfg)
{
    if (cfg.homogeneous()) return homogeneous_arrival_cost(f, cfg.beta, cfg.c1 * cfg.lambda1 + cfg.c2 * cfg.lambda2);

    const int stride = mesh.N2 + 1;
    auto h = [&](const std::vector<double>& p) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] == 0.0) continue;
            s += p[i] * (cfg.c1 * (static_cast<int>(i) / stride) + cfg.c2 * (static_cast<int>(i) % stride));
        }
        return s;
    };
    const bool det = f.kind() == DistKind::deterministic;
    const double T = det ? f.first() : tail_cutoff(f);
    if (mesh.t_end() < T * (1.0 - 1e-9))
        throw CoverageError("mesh too short for arrival cost", det ? 1.0 : 1.0 - f.cdf(mesh.t_end()));

    double Phi = 0.0;
    double total = 0.0;
    double g_prev = h(mesh.phi[0]);
    double F0 = f.cdf(0.0);
    for (std::size_t k = 0; k + 1 < mesh.times.size(); ++k) {
        const double t0 = mesh.times[k];
        const double t1 = mesh.times[k + 1];
        if (det && t0 >= T) break;
        const double g1 = h(mesh.phi[k + 1]);
        const double tt = det ? std::min(t1, T) : t1;
        const double gt = det && t1 > T ? g_prev + (g1 - g_prev) * (T - t0) / (t1 - t0) : g1;
        const double Phi_next =
            Phi + 0.5 * (tt - t0) * (std::exp(-cfg.beta * t0) * g_prev + std::exp(-cfg.beta * tt) * gt);
        if (!det) {
            const double F1 = f.cdf(t1);
            total += 0.5 * (Phi + Phi_next) * (F1 - F0);
            F0 = F1;
        }
        Phi = Phi_next;
        g_prev = g1;
    }
    return det ? Phi : total;
}

// ---------------------------------------------------------------------------
// Per-event summary without storing the mesh
// ---------------------------------------------------------------------------

struct ArrivalSummary {
    int N1 = 0;
    int N2 = 0;
    std::vector<double> P;       // E[phi(T)]
    std::vector<double> P_beta;  // E[phi(T) e^{-beta T}]
    double C_H = 0.0;            // per unit of c1 n1 + c2 n2
    double C_I = 0.0;            // arrivals during the interval
    double tail_mass = 0.0;      // duration mass beyond the integration cutoff
    double t_end = 0.0;
    double dt = 0.0;
};

struct SummaryOptions {
    std::optional<double> dt;        // default_dt when empty
    std::optional<double> t_end;     // tail_cutoff when empty
};

/// Streams the Euler solution once and accumulates every integral an
/// action interval with duration law f needs.
inline ArrivalSummary summarize_event(const ScenarioConfig& cfg, const DurationDist& f, const SummaryOptions& opt = {})
{
    check_parameters(cfg);
    const GeneratorMatrix Q = build_generator(cfg);
    ArrivalSummary s;
    s.N1 = cfg.N1;
    s.N2 = cfg.N2;
    s.C_H = holding_cost_existing(f, cfg.beta);
    const bool det = f.kind() == DistKind::deterministic;
    const double t_end = det ? f.first() : opt.t_end.value_or(tail_cutoff(f));
    s.t_end = t_end;
    s.tail_mass = det ? 0.0 : 1.0 - f.cdf(t_end);
    double dt = opt.dt.value_or(default_dt(Q, t_end));
    const std::size_t n = Q.size();
    s.P.assign(n, 0.0);
    s.P_beta.assign(n, 0.0);

    const bool inhom = !cfg.homogeneous();
    const int stride = cfg.N2 + 1;
    auto h = [&](const std::vector<double>& p) {
        double v = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] != 0.0) v += p[i] * (cfg.c1 * (static_cast<int>(i) / stride) + cfg.c2 * (static_cast<int>(i) % stride));
        return v;
    };

    EulerStepper st(Q, dt);
    s.dt = dt;
    if (t_end == 0.0) {
        s.P = st.phi();
        s.P_beta = st.phi();
        s.C_I = 0.0;
        return s;
    }
    const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
    std::vector<double> prev = st.phi();
    double F0 = det ? 0.0 : f.cdf(0.0);
    double Phi = 0.0;
    double g_prev = inhom ? h(prev) : 0.0;
    double CI = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t0 = st.time();
        const double hstep = std::min(dt, t_end - t0);
        if (hstep <= 0.0) break;
        st.step(hstep);
        const double t1 = st.time();
        const auto& cur = st.phi();
        double Phi_next = Phi;
        double g1 = 0.0;
        if (inhom) {
            g1 = h(cur);
            Phi_next += 0.5 * hstep * (std::exp(-cfg.beta * t0) * g_prev + std::exp(-cfg.beta * t1) * g1);
        }
        if (!det) {
            const double F1 = f.cdf(t1);
            const double dF = F1 - F0;
            F0 = F1;
            if (dF > 0.0) {
                const double e0 = std::exp(-cfg.beta * t0);
                const double e1 = std::exp(-cfg.beta * t1);
                for (std::size_t i = 0; i < n; ++i) {
                    const double a = 0.5 * dF * prev[i];
                    const double b = 0.5 * dF * cur[i];
                    s.P[i] += a + b;
                    s.P_beta[i] += a * e0 + b * e1;
                }
                if (inhom) CI += 0.5 * (Phi + Phi_next) * dF;
            }
        }
        Phi = Phi_next;
        g_prev = g1;
        prev = cur;
    }
    if (det) {
        const double d = std::exp(-cfg.beta * t_end);
        for (std::size_t i = 0; i < n; ++i) {
            s.P[i] = prev[i];
            s.P_beta[i] = prev[i] * d;
        }
        CI = Phi;
    }
    s.C_I = inhom ? CI : homogeneous_arrival_cost(f, cfg.beta, cfg.c1 * cfg.lambda1 + cfg.c2 * cfg.lambda2);
    return s;
}

// ---------------------------------------------------------------------------
// Lattice restriction helpers
// ---------------------------------------------------------------------------

/// Folds a vector on a larger (M1, M2) lattice into (N1, N2): cells beyond a
/// bound accumulate on that bound.
inline std::vector<double> pool_lattice(const std::vector<double>& big, int M1, int M2, int N1, int N2)
{
    if (N1 > M1 || N2 > M2) throw ContractViolation("pool target larger than source");
    std::vector<double> out(static_cast<std::size_t>(N1 + 1) * (N2 + 1), 0.0);
    for (int a = 0; a <= M1; ++a)
        for (int b = 0; b <= M2; ++b)
            out[static_cast<std::size_t>(std::min(a, N1) * (N2 + 1) + std::min(b, N2))] +=
                big[static_cast<std::size_t>(a * (M2 + 1) + b)];
    return out;
}

/// Restriction of a larger lattice vector to cells with n_i <= N_i.
inline std::vector<double> snapshot_lattice(const std::vector<double>& big, int M1, int M2, int N1, int N2)
{
    if (N1 > M1 || N2 > M2) throw ContractViolation("snapshot target larger than source");
    std::vector<double> out(static_cast<std::size_t>(N1 + 1) * (N2 + 1), 0.0);
    for (int a = 0; a <= N1; ++a)
        for (int b = 0; b <= N2; ++b)
            out[static_cast<std::size_t>(a * (N2 + 1) + b)] = big[static_cast<std::size_t>(a * (M2 + 1) + b)];
    return out;
}

}  // namespace polling

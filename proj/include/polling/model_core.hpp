#pragma once

// Domain types shared by every part of the polling library: duration
// distributions, scenario parameters, mixed-radix state indexing and the
// feasible-action rule of the non-preemptive server.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "json.hpp"

namespace polling {

/// Raised when a model cannot be built from the given inputs.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Raised by validate_scenario for rho >= 1.
class UnstableScenario : public ModelError {
public:
    using ModelError::ModelError;
};

// ---------------------------------------------------------------------------
// Duration distributions
// ---------------------------------------------------------------------------

enum class DistKind { exponential, gamma, deterministic };

/// Service or switch-over duration law. Gamma uses the shape/scale
/// convention (mean k*theta, variance k*theta^2).
class DurationDist {
public:
    static DurationDist exponential(double rate)
    {
        if (!(rate > 0.0) || !std::isfinite(rate))
            throw ModelError("exponential rate must be positive and finite");
        return DurationDist(DistKind::exponential, rate, 0.0);
    }

    static DurationDist gamma(double shape, double scale)
    {
        if (!(shape > 0.0) || !(scale > 0.0) || !std::isfinite(shape) || !std::isfinite(scale))
            throw ModelError("gamma shape and scale must be positive and finite");
        return DurationDist(DistKind::gamma, shape, scale);
    }

    static DurationDist deterministic(double value)
    {
        if (!(value >= 0.0) || !std::isfinite(value))
            throw ModelError("deterministic duration must be finite and non-negative");
        return DurationDist(DistKind::deterministic, value, 0.0);
    }

    DistKind kind() const noexcept { return kind_; }
    bool is_exponential() const noexcept { return kind_ == DistKind::exponential; }

    /// Rate for Exponential, shape for Gamma, value for Deterministic.
    double first() const noexcept { return a_; }
    /// Scale for Gamma, unused otherwise.
    double second() const noexcept { return b_; }

    double mean() const noexcept
    {
        switch (kind_) {
        case DistKind::exponential: return 1.0 / a_;
        case DistKind::gamma: return a_ * b_;
        case DistKind::deterministic: return a_;
        }
        return 0.0;
    }

    double variance() const noexcept
    {
        switch (kind_) {
        case DistKind::exponential: return 1.0 / (a_ * a_);
        case DistKind::gamma: return a_ * b_ * b_;
        case DistKind::deterministic: return 0.0;
        }
        return 0.0;
    }

    /// Density. Deterministic laws have no density; callers must treat them
    /// as a point mass (see cdf()).
    double pdf(double t) const
    {
        if (t < 0.0) return 0.0;
        switch (kind_) {
        case DistKind::exponential: return a_ * std::exp(-a_ * t);
        case DistKind::gamma:
            if (t == 0.0) {
                if (a_ < 1.0) return std::numeric_limits<double>::infinity();
                return a_ == 1.0 ? 1.0 / b_ : 0.0;
            }
            return boost::math::gamma_p_derivative(a_, t / b_) / b_;
        case DistKind::deterministic:
            throw ContractViolation("deterministic duration has no density");
        }
        return 0.0;
    }

    double cdf(double t) const
    {
        if (t < 0.0) return 0.0;
        switch (kind_) {
        case DistKind::exponential: return -std::expm1(-a_ * t);
        case DistKind::gamma: return boost::math::gamma_p(a_, t / b_);
        case DistKind::deterministic: return t >= a_ ? 1.0 : 0.0;
        }
        return 0.0;
    }

    /// Inverse cdf on [0, 1); quantile(0) is the lower end of the support.
    double quantile(double p) const
    {
        if (!(p >= 0.0 && p < 1.0)) throw ContractViolation("quantile needs p in [0,1)");
        switch (kind_) {
        case DistKind::exponential: return -std::log1p(-p) / a_;
        case DistKind::gamma: return p == 0.0 ? 0.0 : b_ * boost::math::gamma_p_inv(a_, p);
        case DistKind::deterministic: return a_;
        }
        return 0.0;
    }

    /// E[exp(-beta T)].
    double laplace(double beta) const noexcept
    {
        switch (kind_) {
        case DistKind::exponential: return a_ / (a_ + beta);
        case DistKind::gamma: return std::pow(1.0 + beta * b_, -a_);
        case DistKind::deterministic: return std::exp(-beta * a_);
        }
        return 0.0;
    }

    /// E[T exp(-beta T)].
    double laplace_t(double beta) const noexcept
    {
        switch (kind_) {
        case DistKind::exponential: return a_ / ((a_ + beta) * (a_ + beta));
        case DistKind::gamma: return a_ * b_ * std::pow(1.0 + beta * b_, -a_ - 1.0);
        case DistKind::deterministic: return a_ * std::exp(-beta * a_);
        }
        return 0.0;
    }

    /// Draw by inversion of a uniform variate u in [0,1).
    double sample(double u) const { return quantile(u); }

    friend bool operator==(const DurationDist&, const DurationDist&) = default;

private:
    DurationDist(DistKind k, double a, double b) : kind_(k), a_(a), b_(b) {}

    DistKind kind_ = DistKind::deterministic;
    double a_ = 0.0;
    double b_ = 0.0;
};

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

enum class TruncationMode { absorbing, unassigned_outflow };

/// Arrival rates as a function of the arrival counts (n_lambda1, n_lambda2)
/// accumulated since the start of a decision interval.
using RateFn = std::function<std::pair<double, double>(int, int)>;

struct ScenarioConfig {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    DurationDist serve1 = DurationDist::exponential(1.0);
    DurationDist serve2 = DurationDist::exponential(1.0);
    DurationDist switch12 = DurationDist::exponential(1.0);
    DurationDist switch21 = DurationDist::exponential(1.0);
    double c1 = 1.0;
    double c2 = 1.0;
    double K12 = 0.0;
    double K21 = 0.0;
    double beta = 0.05;
    int X1 = 1;
    int X2 = 1;
    int N1 = 1;
    int N2 = 1;
    TruncationMode truncation_mode = TruncationMode::absorbing;
    RateFn rate_fn;  // empty for homogeneous arrivals

    const DurationDist& serve(int queue) const { return queue == 0 ? serve1 : serve2; }
    const DurationDist& switch_from(int queue) const { return queue == 0 ? switch12 : switch21; }
    double lambda(int queue) const { return queue == 0 ? lambda1 : lambda2; }
    double cost_rate(int queue) const { return queue == 0 ? c1 : c2; }
    double switch_cost(int from) const { return from == 0 ? K12 : K21; }
    bool homogeneous() const { return !static_cast<bool>(rate_fn); }

    /// c1 n1 + c2 n2
    double holding_rate(int n1, int n2) const { return c1 * n1 + c2 * n2; }
};

struct StabilityReport {
    double rho1 = 0.0;
    double rho2 = 0.0;
    double rho = 0.0;
    bool stable = false;
    std::optional<int> priority_queue;  // 0-based
};

/// Parameter checks shared by every builder (everything except stability).
inline void check_parameters(const ScenarioConfig& cfg)
{
    if (!(cfg.lambda1 >= 0.0) || !(cfg.lambda2 >= 0.0))
        throw ModelError("arrival rates must be non-negative");
    if (!(cfg.beta > 0.0)) throw ModelError("discount rate beta must be positive");
    if (cfg.X1 < 1 || cfg.X2 < 1) throw ModelError("queue capacities X1, X2 must be >= 1");
    if (cfg.N1 < 1 || cfg.N2 < 1) throw ModelError("arrival truncation N1, N2 must be >= 1");
    if (!(cfg.c1 >= 0.0) || !(cfg.c2 >= 0.0)) throw ModelError("holding costs must be non-negative");
    if (!(cfg.K12 >= 0.0) || !(cfg.K21 >= 0.0)) throw ModelError("switching costs must be non-negative");
}

inline StabilityReport stability_report(const ScenarioConfig& cfg)
{
    StabilityReport r;
    r.rho1 = cfg.lambda1 * cfg.serve1.mean();
    r.rho2 = cfg.lambda2 * cfg.serve2.mean();
    r.rho = r.rho1 + r.rho2;
    r.stable = r.rho < 1.0;
    const double w1 = cfg.c1 * cfg.lambda1;
    const double w2 = cfg.c2 * cfg.lambda2;
    if (w1 > w2) r.priority_queue = 0;
    else if (w2 > w1) r.priority_queue = 1;
    return r;
}

/// Checks parameters and the necessary stability condition rho1 + rho2 < 1.
inline StabilityReport validate_scenario(const ScenarioConfig& cfg)
{
    check_parameters(cfg);
    StabilityReport r = stability_report(cfg);
    if (!r.stable) {
        throw UnstableScenario("unstable scenario: rho = " + std::to_string(r.rho) +
                               " (rho1 = " + std::to_string(r.rho1) +
                               ", rho2 = " + std::to_string(r.rho2) + ") must be < 1");
    }
    return r;
}

// ---------------------------------------------------------------------------
// Mixed-radix indexing
// ---------------------------------------------------------------------------

/// Flattens coordinates 0 <= c_j <= dims_j into [0, prod(dims_j + 1)).
class StateIndexer {
public:
    StateIndexer() = default;

    explicit StateIndexer(std::vector<int> dims) : dims_(std::move(dims)), strides_(dims_.size())
    {
        std::size_t stride = 1;
        for (std::size_t j = dims_.size(); j-- > 0;) {
            if (dims_[j] < 0) throw ContractViolation("StateIndexer dims must be >= 0");
            strides_[j] = stride;
            stride *= static_cast<std::size_t>(dims_[j]) + 1;
        }
        size_ = stride;
    }

    std::size_t size() const noexcept { return size_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    const std::vector<int>& dims() const noexcept { return dims_; }

    std::size_t flatten(std::span<const int> coords) const
    {
        if (coords.size() != dims_.size()) throw std::out_of_range("coordinate rank mismatch");
        std::size_t idx = 0;
        for (std::size_t j = 0; j < dims_.size(); ++j) {
            if (coords[j] < 0 || coords[j] > dims_[j])
                throw std::out_of_range("coordinate " + std::to_string(j) + " = " +
                                        std::to_string(coords[j]) + " outside [0, " +
                                        std::to_string(dims_[j]) + "]");
            idx += static_cast<std::size_t>(coords[j]) * strides_[j];
        }
        return idx;
    }

    std::size_t flatten(std::initializer_list<int> coords) const
    {
        return flatten(std::span<const int>(coords.begin(), coords.size()));
    }

    std::vector<int> unflatten(std::size_t index) const
    {
        if (index >= size_) throw std::out_of_range("flat index out of range");
        std::vector<int> out(dims_.size());
        for (std::size_t j = 0; j < dims_.size(); ++j) {
            out[j] = static_cast<int>(index / strides_[j]);
            index %= strides_[j];
        }
        return out;
    }

private:
    std::vector<int> dims_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 1;
};

/// mixed_radix_flatten as a free function.
inline std::size_t mixed_radix_flatten(const StateIndexer& ix, std::span<const int> coords)
{
    return ix.flatten(coords);
}

inline std::vector<int> mixed_radix_unflatten(const StateIndexer& ix, std::size_t index)
{
    return ix.unflatten(index);
}

// ---------------------------------------------------------------------------
// Polling state and actions
// ---------------------------------------------------------------------------

/// Server activity; the numeric values double as l2.
enum class Action : int { idle = 0, serve = 1, switch_over = 2 };

inline constexpr std::array<Action, 3> kActionOrder{Action::idle, Action::serve, Action::switch_over};

inline const char* to_string(Action a)
{
    switch (a) {
    case Action::idle: return "idle";
    case Action::serve: return "serve";
    case Action::switch_over: return "switch";
    }
    return "?";
}

inline Action action_from_string(const std::string& s)
{
    if (s == "idle") return Action::idle;
    if (s == "serve") return Action::serve;
    if (s == "switch") return Action::switch_over;
    throw std::invalid_argument("unknown action '" + s + "'");
}

/// l1 is the server location (0 = queue 1, 1 = queue 2); l2 its activity.
struct PollingState {
    int n1 = 0;
    int n2 = 0;
    int l1 = 0;
    int l2 = 0;

    int queue(int q) const { return q == 0 ? n1 : n2; }
    int& queue(int q) { return q == 0 ? n1 : n2; }

    friend bool operator==(const PollingState&, const PollingState&) = default;
};

class ActionSet {
public:
    constexpr void insert(Action a) noexcept { bits_ |= 1u << static_cast<int>(a); }
    constexpr bool contains(Action a) const noexcept { return (bits_ >> static_cast<int>(a)) & 1u; }
    constexpr std::size_t size() const noexcept
    {
        return ((bits_ & 1u) ? 1 : 0) + ((bits_ & 2u) ? 1 : 0) + ((bits_ & 4u) ? 1 : 0);
    }
    constexpr bool empty() const noexcept { return bits_ == 0; }

    /// Members in the fixed order idle < serve < switch.
    std::vector<Action> ordered() const
    {
        std::vector<Action> out;
        for (Action a : kActionOrder)
            if (contains(a)) out.push_back(a);
        return out;
    }

    friend bool operator==(const ActionSet&, const ActionSet&) = default;

private:
    unsigned bits_ = 0;
};

inline ActionSet feasible_actions(int n1, int n2, int l1)
{
    ActionSet s;
    s.insert(Action::idle);
    s.insert(Action::switch_over);
    if ((l1 == 0 ? n1 : n2) > 0) s.insert(Action::serve);
    return s;
}

/// Actions available to a free server (l2 = 0).
inline ActionSet feasible_actions(const PollingState& x)
{
    if (x.l2 != 0) throw ContractViolation("feasible_actions consulted while the server is busy (l2 != 0)");
    if (x.l1 != 0 && x.l1 != 1) throw ContractViolation("server location must be 0 or 1");
    return feasible_actions(x.n1, x.n2, x.l1);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const DurationDist& d)
{
    switch (d.kind()) {
    case DistKind::exponential: j = {{"kind", "exponential"}, {"rate", d.first()}}; break;
    case DistKind::gamma: j = {{"kind", "gamma"}, {"shape", d.first()}, {"scale", d.second()}}; break;
    case DistKind::deterministic: j = {{"kind", "deterministic"}, {"value", d.first()}}; break;
    }
}

inline DurationDist duration_from_json(const nlohmann::json& j)
{
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "exponential") return DurationDist::exponential(j.at("rate").get<double>());
    if (kind == "gamma") return DurationDist::gamma(j.at("shape").get<double>(), j.at("scale").get<double>());
    if (kind == "deterministic") return DurationDist::deterministic(j.at("value").get<double>());
    throw ModelError("unknown distribution kind '" + kind + "'");
}

inline const char* to_string(TruncationMode m)
{
    return m == TruncationMode::absorbing ? "absorbing" : "unassigned_outflow";
}

inline TruncationMode truncation_from_string(const std::string& s)
{
    if (s == "absorbing") return TruncationMode::absorbing;
    if (s == "unassigned_outflow" || s == "unassigned") return TruncationMode::unassigned_outflow;
    throw ModelError("unknown truncation mode '" + s + "'");
}

inline void to_json(nlohmann::json& j, const ScenarioConfig& c)
{
    j = nlohmann::json{{"lambda1", c.lambda1},   {"lambda2", c.lambda2},   {"serve1", c.serve1},
                       {"serve2", c.serve2},     {"switch12", c.switch12}, {"switch21", c.switch21},
                       {"c1", c.c1},             {"c2", c.c2},             {"K12", c.K12},
                       {"K21", c.K21},           {"beta", c.beta},         {"X1", c.X1},
                       {"X2", c.X2},             {"N1", c.N1},             {"N2", c.N2},
                       {"truncation_mode", to_string(c.truncation_mode)}};
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c)
{
    c.lambda1 = j.at("lambda1").get<double>();
    c.lambda2 = j.at("lambda2").get<double>();
    c.serve1 = duration_from_json(j.at("serve1"));
    c.serve2 = duration_from_json(j.at("serve2"));
    c.switch12 = duration_from_json(j.at("switch12"));
    c.switch21 = duration_from_json(j.at("switch21"));
    c.c1 = j.at("c1").get<double>();
    c.c2 = j.at("c2").get<double>();
    c.K12 = j.value("K12", 0.0);
    c.K21 = j.value("K21", 0.0);
    c.beta = j.at("beta").get<double>();
    c.X1 = j.at("X1").get<int>();
    c.X2 = j.at("X2").get<int>();
    c.N1 = j.at("N1").get<int>();
    c.N2 = j.at("N2").get<int>();
    c.truncation_mode = truncation_from_string(j.value("truncation_mode", std::string("absorbing")));
    c.rate_fn = nullptr;
}

}  // namespace polling

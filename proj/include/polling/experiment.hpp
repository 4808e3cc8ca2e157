#pragma once

// Experiment stages behind the command-line tool. Each stage writes its CSV
// files into the output directory and returns a JSON fragment.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "baseline_policies.hpp"
#include "ctmdp.hpp"
#include "dp_solver.hpp"
#include "json.hpp"
#include "model_core.hpp"
#include "random.hpp"
#include "simulator.hpp"
#include "smdp_builder.hpp"
#include "stats.hpp"

namespace polling {

/// Failure of one experiment stage; what() carries the stage tag.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& msg)
        : std::runtime_error("[" + stage + "] " + msg), stage_(std::move(stage))
    {
    }
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Runs f, rethrowing any exception tagged with the stage name.
template <class F>
auto staged(const std::string& stage, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

struct Scenario {
    std::string name;
    ScenarioConfig cfg;
};

inline Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open scenario file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ModelError("malformed scenario file " + path.string() + ": " + e.what());
    }
    Scenario s;
    s.name = j.value("name", path.stem().string());
    try {
        s.cfg = j.get<ScenarioConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ModelError("bad scenario field in " + path.string() + ": " + e.what());
    }
    check_parameters(s.cfg);
    return s;
}

enum class ModelKind { smdp, ctmdp };
enum class SolverAlgo { policy_iteration, value_iteration };

inline ModelKind model_from_string(const std::string& s)
{
    if (s == "smdp") return ModelKind::smdp;
    if (s == "ctmdp") return ModelKind::ctmdp;
    throw ModelError("unknown model '" + s + "'");
}

inline SolverAlgo algo_from_string(const std::string& s)
{
    if (s == "policy-iteration" || s == "pi") return SolverAlgo::policy_iteration;
    if (s == "value-iteration" || s == "vi") return SolverAlgo::value_iteration;
    throw ModelError("unknown algorithm '" + s + "'");
}

inline const char* to_string(SolverAlgo a)
{
    return a == SolverAlgo::policy_iteration ? "policy-iteration" : "value-iteration";
}

inline const std::vector<std::string>& known_policies()
{
    static const std::vector<std::string> k{"smdp", "ctmdp", "exhaustive", "heuristic"};
    return k;
}

struct ExperimentPlan {
    std::filesystem::path scenario;
    std::vector<std::string> policies = known_policies();
    int rollouts = 10000;
    double horizon = 200.0;
    std::uint64_t seed = 1;
    double zeta = 0.05;
    std::filesystem::path out = "out";
    unsigned workers = 1;
    std::optional<TruncationMode> truncation;
    SolverAlgo algo = SolverAlgo::policy_iteration;
    int occupancy_rollouts = 200;
    double long_run_horizon = 200000.0;
};

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

/// Checks the plan and drops the heuristic when queue 1 is not a priority
/// queue. Returns the names dropped.
inline std::vector<std::string> normalise_plan(ExperimentPlan& plan, const ScenarioConfig& cfg)
{
    if (plan.policies.empty()) throw ContractViolation("no policies selected");
    std::vector<std::string> kept, dropped;
    for (const auto& p : plan.policies) {
        if (std::find(known_policies().begin(), known_policies().end(), p) == known_policies().end())
            throw ContractViolation("unknown policy '" + p + "'");
        if (std::find(kept.begin(), kept.end(), p) != kept.end()) throw ContractViolation("policy '" + p + "' listed twice");
        if (p == "heuristic" && !heuristic_applicable(cfg)) dropped.push_back(p);
        else kept.push_back(p);
    }
    if (plan.rollouts < 2) throw ContractViolation("rollouts must be at least 2");
    if (!(plan.horizon > 0.0)) throw ContractViolation("horizon must be positive");
    if (!(plan.zeta > 0.0 && plan.zeta < 1.0)) throw ContractViolation("zeta must lie in (0, 1)");
    if (plan.workers < 1) plan.workers = 1;
    plan.policies = kept;
    return dropped;
}

inline ScenarioConfig apply_overrides(const ExperimentPlan& plan, ScenarioConfig cfg)
{
    if (plan.truncation) cfg.truncation_mode = *plan.truncation;
    return cfg;
}

// ---------------------------------------------------------------------------
// Screening
// ---------------------------------------------------------------------------

inline nlohmann::json screen_report(const Scenario& s)
{
    const StabilityReport st = stability_report(s.cfg);
    nlohmann::json j;
    j["scenario"] = s.name;
    j["rho1"] = st.rho1;
    j["rho2"] = st.rho2;
    j["rho"] = st.rho;
    j["stable"] = st.stable;
    j["heuristic_applicable"] = heuristic_applicable(s.cfg);
    if (st.stable) j["limit_cycle"] = limit_cycle_report(analyze_limit_cycle(s.cfg));
    return j;
}

// ---------------------------------------------------------------------------
// Solving
// ---------------------------------------------------------------------------

struct SolvedPolicy {
    std::string name;
    PolicyTable table;
    int iterations = 0;
    bool converged = false;
    double seconds = 0.0;
    bool approximated = false;  // durations replaced by exponentials of equal mean
};

inline Policy solve_mdp(const Mdp& mdp, SolverAlgo algo)
{
    if (algo == SolverAlgo::policy_iteration) return policy_iteration(mdp);
    return value_iterate(build_value_graph(mdp));
}

inline SolvedPolicy solve_smdp(const ScenarioConfig& cfg, SolverAlgo algo)
{
    validate_scenario(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const SmdpModel m = build_smdp(cfg);
    const Policy pi = solve_mdp(to_mdp(m), algo);
    SolvedPolicy out{"smdp", smdp_policy_table(m, pi), pi.iterations, pi.converged, 0.0, false};
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Non-preemptive uniformised model; non-exponential durations are replaced
/// by exponentials with the same mean.
inline SolvedPolicy solve_ctmdp(const ScenarioConfig& cfg, SolverAlgo algo)
{
    validate_scenario(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    bool approx = false;
    for (const auto* d : {&cfg.serve1, &cfg.serve2, &cfg.switch12, &cfg.switch21}) approx = approx || !memoryless(*d);
    const NonPreemptiveModel m = build_nonpreemptive(approx ? exponential_approximation(cfg) : cfg);
    const Policy pi = algo == SolverAlgo::policy_iteration ? policy_iteration(m.mdp) : value_iterate(build_value_graph(m));
    SolvedPolicy out{"ctmdp", ctmdp_policy_table(m, pi), pi.iterations, pi.converged, 0.0, approx};
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline SolvedPolicy solve_model(const ScenarioConfig& cfg, ModelKind kind, SolverAlgo algo)
{
    return kind == ModelKind::smdp ? solve_smdp(cfg, algo) : solve_ctmdp(cfg, algo);
}

using SolvedSet = std::map<std::string, SolvedPolicy>;

inline DecisionFn decision_for(const std::string& name, const ScenarioConfig& cfg, const SolvedSet& solved)
{
    if (name == "exhaustive") return exhaustive_decision();
    if (name == "heuristic") return heuristic_decision(cfg);
    const auto it = solved.find(name);
    if (it == solved.end()) throw ContractViolation("policy '" + name + "' has not been solved");
    return table_decision(it->second.table);
}

inline void ensure_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ModelError("cannot create output directory " + dir.string() + ": " + ec.message());
}

inline std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream os(p);
    if (!os) throw ModelError("cannot write " + p.string());
    return os;
}

/// Solves every model-based policy in the plan; writes policy_<name>.csv.
inline SolvedSet stage_solve(const ExperimentPlan& plan, const ScenarioConfig& cfg, nlohmann::json& report)
{
    return staged("solve", [&] {
        ensure_dir(plan.out);
        SolvedSet solved;
        for (const auto& name : plan.policies) {
            if (name != "smdp" && name != "ctmdp") continue;
            SolvedPolicy sp = solve_model(cfg, model_from_string(name), plan.algo);
            auto os = open_out(plan.out / ("policy_" + name + ".csv"));
            write_policy_csv(os, sp.table);
            report[name] = {{"algorithm", to_string(plan.algo)},
                            {"iterations", sp.iterations},
                            {"converged", sp.converged},
                            {"exponential_approximation", sp.approximated},
                            {"seconds", sp.seconds}};
            solved.emplace(name, std::move(sp));
        }
        return solved;
    });
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

using SampleSet = std::map<std::string, std::vector<double>>;

/// Shuffle seed of the i-th policy, independent of the rollout seeds.
inline std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t i)
{
    return counter_hash(seed, static_cast<std::uint64_t>(StreamTag::shuffle), i);
}

/// eta samples with common random numbers: every policy sees rollout seeds
/// derived from the same base; each array is shuffled with its own seed.
inline SampleSet stage_simulate(const ExperimentPlan& plan, const ScenarioConfig& cfg, const SolvedSet& solved,
                                nlohmann::json& report)
{
    return staged("simulate", [&] {
        ensure_dir(plan.out);
        SampleSet eta;
        const InitialDist init = InitialDist::uniform(cfg.X1, cfg.X2);
        for (std::size_t i = 0; i < plan.policies.size(); ++i) {
            const auto& name = plan.policies[i];
            PerformanceOptions po;
            po.horizon = plan.horizon;
            po.rollouts = plan.rollouts;
            po.workers = plan.workers;
            po.shuffle_seed = shuffle_seed(plan.seed, i);
            const auto t0 = std::chrono::steady_clock::now();
            auto v = sample_performance(cfg, decision_for(name, cfg, solved), init, plan.seed, po);
            auto os = open_out(plan.out / ("eta_" + name + ".csv"));
            write_column_csv(os, name, v);
            report[name] = {{"rollouts", plan.rollouts},
                            {"horizon", plan.horizon},
                            {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
            eta.emplace(name, std::move(v));
        }
        return eta;
    });
}

inline std::vector<double> read_column_csv(const std::filesystem::path& p)
{
    std::ifstream in(p);
    if (!in) throw ModelError("cannot open " + p.string());
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> v;
    while (std::getline(in, line))
        if (!line.empty()) v.push_back(std::stod(line));
    return v;
}

// ---------------------------------------------------------------------------
// Hypothesis tests
// ---------------------------------------------------------------------------

inline void write_summary_csv(std::ostream& os, const std::map<std::string, stats::Summary>& s)
{
    os << "policy,mean,std,min,max,skewness,kurtosis,k2,p,normal\n";
    os.precision(10);
    for (const auto& [name, v] : s)
        os << name << ',' << v.mean << ',' << v.std << ',' << v.min << ',' << v.max << ',' << v.skewness << ','
           << v.kurtosis << ',' << v.k2 << ',' << v.k2_p << ',' << (v.normal ? "true" : "false") << '\n';
}

/// One cell of a pairwise matrix; H_A says the row policy has lower cost.
struct PairTest {
    std::string row, col;
    double statistic = 0.0;
    double p = 1.0;
    bool reject = false;
};

using PairFn = std::function<stats::TestResult(std::span<const double>, std::span<const double>)>;

inline std::vector<PairTest> pairwise(const std::vector<std::string>& order, const SampleSet& eta, double zeta, const PairFn& f)
{
    std::vector<PairTest> out;
    for (const auto& r : order)
        for (const auto& c : order) {
            if (r == c) continue;
            const auto t = f(eta.at(r), eta.at(c));
            out.push_back({r, c, t.statistic, t.p_less, t.reject_at(zeta, stats::Alternative::less)});
        }
    return out;
}

inline void write_matrix_csv(std::ostream& os, const std::vector<PairTest>& m)
{
    os << "row,col,statistic,p,reject\n";
    os.precision(10);
    for (const auto& t : m) os << t.row << ',' << t.col << ',' << t.statistic << ',' << t.p << ',' << (t.reject ? "true" : "false") << '\n';
}

inline nlohmann::json matrix_json(const std::vector<PairTest>& m)
{
    nlohmann::json j = nlohmann::json::array();
    for (const auto& t : m) j.push_back({{"row", t.row}, {"col", t.col}, {"statistic", t.statistic}, {"p", t.p}, {"reject", t.reject}});
    return j;
}

struct TestMatrices {
    std::map<std::string, stats::Summary> summary;
    std::vector<PairTest> welch, mann_whitney, student;
    std::map<std::pair<std::string, std::string>, double> pearson;

    const PairTest& find(const std::vector<PairTest>& m, const std::string& r, const std::string& c) const
    {
        for (const auto& t : m)
            if (t.row == r && t.col == c) return t;
        throw std::out_of_range("no test cell " + r + " vs " + c);
    }
};

inline TestMatrices run_tests(const std::vector<std::string>& order, const SampleSet& eta, double zeta)
{
    TestMatrices tm;
    for (const auto& n : order) tm.summary[n] = stats::summarize(eta.at(n), zeta);
    tm.welch = pairwise(order, eta, zeta, [](auto x, auto y) { return stats::welch_t_test(x, y); });
    tm.mann_whitney = pairwise(order, eta, zeta, [](auto x, auto y) -> stats::TestResult { return stats::mann_whitney_u(x, y); });
    tm.student = pairwise(order, eta, zeta, [](auto x, auto y) { return stats::t_test_one_sample(stats::difference(x, y), 0.0); });
    for (const auto& r : order)
        for (const auto& c : order) tm.pearson[{r, c}] = r == c ? 1.0 : stats::pearson_r(eta.at(r), eta.at(c));
    return tm;
}

inline nlohmann::json stage_test(const ExperimentPlan& plan, const SampleSet& eta)
{
    return staged("test", [&] {
        ensure_dir(plan.out);
        std::vector<std::string> order;
        for (const auto& n : plan.policies)
            if (eta.count(n)) order.push_back(n);
        if (order.empty()) throw ContractViolation("no samples to test");
        const TestMatrices tm = run_tests(order, eta, plan.zeta);
        {
            auto os = open_out(plan.out / "summary.csv");
            write_summary_csv(os, tm.summary);
        }
        {
            auto os = open_out(plan.out / "pearson.csv");
            os << "row,col,r\n";
            os.precision(10);
            for (const auto& [k, v] : tm.pearson) os << k.first << ',' << k.second << ',' << v << '\n';
        }
        for (const auto& [file, m] : {std::pair{"welch.csv", &tm.welch}, std::pair{"mann_whitney.csv", &tm.mann_whitney},
                                      std::pair{"student.csv", &tm.student}}) {
            auto os = open_out(plan.out / file);
            write_matrix_csv(os, *m);
        }
        nlohmann::json j;
        for (const auto& [n, s] : tm.summary)
            j["summary"][n] = {{"mean", s.mean}, {"std", s.std},           {"min", s.min},   {"max", s.max},
                               {"skewness", s.skewness}, {"kurtosis", s.kurtosis}, {"k2", s.k2}, {"p", s.k2_p},
                               {"normal", s.normal}};
        for (const auto& [k, v] : tm.pearson) j["pearson"][k.first][k.second] = v;
        j["welch"] = matrix_json(tm.welch);
        j["mann_whitney"] = matrix_json(tm.mann_whitney);
        j["student"] = matrix_json(tm.student);
        return j;
    });
}

// ---------------------------------------------------------------------------
// Occupancy
// ---------------------------------------------------------------------------

inline nlohmann::json fractions_json(const ActionTimes& t)
{
    const auto f = t.fractions();
    return {{"idle", f[0]}, {"serve", f[1]}, {"switch", f[2]}};
}

/// Action-time fractions and limit-cycle occupancy per policy, pooled over
/// uniform-start rollouts of the plan horizon, plus one long run from the
/// empty system.
inline nlohmann::json stage_occupancy(const ExperimentPlan& plan, const ScenarioConfig& cfg, const SolvedSet& solved)
{
    return staged("occupancy", [&] {
        ensure_dir(plan.out);
        nlohmann::json j;
        const StabilityReport st = stability_report(cfg);
        j["rho"] = st.rho;
        std::optional<LimitCycle> lc;
        if (st.stable) lc = analyze_limit_cycle(cfg);
        for (const auto& name : plan.policies) {
            const DecisionFn policy = decision_for(name, cfg, solved);
            OccupancyOptions oo;
            oo.rollouts = plan.occupancy_rollouts;
            oo.horizon = plan.horizon;
            oo.seed = plan.seed;
            const OccupancyResult r = occupancy_study(cfg, policy, InitialDist::uniform(cfg.X1, cfg.X2), oo);
            {
                auto os = open_out(plan.out / ("frequency_" + name + ".csv"));
                write_frequency_csv(os, r.freq);
            }
            nlohmann::json e;
            e["fractions"] = fractions_json(r.times);
            if (lc) e["phi_star"] = limit_cycle_occupancy(r.freq, *lc);

            RolloutOptions ro;
            ro.horizon = plan.long_run_horizon;
            ro.record = true;
            const auto lr = simulate(cfg, policy, InitialDist::point({0, 0, 0, 0}), counter_hash(plan.seed, static_cast<std::uint64_t>(StreamTag::initial_state), 1), ro);
            e["long_run"]["fractions"] = fractions_json(action_time_fractions(lr.trace));
            if (lc) e["long_run"]["phi_star"] = limit_cycle_occupancy(embedded_stationary(lr.trace), *lc);
            j[name] = e;
        }
        return j;
    });
}

// ---------------------------------------------------------------------------
// Composite run
// ---------------------------------------------------------------------------

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j)
{
    auto os = open_out(p);
    os << j.dump(2) << '\n';
}

inline nlohmann::json run_experiment(ExperimentPlan plan)
{
    const Scenario sc = staged("load", [&] { return load_scenario(plan.scenario); });
    const ScenarioConfig cfg = apply_overrides(plan, sc.cfg);
    nlohmann::json summary;
    summary["scenario"] = sc.name;
    summary["screen"] = staged("screen", [&] {
        auto j = screen_report({sc.name, cfg});
        validate_scenario(cfg);
        return j;
    });
    summary["skipped"] = staged("plan", [&] { return normalise_plan(plan, cfg); });
    summary["plan"] = {{"policies", plan.policies}, {"rollouts", plan.rollouts}, {"horizon", plan.horizon},
                       {"seed", plan.seed},         {"zeta", plan.zeta},         {"truncation", to_string(cfg.truncation_mode)}};
    nlohmann::json solve_j = nlohmann::json::object(), sim_j = nlohmann::json::object();
    const SolvedSet solved = stage_solve(plan, cfg, solve_j);
    summary["solve"] = solve_j;
    const SampleSet eta = stage_simulate(plan, cfg, solved, sim_j);
    summary["simulate"] = sim_j;
    summary["tests"] = stage_test(plan, eta);
    summary["occupancy"] = stage_occupancy(plan, cfg, solved);
    ensure_dir(plan.out);
    write_json(plan.out / "summary.json", summary);
    return summary;
}

}  // namespace polling

// Command-line front end: screen, solve, simulate, test, run.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "experiment.hpp"

using namespace polling;

namespace {

struct Flags {
    std::string scenario;
    std::string policies = "smdp,ctmdp,exhaustive,heuristic";
    int rollouts = 10000;
    double horizon = 200.0;
    std::uint64_t seed = 1;
    double zeta = 0.05;
    std::string out = "out";
    unsigned workers = 1;
    std::string truncation;
    std::string model = "smdp";
    std::string algo = "policy-iteration";
    int occupancy_rollouts = 200;
};

ExperimentPlan make_plan(const Flags& f)
{
    ExperimentPlan p;
    p.scenario = f.scenario;
    p.policies = split_list(f.policies);
    p.rollouts = f.rollouts;
    p.horizon = f.horizon;
    p.seed = f.seed;
    p.zeta = f.zeta;
    p.out = f.out;
    p.workers = f.workers;
    if (!f.truncation.empty()) p.truncation = truncation_from_string(f.truncation);
    p.algo = algo_from_string(f.algo);
    p.occupancy_rollouts = f.occupancy_rollouts;
    return p;
}

ScenarioConfig load_checked(const ExperimentPlan& plan)
{
    const Scenario sc = staged("load", [&] { return load_scenario(plan.scenario); });
    ScenarioConfig cfg = apply_overrides(plan, sc.cfg);
    staged("screen", [&] { validate_scenario(cfg); });
    return cfg;
}

int cmd_screen(const Flags& f)
{
    const ExperimentPlan plan = make_plan(f);
    Scenario sc = staged("load", [&] { return load_scenario(plan.scenario); });
    sc.cfg = apply_overrides(plan, sc.cfg);
    std::cout << staged("screen", [&] { return screen_report(sc); }).dump(2) << '\n';
    return 0;
}

int cmd_solve(const Flags& f)
{
    ExperimentPlan plan = make_plan(f);
    plan.policies = {f.model};
    model_from_string(f.model);
    const ScenarioConfig cfg = load_checked(plan);
    nlohmann::json j = nlohmann::json::object();
    stage_solve(plan, cfg, j);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_simulate(const Flags& f)
{
    ExperimentPlan plan = make_plan(f);
    const ScenarioConfig cfg = load_checked(plan);
    nlohmann::json j;
    j["skipped"] = staged("plan", [&] { return normalise_plan(plan, cfg); });
    nlohmann::json solve_j = nlohmann::json::object(), sim_j = nlohmann::json::object();
    const SolvedSet solved = stage_solve(plan, cfg, solve_j);
    stage_simulate(plan, cfg, solved, sim_j);
    j["solve"] = solve_j;
    j["simulate"] = sim_j;
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_test(const Flags& f)
{
    const ExperimentPlan plan = make_plan(f);
    const SampleSet eta = staged("test", [&] {
        SampleSet s;
        for (const auto& n : plan.policies) {
            const auto p = plan.out / ("eta_" + n + ".csv");
            if (std::filesystem::exists(p)) s.emplace(n, read_column_csv(p));
        }
        return s;
    });
    const nlohmann::json j = stage_test(plan, eta);
    write_json(plan.out / "tests.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_run(const Flags& f)
{
    const nlohmann::json j = run_experiment(make_plan(f));
    std::cout << j.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"polling_cli: two-queue polling control toolkit"};
    app.require_subcommand(1);
    Flags f;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--scenario", f.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
        sub->add_option("--truncation", f.truncation, "Arrival-lattice truncation")->check(CLI::IsMember({"absorbing", "unassigned"}));
        sub->add_option("--out", f.out, "Output directory")->capture_default_str();
    };
    auto sim_flags = [&](CLI::App* sub) {
        sub->add_option("--policies", f.policies, "Comma-separated subset of smdp,ctmdp,exhaustive,heuristic")->capture_default_str();
        sub->add_option("--rollouts", f.rollouts, "Rollouts per policy")->capture_default_str()->check(CLI::PositiveNumber);
        sub->add_option("--horizon", f.horizon, "Rollout horizon T")->capture_default_str()->check(CLI::PositiveNumber);
        sub->add_option("--seed", f.seed, "Base seed")->capture_default_str();
        sub->add_option("--workers", f.workers, "Simulation threads")->capture_default_str();
        sub->add_option("--algo", f.algo, "Solver")->capture_default_str()->check(CLI::IsMember({"policy-iteration", "value-iteration"}));
    };

    auto* screen = app.add_subcommand("screen", "Stability and limit-cycle screening");
    common(screen);
    auto* solve = app.add_subcommand("solve", "Build and solve one model, write its policy CSV");
    common(solve);
    solve->add_option("--model", f.model, "Model")->capture_default_str()->check(CLI::IsMember({"smdp", "ctmdp"}));
    solve->add_option("--algo", f.algo, "Solver")->capture_default_str()->check(CLI::IsMember({"policy-iteration", "value-iteration"}));
    auto* simulate = app.add_subcommand("simulate", "Sample discounted performance per policy");
    common(simulate);
    sim_flags(simulate);
    auto* test = app.add_subcommand("test", "Hypothesis tests on eta CSVs in the output directory");
    test->add_option("--out", f.out, "Directory holding eta_<policy>.csv")->capture_default_str();
    test->add_option("--policies", f.policies, "Policies to compare")->capture_default_str();
    test->add_option("--zeta", f.zeta, "Significance level")->capture_default_str();
    auto* run = app.add_subcommand("run", "Screen, solve, simulate, test and occupancy report");
    common(run);
    sim_flags(run);
    run->add_option("--zeta", f.zeta, "Significance level")->capture_default_str();
    run->add_option("--occupancy-rollouts", f.occupancy_rollouts, "Recorded rollouts for occupancy statistics")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*screen) return cmd_screen(f);
        if (*solve) return cmd_solve(f);
        if (*simulate) return cmd_simulate(f);
        if (*test) return cmd_test(f);
        if (*run) return cmd_run(f);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

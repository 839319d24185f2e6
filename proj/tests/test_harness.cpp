#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "slsgrid/harness.hpp"

using namespace slsgrid;

namespace {

SimConfig small_config() {
    SimConfig cfg;
    cfg.rows = 3;
    cfg.cols = 3;
    cfg.seed = 11;
    cfg.horizon = 5;
    cfg.t_mpc = 5;
    cfg.locality_d = 1;
    cfg.num_periods = 2;
    cfg.trials = 2;
    cfg.threads = 1;
    cfg.eps_primal = cfg.eps_dual = 1e-5;
    cfg.max_iters = 50000;
    return cfg;
}

TrialSetup quiet_setup() {
    SimConfig cfg = small_config();
    cfg.u_max = 0.5;
    cfg.disturbance_std = 0.0;
    PlantModel plant = generate_plant(cfg.rows, cfg.cols, 7, cfg.dt, cfg.u_max);
    const int N = plant.node_count();
    Setpoint origin{Vec::Zero(2 * N), Vec::Zero(N)};
    return TrialSetup{cfg,
                      0,
                      plant,
                      {origin, origin},
                      Mat::Zero(cfg.sim_length(), N),
                      Mat::Identity(2 * N, 2 * N),
                      Mat::Identity(N, N)};
}

}  // namespace

TEST_CASE("nothing to do: every controller sits at the origin with zero cost") {
    TrialSetup setup = quiet_setup();
    for (const auto& trace :
         {simulate_linear_baseline(setup, false), simulate_linear_baseline(setup, true),
          simulate_cen_mpc(setup), simulate_layered(setup)}) {
        CHECK(trace.raw_cost == 0.0);
        CHECK(trace.stable);
        for (const Vec& u : trace.inputs) CHECK(u.cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("zero-cost realizations normalize to 1 by convention") {
    std::vector<ControllerTrace> traces(4);
    for (auto& t : traces) t.raw_cost = 0.0;
    normalize_against_unsaturated(traces);
    for (const auto& t : traces) CHECK(t.normalized_cost == 1.0);
}

TEST_CASE("SatCenLin equals UnsatCenLin when the clamp never engages") {
    TrialSetup setup = quiet_setup();
    // Tiny disturbances keep the linear law far from the bound.
    Rng rng(3);
    for (int t = 0; t < setup.disturbance.rows(); ++t)
        for (int i = 0; i < setup.disturbance.cols(); ++i)
            setup.disturbance(t, i) = 1e-4 * rng.normal();
    ControllerTrace unsat = simulate_linear_baseline(setup, false);
    ControllerTrace sat = simulate_linear_baseline(setup, true);
    CHECK(unsat.raw_cost == doctest::Approx(sat.raw_cost).epsilon(1e-12));
    for (size_t t = 0; t < unsat.inputs.size(); ++t)
        CHECK((unsat.inputs[t] - sat.inputs[t]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("run_trial is deterministic bit for bit") {
    SimConfig cfg = small_config();
    TrialResult a = run_trial(cfg, 99);
    TrialResult b = run_trial(cfg, 99);
    for (size_t c = 0; c < a.traces.size(); ++c) {
        CHECK(a.traces[c].raw_cost == b.traces[c].raw_cost);
        CHECK(a.traces[c].normalized_cost == b.traces[c].normalized_cost);
        for (size_t t = 0; t < a.traces[c].inputs.size(); ++t)
            CHECK((a.traces[c].inputs[t] - b.traces[c].inputs[t]).cwiseAbs().maxCoeff() ==
                  0.0);
    }
    TrialResult c = run_trial(cfg, 100);
    CHECK(a.traces[0].raw_cost != c.traces[0].raw_cost);
}

TEST_CASE("controller order cannot matter: simulations share only the setup") {
    SimConfig cfg = small_config();
    TrialResult trial = run_trial(cfg, 5);
    // Re-run the controllers against the same setup in reverse order.
    ControllerTrace layered = simulate_layered(trial.setup);
    ControllerTrace cen = simulate_cen_mpc(trial.setup);
    ControllerTrace sat = simulate_linear_baseline(trial.setup, true);
    ControllerTrace unsat = simulate_linear_baseline(trial.setup, false);
    CHECK(layered.raw_cost == trial.trace("LocLayered").raw_cost);
    CHECK(cen.raw_cost == trial.trace("CenMPC").raw_cost);
    CHECK(sat.raw_cost == trial.trace("SatCenLin").raw_cost);
    CHECK(unsat.raw_cost == trial.trace("UnsatCenLin").raw_cost);
}

TEST_CASE("normalization anchors the unsaturated baseline at exactly 1") {
    TrialResult trial = run_trial(small_config(), 123);
    CHECK(trial.trace("UnsatCenLin").normalized_cost == 1.0);
    for (const auto& t : trial.traces) {
        CHECK_FALSE(t.errored);
        CHECK(t.normalized_cost >= 1.0 - 1e-9);  // the baseline is optimal
    }
}

TEST_CASE("online solve counters: every step vs once per period") {
    SimConfig cfg = small_config();
    TrialResult trial = run_trial(cfg, 42);
    CHECK(trial.trace("CenMPC").online_solves == cfg.sim_length());
    CHECK(trial.trace("LocLayered").online_solves == cfg.num_periods);
    CHECK(trial.trace("UnsatCenLin").online_solves == 0);
}

TEST_CASE("auto-calibration: references always holdable, saturation binds somewhere") {
    SimConfig cfg;  // paper-scale mesh, shortened horizon for test speed
    cfg.rows = cfg.cols = 5;
    cfg.horizon = cfg.t_mpc = 10;
    cfg.locality_d = 2;
    cfg.num_periods = 2;
    cfg.threads = 1;
    int binding_trials = 0;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        TrialSetup setup = build_trial_setup(cfg, seed);
        CHECK(setup.config.u_max > 0.0);
        CHECK(setup.config.disturbance_std > 0.0);
        for (const Setpoint& sp : setup.setpoints) {
            CHECK(sp.u_star.cwiseAbs().maxCoeff() <=
                  cfg.setpoint_ratio * setup.config.u_max + 1e-9);
            CHECK(setpoint_residual(setup.plant, sp) < 1e-8);
        }
        ControllerTrace unsat = simulate_linear_baseline(setup, false);
        double peak = 0.0;
        for (const Vec& u : unsat.inputs) peak = std::max(peak, u.cwiseAbs().maxCoeff());
        if (peak > setup.config.u_max) ++binding_trials;
    }
    CHECK(binding_trials >= 1);  // instances split between benign and saturating
}

TEST_CASE("benchmark aggregation splits the SatCenLin-stable subset") {
    std::vector<TrialResult> results;
    for (std::uint64_t s : {1ULL, 2ULL}) results.push_back(run_trial(small_config(), s));
    results[0].traces[1].stable = false;  // force one unstable SatCenLin
    CostReport report = aggregate(results);
    CHECK(report.trials_used == 2);
    CHECK(report.stable_trials == 1);
    const double expect_total = 0.5 * (results[0].traces[3].normalized_cost +
                                       results[1].traces[3].normalized_cost);
    CHECK(report.mean_total[3] == doctest::Approx(expect_total).epsilon(1e-12));
    CHECK(report.mean_stable_subset[3] ==
          doctest::Approx(results[1].traces[3].normalized_cost).epsilon(1e-12));
}

TEST_CASE("trial failures are recorded and excluded from the means") {
    std::vector<TrialResult> results;
    results.push_back(run_trial(small_config(), 1));
    results.push_back(run_trial(small_config(), 2));
    results[1].any_error = true;
    CostReport report = aggregate(results);
    CHECK(report.trials_used == 1);
    CHECK(report.errored_trials == 1);
    CHECK(report.mean_total[0] == 1.0);
}

TEST_CASE("emitted reports are deterministic byte for byte") {
    SimConfig cfg = small_config();
    std::vector<TrialResult> results{run_trial(cfg, 4)};
    CostReport report = aggregate(results);
    std::stringstream costs_a, costs_b, summary_a, summary_b, traj_a, traj_b;
    emit_costs_csv(results, costs_a);
    emit_costs_csv(results, costs_b);
    emit_summary_csv(report, summary_a);
    emit_summary_csv(report, summary_b);
    const int probe = cfg.resolved_probe(results[0].setup.plant.node_count());
    emit_trajectory_csv(results[0], results[0].trace("CenMPC"), probe, traj_a);
    emit_trajectory_csv(results[0], results[0].trace("CenMPC"), probe, traj_b);
    CHECK(costs_a.str() == costs_b.str());
    CHECK(summary_a.str() == summary_b.str());
    CHECK(traj_a.str() == traj_b.str());
    const std::string costs = costs_a.str();
    const std::string traj = traj_a.str();
    CHECK(costs.substr(0, 5) == "trial");
    // One CSV row per controller per trial plus the header.
    CHECK(std::count(costs.begin(), costs.end(), '\n') == 5);
    // Trajectory rows: one per simulated step.
    CHECK(std::count(traj.begin(), traj.end(), '\n') == cfg.sim_length() + 1);
}

TEST_CASE("emit_report writes the full artifact set") {
    namespace fs = std::filesystem;
    SimConfig cfg = small_config();
    std::vector<TrialResult> results{run_trial(cfg, 4)};
    CostReport report = aggregate(results);
    fs::path dir = fs::temp_directory_path() / "slsgrid_report_test";
    fs::remove_all(dir);
    emit_report(report, results, dir);
    for (const char* name :
         {"costs.csv", "summary.csv", "timings.csv", "plant_0.txt", "setpoints_0.csv",
          "traj_0_UnsatCenLin.csv", "traj_0_SatCenLin.csv", "traj_0_CenMPC.csv",
          "traj_0_LocLayered.csv", "trial_0_phase.svg", "trial_0_frequency.svg",
          "trial_0_input.svg"})
        CHECK(fs::exists(dir / name));
    // The plant dump reloads to the very same model.
    std::ifstream plant_in(dir / "plant_0.txt");
    PlantModel reloaded = PlantModel::load(plant_in);
    CHECK((reloaded.state_matrix() - results[0].setup.plant.state_matrix())
              .cwiseAbs()
              .maxCoeff() == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("config files round-trip and reject unknown keys") {
    SimConfig cfg = small_config();
    cfg.u_max = 1.25;
    cfg.disturbance_std = 0.01;
    std::stringstream out;
    cfg.save(out);
    std::stringstream in(out.str());
    SimConfig loaded = SimConfig::load(in);
    std::stringstream out2;
    loaded.save(out2);
    CHECK(out.str() == out2.str());
    CHECK(loaded.u_max == 1.25);
    CHECK(loaded.rows == 3);

    std::stringstream bad("rows 3\nnot_a_key 7\n");
    CHECK_THROWS_AS(SimConfig::load(bad), NumericalError);
    std::stringstream invalid("t_mpc 0\n");
    CHECK_THROWS_AS(SimConfig::load(invalid), DimensionError);
    std::stringstream commented("# comment line\nrows 4 # trailing\n");
    CHECK(SimConfig::load(commented).rows == 4);
}

TEST_CASE("run_benchmark aggregates deterministically across the worker pool") {
    SimConfig cfg = small_config();
    cfg.trials = 3;
    cfg.threads = 2;
    std::vector<TrialResult> results_a, results_b;
    CostReport a = run_benchmark(cfg, &results_a);
    CostReport b = run_benchmark(cfg, &results_b);
    CHECK(a.trials_used == 3);
    CHECK((a.mean_total - b.mean_total).cwiseAbs().maxCoeff() == 0.0);
    std::stringstream csv_a, csv_b;
    emit_costs_csv(results_a, csv_a);
    emit_costs_csv(results_b, csv_b);
    CHECK(csv_a.str() == csv_b.str());
}

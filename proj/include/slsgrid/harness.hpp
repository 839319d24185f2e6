#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slsgrid/common.hpp"
#include "slsgrid/layered.hpp"
#include "slsgrid/lqr.hpp"
#include "slsgrid/mpc.hpp"
#include "slsgrid/opf.hpp"
#include "slsgrid/plant.hpp"
#include "slsgrid/rng.hpp"
#include "slsgrid/svg.hpp"

namespace slsgrid {

/// Benchmark configuration. Negative u_max / disturbance_std select the
/// per-trial auto-calibration described in the field comments.
struct SimConfig {
    int rows = 5;
    int cols = 5;
    std::uint64_t seed = 1;
    double dt = 0.2;
    double u_max = -1.0;             // <=0: u_max_ratio x peak unconstrained-LQR demand
    double q_scale = 1.0;            // Q = q_scale * I
    double r_scale = 1.0;            // R = r_scale * I
    int horizon = 20;                // MPC and synthesis horizon
    int t_mpc = 20;                  // replanning / setpoint period
    int locality_d = 2;
    double disturbance_std = -1.0;   // <0: 5% of the first setpoint's peak input
    double setpoint_ratio = 0.3;     // holdability floor: max |u*| <= ratio * u_max
    double u_max_ratio = 0.6;        // auto u_max vs peak dry-run demand
    int load_smoothing = 4;          // neighbor-averaging passes on load profiles
    double extra_edge_prob = 0.3;
    int num_periods = 5;
    int trials = 30;
    double rho = 1.0;
    double eps_primal = 1e-4;
    double eps_dual = 1e-4;
    int max_iters = 5000;
    int threads = 0;                 // 0: hardware concurrency (trial-level)
    int probe_node = -1;             // -1: mesh center
    double divergence_threshold = 1e6;

    AdmmConfig admm() const { return {rho, eps_primal, eps_dual, max_iters}; }

    int sim_length() const { return num_periods * t_mpc; }

    int resolved_probe(int node_count) const {
        if (probe_node >= 0 && probe_node < node_count) return probe_node;
        return (rows / 2) * cols + cols / 2;
    }

    void validate() const {
        check_dim(rows >= 1 && cols >= 1, "SimConfig: rows/cols must be >= 1");
        check_dim(dt > 0, "SimConfig: dt must be positive");
        check_dim(horizon >= 1 && t_mpc >= 1 && horizon >= t_mpc,
                  "SimConfig: need horizon >= t_mpc >= 1");
        check_dim(locality_d >= 0, "SimConfig: locality_d must be >= 0");
        check_dim(num_periods >= 1 && trials >= 1, "SimConfig: periods/trials must be >= 1");
        check_dim(q_scale > 0 && r_scale > 0, "SimConfig: weight scales must be positive");
        check_dim(setpoint_ratio > 0 && setpoint_ratio < 1,
                  "SimConfig: setpoint_ratio must lie in (0,1)");
        check_dim(u_max_ratio > 0, "SimConfig: u_max_ratio must be positive");
        check_dim(load_smoothing >= 0, "SimConfig: load_smoothing must be >= 0");
        admm().validate();
    }

    void save(std::ostream& os) const;
    static SimConfig load(std::istream& is);
};

namespace config_io {

/// Key-value config format: one "key value" pair per line, '#' comments.
inline void for_each_field(
    const std::function<void(const char*, std::string (*)(const SimConfig&),
                             void (*)(SimConfig&, const std::string&))>& fn) {
#define SLSGRID_INT_FIELD(name)                                             \
    fn(#name, +[](const SimConfig& c) { return std::to_string(c.name); },   \
       +[](SimConfig& c, const std::string& v) { c.name = std::stoi(v); })
#define SLSGRID_REAL_FIELD(name)                                            \
    fn(#name, +[](const SimConfig& c) { return format_double(c.name); },    \
       +[](SimConfig& c, const std::string& v) { c.name = std::stod(v); })
    SLSGRID_INT_FIELD(rows);
    SLSGRID_INT_FIELD(cols);
    fn("seed", +[](const SimConfig& c) { return std::to_string(c.seed); },
       +[](SimConfig& c, const std::string& v) { c.seed = std::stoull(v); });
    SLSGRID_REAL_FIELD(dt);
    SLSGRID_REAL_FIELD(u_max);
    SLSGRID_REAL_FIELD(q_scale);
    SLSGRID_REAL_FIELD(r_scale);
    SLSGRID_INT_FIELD(horizon);
    SLSGRID_INT_FIELD(t_mpc);
    SLSGRID_INT_FIELD(locality_d);
    SLSGRID_REAL_FIELD(disturbance_std);
    SLSGRID_REAL_FIELD(setpoint_ratio);
    SLSGRID_REAL_FIELD(u_max_ratio);
    SLSGRID_INT_FIELD(load_smoothing);
    SLSGRID_REAL_FIELD(extra_edge_prob);
    SLSGRID_INT_FIELD(num_periods);
    SLSGRID_INT_FIELD(trials);
    SLSGRID_REAL_FIELD(rho);
    SLSGRID_REAL_FIELD(eps_primal);
    SLSGRID_REAL_FIELD(eps_dual);
    SLSGRID_INT_FIELD(max_iters);
    SLSGRID_INT_FIELD(threads);
    SLSGRID_INT_FIELD(probe_node);
    SLSGRID_REAL_FIELD(divergence_threshold);
#undef SLSGRID_INT_FIELD
#undef SLSGRID_REAL_FIELD
}

}  // namespace config_io

inline void SimConfig::save(std::ostream& os) const {
    config_io::for_each_field([&](const char* key, std::string (*get)(const SimConfig&),
                                  void (*)(SimConfig&, const std::string&)) {
        os << key << " " << get(*this) << "\n";
    });
}

inline SimConfig SimConfig::load(std::istream& is) {
    SimConfig cfg;
    std::map<std::string, void (*)(SimConfig&, const std::string&)> setters;
    config_io::for_each_field([&](const char* key, std::string (*)(const SimConfig&),
                                  void (*set)(SimConfig&, const std::string&)) {
        setters[key] = set;
    });
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key)) continue;
        if (!(ls >> value)) throw NumericalError("SimConfig: missing value for key " + key);
        auto it = setters.find(key);
        if (it == setters.end()) throw NumericalError("SimConfig: unknown key " + key);
        it->second(cfg, value);
    }
    cfg.validate();
    return cfg;
}

/// Diffusion passes over the graph turn white per-node injections into the
/// spatially coherent imbalances that drive long-range transfers: large phase
/// swings at modest steady inputs, the regime where transitions work the
/// input bound hard. Zero-sum is preserved; the result is renormalized to the
/// sampled magnitude scale.
inline LoadProfile smooth_load_profile(const Topology& topology, LoadProfile profile,
                                       int passes) {
    for (int s = 0; s < passes; ++s) {
        Vec next = profile.net_injection;
        for (int i = 0; i < topology.node_count; ++i) {
            double acc = profile.net_injection[i];
            for (int j : topology.neighbors(i)) acc += profile.net_injection[j];
            next[i] = acc / (1.0 + static_cast<double>(topology.neighbors(i).size()));
        }
        profile.net_injection = std::move(next);
    }
    profile.net_injection.array() -= profile.net_injection.mean();
    const double peak = profile.net_injection.cwiseAbs().maxCoeff();
    if (peak > 0) profile.net_injection /= peak;
    return profile;
}

/// Everything one trial consumes, fixed up-front so all controllers face the
/// identical realization (common random numbers).
struct TrialSetup {
    SimConfig config;              // with u_max / disturbance_std resolved
    std::uint64_t trial_seed = 0;
    PlantModel plant;
    std::vector<Setpoint> setpoints;   // one per period, already scaled
    Mat disturbance;                   // L x N, per-node noise per step
    Mat q_weight, r_weight;
};

inline TrialSetup build_trial_setup(const SimConfig& config, std::uint64_t trial_seed) {
    config.validate();
    SimConfig resolved = config;
    PlantModel base = generate_plant(config.rows, config.cols, derive_seed(trial_seed, 1),
                                     config.dt, 1.0, config.extra_edge_prob);
    const int N = base.node_count();
    Mat q_weight = config.q_scale * Mat::Identity(2 * N, 2 * N);
    Mat r_weight = config.r_scale * Mat::Identity(N, N);

    Rng load_rng(derive_seed(trial_seed, 2));
    std::vector<Setpoint> raw;
    for (int p = 0; p < config.num_periods; ++p) {
        LoadProfile profile = smooth_load_profile(
            base.topology(), sample_load_profile(base.topology(), load_rng, 1.0),
            config.load_smoothing);
        raw.push_back(solve_dc_opf(base, profile));
    }

    double u_max = config.u_max;
    if (u_max <= 0.0) {
        // Dry run: track the first setpoint with the unconstrained stationary
        // LQR and set the bound below its peak demand so the constraint binds
        // during transitions. The holdability floor keeps every steady input
        // at no more than setpoint_ratio of the bound; how hard saturation
        // actually bites is then a property of the instance, which is what
        // spreads trials between benign and windup-prone.
        const Mat gain = riccati_infinite(base, q_weight, r_weight).gain;
        Vec x = Vec::Zero(2 * N);
        double demand_peak = 0.0;
        for (int t = 0; t < config.t_mpc; ++t) {
            Vec u = linear_tracking_step(gain, x, raw[0].x_star, raw[0].u_star);
            demand_peak = std::max(demand_peak, u.cwiseAbs().maxCoeff());
            x = base.step(x, u, Vec::Zero(N));
        }
        double steady_peak = 0.0;
        for (const Setpoint& sp : raw)
            steady_peak = std::max(steady_peak, sp.u_star.cwiseAbs().maxCoeff());
        u_max = std::max(config.u_max_ratio * demand_peak,
                         steady_peak / config.setpoint_ratio);
        if (u_max <= 0.0) u_max = 1.0;
    }
    resolved.u_max = u_max;
    PlantModel plant = base.with_u_max(u_max);
    std::vector<Setpoint> setpoints = std::move(raw);

    double noise_std = config.disturbance_std;
    if (noise_std < 0.0) {
        const double first_peak = setpoints[0].u_star.cwiseAbs().maxCoeff();
        noise_std = 0.05 * (first_peak > 0.0 ? first_peak : u_max);
    }
    resolved.disturbance_std = noise_std;

    Rng noise_rng(derive_seed(trial_seed, 3));
    const int L = config.sim_length();
    Mat disturbance(L, N);
    for (int t = 0; t < L; ++t)
        for (int i = 0; i < N; ++i) disturbance(t, i) = noise_std * noise_rng.normal();

    return {std::move(resolved),    trial_seed,          std::move(plant),
            std::move(setpoints),   std::move(disturbance), std::move(q_weight),
            std::move(r_weight)};
}

/// One controller's closed-loop record over a trial.
struct ControllerTrace {
    std::string name;
    std::vector<Vec> states;   // x(0..L)
    std::vector<Vec> inputs;   // u(0..L-1)
    double raw_cost = 0.0;
    double normalized_cost = 1.0;
    bool stable = true;
    int online_solves = 0;
    double wall_ms = 0.0;
    bool errored = false;
    std::string error;
};

namespace detail {

/// Drives one controller over the trial realization. The callback sees the
/// measured state and the setpoint freshly activated on period boundaries.
template <typename Policy>
ControllerTrace simulate_controller(const TrialSetup& setup, const std::string& name,
                                    Policy&& policy) {
    const auto start = std::chrono::steady_clock::now();
    const SimConfig& cfg = setup.config;
    const int L = cfg.sim_length();
    ControllerTrace trace;
    trace.name = name;
    Vec x = Vec::Zero(setup.plant.state_dim());
    trace.states.push_back(x);
    double cost = 0.0;
    bool stable = true;
    for (int t = 0; t < L; ++t) {
        const int period = t / cfg.t_mpc;
        std::optional<Setpoint> fresh;
        if (t % cfg.t_mpc == 0) fresh = setup.setpoints[static_cast<size_t>(period)];
        Vec u = policy(t, x, fresh);
        x = setup.plant.step(x, u, setup.disturbance.row(t).transpose());
        trace.inputs.push_back(u);
        trace.states.push_back(x);
        const Setpoint& ref = setup.setpoints[static_cast<size_t>(period)];
        const Vec dx = x - ref.x_star;
        const Vec du = u - ref.u_star;
        double stage = dx.dot(setup.q_weight * dx) + du.dot(setup.r_weight * du);
        cost += std::min(stage, 1e30);
        if (x.cwiseAbs().maxCoeff() > cfg.divergence_threshold) stable = false;
    }
    trace.raw_cost = cost;
    trace.stable = stable;
    trace.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    return trace;
}

}  // namespace detail

inline ControllerTrace simulate_linear_baseline(const TrialSetup& setup, bool saturated) {
    const Mat gain = riccati_infinite(setup.plant, setup.q_weight, setup.r_weight).gain;
    Vec x_ref, u_ref;
    auto policy = [&](int, const Vec& x, const std::optional<Setpoint>& fresh) {
        if (fresh) {
            x_ref = fresh->x_star;
            u_ref = fresh->u_star;
        }
        Vec u = linear_tracking_step(gain, x, x_ref, u_ref);
        return saturated ? saturate(u, setup.plant.u_max()) : u;
    };
    return detail::simulate_controller(setup, saturated ? "SatCenLin" : "UnsatCenLin", policy);
}

inline ControllerTrace simulate_cen_mpc(const TrialSetup& setup) {
    const SimConfig& cfg = setup.config;
    CentralizedMpcSolver solver(setup.plant, cfg.horizon, setup.q_weight, setup.r_weight,
                                setup.plant.u_max(), cfg.admm());
    int solves = 0;
    auto policy = [&](int, const Vec& x, const std::optional<Setpoint>& fresh) {
        if (fresh) solver.set_reference(fresh->x_star, fresh->u_star);
        PlannedTrajectory plan = solver.solve(x);
        ++solves;
        return saturate(plan.inputs.front(), setup.plant.u_max());
    };
    ControllerTrace trace = detail::simulate_controller(setup, "CenMPC", policy);
    trace.online_solves = solves;
    return trace;
}

inline ControllerTrace simulate_layered(const TrialSetup& setup) {
    const SimConfig& cfg = setup.config;
    LayeredController::Options opt;
    opt.t_mpc = cfg.t_mpc;
    opt.horizon = cfg.horizon;
    opt.locality_d = cfg.locality_d;
    opt.threads = 1;
    LayeredController controller(setup.plant, setup.q_weight, setup.r_weight, cfg.admm(), opt);
    auto policy = [&](int, const Vec& x, const std::optional<Setpoint>& fresh) {
        return controller.step(x, fresh);
    };
    ControllerTrace trace = detail::simulate_controller(setup, "LocLayered", policy);
    trace.online_solves = controller.online_solve_count();
    return trace;
}

/// Paired results of the four controllers on one realization.
struct TrialResult {
    TrialSetup setup;
    std::vector<ControllerTrace> traces;   // UnsatCenLin, SatCenLin, CenMPC, LocLayered
    bool any_error = false;

    const ControllerTrace& trace(const std::string& name) const {
        for (const auto& t : traces)
            if (t.name == name) return t;
        throw DimensionError("TrialResult: unknown controller " + name);
    }
};

inline const std::vector<std::string>& controller_names() {
    static const std::vector<std::string> names = {"UnsatCenLin", "SatCenLin", "CenMPC",
                                                   "LocLayered"};
    return names;
}

/// Normalizes every trace against the unsaturated baseline's cost on the same
/// realization. A zero denominator (nothing happened) normalizes to 1 by
/// convention.
inline void normalize_against_unsaturated(std::vector<ControllerTrace>& traces) {
    if (traces.empty()) return;
    const double denom = traces[0].errored ? 0.0 : traces[0].raw_cost;
    for (auto& trace : traces) {
        if (trace.errored) continue;
        trace.normalized_cost = denom > 0.0 ? trace.raw_cost / denom : 1.0;
    }
}

inline TrialResult run_trial(const SimConfig& config, std::uint64_t trial_seed) {
    TrialResult result{build_trial_setup(config, trial_seed), {}, false};
    auto guarded = [&](const std::string& name,
                       const std::function<ControllerTrace()>& sim) {
        try {
            result.traces.push_back(sim());
        } catch (const std::exception& e) {
            ControllerTrace failed;
            failed.name = name;
            failed.errored = true;
            failed.error = e.what();
            failed.raw_cost = std::numeric_limits<double>::quiet_NaN();
            failed.stable = false;
            result.traces.push_back(std::move(failed));
            result.any_error = true;
        }
    };
    guarded("UnsatCenLin", [&] { return simulate_linear_baseline(result.setup, false); });
    guarded("SatCenLin", [&] { return simulate_linear_baseline(result.setup, true); });
    guarded("CenMPC", [&] { return simulate_cen_mpc(result.setup); });
    guarded("LocLayered", [&] { return simulate_layered(result.setup); });
    normalize_against_unsaturated(result.traces);
    return result;
}

/// Table-style aggregate: mean normalized costs over all clean trials and over
/// the subset where the saturated linear baseline stayed stable.
struct CostReport {
    std::vector<std::string> controllers = controller_names();
    Vec mean_total;
    Vec mean_stable_subset;
    int trials_used = 0;
    int stable_trials = 0;
    int errored_trials = 0;
};

inline CostReport aggregate(const std::vector<TrialResult>& results) {
    CostReport report;
    const int C = static_cast<int>(report.controllers.size());
    report.mean_total = Vec::Zero(C);
    report.mean_stable_subset = Vec::Zero(C);
    for (const auto& result : results) {
        if (result.any_error) {
            ++report.errored_trials;
            continue;
        }
        ++report.trials_used;
        const bool sat_stable = result.trace("SatCenLin").stable;
        if (sat_stable) ++report.stable_trials;
        for (int c = 0; c < C; ++c) {
            const double v = result.traces[static_cast<size_t>(c)].normalized_cost;
            report.mean_total[c] += v;
            if (sat_stable) report.mean_stable_subset[c] += v;
        }
    }
    if (report.trials_used > 0) report.mean_total /= report.trials_used;
    if (report.stable_trials > 0) report.mean_stable_subset /= report.stable_trials;
    return report;
}

/// Runs `trials` independent trials on a worker pool (deterministic per-trial
/// seeds, aggregation in trial order).
inline std::vector<TrialResult> run_benchmark_trials(const SimConfig& config) {
    std::vector<std::optional<TrialResult>> slots(static_cast<size_t>(config.trials));
    parallel_for(
        config.trials,
        [&](int trial) {
            slots[static_cast<size_t>(trial)] =
                run_trial(config, derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(trial)));
        },
        config.threads);
    std::vector<TrialResult> results;
    results.reserve(slots.size());
    for (auto& s : slots) results.push_back(std::move(*s));
    return results;
}

inline CostReport run_benchmark(const SimConfig& config, std::vector<TrialResult>* out = nullptr) {
    std::vector<TrialResult> results = run_benchmark_trials(config);
    CostReport report = aggregate(results);
    if (out) *out = std::move(results);
    return report;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

inline void emit_costs_csv(const std::vector<TrialResult>& results, std::ostream& os) {
    os << "trial,seed,controller,raw_cost,normalized_cost,satcenlin_stable,online_solves,"
          "errored\n";
    for (size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        const bool sat_stable = !r.any_error && r.trace("SatCenLin").stable;
        for (const auto& t : r.traces) {
            os << i << "," << r.setup.trial_seed << "," << t.name << ","
               << format_double(t.raw_cost) << "," << format_double(t.normalized_cost) << ","
               << (sat_stable ? 1 : 0) << "," << t.online_solves << ","
               << (t.errored ? 1 : 0) << "\n";
        }
    }
}

/// Wall-clock telemetry, deliberately separate from the deterministic dumps.
inline void emit_timings_csv(const std::vector<TrialResult>& results, std::ostream& os) {
    os << "trial,controller,wall_ms\n";
    for (size_t i = 0; i < results.size(); ++i)
        for (const auto& t : results[i].traces)
            os << i << "," << t.name << "," << format_double(t.wall_ms) << "\n";
}

inline void emit_summary_csv(const CostReport& report, std::ostream& os) {
    os << "controller,mean_normalized_total,mean_normalized_satcenlin_stable\n";
    for (size_t c = 0; c < report.controllers.size(); ++c)
        os << report.controllers[c] << ","
           << format_double(report.mean_total[static_cast<Eigen::Index>(c)]) << ","
           << format_double(report.mean_stable_subset[static_cast<Eigen::Index>(c)]) << "\n";
}

inline void emit_trajectory_csv(const TrialResult& result, const ControllerTrace& trace,
                                int probe_node, std::ostream& os) {
    os << "t,node,theta,omega,u,w\n";
    const int L = static_cast<int>(trace.inputs.size());
    for (int t = 0; t < L; ++t) {
        os << t << "," << probe_node << ","
           << format_double(trace.states[static_cast<size_t>(t)][2 * probe_node]) << ","
           << format_double(trace.states[static_cast<size_t>(t)][2 * probe_node + 1]) << ","
           << format_double(trace.inputs[static_cast<size_t>(t)][probe_node]) << ","
           << format_double(result.setup.disturbance(t, probe_node)) << "\n";
    }
}

inline void emit_setpoints_csv(const TrialResult& result, std::ostream& os) {
    os << "period,node,theta_star,u_star\n";
    for (size_t p = 0; p < result.setup.setpoints.size(); ++p) {
        const Setpoint& sp = result.setup.setpoints[p];
        for (int i = 0; i < result.setup.plant.node_count(); ++i)
            os << p << "," << i << "," << format_double(sp.x_star[2 * i]) << ","
               << format_double(sp.u_star[i]) << "\n";
    }
}

inline void emit_probe_plots(const TrialResult& result, int probe_node,
                             const std::filesystem::path& dir, const std::string& stem) {
    struct Channel {
        const char* file;
        const char* title;
        const char* ylabel;
        std::function<double(const ControllerTrace&, int)> value;
    };
    const std::vector<Channel> channels = {
        {"phase", "Probe node phase", "theta",
         [probe_node](const ControllerTrace& t, int k) {
             return t.states[static_cast<size_t>(k)][2 * probe_node];
         }},
        {"frequency", "Probe node frequency", "omega",
         [probe_node](const ControllerTrace& t, int k) {
             return t.states[static_cast<size_t>(k)][2 * probe_node + 1];
         }},
        {"input", "Probe node actuation", "u",
         [probe_node](const ControllerTrace& t, int k) {
             return t.inputs[static_cast<size_t>(k)][probe_node];
         }},
    };
    for (const auto& ch : channels) {
        SvgPlot plot(ch.title, "t", ch.ylabel);
        for (const auto& trace : result.traces) {
            if (trace.errored || trace.name == "UnsatCenLin") continue;
            const int L = static_cast<int>(trace.inputs.size());
            std::vector<double> xs, ys;
            for (int t = 0; t < L; ++t) {
                xs.push_back(t);
                ys.push_back(ch.value(trace, t));
            }
            plot.add_series(trace.name, xs, ys);
        }
        std::ofstream os(dir / (stem + "_" + ch.file + ".svg"));
        if (!os) throw NumericalError("emit_probe_plots: cannot open output file");
        plot.write(os);
    }
}

/// Writes costs.csv, summary.csv, per-trial plant/setpoint dumps, probe-node
/// trajectory CSVs, and SVG plots of the first trial into out_dir.
inline void emit_report(const CostReport& report, const std::vector<TrialResult>& results,
                        const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os(out_dir / "costs.csv");
        if (!os) throw NumericalError("emit_report: cannot open costs.csv");
        emit_costs_csv(results, os);
    }
    {
        std::ofstream os(out_dir / "summary.csv");
        if (!os) throw NumericalError("emit_report: cannot open summary.csv");
        emit_summary_csv(report, os);
    }
    {
        std::ofstream os(out_dir / "timings.csv");
        if (!os) throw NumericalError("emit_report: cannot open timings.csv");
        emit_timings_csv(results, os);
    }
    for (size_t i = 0; i < results.size(); ++i) {
        const auto& result = results[i];
        const int probe = result.setup.config.resolved_probe(result.setup.plant.node_count());
        {
            std::ofstream os(out_dir / ("plant_" + std::to_string(i) + ".txt"));
            result.setup.plant.save(os);
        }
        {
            std::ofstream os(out_dir / ("setpoints_" + std::to_string(i) + ".csv"));
            emit_setpoints_csv(result, os);
        }
        for (const auto& trace : result.traces) {
            if (trace.errored) continue;
            std::ofstream os(out_dir /
                             ("traj_" + std::to_string(i) + "_" + trace.name + ".csv"));
            emit_trajectory_csv(result, trace, probe, os);
        }
        if (i == 0) emit_probe_plots(result, probe, out_dir, "trial_0");
    }
}

}  // namespace slsgrid

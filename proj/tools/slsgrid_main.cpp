// Command-line front end: offline synthesis, single-trial simulation, the
// multi-trial benchmark, and report re-rendering from a previous run.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "slsgrid/slsgrid.hpp"

namespace fs = std::filesystem;
using namespace slsgrid;

namespace {

fs::path resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("SLSGRID_OUT_DIR")) return env;
    return "out";
}

SimConfig load_config(const std::string& path) {
    if (path.empty()) return SimConfig{};
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    return SimConfig::load(is);
}

/// Every SimConfig field doubles as a CLI flag; flags override the file.
void add_config_flags(CLI::App* app, std::map<std::string, std::string>& overrides) {
    config_io::for_each_field([&](const char* key, std::string (*)(const SimConfig&),
                                  void (*)(SimConfig&, const std::string&)) {
        app->add_option_function<std::string>(
            "--" + std::string(key),
            [&overrides, key = std::string(key)](const std::string& v) { overrides[key] = v; },
            "override config key '" + std::string(key) + "'");
    });
}

void apply_overrides(SimConfig& cfg, const std::map<std::string, std::string>& overrides) {
    std::map<std::string, void (*)(SimConfig&, const std::string&)> setters;
    config_io::for_each_field([&](const char* key, std::string (*)(const SimConfig&),
                                  void (*set)(SimConfig&, const std::string&)) {
        setters[key] = set;
    });
    for (const auto& [key, value] : overrides) setters.at(key)(cfg, value);
    cfg.validate();
}

int cmd_synth(const std::string& plant_path, const std::string& out_path, int d, int horizon,
              double q_scale, double r_scale, int threads) {
    std::ifstream is(plant_path);
    if (!is) throw std::runtime_error("cannot open plant file: " + plant_path);
    PlantModel plant = PlantModel::load(is);
    const Mat q = q_scale * Mat::Identity(plant.state_dim(), plant.state_dim());
    const Mat r = r_scale * Mat::Identity(plant.input_dim(), plant.input_dim());
    LocalityMask mask = locality_mask(plant.topology(), d);
    SystemResponse response = synthesize_h2(plant, horizon, mask, q, r, threads);
    const double residual = validate_achievability(plant, response);
    std::ofstream os(out_path);
    if (!os) throw std::runtime_error("cannot open output file: " + out_path);
    response.save(os);
    std::cout << "synthesized horizon-" << horizon << " response, d=" << d
              << ", achievability residual " << format_double(residual) << ", H2 cost "
              << format_double(h2_cost(response, q, r)) << "\n";
    return 0;
}

int cmd_simulate(const SimConfig& config, std::uint64_t trial_seed, const fs::path& out_dir) {
    TrialResult result = run_trial(config, trial_seed);
    CostReport report = aggregate({result});
    emit_report(report, {result}, out_dir);
    std::cout << "trial seed " << trial_seed << " (u_max "
              << format_double(result.setup.config.u_max) << ", disturbance std "
              << format_double(result.setup.config.disturbance_std) << ")\n";
    for (const auto& trace : result.traces) {
        std::cout << "  " << trace.name << ": ";
        if (trace.errored) {
            std::cout << "ERROR " << trace.error << "\n";
            continue;
        }
        std::cout << "normalized cost " << format_double(trace.normalized_cost)
                  << (trace.stable ? "" : " (unstable)") << ", online solves "
                  << trace.online_solves << "\n";
    }
    std::cout << "report written to " << out_dir.string() << "\n";
    return result.any_error ? 1 : 0;
}

int cmd_benchmark(const SimConfig& config, const fs::path& out_dir) {
    std::vector<TrialResult> results;
    CostReport report = run_benchmark(config, &results);
    emit_report(report, results, out_dir);
    std::cout << "benchmark: " << report.trials_used << " trials ("
              << report.stable_trials << " with SatCenLin stable, " << report.errored_trials
              << " errored)\n";
    std::cout << "controller          total    SatCenLin-stable\n";
    for (size_t c = 0; c < report.controllers.size(); ++c) {
        std::printf("%-18s %8.3g %10.3g\n", report.controllers[c].c_str(),
                    report.mean_total[static_cast<Eigen::Index>(c)],
                    report.mean_stable_subset[static_cast<Eigen::Index>(c)]);
    }
    std::cout << "report written to " << out_dir.string() << "\n";
    return report.errored_trials > 0 ? 1 : 0;
}

/// Re-renders summary.csv (and the printed table) from a costs.csv dump.
int cmd_report(const fs::path& in_dir, const fs::path& out_dir) {
    std::ifstream is(in_dir / "costs.csv");
    if (!is) throw std::runtime_error("cannot open " + (in_dir / "costs.csv").string());
    std::string line;
    std::getline(is, line);  // header
    struct Row {
        int trial;
        std::string controller;
        double normalized;
        bool stable;
        bool errored;
    };
    std::vector<Row> rows;
    while (std::getline(is, line)) {
        std::stringstream ls(line);
        std::string field;
        Row row;
        std::getline(ls, field, ',');
        row.trial = std::stoi(field);
        std::getline(ls, field, ',');  // seed
        std::getline(ls, row.controller, ',');
        std::getline(ls, field, ',');  // raw
        std::getline(ls, field, ',');
        row.normalized = std::stod(field);
        std::getline(ls, field, ',');
        row.stable = field == "1";
        std::getline(ls, field, ',');  // online solves
        std::getline(ls, field, ',');  // wall
        std::getline(ls, field, ',');
        row.errored = field == "1";
        rows.push_back(row);
    }
    const auto& names = controller_names();
    CostReport report;
    report.mean_total = Vec::Zero(static_cast<Eigen::Index>(names.size()));
    report.mean_stable_subset = Vec::Zero(static_cast<Eigen::Index>(names.size()));
    std::map<int, bool> trial_errored, trial_stable;
    for (const auto& row : rows) {
        trial_errored[row.trial] = trial_errored[row.trial] || row.errored;
        trial_stable[row.trial] = row.stable;
    }
    for (const auto& [trial, errored] : trial_errored) {
        if (errored) {
            ++report.errored_trials;
            continue;
        }
        ++report.trials_used;
        if (trial_stable[trial]) ++report.stable_trials;
    }
    for (const auto& row : rows) {
        if (trial_errored[row.trial]) continue;
        for (size_t c = 0; c < names.size(); ++c) {
            if (names[c] != row.controller) continue;
            report.mean_total[static_cast<Eigen::Index>(c)] += row.normalized;
            if (row.stable)
                report.mean_stable_subset[static_cast<Eigen::Index>(c)] += row.normalized;
        }
    }
    if (report.trials_used > 0) report.mean_total /= report.trials_used;
    if (report.stable_trials > 0) report.mean_stable_subset /= report.stable_trials;
    fs::create_directories(out_dir);
    std::ofstream os(out_dir / "summary.csv");
    emit_summary_csv(report, os);
    std::cout << "controller          total    SatCenLin-stable\n";
    for (size_t c = 0; c < names.size(); ++c)
        std::printf("%-18s %8.3g %10.3g\n", names[c].c_str(),
                    report.mean_total[static_cast<Eigen::Index>(c)],
                    report.mean_stable_subset[static_cast<Eigen::Index>(c)]);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-horizon system level synthesis, layered MPC, and the power-grid "
                 "benchmark harness"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "offline localized H2 synthesis for a plant dump");
    std::string plant_path, synth_out = "response.txt";
    int synth_d = 2, synth_T = 20, synth_threads = 0;
    double synth_q = 1.0, synth_r = 1.0;
    synth->add_option("--plant", plant_path, "plant dump file")->required();
    synth->add_option("--out", synth_out, "response output file");
    synth->add_option("--d", synth_d, "locality radius (hops)");
    synth->add_option("--T", synth_T, "FIR horizon");
    synth->add_option("--q-scale", synth_q, "state weight scale");
    synth->add_option("--r-scale", synth_r, "input weight scale");
    synth->add_option("--threads", synth_threads, "worker threads (0 = hardware)");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run one trial and dump trajectories");
    std::string sim_config_path, sim_out;
    std::uint64_t sim_trial_seed = 0;
    bool sim_seed_set = false;
    std::map<std::string, std::string> sim_overrides;
    simulate->add_option("--config", sim_config_path, "key-value config file");
    simulate->add_option("--out-dir", sim_out, "output directory (default $SLSGRID_OUT_DIR or ./out)");
    simulate
        ->add_option_function<std::uint64_t>(
            "--trial-seed", [&](std::uint64_t v) { sim_trial_seed = v; sim_seed_set = true; },
            "trial seed (default: derived from config seed)")
        ->expected(1);
    add_config_flags(simulate, sim_overrides);

    // benchmark
    auto* benchmark = app.add_subcommand("benchmark", "multi-trial cost comparison");
    std::string bench_config_path, bench_out;
    int bench_trials = -1;
    std::map<std::string, std::string> bench_overrides;
    benchmark->add_option("--config", bench_config_path, "key-value config file");
    benchmark->add_option("--out-dir", bench_out, "output directory");
    benchmark->add_option("--trials", bench_trials, "number of trials (override)");
    add_config_flags(benchmark, bench_overrides);

    // report
    auto* report = app.add_subcommand("report", "re-render summary from a costs.csv dump");
    std::string report_in, report_out;
    report->add_option("--in-dir", report_in, "directory containing costs.csv")->required();
    report->add_option("--out-dir", report_out, "output directory (default: same as --in-dir)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return cmd_synth(plant_path, synth_out, synth_d, synth_T, synth_q, synth_r,
                             synth_threads);
        if (simulate->parsed()) {
            SimConfig cfg = load_config(sim_config_path);
            apply_overrides(cfg, sim_overrides);
            const std::uint64_t trial_seed =
                sim_seed_set ? sim_trial_seed : derive_seed(cfg.seed, 1000);
            return cmd_simulate(cfg, trial_seed, resolve_out_dir(sim_out));
        }
        if (benchmark->parsed()) {
            SimConfig cfg = load_config(bench_config_path);
            apply_overrides(cfg, bench_overrides);
            if (bench_trials > 0) cfg.trials = bench_trials;
            return cmd_benchmark(cfg, resolve_out_dir(bench_out));
        }
        if (report->parsed()) {
            const fs::path in_dir = report_in;
            return cmd_report(in_dir, report_out.empty() ? in_dir : fs::path(report_out));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

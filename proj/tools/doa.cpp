// SPDX-License-Identifier: Apache-2.0
//
// ucadoa - wideband 2D direction-of-arrival estimation for uniform circular arrays
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed
// under the License is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR
// CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

// Experiment runner: Monte-Carlo batches, parameter sweeps, bound evaluation,
// and the parameter-constraint predicate, all driven by one JSON config.
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ucadoa/harness.hpp"

namespace {

using namespace ucadoa;

void print_table(const ResultTable& table) {
    std::printf("%-9s %-3s %-10s %10s %12s %8s %14s %10s\n", "method", "n", "axis", "value",
                "rmse_deg", "sdp", "rmse_crb_deg", "mean_iter");
    for (const ResultRow& r : table.rows)
        std::printf("%-9s %-3d %-10s %10.4g %12.6g %8.4g %14.6g %10.4g\n", method_name(r.method),
                    r.n_sources, sweep_axis_name(r.sweep_axis), r.sweep_value, r.rmse_deg, r.sdp,
                    r.rmse_crb_deg, r.mean_iterations);
}

int run_command(ExperimentConfig cfg) {
    ensure_writable_directory(cfg.output_dir);
    const ResultTable table = run_batch(cfg);
    const auto files = emit_outputs(table, cfg.output_dir);
    print_table(table);
    for (const auto& f : files) std::printf("wrote %s\n", f.string().c_str());
    return 0;
}

int crb_command(const ExperimentConfig& cfg) {
    const ArrayGeometry geom = make_geometry(cfg);
    std::vector<int> source_counts;
    for (const auto& group : cfg.doa_groups)
        source_counts.push_back(static_cast<int>(group.size()));
    std::sort(source_counts.begin(), source_counts.end());
    source_counts.erase(std::unique(source_counts.begin(), source_counts.end()),
                        source_counts.end());

    std::vector<CrbResult> results;
    for (std::size_t g = 0; g < cfg.doa_groups.size(); ++g) {
        ScenarioConfig sc = cfg.scenario;
        sc.path_doas = cfg.doa_groups[g];
        results.push_back(crb_closed_form(make_crb_scenario(geom, sc)));
        std::printf("group %zu:", g + 1);
        const int n = static_cast<int>(cfg.doa_groups[g].size());
        for (int i = 0; i < n; ++i) {
            const DoA& d = cfg.doa_groups[g][static_cast<std::size_t>(i)];
            std::printf(" (%g, %g) var_theta=%.6g var_phi=%.6g deg^2", d.elevation_deg,
                        d.azimuth_deg, results.back().per_angle_bounds[static_cast<std::size_t>(i)],
                        results.back().per_angle_bounds[static_cast<std::size_t>(n + i)]);
        }
        std::printf("\n");
    }
    for (int n : source_counts) {
        std::vector<CrbResult> pool;
        for (std::size_t g = 0; g < cfg.doa_groups.size(); ++g)
            if (static_cast<int>(cfg.doa_groups[g].size()) == n) pool.push_back(results[g]);
        std::printf("rmse_crb n=%d: %.6g deg\n", n, rmse_crb(pool, n));
    }
    return 0;
}

int advantage_command(const ExperimentConfig& cfg, double convergence_iterations) {
    const ComplexityAdvantageParams params =
        complexity_advantage_params_from(cfg, convergence_iterations);
    const ComplexityAdvantageResult res = complexity_advantage_check(params);
    std::printf("satisfied: %s\n", res.satisfied ? "yes" : "no");
    std::printf("lhs: %.6g\nrhs: %.6g\nmargin: %.6g\n", res.lhs, res.rhs, res.margin);
    return 0;
}

std::vector<double> parse_value_list(const std::string& text) {
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string item = text.substr(start, comma - start);
        try {
            values.push_back(ucadoa::detail::parse_double_field(item, "sweep value"));
        } catch (const std::invalid_argument&) {
            throw config_error("sweep: bad value '" + item + "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return values;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"wideband 2D direction-of-arrival estimation experiments"};
    app.require_subcommand(1);

    std::string config_path;
    bool full_scale = false;
    int threads = 0;
    std::string out_dir;
    std::string sweep_axis;
    std::string sweep_values;
    double convergence_iterations = 5.0;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON experiment configuration")->required();
    };
    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_flag("--full-scale", full_scale, "10 us capture and 200 trials");
        sub->add_option("--threads", threads, "worker thread count");
        sub->add_option("--out", out_dir, "output directory");
    };

    CLI::App* run = app.add_subcommand("run", "run the configured Monte-Carlo batch");
    add_config(run);
    add_run_flags(run);

    CLI::App* sweep = app.add_subcommand("sweep", "run the batch over a parameter sweep");
    add_config(sweep);
    add_run_flags(sweep);
    sweep->add_option("--axis", sweep_axis, "snr | pre-error | steps | fft-size")->required();
    sweep->add_option("--values", sweep_values, "comma-separated sweep values")->required();

    CLI::App* crb = app.add_subcommand("crb", "evaluate the estimation bound per group");
    add_config(crb);

    CLI::App* adv =
        app.add_subcommand("check-advantage", "evaluate the parameter-constraint predicate");
    add_config(adv);
    adv->add_option("--convergence-iterations", convergence_iterations,
                     "assumed iteration count at convergence");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        ExperimentConfig cfg = ucadoa::load_experiment_config(config_path);
        if (full_scale) {
            cfg.scenario.duration = 10e-6;
            cfg.trials = 200;
        }
        if (threads > 0) cfg.threads = threads;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (sweep->parsed()) {
            cfg.sweep_axis = ucadoa::parse_sweep_axis(sweep_axis);
            if (cfg.sweep_axis == ucadoa::SweepAxis::none)
                throw config_error("sweep: axis cannot be 'none'");
            cfg.sweep_values = parse_value_list(sweep_values);
        }
        cfg.validate();

        if (run->parsed() || sweep->parsed()) return run_command(std::move(cfg));
        if (crb->parsed()) return crb_command(cfg);
        if (adv->parsed()) return advantage_command(cfg, convergence_iterations);
        return 1;
    } catch (const ucadoa::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

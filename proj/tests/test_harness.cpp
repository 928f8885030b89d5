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

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ucadoa/harness.hpp"

using namespace ucadoa;

namespace {

// Short capture and coarse steps keep one trial in the low milliseconds.
ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.scenario.duration = 2e-7;
    cfg.scenario.fft_size = 16;
    cfg.ripf.step_theta_deg = 1.0;
    cfg.ripf.step_phi_deg = 1.0;
    cfg.doa_groups = {{DoA(60, 150)}, {DoA(33, 50)}, {DoA(60, 150), DoA(20, 45)}};
    cfg.trials = 2;
    cfg.master_seed = 42;
    return cfg;
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t count = 0;
    for (std::size_t pos = text.find(needle); pos != std::string::npos;
         pos = text.find(needle, pos + needle.size()))
        ++count;
    return count;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_CASE("configuration parsing is strict") {
    SECTION("empty object yields the desk-scale defaults") {
        const ExperimentConfig cfg = experiment_config_from_json("{}");
        CHECK(cfg.trials == 50);
        CHECK(cfg.scenario.duration == 1e-6);
        CHECK(cfg.scenario.fft_size == 32);
        CHECK(cfg.elements == 5);
        CHECK(cfg.methods == std::vector<Method>{Method::ripf});
        CHECK(cfg.doa_groups.size() == 9);
        CHECK(cfg.sweep_axis == SweepAxis::none);
        CHECK(cfg.measure_wall_time == false);
        CHECK(cfg.threads == 1);
    }
    SECTION("full document round-trips every field") {
        const std::string text = R"({
            "scenario": {"center_frequency": 2e9, "bandwidth": 5e8, "sample_rate": 6.25e8,
                         "duration": 4e-6, "fft_size": 8, "snr_db": 3.5, "noise_free": false,
                         "path_delay": 2e-9, "time_domain_steering": false},
            "elements": 6, "radius_m": 0.02,
            "methods": ["ripf", "r-csm"],
            "ripf": {"max_iterations": 9, "bias": 2.5, "avg_err_theta_deg": 2.0,
                     "avg_err_phi_deg": 1.5, "step_theta_deg": 0.5, "step_phi_deg": 0.25},
            "doa_groups": [[[10, 20]], [[30, 40], [50, 60]]],
            "trials": 3,
            "sweep": {"axis": "pre_error", "values": [1.0, 2.0]},
            "master_seed": 99, "output_dir": "elsewhere",
            "measure_wall_time": true, "threads": 4})";
        const ExperimentConfig cfg = experiment_config_from_json(text);
        CHECK(cfg.scenario.center_frequency == 2e9);
        CHECK(cfg.elements == 6);
        CHECK(cfg.radius_m == 0.02);
        CHECK(cfg.methods == std::vector<Method>{Method::ripf, Method::r_csm});
        CHECK(cfg.ripf.max_iterations == 9);
        CHECK(cfg.ripf.step_phi_deg == 0.25);
        CHECK(cfg.doa_groups.size() == 2);
        CHECK(cfg.doa_groups[1][1].elevation_deg == 50.0);
        CHECK(cfg.trials == 3);
        CHECK(cfg.sweep_axis == SweepAxis::pre_error);
        CHECK(cfg.sweep_values == std::vector<double>{1.0, 2.0});
        CHECK(cfg.master_seed == 99);
        CHECK(cfg.output_dir == "elsewhere");
        CHECK(cfg.measure_wall_time == true);
        CHECK(cfg.threads == 4);
    }
    SECTION("unknown keys are rejected at every level") {
        CHECK_THROWS_AS(experiment_config_from_json(R"({"trails": 3})"), config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"scenario": {"snr": 10}})"), config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"scenario": {"path_doas": [[60,150]]}})"),
                        config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"ripf": {"iterations": 5}})"),
                        config_error);
        CHECK_THROWS_AS(
            experiment_config_from_json(R"({"sweep": {"axis": "snr", "values": [1], "x": 2}})"),
            config_error);
    }
    SECTION("malformed documents and values are config errors") {
        CHECK_THROWS_AS(experiment_config_from_json("{'bad json'}"), config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"trials": "many"})"), config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"trials": 0})"), config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"methods": []})"), config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"methods": ["magic"]})"), config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"methods": ["ripf", "ripf"]})"),
                        config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"doa_groups": []})"), config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"doa_groups": [[[95, 10]]]})"),
                        config_error);
        CHECK_THROWS_AS(experiment_config_from_json(
                            R"({"doa_groups": [[[10,1],[11,1],[12,1],[13,1],[14,1]]]})"),
                        config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"sweep": {"axis": "snr"}})"),
                        config_error);
        CHECK_THROWS_AS(experiment_config_from_json(R"({"sweep": {"axis": "volume",
                            "values": [1]}})"),
                        config_error);
        CHECK_THROWS_AS(
            experiment_config_from_json(R"({"sweep": {"axis": "fft_size", "values": [8.5]}})"),
            config_error);
        CHECK_THROWS_AS(
            experiment_config_from_json(R"({"sweep": {"axis": "steps", "values": [0.0]}})"),
            config_error);
        CHECK_THROWS_AS(load_experiment_config("/no/such/config.json"), config_error);
    }
    SECTION("axis names accept both spellings") {
        CHECK(parse_sweep_axis("pre-error") == SweepAxis::pre_error);
        CHECK(parse_sweep_axis("fft_size") == SweepAxis::fft_size);
        CHECK_THROWS_AS(parse_sweep_axis("banana"), config_error);
    }
}

TEST_CASE("reference direction groups") {
    const auto groups = reference_direction_groups();
    REQUIRE(groups.size() == 9);
    const std::vector<std::size_t> sizes{1, 1, 1, 2, 2, 2, 3, 3, 3};
    for (std::size_t g = 0; g < groups.size(); ++g) CHECK(groups[g].size() == sizes[g]);
    CHECK(groups[0][0].elevation_deg == 60.0);
    CHECK(groups[0][0].azimuth_deg == 150.0);
    CHECK(groups[4][1].elevation_deg == 70.0);
    CHECK(groups[8][2].azimuth_deg == 60.0);
}

TEST_CASE("batch rows pool groups by source count") {
    ExperimentConfig cfg = small_config();
    const ResultTable table = run_batch(cfg);

    REQUIRE(table.rows.size() == 2);  // two N=1 groups pool into one row
    CHECK(table.rows[0].n_sources == 1);
    CHECK(table.rows[1].n_sources == 2);
    for (const ResultRow& r : table.rows) {
        CHECK(r.method == Method::ripf);
        CHECK(r.sweep_axis == SweepAxis::none);
        CHECK(r.sweep_value == 0.0);
        CHECK(r.rmse_deg >= 0.0);
        CHECK(r.sdp >= 0.0);
        CHECK(r.sdp <= 1.0);
        CHECK(r.rmse_crb_deg > 0.0);
        CHECK(r.mean_wall_time_s == 0.0);  // timing is opt-in
        CHECK(r.mean_flops > 0.0);
        CHECK(r.mean_iterations >= 1.0);
        CHECK(r.input_checksum != 0);
    }
}

TEST_CASE("identical batches produce identical bytes at any worker count") {
    ExperimentConfig cfg = small_config();
    const std::string once = results_csv_text(run_batch(cfg));
    const std::string twice = results_csv_text(run_batch(cfg));
    CHECK(once == twice);

    cfg.threads = 3;
    const std::string threaded = results_csv_text(run_batch(cfg));
    CHECK(threaded == once);
}

TEST_CASE("all methods see the same per-trial inputs") {
    ExperimentConfig cfg = small_config();
    cfg.doa_groups = {{DoA(60, 150)}};
    cfg.methods = {Method::ripf, Method::ccsm1};
    const ResultTable table = run_batch(cfg);

    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].method == Method::ripf);
    CHECK(table.rows[1].method == Method::ccsm1);
    CHECK(table.rows[0].input_checksum == table.rows[1].input_checksum);
    CHECK(table.rows[1].mean_iterations == 1.0);  // single-pass variant

    // Adding a method must not disturb an existing method's results.
    ExperimentConfig solo = cfg;
    solo.methods = {Method::ripf};
    const ResultTable alone = run_batch(solo);
    CHECK(alone.rows[0].rmse_deg == table.rows[0].rmse_deg);
    CHECK(alone.rows[0].mean_flops == table.rows[0].mean_flops);
}

TEST_CASE("sweeps rewrite exactly one knob") {
    ExperimentConfig cfg = small_config();
    cfg.doa_groups = {{DoA(60, 150)}};

    SECTION("snr moves the noise floor and the bound") {
        cfg.sweep_axis = SweepAxis::snr;
        cfg.sweep_values = {0.0, 10.0};
        const ResultTable table = run_batch(cfg);
        REQUIRE(table.rows.size() == 2);
        CHECK(table.rows[0].sweep_axis == SweepAxis::snr);
        CHECK(table.rows[0].sweep_value == 0.0);
        CHECK(table.rows[1].sweep_value == 10.0);
        CHECK(table.rows[1].rmse_crb_deg < table.rows[0].rmse_crb_deg);
        CHECK(table.rows[0].input_checksum != table.rows[1].input_checksum);
    }
    SECTION("pre-estimate error leaves the scenario and bound alone") {
        cfg.sweep_axis = SweepAxis::pre_error;
        cfg.sweep_values = {0.5, 3.0};
        const ResultTable table = run_batch(cfg);
        REQUIRE(table.rows.size() == 2);
        CHECK(table.rows[0].rmse_crb_deg == table.rows[1].rmse_crb_deg);
        // Different pre-estimates are part of the estimator input digest.
        CHECK(table.rows[0].input_checksum != table.rows[1].input_checksum);
    }
    SECTION("fft size reshapes the stack") {
        cfg.sweep_axis = SweepAxis::fft_size;
        cfg.sweep_values = {8.0, 16.0};
        const ResultTable table = run_batch(cfg);
        REQUIRE(table.rows.size() == 2);
        CHECK(table.rows[0].input_checksum != table.rows[1].input_checksum);
    }
}

TEST_CASE("results csv round-trips exactly") {
    ExperimentConfig cfg = small_config();
    cfg.doa_groups = {{DoA(60, 150)}, {DoA(60, 150), DoA(20, 45)}};
    cfg.sweep_axis = SweepAxis::snr;
    cfg.sweep_values = {0.0, 10.0};
    const ResultTable table = run_batch(cfg);
    const std::string text = results_csv_text(table);

    CHECK(text.rfind("method,n_sources,sweep_axis,sweep_value,rmse_deg,sdp,rmse_crb_deg,"
                     "mean_wall_time_s,mean_flops,mean_iterations,input_checksum\n",
                     0) == 0);

    const ResultTable parsed = parse_results_csv(text);
    REQUIRE(parsed.rows.size() == table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const ResultRow& a = table.rows[i];
        const ResultRow& b = parsed.rows[i];
        CHECK(a.method == b.method);
        CHECK(a.n_sources == b.n_sources);
        CHECK(a.sweep_axis == b.sweep_axis);
        CHECK(a.sweep_value == b.sweep_value);
        CHECK(a.rmse_deg == b.rmse_deg);
        CHECK(a.sdp == b.sdp);
        CHECK(a.rmse_crb_deg == b.rmse_crb_deg);
        CHECK(a.mean_wall_time_s == b.mean_wall_time_s);
        CHECK(a.mean_flops == b.mean_flops);
        CHECK(a.mean_iterations == b.mean_iterations);
        CHECK(a.input_checksum == b.input_checksum);
    }

    SECTION("malformed documents are rejected") {
        CHECK_THROWS_AS(parse_results_csv("rmse\n1\n"), std::invalid_argument);
        CHECK_THROWS_AS(parse_results_csv(std::string(results_csv_header) + "\nripf,1\n"),
                        std::invalid_argument);
        std::string bad = text;
        bad.replace(bad.find("snr"), 3, "xyz");
        CHECK_THROWS_AS(parse_results_csv(bad), std::invalid_argument);
    }
}

TEST_CASE("emitted plot files carry one series per method and bound") {
    ExperimentConfig cfg = small_config();
    cfg.doa_groups = {{DoA(60, 150)}};
    cfg.methods = {Method::ripf, Method::ccsm1};
    cfg.sweep_axis = SweepAxis::snr;
    cfg.sweep_values = {0.0, 10.0};
    const ResultTable table = run_batch(cfg);

    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "ucadoa_harness_test_out";
    std::filesystem::remove_all(dir);
    const auto files = emit_outputs(table, dir);
    REQUIRE(files.size() == 4);
    for (const auto& f : files) CHECK(std::filesystem::exists(f));

    const std::string rmse_svg = slurp(dir / "rmse.svg");
    // Two method series plus one bound series.
    CHECK(count_occurrences(rmse_svg, "class=\"series\"") == 3);
    CHECK(count_occurrences(rmse_svg, "stroke-dasharray") >= 1);
    const std::string sdp_svg = slurp(dir / "sdp.svg");
    CHECK(count_occurrences(sdp_svg, "class=\"series\"") == 2);

    CHECK(slurp(dir / "results.csv") == results_csv_text(table));

    SECTION("a sweep-free table still plots single-point series") {
        ExperimentConfig point = small_config();
        point.doa_groups = {{DoA(60, 150)}};
        const ResultTable single = run_batch(point);
        const auto single_files = emit_outputs(single, dir / "single");
        const std::string svg = slurp(dir / "single" / "rmse.svg");
        CHECK(count_occurrences(svg, "class=\"series\"") == 2);  // method + bound
        CHECK(count_occurrences(svg, "<circle") >= 2);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("output locations are probed before compute") {
    CHECK_THROWS_AS(ensure_writable_directory("/proc/sys/ucadoa-probe"), std::runtime_error);
    CHECK_THROWS_AS(emit_outputs(ResultTable{}, std::filesystem::temp_directory_path()),
                    std::invalid_argument);
}

TEST_CASE("constraint predicate bridge uses the experiment settings") {
    ExperimentConfig cfg;                 // desk-scale defaults
    cfg.scenario.duration = 10e-6;        // reference capture length
    cfg.doa_groups = {{DoA(60, 150)}};
    const ComplexityAdvantageParams p = complexity_advantage_params_from(cfg, 5.0);
    CHECK(p.elements == 5.0);
    CHECK(p.fft_size == 32.0);
    CHECK(p.snapshots == 3515.0);
    CHECK(p.source_count == 1.0);
    CHECK(p.v_theta_deg == 0.2);
    CHECK(p.grid_theta == 451.0);
    CHECK(p.grid_phi == 1800.0);
    CHECK(p.max_iterations == 15.0);
    CHECK(p.convergence_iterations == 5.0);

    const ComplexityAdvantageResult res = complexity_advantage_check(p);
    CHECK(res.satisfied);
    CHECK(res.margin == Catch::Approx(0.8101).margin(2e-3));

    // The widest group drives the region term.
    ExperimentConfig multi = cfg;
    multi.doa_groups = reference_direction_groups();
    CHECK(complexity_advantage_params_from(multi, 5.0).source_count == 3.0);
}

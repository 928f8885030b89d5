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

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ucadoa/array.hpp"
#include "ucadoa/common.hpp"
#include "ucadoa/crb.hpp"
#include "ucadoa/estimators.hpp"
#include "ucadoa/metrics.hpp"
#include "ucadoa/signal.hpp"

namespace ucadoa {

enum class SweepAxis { none, snr, pre_error, steps, fft_size };

inline const char* sweep_axis_name(SweepAxis a) {
    switch (a) {
    case SweepAxis::none: return "none";
    case SweepAxis::snr: return "snr";
    case SweepAxis::pre_error: return "pre_error";
    case SweepAxis::steps: return "steps";
    case SweepAxis::fft_size: return "fft_size";
    }
    throw std::invalid_argument("sweep_axis_name: unknown axis");
}

// Accepts both the config spelling (snake_case) and the CLI spelling (hyphens).
inline SweepAxis parse_sweep_axis(std::string name) {
    std::replace(name.begin(), name.end(), '-', '_');
    for (SweepAxis a : {SweepAxis::none, SweepAxis::snr, SweepAxis::pre_error, SweepAxis::steps,
                        SweepAxis::fft_size}) {
        if (name == sweep_axis_name(a)) return a;
    }
    throw config_error("unknown sweep axis '" + name + "'");
}

// Reference direction groups: three single-source, three two-source, and
// three three-source constellations reused across all batch experiments.
inline std::vector<std::vector<DoA>> reference_direction_groups() {
    return {
        {DoA(60, 150)},
        {DoA(33, 50)},
        {DoA(28, 230)},
        {DoA(60, 150), DoA(20, 45)},
        {DoA(40, 175), DoA(70, 250)},
        {DoA(25, 230), DoA(65, 150)},
        {DoA(60, 150), DoA(30, 95), DoA(45, 300)},
        {DoA(30, 50), DoA(40, 190), DoA(70, 250)},
        {DoA(25, 230), DoA(65, 150), DoA(35, 60)},
    };
}

// One batch description: which scenario, which estimators, which direction
// groups, how many Monte-Carlo trials, and optionally one swept parameter.
// Defaults are the desk-scale experiment (1 us capture, 50 trials).
struct ExperimentConfig {
    ScenarioConfig scenario;
    int elements = 5;
    double radius_m = 0.0;  // 0 = largest ambiguity-free ring for the band edge
    std::vector<Method> methods = {Method::ripf};
    RipfParams ripf;
    std::vector<std::vector<DoA>> doa_groups = reference_direction_groups();
    int trials = 50;
    SweepAxis sweep_axis = SweepAxis::none;
    std::vector<double> sweep_values;
    std::uint64_t master_seed = 1;
    std::string output_dir = "out";
    bool measure_wall_time = false;  // timing makes the CSV non-reproducible
    int threads = 1;

    void validate() const;
};

inline ArrayGeometry make_geometry(const ExperimentConfig& cfg) {
    const double f_max = cfg.scenario.center_frequency + 0.5 * cfg.scenario.bandwidth;
    if (cfg.radius_m > 0.0) return ArrayGeometry(cfg.elements, cfg.radius_m, f_max);
    return ArrayGeometry::max_for(cfg.elements, f_max);
}

// One swept parameter rewrites one knob; everything else stays at the
// configured value. Search steps and pre-estimate errors move both axes
// together the way the reference experiments vary them.
inline void apply_sweep(SweepAxis axis, double value, ScenarioConfig& scenario, RipfParams& ripf) {
    switch (axis) {
    case SweepAxis::none:
        return;
    case SweepAxis::snr:
        scenario.snr_db = value;
        return;
    case SweepAxis::pre_error:
        ripf.avg_err_theta_deg = value;
        ripf.avg_err_phi_deg = value;
        return;
    case SweepAxis::steps:
        ripf.step_theta_deg = value;
        ripf.step_phi_deg = value;
        return;
    case SweepAxis::fft_size:
        scenario.fft_size = static_cast<int>(std::lround(value));
        return;
    }
}

inline void ExperimentConfig::validate() const {
    try {
        if (elements < 3) throw config_error("config: need at least 3 array elements");
        if (radius_m < 0.0) throw config_error("config: radius must be nonnegative");
        if (trials < 1) throw config_error("config: need at least one trial");
        if (threads < 1) throw config_error("config: need at least one worker thread");
        if (methods.empty()) throw config_error("config: no methods requested");
        for (std::size_t i = 0; i < methods.size(); ++i)
            for (std::size_t j = i + 1; j < methods.size(); ++j)
                if (methods[i] == methods[j])
                    throw config_error(std::string("config: method '") + method_name(methods[i]) +
                                       "' listed twice");
        if (doa_groups.empty()) throw config_error("config: no direction groups");
        for (const auto& group : doa_groups) {
            if (group.empty()) throw config_error("config: empty direction group");
            if (static_cast<int>(group.size()) >= elements)
                throw config_error("config: a group has as many sources as array elements");
        }
        if (sweep_axis != SweepAxis::none && sweep_values.empty())
            throw config_error("config: sweep present but no values");
        if (sweep_axis == SweepAxis::none && !sweep_values.empty())
            throw config_error("config: sweep values without an axis");
        for (double v : sweep_values) {
            switch (sweep_axis) {
            case SweepAxis::pre_error:
                if (v < 0.0) throw config_error("config: pre-estimate error sweep below zero");
                break;
            case SweepAxis::steps:
                if (!(v > 0.0)) throw config_error("config: search step sweep must be positive");
                break;
            case SweepAxis::fft_size:
                if (v != std::floor(v) || v < 2.0)
                    throw config_error("config: fft size sweep needs integers >= 2");
                break;
            default:
                break;
            }
        }
        ripf.validate();
        const ArrayGeometry geom = make_geometry(*this);
        // Every (sweep point, group) combination must describe a runnable
        // scenario; catching that here keeps failures out of the work pool.
        std::vector<double> points = sweep_values;
        if (points.empty()) points.push_back(0.0);
        for (double v : points) {
            ScenarioConfig sc = scenario;
            RipfParams rp = ripf;
            apply_sweep(sweep_axis, v, sc, rp);
            rp.validate();
            for (const auto& group : doa_groups) {
                sc.path_doas = group;
                sc.validate(geom);
            }
        }
    } catch (const config_error&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
}

namespace detail {

inline void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const char* where) {
    if (!j.is_object()) throw config_error(std::string(where) + ": expected an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) known = true;
        if (!known)
            throw config_error(std::string(where) + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const char* where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error(std::string(where) + ": wrong type for '" + key + "'");
    }
}

inline DoA parse_doa(const nlohmann::json& j, const char* where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw config_error(std::string(where) + ": a direction is [elevation, azimuth]");
    try {
        return DoA(j[0].get<double>(), j[1].get<double>());
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string(where) + ": " + e.what());
    }
}

} // namespace detail

// Strict JSON reader: field names mirror the config structs in snake_case and
// anything unrecognized is an error, so typos cannot silently fall back to
// defaults. Directions are [elevation, azimuth] pairs; per-group directions
// live in doa_groups, never inside the scenario.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    detail::require_keys(j,
                         {"scenario", "elements", "radius_m", "methods", "ripf", "doa_groups",
                          "trials", "sweep", "master_seed", "output_dir", "measure_wall_time",
                          "threads"},
                         "config");

    if (j.contains("scenario")) {
        const nlohmann::json& s = j.at("scenario");
        detail::require_keys(s,
                             {"center_frequency", "bandwidth", "sample_rate", "duration",
                              "fft_size", "snr_db", "noise_free", "path_delay",
                              "time_domain_steering"},
                             "scenario");
        detail::read_field(s, "center_frequency", cfg.scenario.center_frequency, "scenario");
        detail::read_field(s, "bandwidth", cfg.scenario.bandwidth, "scenario");
        detail::read_field(s, "sample_rate", cfg.scenario.sample_rate, "scenario");
        detail::read_field(s, "duration", cfg.scenario.duration, "scenario");
        detail::read_field(s, "fft_size", cfg.scenario.fft_size, "scenario");
        detail::read_field(s, "snr_db", cfg.scenario.snr_db, "scenario");
        detail::read_field(s, "noise_free", cfg.scenario.noise_free, "scenario");
        detail::read_field(s, "path_delay", cfg.scenario.path_delay, "scenario");
        detail::read_field(s, "time_domain_steering", cfg.scenario.time_domain_steering,
                           "scenario");
    }
    detail::read_field(j, "elements", cfg.elements, "config");
    detail::read_field(j, "radius_m", cfg.radius_m, "config");
    if (j.contains("methods")) {
        if (!j.at("methods").is_array()) throw config_error("config: methods must be a list");
        cfg.methods.clear();
        for (const nlohmann::json& m : j.at("methods")) {
            if (!m.is_string()) throw config_error("config: methods must be strings");
            try {
                cfg.methods.push_back(parse_method(m.get<std::string>()));
            } catch (const std::invalid_argument& e) {
                throw config_error(std::string("config: ") + e.what());
            }
        }
    }
    if (j.contains("ripf")) {
        const nlohmann::json& r = j.at("ripf");
        detail::require_keys(r,
                             {"max_iterations", "bias", "avg_err_theta_deg", "avg_err_phi_deg",
                              "step_theta_deg", "step_phi_deg"},
                             "ripf");
        detail::read_field(r, "max_iterations", cfg.ripf.max_iterations, "ripf");
        detail::read_field(r, "bias", cfg.ripf.bias, "ripf");
        detail::read_field(r, "avg_err_theta_deg", cfg.ripf.avg_err_theta_deg, "ripf");
        detail::read_field(r, "avg_err_phi_deg", cfg.ripf.avg_err_phi_deg, "ripf");
        detail::read_field(r, "step_theta_deg", cfg.ripf.step_theta_deg, "ripf");
        detail::read_field(r, "step_phi_deg", cfg.ripf.step_phi_deg, "ripf");
    }
    if (j.contains("doa_groups")) {
        if (!j.at("doa_groups").is_array())
            throw config_error("config: doa_groups must be a list of groups");
        cfg.doa_groups.clear();
        for (const nlohmann::json& g : j.at("doa_groups")) {
            if (!g.is_array()) throw config_error("config: each group is a list of directions");
            std::vector<DoA> group;
            for (const nlohmann::json& d : g) group.push_back(detail::parse_doa(d, "doa_groups"));
            cfg.doa_groups.push_back(std::move(group));
        }
    }
    detail::read_field(j, "trials", cfg.trials, "config");
    if (j.contains("sweep")) {
        const nlohmann::json& s = j.at("sweep");
        detail::require_keys(s, {"axis", "values"}, "sweep");
        if (!s.contains("axis") || !s.at("axis").is_string())
            throw config_error("sweep: axis name required");
        cfg.sweep_axis = parse_sweep_axis(s.at("axis").get<std::string>());
        if (cfg.sweep_axis == SweepAxis::none) throw config_error("sweep: axis cannot be 'none'");
        detail::read_field(s, "values", cfg.sweep_values, "sweep");
    }
    detail::read_field(j, "master_seed", cfg.master_seed, "config");
    detail::read_field(j, "output_dir", cfg.output_dir, "config");
    detail::read_field(j, "measure_wall_time", cfg.measure_wall_time, "config");
    detail::read_field(j, "threads", cfg.threads, "config");
    cfg.validate();
    return cfg;
}

inline ExperimentConfig experiment_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_experiment_config(j);
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return experiment_config_from_json(text.str());
}

// One aggregated row: all trials of all groups sharing a source count, for
// one method at one sweep point.
struct ResultRow {
    Method method = Method::ripf;
    int n_sources = 1;
    SweepAxis sweep_axis = SweepAxis::none;
    double sweep_value = 0.0;
    double rmse_deg = 0.0;
    double sdp = 0.0;
    double rmse_crb_deg = 0.0;
    double mean_wall_time_s = 0.0;
    double mean_flops = 0.0;
    double mean_iterations = 0.0;
    std::uint64_t input_checksum = 0;
};

struct ResultTable {
    std::vector<ResultRow> rows;
};

namespace detail {

inline void hash_bytes(std::uint64_t& h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;  // FNV-1a
    }
}

// Order-sensitive digest of everything an estimator sees in one trial. Rows
// pooled from the same trials XOR these together, so equality of the column
// across methods certifies they consumed bit-identical inputs.
inline std::uint64_t trial_input_checksum(const NarrowbandStack& stack,
                                          std::span<const DoA> pre_estimates) {
    std::uint64_t h = 1469598103934665603ULL;
    hash_bytes(h, &stack.center_frequency, sizeof(double));
    const std::int64_t k = stack.snapshots;
    hash_bytes(h, &k, sizeof(k));
    hash_bytes(h, stack.frequencies.data(), stack.frequencies.size() * sizeof(double));
    for (const CMat& b : stack.bins)
        hash_bytes(h, b.data(), static_cast<std::size_t>(b.size()) * sizeof(cdouble));
    for (const DoA& d : pre_estimates) {
        hash_bytes(h, &d.elevation_deg, sizeof(double));
        hash_bytes(h, &d.azimuth_deg, sizeof(double));
    }
    return h;
}

struct SweepPoint {
    double value = 0.0;
    ScenarioConfig scenario;
    RipfParams ripf;
};

struct TrialRecord {
    std::uint64_t checksum = 0;
    std::vector<TrialOutcome> outcomes;  // parallel to ExperimentConfig::methods
};

// Stable per-trial seeds: chained from the master seed through the sweep,
// group, and trial indices, so any (point, group, trial) cell is reproducible
// in isolation and independent of scheduling.
inline std::uint64_t trial_seed(std::uint64_t master, int sweep_idx, int group_idx,
                                int trial_idx) {
    return combine_seed(
        combine_seed(combine_seed(master, static_cast<std::uint64_t>(sweep_idx)),
                     static_cast<std::uint64_t>(group_idx)),
        static_cast<std::uint64_t>(trial_idx));
}

inline TrialRecord run_trial(const ExperimentConfig& cfg, const ArrayGeometry& geom,
                             const SweepPoint& point, int sweep_idx, int group_idx,
                             int trial_idx) {
    const std::vector<DoA>& truth = cfg.doa_groups[static_cast<std::size_t>(group_idx)];
    ScenarioConfig sc = point.scenario;
    sc.path_doas = truth;

    RandomStream root(trial_seed(cfg.master_seed, sweep_idx, group_idx, trial_idx));
    RandomStream noise_rng = root.fork(0);
    RandomStream pre_rng = root.fork(1);

    const TimeSamples ts = synthesize_received(geom, sc, noise_rng);
    const NarrowbandStack stack = to_narrowband(ts, sc.fft_size, sc.center_frequency);
    const std::vector<DoA> pre = make_pre_estimates(truth, point.ripf.avg_err_theta_deg,
                                                    point.ripf.avg_err_phi_deg, pre_rng);

    TrialRecord rec;
    rec.checksum = trial_input_checksum(stack, pre);
    rec.outcomes.reserve(cfg.methods.size());
    for (Method method : cfg.methods) {
        // Seeded by method identity, not list position, so adding a method to
        // the config never changes another method's draw sequence.
        RandomStream est_rng = root.fork(16 + static_cast<std::uint64_t>(method));
        const auto start = std::chrono::steady_clock::now();
        const EstimationResult result =
            (method == Method::ripf)
                ? ripf_csm(stack, pre, geom, point.ripf, est_rng)
                : benchmark_csm(stack, pre, geom, method, point.ripf, est_rng);
        TrialOutcome out;
        if (cfg.measure_wall_time)
            out.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.truth = truth;
        out.estimates = result.estimates;
        out.iterations_used = static_cast<int>(result.trace.size());
        for (const EstimatorState& st : result.trace) out.flops_estimate += st.flops_estimate;
        rec.outcomes.push_back(std::move(out));
    }
    return rec;
}

} // namespace detail

// Run the full batch: every (sweep point, group, trial) cell is synthesized
// once and fed to every requested method, then pooled by source count. Trials
// are independent jobs; the aggregation order is fixed by indices, so the
// output is identical for any worker count.
inline ResultTable run_batch(const ExperimentConfig& cfg) {
    cfg.validate();
    const ArrayGeometry geom = make_geometry(cfg);

    std::vector<detail::SweepPoint> points;
    if (cfg.sweep_axis == SweepAxis::none) {
        points.push_back({0.0, cfg.scenario, cfg.ripf});
    } else {
        for (double v : cfg.sweep_values) {
            detail::SweepPoint p{v, cfg.scenario, cfg.ripf};
            apply_sweep(cfg.sweep_axis, v, p.scenario, p.ripf);
            points.push_back(std::move(p));
        }
    }
    const int n_points = static_cast<int>(points.size());
    const int n_groups = static_cast<int>(cfg.doa_groups.size());
    const int n_trials = cfg.trials;
    const std::size_t total =
        static_cast<std::size_t>(n_points) * static_cast<std::size_t>(n_groups) *
        static_cast<std::size_t>(n_trials);

    std::vector<detail::TrialRecord> records(total);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr error;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= total || failed.load()) return;
            const int t = static_cast<int>(i % static_cast<std::size_t>(n_trials));
            const int g = static_cast<int>((i / static_cast<std::size_t>(n_trials)) %
                                           static_cast<std::size_t>(n_groups));
            const int s = static_cast<int>(i / (static_cast<std::size_t>(n_trials) *
                                                static_cast<std::size_t>(n_groups)));
            try {
                records[i] = detail::run_trial(cfg, geom, points[static_cast<std::size_t>(s)], s,
                                               g, t);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    const int workers = std::clamp<int>(cfg.threads, 1, static_cast<int>(total));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    std::vector<int> source_counts;
    for (const auto& group : cfg.doa_groups) source_counts.push_back(static_cast<int>(group.size()));
    std::sort(source_counts.begin(), source_counts.end());
    source_counts.erase(std::unique(source_counts.begin(), source_counts.end()),
                        source_counts.end());

    ResultTable table;
    for (int s = 0; s < n_points; ++s) {
        const detail::SweepPoint& point = points[static_cast<std::size_t>(s)];

        // The bound does not depend on the estimator, so compute it per
        // (point, source count) pool once. Zero noise has a zero bound.
        std::vector<double> crb_by_n;
        for (int n : source_counts) {
            if (point.scenario.noise_free) {
                crb_by_n.push_back(0.0);
                continue;
            }
            std::vector<CrbResult> bounds;
            for (int g = 0; g < n_groups; ++g) {
                if (static_cast<int>(cfg.doa_groups[static_cast<std::size_t>(g)].size()) != n)
                    continue;
                ScenarioConfig sc = point.scenario;
                sc.path_doas = cfg.doa_groups[static_cast<std::size_t>(g)];
                bounds.push_back(crb_closed_form(make_crb_scenario(geom, sc)));
            }
            crb_by_n.push_back(rmse_crb(bounds, n));
        }

        for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
            for (std::size_t ni = 0; ni < source_counts.size(); ++ni) {
                const int n = source_counts[ni];
                std::vector<TrialOutcome> pooled;
                std::uint64_t checksum = 0;
                for (int g = 0; g < n_groups; ++g) {
                    if (static_cast<int>(cfg.doa_groups[static_cast<std::size_t>(g)].size()) != n)
                        continue;
                    for (int t = 0; t < n_trials; ++t) {
                        const std::size_t i =
                            (static_cast<std::size_t>(s) * static_cast<std::size_t>(n_groups) +
                             static_cast<std::size_t>(g)) *
                                static_cast<std::size_t>(n_trials) +
                            static_cast<std::size_t>(t);
                        pooled.push_back(records[i].outcomes[m]);
                        checksum ^= records[i].checksum;
                    }
                }
                ResultRow row;
                row.method = cfg.methods[m];
                row.n_sources = n;
                row.sweep_axis = cfg.sweep_axis;
                row.sweep_value = point.value;
                row.rmse_deg = rmse(pooled);
                row.sdp = sdp(pooled, point.ripf.step_theta_deg, point.ripf.step_phi_deg);
                row.rmse_crb_deg = crb_by_n[ni];
                double wall = 0.0, flops = 0.0, iters = 0.0;
                for (const TrialOutcome& o : pooled) {
                    wall += o.wall_time_s;
                    flops += o.flops_estimate;
                    iters += static_cast<double>(o.iterations_used);
                }
                const double count = static_cast<double>(pooled.size());
                row.mean_wall_time_s = wall / count;
                row.mean_flops = flops / count;
                row.mean_iterations = iters / count;
                row.input_checksum = checksum;
                table.rows.push_back(std::move(row));
            }
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

// Shortest decimal form that parses back to the same double, so the CSV
// round-trips exactly.
inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_checksum(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline double parse_double_field(const std::string& s, const char* what) {
    const char* b = s.data();
    const char* e = b + s.size();
    double v = 0.0;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e)
        throw std::invalid_argument(std::string("results csv: bad ") + what + " '" + s + "'");
    return v;
}

} // namespace detail

inline constexpr const char* results_csv_header =
    "method,n_sources,sweep_axis,sweep_value,rmse_deg,sdp,rmse_crb_deg,mean_wall_time_s,"
    "mean_flops,mean_iterations,input_checksum";

inline std::string results_csv_text(const ResultTable& table) {
    std::string out = results_csv_header;
    out += '\n';
    for (const ResultRow& r : table.rows) {
        out += method_name(r.method);
        out += ',';
        out += std::to_string(r.n_sources);
        out += ',';
        out += sweep_axis_name(r.sweep_axis);
        out += ',';
        out += detail::format_double(r.sweep_value);
        out += ',';
        out += detail::format_double(r.rmse_deg);
        out += ',';
        out += detail::format_double(r.sdp);
        out += ',';
        out += detail::format_double(r.rmse_crb_deg);
        out += ',';
        out += detail::format_double(r.mean_wall_time_s);
        out += ',';
        out += detail::format_double(r.mean_flops);
        out += ',';
        out += detail::format_double(r.mean_iterations);
        out += ',';
        out += detail::format_checksum(r.input_checksum);
        out += '\n';
    }
    return out;
}

inline ResultTable parse_results_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != results_csv_header)
        throw std::invalid_argument("results csv: missing or unexpected header");
    ResultTable table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 11)
            throw std::invalid_argument("results csv: wrong field count in '" + line + "'");
        ResultRow r;
        r.method = parse_method(fields[0]);
        r.n_sources = static_cast<int>(detail::parse_double_field(fields[1], "n_sources"));
        try {
            r.sweep_axis = parse_sweep_axis(fields[2]);
        } catch (const config_error&) {
            throw std::invalid_argument("results csv: bad sweep axis '" + fields[2] + "'");
        }
        r.sweep_value = detail::parse_double_field(fields[3], "sweep_value");
        r.rmse_deg = detail::parse_double_field(fields[4], "rmse_deg");
        r.sdp = detail::parse_double_field(fields[5], "sdp");
        r.rmse_crb_deg = detail::parse_double_field(fields[6], "rmse_crb_deg");
        r.mean_wall_time_s = detail::parse_double_field(fields[7], "mean_wall_time_s");
        r.mean_flops = detail::parse_double_field(fields[8], "mean_flops");
        r.mean_iterations = detail::parse_double_field(fields[9], "mean_iterations");
        std::size_t used = 0;
        r.input_checksum = std::stoull(fields[10], &used, 16);
        if (used != fields[10].size())
            throw std::invalid_argument("results csv: bad checksum '" + fields[10] + "'");
        table.rows.push_back(std::move(r));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Plot emission: small self-contained SVG line charts.

namespace detail {

struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool dashed = false;
};

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::vector<double> linear_ticks(double lo, double hi) {
    const double span = hi - lo;
    double step = std::pow(10.0, std::floor(std::log10(span / 4.0)));
    for (double mult : {1.0, 2.0, 5.0, 10.0}) {
        if (span / (step * mult) <= 6.0) {
            step *= mult;
            break;
        }
    }
    std::vector<double> ticks;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step)
        ticks.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
    return ticks;
}

// One chart: linear x, linear or log10 y (log only when every value is
// positive). Degenerate ranges are padded so single-point series render.
inline std::string render_plot_svg(const std::string& title, const std::string& x_label,
                                   const std::string& y_label,
                                   std::span<const PlotSeries> series, bool want_log_y) {
    bool log_y = want_log_y;
    double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
    bool first = true;
    for (const PlotSeries& s : series) {
        for (const auto& [x, y] : s.points) {
            if (y <= 0.0) log_y = false;
            if (first) {
                x_lo = x_hi = x;
                y_lo = y_hi = y;
                first = false;
            } else {
                x_lo = std::min(x_lo, x);
                x_hi = std::max(x_hi, x);
                y_lo = std::min(y_lo, y);
                y_hi = std::max(y_hi, y);
            }
        }
    }
    if (first) throw std::invalid_argument("render_plot_svg: no data points");
    if (log_y) {
        y_lo = std::log10(y_lo);
        y_hi = std::log10(y_hi);
    }
    if (x_hi - x_lo < 1e-12) {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    if (y_hi - y_lo < 1e-12) {
        y_lo -= 1.0;
        y_hi += 1.0;
    }

    const double width = 720.0, height = 480.0;
    const double ml = 80.0, mr = 24.0, mt = 48.0, mb = 56.0;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto py = [&](double y) {
        const double v = log_y ? std::log10(y) : y;
        return mt + (y_hi - v) / (y_hi - y_lo) * ph;
    };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"16\">" << xml_escape(title) << "</text>\n"
        << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#333\"/>\n";

    for (double t : linear_ticks(x_lo, x_hi)) {
        const double x = px(t);
        svg << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\"" << mt + ph
            << "\" stroke=\"#ddd\"/>\n"
            << "<text x=\"" << x << "\" y=\"" << mt + ph + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << format_double(t) << "</text>\n";
    }
    std::vector<double> y_ticks;
    if (log_y) {
        const int e_lo = static_cast<int>(std::floor(y_lo));
        const int e_hi = static_cast<int>(std::ceil(y_hi));
        const int stride = std::max(1, (e_hi - e_lo) / 6);
        for (int e = e_lo; e <= e_hi; e += stride) y_ticks.push_back(static_cast<double>(e));
    } else {
        y_ticks = linear_ticks(y_lo, y_hi);
    }
    for (double t : y_ticks) {
        if (t < y_lo - 1e-9 || t > y_hi + 1e-9) continue;
        const double y = mt + (y_hi - t) / (y_hi - y_lo) * ph;
        svg << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + pw << "\" y2=\"" << y
            << "\" stroke=\"#ddd\"/>\n"
            << "<text x=\"" << ml - 6 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << format_double(log_y ? std::pow(10.0, t) : t) << "</text>\n";
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << xml_escape(x_label) << "</text>\n"
        << "<text x=\"20\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\""
        << " transform=\"rotate(-90 20 " << mt + ph / 2 << ")\">" << xml_escape(y_label)
        << "</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const PlotSeries& s = series[i];
        const char* color = palette[i % (sizeof(palette) / sizeof(palette[0]))];
        if (s.points.size() > 1) {
            svg << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"2\"";
            if (s.dashed) svg << " stroke-dasharray=\"6 4\"";
            svg << " points=\"";
            for (const auto& [x, y] : s.points) svg << px(x) << "," << py(y) << " ";
            svg << "\"/>\n";
        } else {
            // A lone point still needs a visible series element.
            svg << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"2\" points=\"" << px(s.points[0].first) << ","
                << py(s.points[0].second) << "\"/>\n";
        }
        for (const auto& [x, y] : s.points)
            svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color
                << "\"/>\n";
        const double ly = mt + 16 + 18.0 * static_cast<double>(i);
        svg << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + pw - 126
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"";
        if (s.dashed) svg << " stroke-dasharray=\"6 4\"";
        svg << "/>\n<text x=\"" << ml + pw - 120 << "\" y=\"" << ly
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(s.label)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

inline std::string series_label(const ResultTable& table, Method m, int n) {
    bool multi_n = false;
    for (const ResultRow& r : table.rows)
        if (r.n_sources != table.rows.front().n_sources) multi_n = true;
    std::string label = method_name(m);
    if (multi_n) label += " n=" + std::to_string(n);
    return label;
}

// Series per (method, source count) in first-appearance order; the bound, if
// any row carries one, is appended per source count as a dashed series.
inline std::vector<PlotSeries> metric_series(const ResultTable& table,
                                             double ResultRow::*metric, bool with_crb) {
    std::vector<PlotSeries> series;
    std::vector<std::pair<Method, int>> keys;
    for (const ResultRow& r : table.rows) {
        const std::pair<Method, int> key{r.method, r.n_sources};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            keys.push_back(key);
            series.push_back({series_label(table, r.method, r.n_sources), {}, false});
        }
        const std::size_t idx =
            static_cast<std::size_t>(std::find(keys.begin(), keys.end(), key) - keys.begin());
        series[idx].points.emplace_back(r.sweep_value, r.*metric);
    }
    if (with_crb) {
        std::vector<int> ns;
        for (const ResultRow& r : table.rows)
            if (std::find(ns.begin(), ns.end(), r.n_sources) == ns.end()) ns.push_back(r.n_sources);
        const Method first = table.rows.front().method;
        for (int n : ns) {
            PlotSeries s;
            s.label = ns.size() > 1 ? "crb n=" + std::to_string(n) : std::string("crb");
            s.dashed = true;
            for (const ResultRow& r : table.rows)
                if (r.method == first && r.n_sources == n)
                    s.points.emplace_back(r.sweep_value, r.rmse_crb_deg);
            series.push_back(std::move(s));
        }
    }
    return series;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

} // namespace detail

// Probe the output location before any compute happens, so a misdirected run
// fails in milliseconds instead of after the batch.
inline void ensure_writable_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("output directory '" + dir.string() +
                                 "' cannot be created: " + ec.message());
    const std::filesystem::path probe = dir / ".write-probe";
    {
        std::ofstream out(probe);
        if (!out)
            throw std::runtime_error("output directory '" + dir.string() + "' is not writable");
    }
    std::filesystem::remove(probe, ec);
}

// results.csv plus one chart per metric. The RMSE chart carries the bound
// series and uses a log scale whenever every value allows it.
inline std::vector<std::filesystem::path> emit_outputs(const ResultTable& table,
                                                       const std::filesystem::path& dir) {
    if (table.rows.empty()) throw std::invalid_argument("emit_outputs: empty result table");
    ensure_writable_directory(dir);
    const std::string x_label =
        std::string("sweep value (") + sweep_axis_name(table.rows.front().sweep_axis) + ")";

    const std::vector<std::filesystem::path> files = {
        dir / "results.csv", dir / "rmse.svg", dir / "sdp.svg", dir / "runtime.svg"};
    detail::write_text_file(files[0], results_csv_text(table));
    detail::write_text_file(
        files[1], detail::render_plot_svg("RMSE vs sweep", x_label, "rmse (deg)",
                                          detail::metric_series(table, &ResultRow::rmse_deg, true),
                                          true));
    detail::write_text_file(
        files[2], detail::render_plot_svg("SDP vs sweep", x_label, "successful detection probability",
                                          detail::metric_series(table, &ResultRow::sdp, false),
                                          false));
    detail::write_text_file(
        files[3],
        detail::render_plot_svg("Runtime vs sweep", x_label, "mean wall time (s)",
                                detail::metric_series(table, &ResultRow::mean_wall_time_s, false),
                                false));
    return files;
}

// The parameter-constraint predicate evaluated at this experiment's settings.
// The assumed source count is the largest group, the worst case for the
// search-region term.
inline ComplexityAdvantageParams complexity_advantage_params_from(
    const ExperimentConfig& cfg, double convergence_iterations = 5.0) {
    ComplexityAdvantageParams p;
    p.elements = static_cast<double>(cfg.elements);
    p.fft_size = static_cast<double>(cfg.scenario.fft_size);
    p.snapshots = static_cast<double>(cfg.scenario.snapshot_count());
    std::size_t n_max = 0;
    for (const auto& group : cfg.doa_groups) n_max = std::max(n_max, group.size());
    p.source_count = static_cast<double>(n_max);
    p.avg_err_theta_deg = cfg.ripf.avg_err_theta_deg;
    p.avg_err_phi_deg = cfg.ripf.avg_err_phi_deg;
    p.bias = cfg.ripf.bias;
    p.v_theta_deg = cfg.ripf.step_theta_deg;
    p.v_phi_deg = cfg.ripf.step_phi_deg;
    p.grid_theta = std::floor(90.0 / cfg.ripf.step_theta_deg + 1e-9) + 1.0;
    p.grid_phi = std::floor((360.0 - 1e-9) / cfg.ripf.step_phi_deg) + 1.0;
    p.max_iterations = static_cast<double>(cfg.ripf.max_iterations);
    p.convergence_iterations = convergence_iterations;
    return p;
}

} // namespace ucadoa

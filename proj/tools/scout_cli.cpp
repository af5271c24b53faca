// SPDX-License-Identifier: Apache-2.0
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "scout/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"two-tier block-sparse attention testbed"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string intervals_path;
    std::string axis = "context";
    std::int64_t seed_override = -1;
    bool serial = false;
    std::vector<double> values;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file (defaults used when omitted)");
        sub->add_option("--out", out_override, "output directory (overrides the config)");
        sub->add_option("--seed", seed_override, "decoder seed (overrides the config)");
        sub->add_flag("--serial", serial, "run coprocessor tasks inline instead of on a thread");
    };

    CLI::App* run = app.add_subcommand("run", "prefill + decode through the two-tier engine");
    add_common(run);
    run->add_option("--intervals", intervals_path,
                    "intervals.txt from a calibrate run (enables periodic recall)");

    CLI::App* calibrate =
        app.add_subcommand("calibrate", "profile slow-side ratios (recall off), derive intervals");
    add_common(calibrate);

    CLI::App* simulate = app.add_subcommand("simulate", "serving-scale pipeline cost model");
    add_common(simulate);

    CLI::App* sweep = app.add_subcommand("sweep", "strategy throughput across one cost axis");
    add_common(sweep);
    sweep->add_option("--axis", axis, "context | budget | batch");
    sweep->add_option("--values", values, "comma-separated axis values")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    scout::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = scout::load_run_config(config_path);
        if (seed_override >= 0) cfg.decoder.seed = static_cast<std::uint64_t>(seed_override);
        if (serial) cfg.engine.deterministic_serial = true;
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (!intervals_path.empty())
            cfg.engine.recall_intervals = scout::load_intervals(intervals_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }

    try {
        if (run->parsed()) {
            const scout::RunArtifacts a = scout::cmd_run(cfg);
            std::cout << "decoded " << a.final_hiddens.size() << " steps, "
                      << a.event_count << " events, max residual "
                      << scout::fmt9(a.max_hybrid_residual) << '\n';
            if (!a.cosine_per_boundary.empty())
                std::cout << "mean query-prediction cosine " << scout::fmt9(a.mean_cosine) << '\n';
            std::cout << "outputs in " << cfg.out_dir << '\n';
        } else if (calibrate->parsed()) {
            const scout::RecallSchedule sched = scout::cmd_calibrate(cfg);
            std::cout << "calibrated intervals (beta " << scout::fmt9(sched.beta) << "):";
            for (std::size_t n : sched.intervals) std::cout << ' ' << n;
            std::cout << "\noutputs in " << cfg.out_dir << '\n';
        } else if (simulate->parsed()) {
            const scout::SimArtifacts a = scout::cmd_simulate(cfg);
            for (const scout::Timeline& t : a.strategies)
                std::cout << scout::summarize_timeline(scout::strategy_name(t.strategy), t);
            std::cout << "slowdown without layer-ahead tasks "
                      << scout::fmt9(a.slowdown_no_precompute) << ", without periodic recall "
                      << scout::fmt9(a.slowdown_no_periodic_recall) << '\n';
            std::cout << "outputs in " << cfg.out_dir << '\n';
        } else if (sweep->parsed()) {
            if (values.empty()) values = {8192.0, 16384.0, 32768.0, 65536.0};
            const auto rows = scout::cmd_sweep(cfg, axis, values);
            for (const scout::SweepRow& r : rows)
                std::cout << axis << ' ' << scout::fmt9(r.value) << ": scout "
                          << scout::fmt9(r.tput_scout) << " tok/s, "
                          << scout::fmt9(r.tput_scout / r.tput_full_kv) << "x full_kv\n";
            std::cout << "outputs in " << cfg.out_dir << '\n';
        }
    } catch (const scout::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        // precondition failures on user-supplied values are config errors
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

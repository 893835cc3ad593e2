#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dadapt/config.hpp"

namespace dadapt::report {

/// One visited k. Losses are means over the phase; NaN when the phase did not run.
struct KRecord {
    int k = 0;
    double c_to_d_loss = 0;
    double d_to_c_loss = 0;
    double probe_ce_before = 0;  // snapshot CE on the fixed probe before C->D
    double probe_ce_after = 0;   // same probe noise, after C->D
    double probe_acc = 0;        // classifier on the probe after D->C
    double target_acc = 0;       // classifier on the target test split after D->C
};

struct AdaptationReport {
    std::string preset = "custom";
    config::ExperimentConfig config;
    std::vector<KRecord> per_k;
    double source_acc = 0;
    double target_acc = 0;
    double baseline_target_acc = 0;
    double dad_pretrain_loss_first = 0;  // mean of the first 100 steps, NaN if none
    double dad_pretrain_loss_last = 0;   // mean of the last 100 steps
    std::vector<std::pair<int, double>> mmd_profile;
    long isolation_checks = 0;
    long isolation_failures = 0;
    double wall_clock_seconds = 0;  // not part of serialize(); see serialize_timing
};

/// Sections [config], [summary], [per_k] (CSV with header) and
/// [mmd_profile] (CSV). Reals use %.17g. Deterministic for a given run.
std::string serialize(const AdaptationReport& r);
/// `wall_clock_seconds=<s>` line, written next to the report.
std::string serialize_timing(const AdaptationReport& r);

/// Lines of one `[name]` section, without the header.
std::vector<std::string> section_lines(std::string_view text, std::string_view name);
/// Re-parses the [config] echo of a serialized report.
config::ExperimentConfig config_from_report(std::string_view text);

}  // namespace dadapt::report

#include "dadapt/report.hpp"

#include <cstdio>

namespace dadapt::report {

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string serialize(const AdaptationReport& r) {
    std::string out = "[config]\n" + config::serialize(r.config);
    out += "\n[summary]\n";
    out += "preset=" + r.preset + "\n";
    out += "seed=" + std::to_string(r.config.seed) + "\n";
    out += "visited_k=" + std::to_string(r.per_k.size()) + "\n";
    out += "source_acc=" + num(r.source_acc) + "\n";
    out += "target_acc=" + num(r.target_acc) + "\n";
    out += "baseline_target_acc=" + num(r.baseline_target_acc) + "\n";
    out += "dad_pretrain_loss_first=" + num(r.dad_pretrain_loss_first) + "\n";
    out += "dad_pretrain_loss_last=" + num(r.dad_pretrain_loss_last) + "\n";
    out += "isolation_checks=" + std::to_string(r.isolation_checks) + "\n";
    out += "isolation_failures=" + std::to_string(r.isolation_failures) + "\n";
    out += "\n[per_k]\nk,c_to_d_loss,d_to_c_loss,probe_ce_before,probe_ce_after,probe_acc,target_acc\n";
    for (const auto& rec : r.per_k) {
        out += std::to_string(rec.k) + "," + num(rec.c_to_d_loss) + "," + num(rec.d_to_c_loss) + "," +
               num(rec.probe_ce_before) + "," + num(rec.probe_ce_after) + "," + num(rec.probe_acc) + "," +
               num(rec.target_acc) + "\n";
    }
    out += "\n[mmd_profile]\nk,mmd2\n";
    for (const auto& [k, v] : r.mmd_profile) out += std::to_string(k) + "," + num(v) + "\n";
    return out;
}

std::string serialize_timing(const AdaptationReport& r) {
    return "wall_clock_seconds=" + num(r.wall_clock_seconds) + "\n";
}

std::vector<std::string> section_lines(std::string_view text, std::string_view name) {
    std::vector<std::string> lines;
    const std::string header = "[" + std::string(name) + "]";
    bool inside = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        if (!line.empty() && line.front() == '[') {
            inside = line == header;
            continue;
        }
        if (inside && !line.empty()) lines.emplace_back(line);
    }
    return lines;
}

config::ExperimentConfig config_from_report(std::string_view text) {
    std::string body;
    for (const auto& l : section_lines(text, "config")) body += l + "\n";
    return config::parse_config(body);
}

}  // namespace dadapt::report

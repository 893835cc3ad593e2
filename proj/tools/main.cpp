// dadapt: experiment runner for domain-adaptive diffusion on synthetic domains.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dadapt/mls.hpp"
#include "diagnostics.hpp"

namespace fs = std::filesystem;
using namespace dadapt;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2, kPropertyFailure = 3 };

/// Removes every registered path unless disarmed.
class OutputGuard {
public:
    void track(fs::path p) { paths_.push_back(std::move(p)); }
    void commit() { paths_.clear(); }
    ~OutputGuard() {
        std::error_code ec;
        for (const auto& p : paths_) fs::remove(p, ec);
    }

private:
    std::vector<fs::path> paths_;
};

void write_text(const fs::path& path, const std::string& text, OutputGuard& guard) {
    guard.track(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

config::ExperimentConfig read_config(const std::string& path) {
    return path.empty() ? config::ExperimentConfig{} : config::load_config(path);
}

std::vector<int> parse_ks(const std::string& s) {
    std::vector<int> ks;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const int k = std::stoi(item, &used);
        if (used != item.size()) throw std::invalid_argument("bad k '" + item + "'");
        ks.push_back(k);
    }
    return ks;
}

models::ParamTable checkpoint_of(const mls::RunResult& r) {
    models::ParamTable t;
    r.fe.export_params("extractor", t);
    r.classifier.export_params("classifier", t);
    if (r.dad.K() > 0) r.dad.export_params("dad", t);
    return t;
}

void require_section(const models::ParamTable& t, const std::string& prefix) {
    if (!t.has_prefix(prefix + ".")) throw models::CheckpointError("checkpoint has no '" + prefix + "' section");
}

int cmd_run(const std::string& preset, const std::string& config_path, const std::string& out_dir,
            const std::string& export_ks) {
    const auto base = read_config(config_path);
    const auto cfg = config::apply_preset(base, preset);
    fs::create_directories(out_dir);
    OutputGuard guard;

    const auto data = mls::build_datasets(cfg);
    auto result = mls::run_experiment(cfg, data);
    result.report.preset = preset;

    const fs::path dir(out_dir);
    write_text(dir / "report.txt", report::serialize(result.report), guard);
    write_text(dir / "timing.txt", report::serialize_timing(result.report), guard);
    guard.track(dir / "checkpoint.bin");
    models::save_checkpoint(dir / "checkpoint.bin", checkpoint_of(result));

    std::vector<int> ks;
    if (result.dad.K() > 0) {
        ks = export_ks.empty() ? std::vector<int>{result.dad.K() / 2, result.dad.K()} : parse_ks(export_ks);
    }
    std::ostringstream features;
    mls::export_features(features, result.fe, result.dad, data.source, data.target_train, ks, cfg.seed);
    write_text(dir / "features.csv", features.str(), guard);
    guard.commit();

    std::printf("preset=%s seed=%llu baseline_target_acc=%.4f target_acc=%.4f source_acc=%.4f (%.1fs)\n",
                preset.c_str(), static_cast<unsigned long long>(cfg.seed), result.report.baseline_target_acc,
                result.report.target_acc, result.report.source_acc, result.report.wall_clock_seconds);
    return kOk;
}

int cmd_export(const std::string& checkpoint, const std::string& config_path, const std::string& ks_text,
               const std::string& out_path) {
    const auto cfg = read_config(config_path);
    const auto table = models::load_checkpoint(checkpoint);
    require_section(table, "extractor");
    const auto ks = parse_ks(ks_text);
    dad::DadModule dad_module;
    if (!ks.empty()) {
        require_section(table, "dad");
        dad_module = dad::DadModule::import_params("dad", table);
    }
    const auto fe = models::FeatureExtractor::import_params("extractor", table);
    const auto data = mls::build_datasets(cfg);

    OutputGuard guard;
    std::ostringstream text;
    mls::export_features(text, fe, dad_module, data.source, data.target_train, ks, cfg.seed);
    write_text(out_path, text.str(), guard);
    guard.commit();
    return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path) {
    const auto cfg = read_config(config_path);
    const auto table = models::load_checkpoint(checkpoint);
    require_section(table, "extractor");
    require_section(table, "classifier");
    const auto fe = models::FeatureExtractor::import_params("extractor", table);
    const auto cls = models::Classifier::import_params("classifier", table);
    const auto data = mls::build_datasets(cfg);
    std::printf("source_acc=%.17g\ntarget_train_acc=%.17g\ntarget_test_acc=%.17g\n",
                metrics::accuracy(cls, fe, data.source), metrics::accuracy(cls, fe, data.target_train),
                metrics::accuracy(cls, fe, data.target_test));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domain-adaptive diffusion with mutual learning on synthetic domain pairs"};
    app.require_subcommand(1);

    std::string preset = "full", config_path, out_dir, export_ks;
    auto* run = app.add_subcommand("run", "Train one preset and write report, checkpoint and features");
    run->add_option("--preset", preset, "Preset name")
        ->check(CLI::IsMember(config::preset_names()))
        ->capture_default_str();
    run->add_option("--config", config_path, "key=value config file (defaults when omitted)");
    run->add_option("--out", out_dir, "Output directory")->required();
    run->add_option("--export-ks", export_ks, "Comma-separated k list for features.csv (default K/2,K)");

    std::string checkpoint, ks_text, out_path;
    auto* exp = app.add_subcommand("export-features", "Write source, target and transitional features as CSV");
    exp->add_option("--checkpoint", checkpoint, "Checkpoint from a run")->required();
    exp->add_option("--config", config_path, "Config used to regenerate the data");
    exp->add_option("--ks", ks_text, "Comma-separated transitional steps (may be empty)");
    exp->add_option("--out", out_path, "Output CSV path")->required();

    auto* ev = app.add_subcommand("eval", "Accuracy of a checkpoint's extractor and classifier");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint from a run")->required();
    ev->add_option("--config", config_path, "Config used to regenerate the data");

    int seeds = 10;
    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every op and model");
    gc->add_option("--seeds", seeds, "Random seeds per case")->capture_default_str();

    long trials = 10000;
    auto* st = app.add_subcommand("selftest", "Monte-Carlo properties of the diffusion operators");
    st->add_option("--trials", trials, "Monte-Carlo trials per check")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*run) return cmd_run(preset, config_path, out_dir, export_ks);
        if (*exp) return cmd_export(checkpoint, config_path, ks_text, out_path);
        if (*ev) return cmd_eval(checkpoint, config_path);
        if (*gc) return tools::run_grad_suite(seeds, std::cout) ? kOk : kPropertyFailure;
        if (*st) return tools::run_selftest(trials, std::cout) ? kOk : kPropertyFailure;
    } catch (const config::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntime;
    }
    return kUsage;
}

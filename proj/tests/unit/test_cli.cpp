#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dadapt/config.hpp"
#include "dadapt/mls.hpp"
#include "dadapt/report.hpp"

namespace fs = std::filesystem;
using namespace dadapt;

namespace {

constexpr const char* kTinyConfig = R"(K=4
r=3
n_source=200
n_target=200
epochs_source=5
steps_dad_pretrain=20
batch_size=16
extractor_hidden=16
extractor_layers=1
feature_dim=4
classifier_hidden=16
classifier_layers=1
predictor_hidden=16
predictor_layers=1
embed_dim=8
probe_size=32
mmd_samples=40
profile_points=4
)";

/// Fresh scratch directory, removed on scope exit.
struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("dadapt_cli_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::ofstream(dir / "tiny.cfg") << kTinyConfig;
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string cfg() const { return (dir / "tiny.cfg").string(); }
    std::string operator/(const std::string& p) const { return (dir / p).string(); }
};

int cli(const std::string& args) {
    const std::string cmd = std::string(DADAPT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cli_output(const std::string& args) {
    const std::string cmd = std::string(DADAPT_CLI_PATH) + " " + args + " 2>/dev/null";
    std::string out;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[256];
    while (std::fgets(buf, sizeof buf, p)) out += buf;
    pclose(p);
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t data_rows(const std::string& csv) {
    std::size_t n = 0;
    for (char c : csv) n += c == '\n';
    return n - 1;
}

std::string summary_value(const std::string& report, const std::string& key) {
    for (const auto& line : report::section_lines(report, "summary"))
        if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
    return {};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and config errors exit with 1") {
    Scratch s("usage");
    CHECK(cli("") == 1);
    CHECK(cli("frobnicate") == 1);
    CHECK(cli("run") == 1);
    CHECK(cli("run --preset nonsense --config " + s.cfg() + " --out " + s / "o") == 1);
    std::ofstream(s / "bad.cfg") << "K=4\nbeta_1=0.5\n";
    CHECK(cli("run --config " + s / "bad.cfg" + " --out " + s / "o") == 1);
    CHECK(cli("run --config " + s / "missing.cfg" + " --out " + s / "o") == 1);
    CHECK_FALSE(fs::exists(s / "o/report.txt"));
    CHECK(cli("--help") == 0);
}

TEST_CASE("baseline run writes a report without per-k records") {
    Scratch s("baseline");
    REQUIRE(cli("run --preset baseline --config " + s.cfg() + " --out " + s / "o") == 0);
    const std::string rep = slurp(s / "o/report.txt");
    const auto per_k = report::section_lines(rep, "per_k");
    REQUIRE(per_k.size() == 1);
    CHECK(per_k[0].rfind("k,", 0) == 0);
    CHECK(summary_value(rep, "preset") == "baseline");
    CHECK(summary_value(rep, "target_acc") == summary_value(rep, "baseline_target_acc"));
    CHECK(slurp(s / "o/timing.txt").rfind("wall_clock_seconds=", 0) == 0);
}

TEST_CASE("full run, feature export and checkpoint evaluation") {
    Scratch s("full");
    const auto cfg = config::parse_config(kTinyConfig);
    const auto data = mls::build_datasets(cfg);
    const std::size_t S = data.source.size(), T = data.target_train.size();

    REQUIRE(cli("run --preset full --config " + s.cfg() + " --out " + s / "a") == 0);
    REQUIRE(cli("run --preset full --config " + s.cfg() + " --out " + s / "b") == 0);
    const std::string rep = slurp(s / "a/report.txt");
    CHECK(rep == slurp(s / "b/report.txt"));
    CHECK(slurp(s / "a/features.csv") == slurp(s / "b/features.csv"));
    CHECK(report::config_from_report(rep) == cfg);
    CHECK(report::section_lines(rep, "per_k").size() == 1 + cfg.visited_ks().size());
    CHECK(data_rows(slurp(s / "a/features.csv")) == S * 3 + T);

    const std::string ck = s / "a/checkpoint.bin";
    REQUIRE(cli("export-features --checkpoint " + ck + " --config " + s.cfg() + " --ks 1,2,3 --out " + s / "f1.csv") ==
            0);
    REQUIRE(cli("export-features --checkpoint " + ck + " --config " + s.cfg() + " --ks 1,2,3 --out " + s / "f2.csv") ==
            0);
    const std::string f1 = slurp(s / "f1.csv");
    CHECK(f1 == slurp(s / "f2.csv"));
    CHECK(f1.rfind("k,f0,f1,f2,f3,label,domain\n", 0) == 0);
    CHECK(data_rows(f1) == S * 4 + T);
    REQUIRE(cli("export-features --checkpoint " + ck + " --config " + s.cfg() + " --out " + s / "f0.csv") == 0);
    CHECK(data_rows(slurp(s / "f0.csv")) == S + T);

    const std::string ev = cli_output("eval --checkpoint " + ck + " --config " + s.cfg());
    CHECK(ev.find("target_test_acc=" + summary_value(rep, "target_acc") + "\n") != std::string::npos);
    CHECK(ev.find("source_acc=" + summary_value(rep, "source_acc") + "\n") != std::string::npos);
}

TEST_CASE("export from a checkpoint without a DAD section fails cleanly") {
    Scratch s("nodad");
    REQUIRE(cli("run --preset baseline --config " + s.cfg() + " --out " + s / "o") == 0);
    const std::string ck = s / "o/checkpoint.bin";
    CHECK(cli("export-features --checkpoint " + ck + " --config " + s.cfg() + " --ks 2 --out " + s / "f.csv") == 2);
    CHECK_FALSE(fs::exists(s / "f.csv"));
    CHECK(cli("export-features --checkpoint " + ck + " --config " + s.cfg() + " --out " + s / "f.csv") == 0);
    std::ofstream(s / "junk.bin") << "not a checkpoint";
    CHECK(cli("export-features --checkpoint " + s / "junk.bin" + " --out " + s / "g.csv") == 2);
    CHECK_FALSE(fs::exists(s / "g.csv"));
}

TEST_CASE("a failing run removes its partial outputs") {
    Scratch s("partial");
    CHECK(cli("run --preset full --config " + s.cfg() + " --out " + s / "o" + " --export-ks 99") == 2);
    CHECK_FALSE(fs::exists(s / "o/report.txt"));
    CHECK_FALSE(fs::exists(s / "o/timing.txt"));
    CHECK_FALSE(fs::exists(s / "o/checkpoint.bin"));
    CHECK_FALSE(fs::exists(s / "o/features.csv"));
}

TEST_CASE("built-in diagnostics pass") {
    CHECK(cli("grad-check") == 0);
    CHECK(cli("selftest") == 0);
}

}  // TEST_SUITE

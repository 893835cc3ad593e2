#include "dadapt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace dadapt::config {

ConfigError::ConfigError(std::string key, int line, const std::string& what)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (key.empty() ? std::string() : "'" + key + "': ") + what),
      key_(std::move(key)),
      line_(line) {}

int ExperimentConfig::resolved_k_stride() const {
    if (k_stride) return *k_stride;
    return K <= 100 ? 1 : K / 100;
}

int ExperimentConfig::resolved_grad_window() const {
    if (truncate_reverse_grad) return *truncate_reverse_grad;
    return K <= 100 ? 0 : 25;
}

std::vector<int> ExperimentConfig::visited_ks() const {
    std::vector<int> ks;
    if (K == 0) return ks;
    const int stride = resolved_k_stride();
    for (int k = stride; k < K; k += stride) ks.push_back(k);
    ks.push_back(K);
    return ks;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end && !s.empty();
}

struct BadValue {
    std::string expected;
};

int to_int(std::string_view v) {
    int x = 0;
    if (!parse_number(v, x)) throw BadValue{"an integer"};
    return x;
}

double to_double(std::string_view v) {
    double x = 0;
    if (!parse_number(v, x)) throw BadValue{"a real number"};
    return x;
}

bool to_bool(std::string_view v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw BadValue{"true or false"};
}

struct Field {
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <class E>
struct EnumNames {
    std::vector<std::pair<E, std::string>> names;
    std::string str(E e) const {
        for (const auto& [k, n] : names)
            if (k == e) return n;
        return "?";
    }
    E parse(std::string_view v) const {
        std::string opts;
        for (const auto& [k, n] : names) {
            if (v == n) return k;
            opts += (opts.empty() ? "" : "|") + n;
        }
        throw BadValue{"one of " + opts};
    }
};

const EnumNames<Dataset> kDatasets{{{Dataset::two_moons, "two_moons"}, {Dataset::gaussian_mixture, "gaussian_mixture"}}};
const EnumNames<Transition> kTransitions{{{Transition::multi, "multi"}, {Transition::direct, "direct"}}};
const EnumNames<ReplayMode> kReplayModes{{{ReplayMode::cache, "cache"}, {ReplayMode::regenerate, "regenerate"}}};

#define INT_FIELD(name) \
    {#name, {[](const ExperimentConfig& c) { return std::to_string(c.name); }, \
             [](ExperimentConfig& c, std::string_view v) { c.name = to_int(v); }}}
#define REAL_FIELD(name) \
    {#name, {[](const ExperimentConfig& c) { return fmt_double(c.name); }, \
             [](ExperimentConfig& c, std::string_view v) { c.name = to_double(v); }}}
#define BOOL_FIELD(name) \
    {#name, {[](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); }, \
             [](ExperimentConfig& c, std::string_view v) { c.name = to_bool(v); }}}
#define ENUM_FIELD(name, table) \
    {#name, {[](const ExperimentConfig& c) { return table.str(c.name); }, \
             [](ExperimentConfig& c, std::string_view v) { c.name = table.parse(v); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        INT_FIELD(K),
        INT_FIELD(r),
        REAL_FIELD(beta_1),
        REAL_FIELD(beta_K),
        {"k_stride",
         {[](const ExperimentConfig& c) { return c.k_stride ? std::to_string(*c.k_stride) : std::string("auto"); },
          [](ExperimentConfig& c, std::string_view v) {
              if (v == "auto") {
                  c.k_stride.reset();
              } else {
                  int x = 0;
                  if (!parse_number(v, x)) throw BadValue{"an integer or auto"};
                  c.k_stride = x;
              }
          }}},
        {"truncate_reverse_grad",
         {[](const ExperimentConfig& c) {
              if (!c.truncate_reverse_grad) return std::string("auto");
              return *c.truncate_reverse_grad == 0 ? std::string("full") : std::to_string(*c.truncate_reverse_grad);
          },
          [](ExperimentConfig& c, std::string_view v) {
              if (v == "auto") {
                  c.truncate_reverse_grad.reset();
              } else if (v == "full") {
                  c.truncate_reverse_grad = 0;
              } else {
                  int x = 0;
                  if (!parse_number(v, x)) throw BadValue{"an integer, full or auto"};
                  c.truncate_reverse_grad = x;
              }
          }}},
        ENUM_FIELD(transition, kTransitions),
        INT_FIELD(m_replay),
        INT_FIELD(replay_capacity),
        ENUM_FIELD(replay_mode, kReplayModes),
        REAL_FIELD(lr),
        {"lr_dad",
         {[](const ExperimentConfig& c) { return c.lr_dad ? fmt_double(*c.lr_dad) : std::string("auto"); },
          [](ExperimentConfig& c, std::string_view v) {
              if (v == "auto") c.lr_dad.reset();
              else c.lr_dad = to_double(v);
          }}},
        {"lr_pretrain",
         {[](const ExperimentConfig& c) { return c.lr_pretrain ? fmt_double(*c.lr_pretrain) : std::string("auto"); },
          [](ExperimentConfig& c, std::string_view v) {
              if (v == "auto") c.lr_pretrain.reset();
              else c.lr_pretrain = to_double(v);
          }}},
        {"lr_classifier",
         {[](const ExperimentConfig& c) { return c.lr_classifier ? fmt_double(*c.lr_classifier) : std::string("auto"); },
          [](ExperimentConfig& c, std::string_view v) {
              if (v == "auto") c.lr_classifier.reset();
              else c.lr_classifier = to_double(v);
          }}},
        REAL_FIELD(momentum),
        REAL_FIELD(weight_decay),
        REAL_FIELD(poly_power),
        INT_FIELD(batch_size),
        INT_FIELD(epochs_source),
        INT_FIELD(steps_dad_pretrain),
        REAL_FIELD(ce_weight),
        INT_FIELD(extractor_hidden),
        INT_FIELD(extractor_layers),
        INT_FIELD(feature_dim),
        INT_FIELD(classifier_hidden),
        INT_FIELD(classifier_layers),
        INT_FIELD(predictor_hidden),
        INT_FIELD(predictor_layers),
        INT_FIELD(embed_dim),
        INT_FIELD(dad_after_layer),
        BOOL_FIELD(standardize_features),
        ENUM_FIELD(dataset, kDatasets),
        INT_FIELD(n_source),
        INT_FIELD(n_target),
        REAL_FIELD(noise_std),
        REAL_FIELD(rotation_deg),
        REAL_FIELD(translate_x),
        REAL_FIELD(translate_y),
        REAL_FIELD(shift_scale),
        INT_FIELD(classes),
        REAL_FIELD(mean_shift),
        REAL_FIELD(target_test_fraction),
        INT_FIELD(probe_size),
        INT_FIELD(mmd_samples),
        INT_FIELD(profile_points),
        {"seed",
         {[](const ExperimentConfig& c) { return std::to_string(c.seed); },
          [](ExperimentConfig& c, std::string_view v) {
              std::uint64_t x = 0;
              if (!parse_number(v, x)) throw BadValue{"a non-negative integer"};
              c.seed = x;
          }}},
        BOOL_FIELD(mls_on),
        BOOL_FIELD(initial_training_on),
        BOOL_FIELD(lpd_on),
        BOOL_FIELD(c_to_d_only),
        BOOL_FIELD(d_to_c_only),
    };
    return table;
}

#undef INT_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD
#undef ENUM_FIELD

const Field* find_field(std::string_view key) {
    for (const auto& [name, f] : fields())
        if (name == key) return &f;
    return nullptr;
}

void require(bool ok, const char* key, const std::string& what, const std::map<std::string, int>& lines) {
    if (ok) return;
    const auto it = lines.find(key);
    throw ConfigError(key, it == lines.end() ? 0 : it->second, "violates " + what);
}

void validate_impl(const ExperimentConfig& c, const std::map<std::string, int>& lines) {
    require(c.K >= 0, "K", "K >= 0", lines);
    require(c.r >= 1, "r", "r >= 1", lines);
    require(c.beta_1 > 0, "beta_1", "0 < beta_1", lines);
    require(c.beta_1 <= c.beta_K, lines.count("beta_K") && !lines.count("beta_1") ? "beta_K" : "beta_1",
            "beta_1 <= beta_K", lines);
    require(c.beta_K < 1, "beta_K", "beta_K < 1", lines);
    if (c.k_stride) {
        require(*c.k_stride >= 1 && *c.k_stride <= std::max(c.K, 1), "k_stride", "1 <= k_stride <= max(K, 1)", lines);
    }
    if (c.truncate_reverse_grad) {
        require(*c.truncate_reverse_grad >= 0, "truncate_reverse_grad", "truncate_reverse_grad >= 1 or full", lines);
    }
    require(c.m_replay >= 1, "m_replay", "m_replay >= 1", lines);
    require(c.replay_capacity >= 1, "replay_capacity", "replay_capacity >= 1", lines);
    require(c.lr > 0, "lr", "lr > 0", lines);
    if (c.lr_dad) require(*c.lr_dad > 0, "lr_dad", "lr_dad > 0", lines);
    if (c.lr_pretrain) require(*c.lr_pretrain > 0, "lr_pretrain", "lr_pretrain > 0", lines);
    if (c.lr_classifier) require(*c.lr_classifier > 0, "lr_classifier", "lr_classifier > 0", lines);
    require(c.momentum >= 0 && c.momentum < 1, "momentum", "0 <= momentum < 1", lines);
    require(c.weight_decay >= 0, "weight_decay", "weight_decay >= 0", lines);
    require(c.poly_power >= 0, "poly_power", "poly_power >= 0", lines);
    require(c.batch_size >= 2, "batch_size", "batch_size >= 2", lines);
    require(c.epochs_source >= 0, "epochs_source", "epochs_source >= 0", lines);
    require(c.steps_dad_pretrain >= 0, "steps_dad_pretrain", "steps_dad_pretrain >= 0", lines);
    require(c.ce_weight >= 0, "ce_weight", "ce_weight >= 0", lines);
    require(c.extractor_hidden >= 1, "extractor_hidden", "extractor_hidden >= 1", lines);
    require(c.extractor_layers >= 0, "extractor_layers", "extractor_layers >= 0", lines);
    require(c.feature_dim >= 1, "feature_dim", "feature_dim >= 1", lines);
    require(c.classifier_hidden >= 1, "classifier_hidden", "classifier_hidden >= 1", lines);
    require(c.classifier_layers >= 0, "classifier_layers", "classifier_layers >= 0", lines);
    require(c.predictor_hidden >= 1, "predictor_hidden", "predictor_hidden >= 1", lines);
    require(c.predictor_layers >= 0, "predictor_layers", "predictor_layers >= 0", lines);
    require(c.embed_dim >= 2, "embed_dim", "embed_dim >= 2", lines);
    require(c.dad_after_layer >= 0 && c.dad_after_layer <= c.extractor_layers + 1, "dad_after_layer",
            "0 <= dad_after_layer <= extractor_layers + 1", lines);
    require(c.n_source >= 10, "n_source", "n_source >= 10", lines);
    require(c.n_target >= 10, "n_target", "n_target >= 10", lines);
    require(c.noise_std >= 0, "noise_std", "noise_std >= 0", lines);
    require(c.shift_scale > 0, "shift_scale", "shift_scale > 0", lines);
    require(c.classes >= 2, "classes", "classes >= 2", lines);
    require(c.target_test_fraction > 0 && c.target_test_fraction < 1, "target_test_fraction",
            "0 < target_test_fraction < 1", lines);
    require(c.probe_size >= 2, "probe_size", "probe_size >= 2", lines);
    require(c.mmd_samples >= 2, "mmd_samples", "mmd_samples >= 2", lines);
    require(c.profile_points >= 1, "profile_points", "profile_points >= 1", lines);
    require(!(c.c_to_d_only && c.d_to_c_only), "d_to_c_only", "not both c_to_d_only and d_to_c_only", lines);
}

}  // namespace

void validate(const ExperimentConfig& cfg) { validate_impl(cfg, {}); }

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    std::map<std::string, int> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("", line_no, "expected key=value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        const Field* f = find_field(key);
        if (!f) throw ConfigError(key, line_no, "unknown key");
        if (seen.count(key)) {
            throw ConfigError(key, line_no, "duplicate key (first set on line " + std::to_string(seen[key]) + ")");
        }
        seen[key] = line_no;
        try {
            f->set(cfg, value);
        } catch (const BadValue& e) {
            throw ConfigError(key, line_no, "expected " + e.expected + ", got '" + std::string(value) + "'");
        }
    }
    validate_impl(cfg, seen);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("", 0, "cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [name, f] : fields()) out += name + "=" + f.get(cfg) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [name, f] : fields()) keys.push_back(name);
    return keys;
}

std::vector<std::string> preset_names() {
    return {"full",
            "baseline",
            "direct",
            "ablation-no-mls",
            "ablation-c2d-only",
            "ablation-d2c-only",
            "ablation-no-it",
            "ablation-no-lpd",
            "ablation-placement",
            "ablation-direct-no-mls"};
}

ExperimentConfig apply_preset(const ExperimentConfig& base, std::string_view preset) {
    ExperimentConfig c = base;
    if (preset == "full") {
    } else if (preset == "baseline") {
        c.K = 0;
        c.k_stride.reset();
    } else if (preset == "direct") {
        c.transition = Transition::direct;
    } else if (preset == "ablation-no-mls") {
        c.mls_on = false;
    } else if (preset == "ablation-c2d-only") {
        c.c_to_d_only = true;
    } else if (preset == "ablation-d2c-only") {
        c.d_to_c_only = true;
    } else if (preset == "ablation-no-it") {
        c.initial_training_on = false;
    } else if (preset == "ablation-no-lpd") {
        c.lpd_on = false;
    } else if (preset == "ablation-placement") {
        c.dad_after_layer = 1;
    } else if (preset == "ablation-direct-no-mls") {
        c.transition = Transition::direct;
        c.mls_on = false;
    } else {
        throw std::invalid_argument("unknown preset '" + std::string(preset) + "'");
    }
    validate(c);
    return c;
}

std::vector<std::string> diff_keys(const ExperimentConfig& a, const ExperimentConfig& b) {
    std::vector<std::string> out;
    for (const auto& [name, f] : fields())
        if (f.get(a) != f.get(b)) out.push_back(name);
    return out;
}

}  // namespace dadapt::config

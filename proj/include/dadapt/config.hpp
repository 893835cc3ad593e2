#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dadapt::config {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, int line, const std::string& what);
    const std::string& key() const { return key_; }
    /// 1-based; 0 when the error is not tied to a line.
    int line() const { return line_; }

private:
    std::string key_;
    int line_;
};

enum class Dataset { two_moons, gaussian_mixture };
enum class Transition { multi, direct };
enum class ReplayMode { cache, regenerate };

/// Every knob of one experiment. Defaults are the full-scale training
/// recipe; desk presets override the scale (K, widths, step counts).
struct ExperimentConfig {
    // transition
    int K = 600;
    int r = 20;
    double beta_1 = 1e-4;
    double beta_K = 0.02;
    std::optional<int> k_stride;               // empty = auto
    std::optional<int> truncate_reverse_grad;  // empty = auto, 0 = full
    Transition transition = Transition::multi;

    // replay of earlier distributions
    int m_replay = 2;
    int replay_capacity = 4;
    ReplayMode replay_mode = ReplayMode::cache;

    // optimizer
    double lr = 0.001;
    std::optional<double> lr_dad;         // empty = lr
    std::optional<double> lr_pretrain;    // empty = lr_dad
    std::optional<double> lr_classifier;  // empty = lr
    double momentum = 0.9;
    double weight_decay = 0.05;
    double poly_power = 0.9;
    int batch_size = 24;
    int epochs_source = 200;
    int steps_dad_pretrain = 2000;
    double ce_weight = 1.0;

    // models
    int extractor_hidden = 64;
    int extractor_layers = 2;
    int feature_dim = 8;
    int classifier_hidden = 64;
    int classifier_layers = 2;
    int predictor_hidden = 128;
    int predictor_layers = 3;
    int embed_dim = 32;
    int dad_after_layer = 0;  // 0 = after the whole extractor
    bool standardize_features = true;

    // data
    Dataset dataset = Dataset::two_moons;
    int n_source = 2000;
    int n_target = 2000;
    double noise_std = 0.08;
    double rotation_deg = 50.0;
    double translate_x = 0.0;
    double translate_y = 0.0;
    double shift_scale = 1.0;
    int classes = 3;
    double mean_shift = 1.5;
    double target_test_fraction = 0.2;

    // instrumentation
    int probe_size = 128;
    int mmd_samples = 500;
    int profile_points = 20;

    std::uint64_t seed = 0;

    // ablation switches
    bool mls_on = true;
    bool initial_training_on = true;
    bool lpd_on = true;
    bool c_to_d_only = false;
    bool d_to_c_only = false;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

    int resolved_k_stride() const;
    /// 0 means backprop through every reverse step.
    int resolved_grad_window() const;
    double resolved_lr_dad() const { return lr_dad.value_or(lr); }
    double resolved_lr_pretrain() const { return lr_pretrain.value_or(resolved_lr_dad()); }
    double resolved_lr_classifier() const { return lr_classifier.value_or(lr); }
    /// Visited k in increasing order, always ending at K; empty for K = 0.
    std::vector<int> visited_ks() const;
};

/// Throws ConfigError naming the first violated constraint.
void validate(const ExperimentConfig& cfg);

/// Flat key=value lines, '#' starts a comment. Absent keys keep defaults.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// One key=value line per field, in a fixed order; parse_config inverts it.
std::string serialize(const ExperimentConfig& cfg);

/// Documented key names, in serialization order.
std::vector<std::string> config_keys();

std::vector<std::string> preset_names();
/// Throws std::invalid_argument for an unknown preset.
ExperimentConfig apply_preset(const ExperimentConfig& base, std::string_view preset);

/// Keys whose serialized values differ, in serialization order.
std::vector<std::string> diff_keys(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace dadapt::config

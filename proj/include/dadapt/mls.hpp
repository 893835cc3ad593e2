#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "dadapt/config.hpp"
#include "dadapt/dad.hpp"
#include "dadapt/domains.hpp"
#include "dadapt/report.hpp"

namespace dadapt::mls {

using config::ExperimentConfig;
using models::BatchSampler;
using models::Classifier;
using models::FeatureBatch;
using models::FeatureExtractor;
using num::Rng;

/// Standardized inputs: source, target adaptation split (labels kept for
/// bookkeeping but never handed to training), labeled target test split.
struct Datasets {
    domains::LabeledDataset source;
    domains::LabeledDataset target_train;
    domains::LabeledDataset target_test;
};

Datasets build_datasets(const ExperimentConfig& cfg);

/// Bounded reservoirs of earlier feature batches, one per distribution index.
/// Index 0 holds source batches, index i > 0 holds transitional(i) batches.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::uint64_t seed);

    /// Reservoir insert; the batch is cut from the tape.
    void insert(int index, const FeatureBatch& batch);

    std::size_t capacity() const { return capacity_; }
    bool contains(int index) const { return stores_.count(index) > 0; }
    const std::vector<FeatureBatch>& store(int index) const;
    long inserted(int index) const;
    /// Indices i < k with a non-empty store, ascending.
    std::vector<int> indices_below(int k) const;
    /// Uniform pick from the store for `index`.
    const FeatureBatch& sample(int index, Rng& rng) const;

private:
    struct Store {
        std::vector<FeatureBatch> batches;
        long inserted = 0;
    };
    std::size_t capacity_;
    Rng rng_;
    std::map<int, Store> stores_;
};

/// Unbiased estimate of the mean source-label cross-entropy of `c` over all
/// stored distributions i < k: m of them drawn uniformly without
/// replacement, one stored batch each.
num::Var replay_term(const Classifier& c, const ReplayBuffer& buffer, int k, int m, Rng& rng);
/// The exact average the estimator targets, over every stored batch.
double replay_full_average(const Classifier& c, const ReplayBuffer& buffer, int k);

struct IsolationLog {
    long checks = 0;
    long failures = 0;
    void expect_equal(std::uint64_t before, std::uint64_t after) {
        ++checks;
        if (before != after) ++failures;
    }
};

struct MlsState {
    int k = 0;
    FeatureExtractor fe;
    Classifier classifier;
    Classifier snapshot;  // frozen copy from the end of the previous D->C phase
    dad::DadModule dad;
    ReplayBuffer buffer{1, 0};
    IsolationLog isolation;
};

struct SourceTrainOptions {
    int epochs = 0;
    std::size_t batch_size = 24;
    num::OptimSettings opt;
    std::uint64_t sampler_seed = 0;
};

/// Joint cross-entropy training of extractor and classifier on labeled
/// source inputs; the extractor is frozen afterwards. Returns per-iteration loss.
std::vector<double> train_source(FeatureExtractor& fe, Classifier& c, const domains::LabeledDataset& source,
                                 const SourceTrainOptions& opts);

/// r iterations on dad: ce_weight * CE(snapshot(simulate(F^S, k)), Y_S) +
/// reverse loss on a target batch. With ce_weight = 0 the simulation and the
/// source draw are skipped. Returns per-iteration loss.
std::vector<double> c_to_d_phase(MlsState& state, BatchSampler& source, BatchSampler& target, int k, int r,
                                 std::size_t batch_size, double ce_weight, num::PolySgd& opt, Rng& rng);

struct DtoCOptions {
    int m_replay = 2;
    bool lpd_on = true;
    config::ReplayMode mode = config::ReplayMode::cache;
};

/// r iterations on the classifier: CE on simulate(F^S, k) plus the replay
/// term over distributions below k. Each iteration then stores its source
/// batch under 0 and its transitional batch under k. Returns per-iteration loss.
std::vector<double> d_to_c_phase(MlsState& state, BatchSampler& source, int k, int r, std::size_t batch_size,
                                 const DtoCOptions& opts, num::PolySgd& opt, Rng& rng);

/// Everything a run produces.
struct RunResult {
    report::AdaptationReport report;
    FeatureExtractor fe;
    Classifier classifier;
    dad::DadModule dad;  // K() == 0 when no DAD was built
};

/// Dispatches on cfg.transition.
RunResult run_experiment(const ExperimentConfig& cfg, const Datasets& data);
RunResult run_mls(const ExperimentConfig& cfg, const Datasets& data);
RunResult run_direct_transition(const ExperimentConfig& cfg, const Datasets& data);

/// Rows: source (k = 0), target (k = -1), then source simulated at each
/// requested k. Header `k,f0,...,f{d-1},label,domain`. Target rows carry
/// their true labels for plotting only.
void export_features(std::ostream& out, const FeatureExtractor& fe, const dad::DadModule& dad,
                     const domains::LabeledDataset& source, const domains::LabeledDataset& target,
                     std::span<const int> ks, std::uint64_t seed);

}  // namespace dadapt::mls

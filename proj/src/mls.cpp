#include "dadapt/mls.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dadapt/ops.hpp"

namespace dadapt::mls {

using models::DomainTag;
using num::NoGradGuard;
using num::Tensor;
using num::Var;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream ids under the run's root seed.
enum Stream : std::uint64_t {
    kData = 1,
    kInit = 2,
    kSamplers = 3,
    kNoise = 4,
    kProbe = 5,
    kProfile = 6,
};

std::uint64_t stream_seed(const Rng& root, std::uint64_t a, std::uint64_t b) {
    Rng s = root.split(a).split(b);
    return s.next_u64();
}

Var batch_ce(const Classifier& c, const FeatureBatch& b) {
    return num::softmax_cross_entropy(c.classify(b), b.require_labels());
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return kNaN;
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

num::OptimSettings optim(const ExperimentConfig& cfg, double lr) {
    num::OptimSettings s;
    s.lr = num::Real(lr);
    s.momentum = num::Real(cfg.momentum);
    s.weight_decay = num::Real(cfg.weight_decay);
    s.poly_power = num::Real(cfg.poly_power);
    return s;
}

}  // namespace

Datasets build_datasets(const ExperimentConfig& cfg) {
    const Rng root(cfg.seed);
    const std::uint64_t src_seed = stream_seed(root, kData, 0);
    const std::uint64_t tgt_seed = stream_seed(root, kData, 1);
    const std::uint64_t split_seed = stream_seed(root, kData, 2);

    domains::LabeledDataset source, target;
    if (cfg.dataset == config::Dataset::two_moons) {
        source = domains::gen_two_moons(std::size_t(cfg.n_source), cfg.noise_std, src_seed);
        const double shift[2] = {cfg.translate_x, cfg.translate_y};
        target = domains::apply_shift(domains::gen_two_moons(std::size_t(cfg.n_target), cfg.noise_std, tgt_seed),
                                      cfg.rotation_deg, shift, cfg.shift_scale);
        target.domain_name = "target";
    } else {
        const std::size_t n = std::size_t(std::max(cfg.n_source, cfg.n_target));
        auto [s, t] = domains::gen_gaussian_mixture_pair(cfg.classes, n, cfg.mean_shift, src_seed);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t(0));
        source = s.subset(std::span(idx).first(std::size_t(cfg.n_source)));
        target = t.subset(std::span(idx).first(std::size_t(cfg.n_target)));
    }
    const auto standardizer = domains::Standardizer::fit(source.points);
    source = standardizer.apply(source);
    target = standardizer.apply(target);
    auto [train, test] = domains::train_test_split(target, cfg.target_test_fraction, split_seed);
    return Datasets{std::move(source), std::move(train), std::move(test)};
}

// ---------------------------------------------------------------- replay

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::insert(int index, const FeatureBatch& batch) {
    if (index < 0) throw std::out_of_range("ReplayBuffer: negative index");
    const DomainTag want = index == 0 ? DomainTag::source() : DomainTag::transitional(index);
    if (!(batch.tag == want)) {
        throw std::invalid_argument("ReplayBuffer: store " + std::to_string(index) + " expects " + want.str() +
                                    ", got " + batch.tag.str());
    }
    batch.require_labels();
    FeatureBatch cut(batch.features.detach(), batch.labels, batch.tag);
    Store& s = stores_[index];
    ++s.inserted;
    if (s.batches.size() < capacity_) {
        s.batches.push_back(std::move(cut));
        return;
    }
    const auto j = rng_.uniform_int(std::uint64_t(s.inserted));
    if (j < capacity_) s.batches[j] = std::move(cut);
}

const std::vector<FeatureBatch>& ReplayBuffer::store(int index) const {
    const auto it = stores_.find(index);
    if (it == stores_.end()) throw std::out_of_range("ReplayBuffer: no store " + std::to_string(index));
    return it->second.batches;
}

long ReplayBuffer::inserted(int index) const {
    const auto it = stores_.find(index);
    return it == stores_.end() ? 0 : it->second.inserted;
}

std::vector<int> ReplayBuffer::indices_below(int k) const {
    std::vector<int> out;
    for (const auto& [i, s] : stores_)
        if (i < k && !s.batches.empty()) out.push_back(i);
    return out;
}

const FeatureBatch& ReplayBuffer::sample(int index, Rng& rng) const {
    const auto& s = store(index);
    if (s.empty()) throw std::out_of_range("ReplayBuffer: store " + std::to_string(index) + " is empty");
    return s[rng.uniform_int(std::uint64_t(s.size()))];
}

namespace {

std::vector<int> choose_stores(const ReplayBuffer& buffer, int k, int m, Rng& rng) {
    if (m < 1) throw std::invalid_argument("replay: m must be >= 1");
    auto pool = buffer.indices_below(k);
    if (pool.empty()) throw std::logic_error("replay: no stored distributions below k=" + std::to_string(k));
    const std::size_t take = std::min(pool.size(), std::size_t(m));
    for (std::size_t i = 0; i < take; ++i) {
        const auto j = i + rng.uniform_int(std::uint64_t(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

Var average(const std::vector<Var>& terms) {
    Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = num::add(acc, terms[i]);
    return num::scale(acc, num::Real(1) / num::Real(terms.size()));
}

}  // namespace

Var replay_term(const Classifier& c, const ReplayBuffer& buffer, int k, int m, Rng& rng) {
    std::vector<Var> terms;
    for (int i : choose_stores(buffer, k, m, rng)) terms.push_back(batch_ce(c, buffer.sample(i, rng)));
    return average(terms);
}

double replay_full_average(const Classifier& c, const ReplayBuffer& buffer, int k) {
    NoGradGuard no_grad;
    const auto idx = buffer.indices_below(k);
    if (idx.empty()) throw std::logic_error("replay: no stored distributions below k=" + std::to_string(k));
    double total = 0;
    for (int i : idx) {
        double per = 0;
        const auto& s = buffer.store(i);
        for (const auto& b : s) per += double(batch_ce(c, b).value().item());
        total += per / double(s.size());
    }
    return total / double(idx.size());
}

// ---------------------------------------------------------------- phases

std::vector<double> train_source(FeatureExtractor& fe, Classifier& c, const domains::LabeledDataset& source,
                                 const SourceTrainOptions& opts) {
    if (source.size() == 0) throw std::invalid_argument("train_source: empty dataset");
    if (opts.epochs < 0) throw std::invalid_argument("train_source: negative epoch count");
    const long per_epoch = long((source.size() + opts.batch_size - 1) / opts.batch_size);
    const long total = per_epoch * opts.epochs;
    std::vector<double> trace;
    trace.reserve(std::size_t(total));
    if (total > 0) {
        num::PolySgd opt(opts.opt, total);
        models::IndexSampler sampler(source.size(), opts.sampler_seed);
        auto params = fe.parameters();
        for (const auto& p : c.parameters()) params.push_back(p);
        std::vector<int> labels(opts.batch_size);
        for (long it = 0; it < total; ++it) {
            const auto idx = sampler.next(opts.batch_size);
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = source.labels[idx[i]];
            const Var x = Var::constant(source.points.gather_rows(idx));
            const Var loss = num::softmax_cross_entropy(c.classify(fe.forward(x)), labels);
            loss.backward();
            opt.step(params);
            trace.push_back(double(loss.value().item()));
        }
    }
    fe.freeze();
    return trace;
}

std::vector<double> c_to_d_phase(MlsState& state, BatchSampler& source, BatchSampler& target, int k, int r,
                                 std::size_t batch_size, double ce_weight, num::PolySgd& opt, Rng& rng) {
    if (r < 0) throw std::invalid_argument("c_to_d_phase: negative iteration count");
    if (!state.snapshot.frozen()) throw std::logic_error("c_to_d_phase: classifier snapshot is not frozen");
    if (state.dad.frozen()) throw std::logic_error("c_to_d_phase: DAD module is frozen");
    if (target.pool().tag.kind != DomainTag::Kind::target || target.pool().labels) {
        throw std::invalid_argument("c_to_d_phase: target pool must be unlabeled target features");
    }
    const auto fe_sum = state.fe.checksum();
    const auto cls_sum = state.classifier.checksum();
    const auto snap_sum = state.snapshot.checksum();

    auto params = state.dad.parameters();
    std::vector<double> trace;
    trace.reserve(std::size_t(r));
    for (int it = 0; it < r; ++it) {
        Var loss;
        if (ce_weight > 0) {
            const FeatureBatch src = source.next(batch_size);
            const FeatureBatch sim = dad::simulate_transitional(state.dad, src, k, rng);
            loss = num::scale(batch_ce(state.snapshot, sim), num::Real(ce_weight));
        }
        const FeatureBatch tgt = target.next(batch_size);
        const Var tr = diffusion::reverse_loss(tgt.features.value(), state.dad.predictor(), state.dad.schedule(), rng);
        loss = loss.defined() ? num::add(loss, tr) : tr;
        loss.backward();
        opt.step(params);
        trace.push_back(double(loss.value().item()));
    }

    state.isolation.expect_equal(fe_sum, state.fe.checksum());
    state.isolation.expect_equal(cls_sum, state.classifier.checksum());
    state.isolation.expect_equal(snap_sum, state.snapshot.checksum());
    return trace;
}

std::vector<double> d_to_c_phase(MlsState& state, BatchSampler& source, int k, int r, std::size_t batch_size,
                                 const DtoCOptions& opts, num::PolySgd& opt, Rng& rng) {
    if (r < 0) throw std::invalid_argument("d_to_c_phase: negative iteration count");
    if (!state.dad.frozen()) throw std::logic_error("d_to_c_phase: DAD module must be frozen");
    if (k >= 1 && opts.lpd_on && state.buffer.indices_below(k).empty()) {
        throw std::logic_error("d_to_c_phase: replay buffer has no store below k=" + std::to_string(k));
    }
    const auto fe_sum = state.fe.checksum();
    const auto dad_sum = state.dad.checksum();
    const auto snap_sum = state.snapshot.checksum();

    auto params = state.classifier.parameters();
    std::vector<double> trace;
    trace.reserve(std::size_t(r));
    for (int it = 0; it < r; ++it) {
        const FeatureBatch src = source.next(batch_size);
        const FeatureBatch sim = dad::simulate_transitional(state.dad, src, k, rng);
        Var loss = batch_ce(state.classifier, sim);
        if (opts.lpd_on) {
            Var replay;
            if (opts.mode == config::ReplayMode::cache) {
                replay = replay_term(state.classifier, state.buffer, k, opts.m_replay, rng);
            } else {
                std::vector<Var> terms;
                for (int i : choose_stores(state.buffer, k, opts.m_replay, rng)) {
                    terms.push_back(batch_ce(state.classifier, dad::simulate_transitional(state.dad, src, i, rng)));
                }
                replay = average(terms);
            }
            loss = num::add(replay, loss);
        }
        loss.backward();
        opt.step(params);
        trace.push_back(double(loss.value().item()));
        state.buffer.insert(0, src);
        state.buffer.insert(k, sim);
    }

    state.isolation.expect_equal(fe_sum, state.fe.checksum());
    state.isolation.expect_equal(dad_sum, state.dad.checksum());
    state.isolation.expect_equal(snap_sum, state.snapshot.checksum());
    return trace;
}

// ---------------------------------------------------------------- runners

namespace {

enum class Schedule { multi, direct };

FeatureBatch probe_batch(const FeatureBatch& pool, std::size_t n, std::uint64_t seed) {
    models::IndexSampler s(pool.size(), seed);
    return pool.rows(s.next(std::min(n, pool.size())));
}

double ce_value(const Classifier& c, const FeatureBatch& b) {
    NoGradGuard no_grad;
    return double(batch_ce(c, b).value().item());
}

double accuracy_on(const Classifier& c, const FeatureBatch& b) {
    NoGradGuard no_grad;
    return metrics::accuracy_from_logits(c.classify(b).value(), b.require_labels());
}

double trace_window_mean(const std::vector<double>& t, bool head) {
    const std::size_t n = std::min<std::size_t>(100, t.size());
    if (n == 0) return kNaN;
    return head ? mean_of(std::span(t).first(n)) : mean_of(std::span(t).last(n));
}

std::vector<int> profile_ks(int K, int points) {
    std::vector<int> ks;
    for (int i = 0; i <= points; ++i) {
        const int k = int(std::lround(double(i) * K / points));
        if (ks.empty() || ks.back() != k) ks.push_back(k);
    }
    return ks;
}

RunResult run(const ExperimentConfig& cfg, const Datasets& data, Schedule schedule) {
    config::validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const Rng root(cfg.seed);
    const std::size_t batch = std::size_t(cfg.batch_size);

    RunResult out;
    auto& rep = out.report;
    rep.config = cfg;

    // Source training, shared by every preset.
    Rng init = root.split(kInit);
    Rng fe_init = init.split(0), cls_init = init.split(1), dad_init = init.split(2);
    FeatureExtractor fe(data.source.input_dim(), std::size_t(cfg.extractor_hidden), std::size_t(cfg.extractor_layers),
                        std::size_t(cfg.feature_dim), fe_init);
    Classifier cls(std::size_t(cfg.feature_dim), std::size_t(cfg.classifier_hidden),
                   std::size_t(cfg.classifier_layers), std::size_t(data.source.classes), cls_init);
    SourceTrainOptions so;
    so.epochs = cfg.epochs_source;
    so.batch_size = batch;
    so.opt = optim(cfg, cfg.lr);
    so.sampler_seed = stream_seed(root, kSamplers, 0);
    train_source(fe, cls, data.source, so);

    if (cfg.dad_after_layer > 0) models::split_backbone(fe, cls, std::size_t(cfg.dad_after_layer));
    if (cfg.standardize_features) models::fold_feature_standardization(fe, cls, data.source.points);

    rep.baseline_target_acc = metrics::accuracy(cls, fe, data.target_test);
    rep.dad_pretrain_loss_first = kNaN;
    rep.dad_pretrain_loss_last = kNaN;

    const auto finish = [&](dad::DadModule dad_module, long checks, long failures) {
        rep.source_acc = metrics::accuracy(cls, fe, data.source);
        rep.target_acc = metrics::accuracy(cls, fe, data.target_test);
        rep.isolation_checks = checks;
        rep.isolation_failures = failures;
        rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.fe = fe;
        out.classifier = cls;
        out.dad = std::move(dad_module);
        return std::move(out);
    };

    if (cfg.K == 0) return finish(dad::DadModule(), 0, 0);

    const FeatureBatch f_s = fe.extract(data.source.points, data.source.labels, DomainTag::source());
    const FeatureBatch f_t = fe.extract(data.target_train.points, std::nullopt, DomainTag::target());
    BatchSampler source(f_s, stream_seed(root, kSamplers, 1));
    BatchSampler target(f_t, stream_seed(root, kSamplers, 2));
    Rng noise = root.split(kNoise);
    Rng pretrain_noise = noise.split(0);
    Rng phase_noise = noise.split(1);
    const Rng probe_root = root.split(kProbe);
    const FeatureBatch probe = probe_batch(f_s, std::size_t(cfg.probe_size), probe_root.split(0).next_u64());

    MlsState st;
    st.fe = fe;
    st.classifier = cls;
    st.snapshot = cls.snapshot();
    st.dad = dad::DadModule(models::NoisePredictor(std::size_t(cfg.feature_dim), std::size_t(cfg.predictor_hidden),
                                                   std::size_t(cfg.predictor_layers), std::size_t(cfg.embed_dim),
                                                   cfg.K, dad_init),
                            diffusion::make_linear_schedule(cfg.K, num::Real(cfg.beta_1), num::Real(cfg.beta_K)));
    st.dad.set_grad_window(cfg.resolved_grad_window());
    st.buffer = ReplayBuffer(std::size_t(cfg.replay_capacity), stream_seed(root, kSamplers, 3));

    if (cfg.initial_training_on && cfg.steps_dad_pretrain > 0) {
        num::PolySgd pre_opt(optim(cfg, cfg.resolved_lr_pretrain()), cfg.steps_dad_pretrain);
        const auto trace =
            dad::pretrain_target_reverse(st.dad, target, batch, cfg.steps_dad_pretrain, pre_opt, pretrain_noise);
        rep.dad_pretrain_loss_first = trace_window_mean(trace, true);
        rep.dad_pretrain_loss_last = trace_window_mean(trace, false);
    }

    // Store 0 starts with source batches so the first D->C phase has a replay target.
    for (std::size_t i = 0; i < st.buffer.capacity(); ++i) st.buffer.insert(0, source.next(batch));

    const auto visited = cfg.visited_ks();
    const int n_visited = int(visited.size());
    const std::vector<int> ks = schedule == Schedule::multi ? visited : std::vector<int>{cfg.K};
    const int r = schedule == Schedule::multi ? cfg.r : cfg.r * n_visited;
    const long budget = long(cfg.r) * n_visited;

    const bool run_c_to_d = cfg.mls_on && !cfg.d_to_c_only;
    const bool run_d_to_c = !cfg.c_to_d_only;
    num::PolySgd dad_opt(optim(cfg, cfg.resolved_lr_dad()), budget);
    num::PolySgd cls_opt(optim(cfg, cfg.resolved_lr_classifier()), budget);
    DtoCOptions dc;
    dc.m_replay = cfg.m_replay;
    dc.lpd_on = cfg.lpd_on;
    dc.mode = cfg.replay_mode;

    for (int k : ks) {
        st.k = k;
        report::KRecord rec;
        rec.k = k;
        const auto probe_at = [&] {
            Rng pn = probe_root.split(1000 + std::uint64_t(k));
            NoGradGuard no_grad;
            return dad::simulate_transitional(st.dad, probe, k, pn);
        };

        st.isolation.expect_equal(st.snapshot.checksum(), st.classifier.checksum());
        rec.probe_ce_before = ce_value(st.snapshot, probe_at());
        rec.c_to_d_loss = kNaN;
        if (run_c_to_d) {
            st.dad.set_frozen(false);
            const auto t = c_to_d_phase(st, source, target, k, r, batch, cfg.ce_weight, dad_opt, phase_noise);
            rec.c_to_d_loss = mean_of(t);
        }
        st.dad.set_frozen(true);
        const FeatureBatch probe_k = probe_at();
        rec.probe_ce_after = ce_value(st.snapshot, probe_k);

        rec.d_to_c_loss = kNaN;
        if (run_d_to_c) {
            const auto t = d_to_c_phase(st, source, k, r, batch, dc, cls_opt, phase_noise);
            rec.d_to_c_loss = mean_of(t);
            st.snapshot = st.classifier.snapshot();
        }
        rec.probe_acc = accuracy_on(st.classifier, probe_k);
        rec.target_acc = metrics::accuracy(st.classifier, fe, data.target_test);
        rep.per_k.push_back(rec);
    }

    if (!run_d_to_c) {
        // C->D alone: the classifier then learns from the final DAD's outputs.
        const auto fe_sum = st.fe.checksum();
        const auto dad_sum = st.dad.checksum();
        auto params = st.classifier.parameters();
        for (long it = 0; it < budget; ++it) {
            const FeatureBatch src = source.next(batch);
            const int k = ks[phase_noise.uniform_int(std::uint64_t(ks.size()))];
            const FeatureBatch sim = dad::simulate_transitional(st.dad, src, k, phase_noise);
            const Var loss = num::add(batch_ce(st.classifier, src), batch_ce(st.classifier, sim));
            loss.backward();
            cls_opt.step(params);
        }
        st.isolation.expect_equal(fe_sum, st.fe.checksum());
        st.isolation.expect_equal(dad_sum, st.dad.checksum());
    }

    cls = st.classifier;

    // Transition profile on held-out target features.
    {
        NoGradGuard no_grad;
        Rng prof = root.split(kProfile);
        const FeatureBatch subset = probe_batch(f_s, std::size_t(cfg.mmd_samples), prof.split(0).next_u64());
        const FeatureBatch held_out = fe.extract(data.target_test.points, std::nullopt, DomainTag::target());
        const auto pks = profile_ks(cfg.K, cfg.profile_points);
        Rng prof_noise = prof.split(1);
        rep.mmd_profile = dad::dad_distance_profile(st.dad, subset, held_out, pks, prof_noise);
    }

    return finish(std::move(st.dad), st.isolation.checks, st.isolation.failures);
}

}  // namespace

RunResult run_mls(const ExperimentConfig& cfg, const Datasets& data) { return run(cfg, data, Schedule::multi); }

RunResult run_direct_transition(const ExperimentConfig& cfg, const Datasets& data) {
    return run(cfg, data, Schedule::direct);
}

RunResult run_experiment(const ExperimentConfig& cfg, const Datasets& data) {
    return cfg.transition == config::Transition::direct ? run_direct_transition(cfg, data) : run_mls(cfg, data);
}

void export_features(std::ostream& out, const FeatureExtractor& fe, const dad::DadModule& dad,
                     const domains::LabeledDataset& source, const domains::LabeledDataset& target,
                     std::span<const int> ks, std::uint64_t seed) {
    NoGradGuard no_grad;
    const FeatureBatch f_s = fe.extract(source.points, source.labels, DomainTag::source());
    const FeatureBatch f_t = fe.extract(target.points, std::nullopt, DomainTag::target());
    const std::size_t d = f_s.dim();

    out << "k";
    for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
    out << ",label,domain\n";

    char buf[64];
    const auto emit = [&](int k, const Tensor& f, std::span<const int> labels, const char* domain) {
        for (std::size_t i = 0; i < f.rows(); ++i) {
            out << k;
            for (std::size_t j = 0; j < d; ++j) {
                std::snprintf(buf, sizeof buf, ",%.17g", double(f.at(i, j)));
                out << buf;
            }
            out << ',' << labels[i] << ',' << domain << '\n';
        }
    };
    emit(0, f_s.features.value(), source.labels, "source");
    emit(-1, f_t.features.value(), target.labels, "target");
    const Rng root(seed);
    for (int k : ks) {
        Rng rng = root.split(std::uint64_t(k));
        const FeatureBatch sim = dad::simulate_transitional(dad, f_s, k, rng);
        emit(k, sim.features.value(), source.labels, "transitional");
    }
}

}  // namespace dadapt::mls

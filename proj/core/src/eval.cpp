#include "dwnet/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "dwnet/error.hpp"
#include "dwnet/serialize.hpp"

namespace dwnet {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string display_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::hcn: return "HCN";
        case ModelKind::bls_flat: return "BLS";
        case ModelKind::hcnbls: return "HCNBLS";
        case ModelKind::dwnet: return "DWnet";
    }
    return "?";
}

std::vector<int> labels_of(std::span<const SkeletonSequence> seqs) {
    std::vector<int> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) {
        out.push_back(s.label);
    }
    return out;
}

double accuracy_percent(std::span<const int> predicted, std::span<const int> truth) {
    if (truth.empty()) {
        throw ConfigError("cannot score an empty test fold");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        correct += predicted[i] == truth[i] ? 1 : 0;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void add_into(CountMatrix& total, const CountMatrix& part) {
    for (std::size_t i = 0; i < total.size(); ++i) {
        for (std::size_t j = 0; j < total[i].size(); ++j) {
            total[i][j] += part[i][j];
        }
    }
}

Json ridge_json(const RidgeReport& r) {
    return {{"form", r.form == RidgeForm::primal ? "primal" : "dual"},
            {"residual", r.residual},
            {"residual_bound", r.residual_bound},
            {"refinement_steps", r.refinement_steps}};
}

Json training_json(const HcnTrainResult& t) {
    Json j;
    j["epochs"] = t.history.size();
    j["final_loss"] = t.history.empty() ? 0.0 : t.history.back().loss;
    j["train_accuracy"] = t.final_train_accuracy;
    return j;
}

Json seeds_json(const FoldSeeds& s) {
    return {{"init", s.init}, {"train", s.train}, {"head", s.head}};
}

HcnConfig seeded(HcnConfig c, const FoldSeeds& s) {
    c.sgd.seed = s.train;
    return c;
}

BlsConfig seeded(BlsConfig c, const FoldSeeds& s) {
    c.seed = s.head;
    return c;
}

void check_dataset(const Dataset& data, const HcnConfig& cfg) {
    if (data.manifest.num_classes() != cfg.num_classes) {
        throw ConfigError("dataset has " + std::to_string(data.manifest.num_classes()) +
                          " classes but hcn.num_classes is " + std::to_string(cfg.num_classes));
    }
    if (data.manifest.joints != 0 && data.manifest.joints != cfg.joints) {
        throw ConfigError("dataset has " + std::to_string(data.manifest.joints) +
                          " joints but hcn.joints is " + std::to_string(cfg.joints));
    }
}

struct FoldSets {
    std::vector<SkeletonSequence> train;
    std::vector<SkeletonSequence> test;
};

FoldSets gather(const Dataset& data, const FoldSplit& split) {
    FoldSets f;
    f.train.reserve(split.train.size());
    f.test.reserve(split.test.size());
    for (auto i : split.train) f.train.push_back(data.sequences.at(i));
    for (auto i : split.test) f.test.push_back(data.sequences.at(i));
    return f;
}

class HcnClassifier final : public Classifier {
public:
    explicit HcnClassifier(HcnModel m) : model_(std::move(m)) {}
    std::string name() const override { return "hcn"; }
    std::vector<int> predict(std::span<const ClipTensors> clips) const override {
        return hcn_predict(model_, clips);
    }
    int predict_one(const ClipTensors& clip) const override {
        const Tensor logits = hcn_forward(model_, clip, false, rng_);
        return argmax_rows(logits.reshaped({1, logits.size()}))[0];
    }

private:
    HcnModel model_;
    mutable Rng rng_{0};
};

class DwnetClassifier final : public Classifier {
public:
    explicit DwnetClassifier(DwnetModel m) : model_(std::move(m)) {}
    std::string name() const override { return "dwnet"; }
    std::vector<int> predict(std::span<const ClipTensors> clips) const override {
        return dwnet_predict_batch(model_, clips).classes;
    }
    int predict_one(const ClipTensors& clip) const override {
        return dwnet_predict(model_, clip).label;
    }

private:
    DwnetModel model_;
};

class HcnblsClassifier final : public Classifier {
public:
    explicit HcnblsClassifier(HcnblsModel m) : model_(std::move(m)) {}
    std::string name() const override { return "hcnbls"; }
    std::vector<int> predict(std::span<const ClipTensors> clips) const override {
        return hcnbls_predict_batch(model_, clips).classes;
    }
    int predict_one(const ClipTensors& clip) const override {
        return hcnbls_predict(model_, clip).label;
    }

private:
    HcnblsModel model_;
};

class FlatBlsClassifier final : public Classifier {
public:
    explicit FlatBlsClassifier(FlatBls m) : model_(std::move(m)) {}
    std::string name() const override { return "bls-flat"; }
    std::vector<int> predict(std::span<const ClipTensors> clips) const override {
        return flat_bls_predict(model_, clips).classes;
    }
    int predict_one(const ClipTensors& clip) const override {
        return flat_bls_predict(model_, std::span(&clip, 1)).classes[0];
    }

private:
    FlatBls model_;
};

class NoopClassifier final : public Classifier {
public:
    std::string name() const override { return "noop"; }
    std::vector<int> predict(std::span<const ClipTensors> clips) const override {
        return std::vector<int>(clips.size(), 0);
    }
    int predict_one(const ClipTensors&) const override { return 0; }
};

}  // namespace

// ---- confusion ---------------------------------------------------------------

CountMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth,
                             std::size_t num_classes) {
    if (predicted.size() != truth.size()) {
        throw ShapeError("confusion matrix: " + std::to_string(predicted.size()) +
                         " predictions for " + std::to_string(truth.size()) + " labels");
    }
    if (num_classes == 0) {
        throw ConfigError("confusion matrix: num_classes must be positive");
    }
    CountMatrix m(num_classes, std::vector<std::size_t>(num_classes, 0));
    const int c = static_cast<int>(num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= c || predicted[i] < 0 || predicted[i] >= c) {
            throw ConfigError("confusion matrix: entry " + std::to_string(i) + " (true " +
                              std::to_string(truth[i]) + ", predicted " +
                              std::to_string(predicted[i]) + ") outside [0, " +
                              std::to_string(num_classes) + ")");
        }
        ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return m;
}

std::vector<std::vector<double>> normalize_rows(const CountMatrix& counts) {
    std::vector<std::vector<double>> out;
    out.reserve(counts.size());
    for (const auto& row : counts) {
        const double total = static_cast<double>(std::accumulate(row.begin(), row.end(), std::size_t{0}));
        std::vector<double> r(row.size(), 0.0);
        if (total > 0) {
            for (std::size_t j = 0; j < row.size(); ++j) {
                r[j] = static_cast<double>(row[j]) / total;
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

// ---- classifiers and fitters -------------------------------------------------

std::unique_ptr<Classifier> make_classifier(HcnModel model) {
    return std::make_unique<HcnClassifier>(std::move(model));
}
std::unique_ptr<Classifier> make_classifier(DwnetModel model) {
    return std::make_unique<DwnetClassifier>(std::move(model));
}
std::unique_ptr<Classifier> make_classifier(HcnblsModel model) {
    return std::make_unique<HcnblsClassifier>(std::move(model));
}
std::unique_ptr<Classifier> make_classifier(FlatBls model) {
    return std::make_unique<FlatBlsClassifier>(std::move(model));
}

Fitter make_fitter(const RunConfig& config, ModelKind kind) {
    switch (kind) {
        case ModelKind::hcn:
            return [hcn = config.hcn](const FoldData& fd) {
                Rng rng(fd.seeds.init);
                HcnModel model = build_hcn(seeded(hcn, fd.seeds), rng);
                const HcnTrainResult training = hcn_train(model, fd.train, {});
                FittedModel out;
                out.details["training"] = training_json(training);
                out.classifier = make_classifier(std::move(model));
                return out;
            };
        case ModelKind::dwnet:
            return [hcn = config.hcn, bls = config.bls](const FoldData& fd) {
                DwnetFitResult r = dwnet_fit(fd.train, {}, seeded(hcn, fd.seeds),
                                             seeded(bls, fd.seeds), fd.seeds.init);
                FittedModel out;
                out.details["training"] = training_json(r.training);
                out.details["ridge"] = ridge_json(r.ridge);
                out.classifier = make_classifier(std::move(r.model));
                return out;
            };
        case ModelKind::hcnbls:
            return [hcn = config.hcn, bls = config.hcnbls_bls,
                    n = config.hcnbls_mappers](const FoldData& fd) {
                const std::vector<int> labels = labels_of(fd.train);
                HcnblsModel m = hcnbls_fit_clips(fd.train_clips, labels, hcn, n,
                                                 seeded(bls, fd.seeds), fd.seeds.init);
                FittedModel out;
                out.details["mappers"] = n;
                out.details["feature_width"] = m.head.feature_dim;
                out.classifier = make_classifier(std::move(m));
                return out;
            };
        case ModelKind::bls_flat:
            return [flat = config.flat_bls](const FoldData& fd) {
                FlatBlsConfig cfg = flat;
                cfg.seed = fd.seeds.head;
                const std::vector<int> labels = labels_of(fd.train);
                FlatBls m = flat_bls_fit(fd.train_clips, labels, fd.num_classes, cfg);
                FittedModel out;
                out.details["input_width"] = m.input_width;
                out.classifier = make_classifier(std::move(m));
                return out;
            };
    }
    throw ConfigError("unknown model kind");
}

// ---- cross validation --------------------------------------------------------

std::vector<FoldSplit> make_splits(const Dataset& data, const RunConfig& config) {
    if (config.split.mode == SplitConfig::Mode::holdout) {
        return {holdout_split(data.manifest, config.split.test_groups)};
    }
    return kfold_splits(data.manifest, config.split.folds, config.seed);
}

EvalReport run_cv(const Dataset& data, std::span<const FoldSplit> splits, const HcnConfig& encoding,
                  const Fitter& fitter, std::uint64_t seed, const std::string& model_name) {
    const auto t0 = Clock::now();
    const std::size_t c = data.manifest.num_classes();
    EvalReport report;
    report.model = model_name;
    report.class_names = data.manifest.class_names;
    report.confusion.assign(c, std::vector<std::size_t>(c, 0));
    Json seeds;
    seeds["run"] = seed;
    seeds["folds"] = Json::array();

    for (const auto& split : splits) {
        const auto tf = Clock::now();
        const FoldSets sets = gather(data, split);
        const std::vector<ClipTensors> train_clips = encode_all(encoding, sets.train);
        const std::vector<ClipTensors> test_clips = encode_all(encoding, sets.test);
        const std::vector<int> test_labels = labels_of(sets.test);

        FoldData fd;
        fd.fold = split.fold;
        fd.train = sets.train;
        fd.test = sets.test;
        fd.train_clips = train_clips;
        fd.test_clips = test_clips;
        fd.num_classes = c;
        fd.seeds = fold_seeds(seed, split.fold);

        std::vector<std::size_t> train_count(c, 0), test_count(c, 0);
        for (const auto& s : sets.train) ++train_count.at(static_cast<std::size_t>(s.label));
        for (const auto& s : sets.test) ++test_count.at(static_cast<std::size_t>(s.label));
        for (std::size_t k = 0; k < c; ++k) {
            const std::string cls = "fold " + std::to_string(split.fold + 1) + ": class '" +
                                    data.manifest.class_names[k] + "'";
            if (train_count[k] == 0) report.warnings.push_back(cls + " has no training samples");
            if (test_count[k] == 0) report.warnings.push_back(cls + " has no test samples");
        }

        FittedModel fitted = fitter(fd);
        const std::vector<int> predicted = fitted.classifier->predict(test_clips);
        const double acc = accuracy_percent(predicted, test_labels);
        add_into(report.confusion, confusion_matrix(predicted, test_labels, c));
        report.fold_accuracy.push_back(acc);

        Json detail;
        detail["fold"] = split.fold;
        detail["train_size"] = sets.train.size();
        detail["test_size"] = sets.test.size();
        detail["accuracy"] = acc;
        for (auto& [k, v] : fitted.details.items()) {
            detail[k] = v;
        }
        detail["wall_clock_seconds"] = seconds_since(tf);
        report.fold_details.push_back(std::move(detail));
        seeds["folds"].push_back(seeds_json(fd.seeds));
    }
    report.average_accuracy = mean_of(report.fold_accuracy);
    report.class_counts.assign(c, 0);
    for (std::size_t i = 0; i < c; ++i) {
        report.class_counts[i] =
            std::accumulate(report.confusion[i].begin(), report.confusion[i].end(), std::size_t{0});
    }
    report.seeds = std::move(seeds);
    report.wall_clock_seconds = seconds_since(t0);
    return report;
}

EvalReport run_cv(const RunConfig& config) {
    const Dataset data = load_dataset(config.dataset);
    check_dataset(data, config.hcn);
    const std::vector<FoldSplit> splits = make_splits(data, config);
    EvalReport report = run_cv(data, splits, config.hcn, make_fitter(config, config.model),
                               config.seed, to_string(config.model));
    report.config = run_config_to_json(config);
    if (!config.fixtures.empty() && config.dataset.kind == DatasetKind::sbu) {
        report.reference = reference_comparison(read_json_file(config.fixtures),
                                                to_string(config.model), report.average_accuracy);
    }
    return report;
}

// ---- report JSON -------------------------------------------------------------

Json eval_report_to_json(const EvalReport& r) {
    Json j;
    j["model"] = r.model;
    j["num_folds"] = r.fold_accuracy.size();
    j["fold_accuracy"] = r.fold_accuracy;
    j["average_accuracy"] = r.average_accuracy;
    j["class_names"] = r.class_names;
    j["class_counts"] = r.class_counts;
    j["confusion"] = {{"counts", r.confusion}, {"normalized", normalize_rows(r.confusion)}};
    j["warnings"] = r.warnings;
    j["folds"] = r.fold_details;
    j["seeds"] = r.seeds.is_null() ? Json::object() : r.seeds;
    j["config"] = r.config.is_null() ? Json::object() : r.config;
    if (!r.reference.is_null()) {
        j["reference"] = r.reference;
    }
    j["wall_clock_seconds"] = r.wall_clock_seconds;
    return j;
}

EvalReport eval_report_from_json(const Json& j) {
    EvalReport r;
    try {
        r.model = j.at("model").get<std::string>();
        r.fold_accuracy = j.at("fold_accuracy").get<std::vector<double>>();
        r.average_accuracy = j.at("average_accuracy").get<double>();
        r.class_names = j.at("class_names").get<std::vector<std::string>>();
        r.class_counts = j.at("class_counts").get<std::vector<std::size_t>>();
        r.confusion = j.at("confusion").at("counts").get<CountMatrix>();
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        r.fold_details = j.at("folds").get<std::vector<Json>>();
        r.seeds = j.at("seeds");
        r.config = j.at("config");
        if (j.contains("reference")) r.reference = j.at("reference");
        r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    } catch (const Json::exception& e) {
        throw ParseError(std::string("eval report: ") + e.what());
    }
    return r;
}

// ---- feature cache and sweep -------------------------------------------------

FeatureCache build_feature_cache(const Dataset& data, std::span<const FoldSplit> splits,
                                 const HcnConfig& config, std::uint64_t seed) {
    check_dataset(data, config);
    FeatureCache cache;
    cache.seed = seed;
    cache.num_classes = data.manifest.num_classes();
    cache.class_names = data.manifest.class_names;
    for (const auto& split : splits) {
        const FoldSets sets = gather(data, split);
        FoldFeatures f;
        f.fold = split.fold;
        f.seeds = fold_seeds(seed, split.fold);
        TrainedMapper mapper = train_mapper(sets.train, {}, seeded(config, f.seeds), f.seeds.init);
        f.hcn = std::move(mapper.hcn);
        f.training = std::move(mapper.training);
        f.pruhcn = std::move(mapper.pruhcn);
        f.train_features = pruhcn_features_batch(f.pruhcn, encode_all(config, sets.train));
        f.test_clips = encode_all(config, sets.test);
        f.test_features = pruhcn_features_batch(f.pruhcn, f.test_clips);
        f.train_labels = labels_of(sets.train);
        f.test_labels = labels_of(sets.test);
        cache.folds.push_back(std::move(f));
    }
    return cache;
}

namespace {

EvalReport cached_report(const FeatureCache& cache, const std::string& model,
                         const std::function<std::vector<int>(const FoldFeatures&, Json&)>& run) {
    const auto t0 = Clock::now();
    const std::size_t c = cache.num_classes;
    EvalReport report;
    report.model = model;
    report.class_names = cache.class_names;
    report.confusion.assign(c, std::vector<std::size_t>(c, 0));
    report.seeds["run"] = cache.seed;
    report.seeds["folds"] = Json::array();
    for (const auto& f : cache.folds) {
        Json detail;
        detail["fold"] = f.fold;
        detail["train_size"] = f.train_labels.size();
        detail["test_size"] = f.test_labels.size();
        const std::vector<int> predicted = run(f, detail);
        const double acc = accuracy_percent(predicted, f.test_labels);
        add_into(report.confusion, confusion_matrix(predicted, f.test_labels, c));
        report.fold_accuracy.push_back(acc);
        detail["accuracy"] = acc;
        detail["training"] = training_json(f.training);
        report.fold_details.push_back(std::move(detail));
        report.seeds["folds"].push_back(seeds_json(f.seeds));
    }
    report.average_accuracy = mean_of(report.fold_accuracy);
    report.class_counts.assign(c, 0);
    for (std::size_t i = 0; i < c; ++i) {
        report.class_counts[i] =
            std::accumulate(report.confusion[i].begin(), report.confusion[i].end(), std::size_t{0});
    }
    report.wall_clock_seconds = seconds_since(t0);
    return report;
}

}  // namespace

EvalReport evaluate_dwnet(const FeatureCache& cache, const BlsConfig& bls) {
    return cached_report(cache, "dwnet", [&](const FoldFeatures& f, Json& detail) {
        RidgeReport ridge;
        const BlsHead head = bls_fit(f.train_features, f.train_labels, cache.num_classes,
                                     seeded(bls, f.seeds), &ridge);
        detail["ridge"] = ridge_json(ridge);
        return bls_predict(head, f.test_features).classes;
    });
}

EvalReport evaluate_hcn(const FeatureCache& cache) {
    return cached_report(cache, "hcn", [](const FoldFeatures& f, Json&) {
        return hcn_predict(f.hcn, f.test_clips);
    });
}

SweepReport sweep_enhancement(const FeatureCache& cache, const BlsConfig& base,
                              const SweepConfig& grid) {
    if (cache.folds.empty()) {
        throw ConfigError("sweep: feature cache has no folds");
    }
    SweepReport report;
    for (std::size_t m : grid.grid()) {
        BlsConfig cfg = base;
        cfg.enhancement_nodes = m;
        SweepPoint p;
        p.enhancement_nodes = m;
        double refit = 0.0;
        for (const auto& f : cache.folds) {
            const auto t0 = Clock::now();
            const BlsHead head = bls_fit(f.train_features, f.train_labels, cache.num_classes,
                                         seeded(cfg, f.seeds));
            refit += seconds_since(t0);
            const std::vector<int> predicted = bls_predict(head, f.test_features).classes;
            p.fold_accuracy.push_back(accuracy_percent(predicted, f.test_labels));
        }
        p.average_accuracy = mean_of(p.fold_accuracy);
        p.refit_seconds = refit / static_cast<double>(cache.folds.size());
        if (report.points.empty() || p.average_accuracy > report.best_accuracy) {
            report.best_accuracy = p.average_accuracy;
            report.best_enhancement_nodes = m;
        }
        report.points.push_back(std::move(p));
    }
    report.config = {{"bls", bls_config_to_json(base)},
                     {"m_start", grid.m_start},
                     {"m_end", grid.m_end},
                     {"m_step", grid.m_step}};
    return report;
}

Json sweep_report_to_json(const SweepReport& r) {
    Json points = Json::array();
    for (const auto& p : r.points) {
        points.push_back({{"enhancement_nodes", p.enhancement_nodes},
                          {"average_accuracy", p.average_accuracy},
                          {"fold_accuracy", p.fold_accuracy},
                          {"refit_seconds", p.refit_seconds}});
    }
    Json j;
    j["points"] = points;
    j["best_enhancement_nodes"] = r.best_enhancement_nodes;
    j["best_accuracy"] = r.best_accuracy;
    j["config"] = r.config.is_null() ? Json::object() : r.config;
    return j;
}

std::string sweep_csv(const SweepReport& r) {
    std::ostringstream out;
    out << "enhancement_nodes,average_accuracy";
    const std::size_t folds = r.points.empty() ? 0 : r.points.front().fold_accuracy.size();
    for (std::size_t f = 0; f < folds; ++f) out << ",fold_" << f + 1;
    out << ",refit_seconds\n";
    for (const auto& p : r.points) {
        out << p.enhancement_nodes << ',' << num(p.average_accuracy);
        for (double a : p.fold_accuracy) out << ',' << num(a);
        out << ',' << num(p.refit_seconds) << '\n';
    }
    return out.str();
}

// ---- timing ------------------------------------------------------------------

TimingRow time_inference(std::span<const Classifier* const> models,
                         std::span<const ClipTensors> samples, std::size_t reps, std::size_t warmup) {
    if (reps < 10) {
        throw ConfigError("timing: reps must be >= 10, got " + std::to_string(reps));
    }
    if (warmup < 1) {
        throw ConfigError("timing: at least one warm-up pass is required");
    }
    if (samples.empty()) {
        throw ConfigError("timing: no samples");
    }
    volatile int sink = 0;
    auto per_sample = [&](const Classifier& model) {
        for (std::size_t w = 0; w < warmup; ++w) {
            for (const auto& s : samples) sink = sink + model.predict_one(s);
        }
        const auto t0 = Clock::now();
        for (std::size_t r = 0; r < reps; ++r) {
            for (const auto& s : samples) sink = sink + model.predict_one(s);
        }
        return seconds_since(t0) / static_cast<double>(reps * samples.size());
    };
    TimingRow row;
    row.samples = samples.size();
    const NoopClassifier noop;
    row.harness_baseline_seconds = per_sample(noop);
    for (const Classifier* m : models) {
        row.seconds_per_sample.push_back(per_sample(*m));
    }
    return row;
}

TimingReport run_bench(const RunConfig& config) {
    const Dataset data = load_dataset(config.dataset);
    check_dataset(data, config.hcn);
    const std::vector<FoldSplit> splits = make_splits(data, config);
    TimingReport report;
    for (auto m : config.timing.models) report.models.push_back(display_name(m));
    report.reps = config.timing.reps;
    report.warmup = config.timing.warmup;
    report.hardware = hardware_note();

    double baseline = 0.0;
    for (const auto& split : splits) {
        const FoldSets sets = gather(data, split);
        const std::vector<ClipTensors> train_clips = encode_all(config.hcn, sets.train);
        std::vector<ClipTensors> test_clips = encode_all(config.hcn, sets.test);
        if (config.timing.max_samples > 0 && test_clips.size() > config.timing.max_samples) {
            test_clips.resize(config.timing.max_samples);
        }
        FoldData fd;
        fd.fold = split.fold;
        fd.train = sets.train;
        fd.test = sets.test;
        fd.train_clips = train_clips;
        fd.test_clips = test_clips;
        fd.num_classes = data.manifest.num_classes();
        fd.seeds = fold_seeds(config.seed, split.fold);

        // HCN and DWnet share one trained network when both are timed.
        std::vector<std::unique_ptr<Classifier>> owned;
        const auto& kinds = config.timing.models;
        const bool want_hcn = std::find(kinds.begin(), kinds.end(), ModelKind::hcn) != kinds.end();
        const bool want_dw = std::find(kinds.begin(), kinds.end(), ModelKind::dwnet) != kinds.end();
        std::unique_ptr<Classifier> shared_hcn, shared_dw;
        if (want_hcn && want_dw) {
            DwnetFitResult r = dwnet_fit(sets.train, {}, seeded(config.hcn, fd.seeds),
                                         seeded(config.bls, fd.seeds), fd.seeds.init);
            shared_hcn = make_classifier(std::move(r.hcn));
            shared_dw = make_classifier(std::move(r.model));
        }
        for (auto kind : kinds) {
            if (kind == ModelKind::hcn && shared_hcn) {
                owned.push_back(std::move(shared_hcn));
            } else if (kind == ModelKind::dwnet && shared_dw) {
                owned.push_back(std::move(shared_dw));
            } else {
                owned.push_back(make_fitter(config, kind)(fd).classifier);
            }
        }
        std::vector<const Classifier*> ptrs;
        for (const auto& o : owned) ptrs.push_back(o.get());
        const TimingRow row = time_inference(ptrs, test_clips, config.timing.reps, config.timing.warmup);
        report.rows.push_back("fold_" + std::to_string(split.fold + 1));
        report.seconds_per_sample.push_back(row.seconds_per_sample);
        report.samples += row.samples;
        baseline += row.harness_baseline_seconds;
    }
    report.harness_baseline_seconds = baseline / static_cast<double>(splits.size());
    return report;
}

namespace {

std::vector<double> column_means(const TimingReport& r) {
    std::vector<double> avg(r.models.size(), 0.0);
    for (const auto& row : r.seconds_per_sample) {
        for (std::size_t j = 0; j < row.size(); ++j) avg[j] += row[j];
    }
    for (double& a : avg) a /= static_cast<double>(std::max<std::size_t>(1, r.rows.size()));
    return avg;
}

}  // namespace

Json timing_report_to_json(const TimingReport& r) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        rows.push_back({{"split", r.rows[i]}, {"seconds_per_sample", r.seconds_per_sample[i]}});
    }
    Json j;
    j["unit"] = "seconds per sample";
    j["models"] = r.models;
    j["rows"] = rows;
    j["average_seconds_per_sample"] = column_means(r);
    j["reps"] = r.reps;
    j["warmup"] = r.warmup;
    j["samples"] = r.samples;
    j["harness_baseline_seconds"] = r.harness_baseline_seconds;
    j["hardware"] = r.hardware;
    return j;
}

std::string timing_csv(const TimingReport& r) {
    std::ostringstream out;
    out << "split";
    for (const auto& m : r.models) out << ',' << csv_field(m);
    out << '\n';
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        out << csv_field(r.rows[i]);
        for (double s : r.seconds_per_sample[i]) out << ',' << num(s);
        out << '\n';
    }
    out << "average";
    for (double s : column_means(r)) out << ',' << num(s);
    out << '\n';
    return out.str();
}

std::string hardware_note() {
    std::string cpu = "unknown cpu";
    std::ifstream in("/proc/cpuinfo");
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                cpu = line.substr(line.find_first_not_of(' ', colon + 1));
            }
            break;
        }
    }
    return cpu + "; " + std::to_string(std::thread::hardware_concurrency()) +
           " hardware threads; single-threaded timing";
}

// ---- report files ------------------------------------------------------------

std::string confusion_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "true\\predicted";
    for (const auto& name : r.class_names) out << ',' << csv_field(name);
    out << '\n';
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
        out << csv_field(i < r.class_names.size() ? r.class_names[i] : std::to_string(i));
        for (auto v : r.confusion[i]) out << ',' << v;
        out << '\n';
    }
    return out.str();
}

namespace {

std::string normalized_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "true\\predicted";
    for (const auto& name : r.class_names) out << ',' << csv_field(name);
    out << '\n';
    const auto norm = normalize_rows(r.confusion);
    for (std::size_t i = 0; i < norm.size(); ++i) {
        out << csv_field(i < r.class_names.size() ? r.class_names[i] : std::to_string(i));
        for (double v : norm[i]) out << ',' << num(v);
        out << '\n';
    }
    return out.str();
}

}  // namespace

std::string summary_text(const EvalReport& r) {
    std::ostringstream out;
    out << "model: " << r.model << '\n';
    for (std::size_t f = 0; f < r.fold_accuracy.size(); ++f) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", r.fold_accuracy[f]);
        out << "fold " << f + 1 << ": " << buf << "%\n";
    }
    char avg[32];
    std::snprintf(avg, sizeof avg, "%.2f", r.average_accuracy);
    out << "average: " << avg << "%\n";
    if (!r.reference.is_null()) {
        char ref[96];
        std::snprintf(ref, sizeof ref, "reference: %.2f%% (diff %+.2f pp) -> ",
                      r.reference.at("reference").get<double>(),
                      r.reference.at("difference").get<double>());
        out << ref << r.reference.at("verdict").get<std::string>() << '\n';
    }
    for (const auto& w : r.warnings) out << "warning: " << w << '\n';
    return out.str();
}

Json reference_comparison(const Json& fixtures, const std::string& model, double observed,
                          double tolerance) {
    const std::string column = display_name(model_kind_from_string(model));
    try {
        const Json& table = fixtures.at("sbu_accuracy");
        const auto columns = table.at("columns").get<std::vector<std::string>>();
        const auto it = std::find(columns.begin(), columns.end(), column);
        if (it == columns.end()) {
            throw ParseError("reference fixture has no column '" + column + "'");
        }
        const double ref = table.at("rows").at("average").at(
            static_cast<std::size_t>(it - columns.begin())).get<double>();
        const double diff = observed - ref;
        return {{"table", "sbu_accuracy"},
                {"column", column},
                {"reference", ref},
                {"observed", observed},
                {"difference", diff},
                {"tolerance", tolerance},
                {"verdict", std::abs(diff) <= tolerance ? "consistent" : "divergent"}};
    } catch (const Json::exception& e) {
        throw ParseError(std::string("reference fixture: ") + e.what());
    }
}

void write_eval_outputs(const fs::path& dir, const EvalReport& report) {
    write_json_file(dir / "eval_report.json", eval_report_to_json(report));
    write_text_file(dir / "confusion.csv", confusion_csv(report));
    write_text_file(dir / "confusion_normalized.csv", normalized_csv(report));
    write_text_file(dir / "summary.txt", summary_text(report));
}

Json strip_wall_clock(Json j) {
    if (j.is_object()) {
        Json out = Json::object();
        for (auto& [k, v] : j.items()) {
            if (k.size() >= 8 && k.compare(k.size() - 8, 8, "_seconds") == 0) continue;
            out[k] = strip_wall_clock(v);
        }
        return out;
    }
    if (j.is_array()) {
        Json out = Json::array();
        for (auto& v : j) out.push_back(strip_wall_clock(v));
        return out;
    }
    return j;
}

}  // namespace dwnet

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dwnet/dwnet.hpp"
#include "dwnet/run_config.hpp"

namespace dwnet {

/// Count matrix, row = true label, column = prediction.
using CountMatrix = std::vector<std::vector<std::size_t>>;

CountMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth,
                             std::size_t num_classes);
/// Row-stochastic version; all-zero rows stay zero.
std::vector<std::vector<double>> normalize_rows(const CountMatrix& counts);

/// A fitted model seen by the harness.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::string name() const = 0;
    virtual std::vector<int> predict(std::span<const ClipTensors> clips) const = 0;
    /// Single-sample path; this is what timing measures.
    virtual int predict_one(const ClipTensors& clip) const = 0;
};

struct FoldData {
    std::size_t fold = 0;
    std::span<const SkeletonSequence> train;
    std::span<const SkeletonSequence> test;
    std::span<const ClipTensors> train_clips;
    std::span<const ClipTensors> test_clips;
    std::size_t num_classes = 0;
    FoldSeeds seeds;
};

struct FittedModel {
    std::unique_ptr<Classifier> classifier;
    Json details;  // per-fold diagnostics (training history summary, ridge residual)
};

using Fitter = std::function<FittedModel(const FoldData&)>;

std::unique_ptr<Classifier> make_classifier(HcnModel model);
std::unique_ptr<Classifier> make_classifier(DwnetModel model);
std::unique_ptr<Classifier> make_classifier(HcnblsModel model);
std::unique_ptr<Classifier> make_classifier(FlatBls model);

/// Fitter for the configured model kind.
Fitter make_fitter(const RunConfig& config, ModelKind kind);

struct EvalReport {
    std::string model;
    std::vector<double> fold_accuracy;  // percent
    double average_accuracy = 0.0;      // percent, mean of folds
    CountMatrix confusion;
    std::vector<std::size_t> class_counts;
    std::vector<std::string> class_names;
    std::vector<std::string> warnings;
    std::vector<Json> fold_details;
    Json config;
    Json seeds;
    Json reference;  // optional published-table comparison
    double wall_clock_seconds = 0.0;
};

Json eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const Json& j);

std::vector<FoldSplit> make_splits(const Dataset& data, const RunConfig& config);

/// Fits `fitter` on every training fold and scores argmax accuracy on the test fold.
EvalReport run_cv(const Dataset& data, std::span<const FoldSplit> splits, const HcnConfig& encoding,
                  const Fitter& fitter, std::uint64_t seed, const std::string& model_name);

/// Loads the dataset named in `config` and evaluates `config.model`.
EvalReport run_cv(const RunConfig& config);

// ---- cached features (shared by the DWnet evaluation and the sweep) ----------

struct FoldFeatures {
    std::size_t fold = 0;
    FoldSeeds seeds;
    HcnModel hcn;
    HcnTrainResult training;
    PruHcn pruhcn;
    Tensor train_features;
    Tensor test_features;
    std::vector<int> train_labels;
    std::vector<int> test_labels;
    std::vector<ClipTensors> test_clips;
};

struct FeatureCache {
    std::uint64_t seed = 0;
    std::size_t num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<FoldFeatures> folds;
};

/// Trains one HCN per fold (same seeds run_cv uses) and stores its PruHCN features.
FeatureCache build_feature_cache(const Dataset& data, std::span<const FoldSplit> splits,
                                 const HcnConfig& config, std::uint64_t seed);

/// DWnet evaluation from cached features: refits only the head.
EvalReport evaluate_dwnet(const FeatureCache& cache, const BlsConfig& bls);
/// Full-HCN baseline from the cached trained networks.
EvalReport evaluate_hcn(const FeatureCache& cache);

struct SweepPoint {
    std::size_t enhancement_nodes = 0;
    double average_accuracy = 0.0;  // percent
    std::vector<double> fold_accuracy;
    double refit_seconds = 0.0;  // wall clock, mean per fold
};

struct SweepReport {
    std::vector<SweepPoint> points;
    std::size_t best_enhancement_nodes = 0;
    double best_accuracy = 0.0;
    Json config;
};

SweepReport sweep_enhancement(const FeatureCache& cache, const BlsConfig& base,
                              const SweepConfig& grid);
Json sweep_report_to_json(const SweepReport& report);
std::string sweep_csv(const SweepReport& report);

// ---- timing ------------------------------------------------------------------

struct TimingReport {
    std::vector<std::string> models;  // columns
    std::vector<std::string> rows;    // splits
    std::vector<std::vector<double>> seconds_per_sample;  // [row][model]
    std::size_t reps = 0;
    std::size_t warmup = 0;
    std::size_t samples = 0;
    double harness_baseline_seconds = 0.0;
    std::string hardware;
};

struct TimingRow {
    std::vector<double> seconds_per_sample;  // per model
    double harness_baseline_seconds = 0.0;
    std::size_t samples = 0;
};

/// Mean wall-clock seconds per single-sample predict, after `warmup` untimed passes.
TimingRow time_inference(std::span<const Classifier* const> models,
                         std::span<const ClipTensors> samples, std::size_t reps,
                         std::size_t warmup = 1);

/// Fits every configured model per fold and times it on the fold's test clips.
TimingReport run_bench(const RunConfig& config);

Json timing_report_to_json(const TimingReport& report);
std::string timing_csv(const TimingReport& report);

std::string hardware_note();

// ---- report files ------------------------------------------------------------

std::string confusion_csv(const EvalReport& report);
std::string summary_text(const EvalReport& report);

/// Compares an average accuracy with a published table entry: "consistent" within
/// +/- tolerance percentage points, otherwise "divergent".
Json reference_comparison(const Json& fixtures, const std::string& model, double observed,
                          double tolerance = 3.0);

/// Writes eval_report.json, confusion.csv and summary.txt.
void write_eval_outputs(const std::filesystem::path& dir, const EvalReport& report);

/// Removes wall-clock fields so reports can be compared byte for byte.
Json strip_wall_clock(Json j);

}  // namespace dwnet

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dwnet/bls.hpp"
#include "dwnet/hcn.hpp"
#include "dwnet/skeleton.hpp"

namespace dwnet {

enum class ModelKind { hcn, bls_flat, hcnbls, dwnet };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

enum class DatasetKind { synthetic, jsonl, sbu };

struct DatasetSource {
    DatasetKind kind = DatasetKind::synthetic;
    std::filesystem::path path;      // jsonl file or SBU directory
    std::filesystem::path manifest;  // optional for jsonl
    SynthConfig synth;
};

struct SplitConfig {
    enum class Mode { kfold, holdout };
    Mode mode = Mode::kfold;
    std::size_t folds = 5;
    std::vector<std::string> test_groups;  // holdout mode
};

struct SweepConfig {
    std::size_t m_start = 50;
    std::size_t m_end = 1100;
    std::size_t m_step = 50;

    std::vector<std::size_t> grid() const;
};

struct TimingConfig {
    std::size_t reps = 100;
    std::size_t warmup = 1;
    /// Test samples timed per fold; 0 times all of them.
    std::size_t max_samples = 0;
    std::vector<ModelKind> models{ModelKind::hcn, ModelKind::bls_flat, ModelKind::hcnbls,
                                  ModelKind::dwnet};
};

/// Everything a CLI run needs. Loaded from JSON; relative paths resolve against
/// the config file's directory.
struct RunConfig {
    DatasetSource dataset;
    ModelKind model = ModelKind::dwnet;
    HcnConfig hcn;
    BlsConfig bls;
    FlatBlsConfig flat_bls;
    std::size_t hcnbls_mappers = 15;
    BlsConfig hcnbls_bls;
    SplitConfig split;
    std::uint64_t seed = 7;
    std::filesystem::path output_dir = "out";
    SweepConfig sweep;
    TimingConfig timing;
    /// Reference fixture with published tables, used for report diffs only.
    std::filesystem::path fixtures;

    void validate() const;
};

Json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& file);

/// Loads the dataset and checks it against the network configuration.
Dataset load_dataset(const DatasetSource& source);

/// Seeds used for fold f of a run.
struct FoldSeeds {
    std::uint64_t init = 0;
    std::uint64_t train = 0;
    std::uint64_t head = 0;
};

FoldSeeds fold_seeds(std::uint64_t run_seed, std::size_t fold);

}  // namespace dwnet

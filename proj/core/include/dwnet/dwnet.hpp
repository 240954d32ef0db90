#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dwnet/bls.hpp"
#include "dwnet/hcn.hpp"

namespace dwnet {

struct DwnetProvenance {
    std::string hcn_config_hash;
    std::string trunk_hash;  // PruHCN weights at composition time
    std::string dataset_hash;
    std::uint64_t init_seed = 0;
    std::uint64_t train_seed = 0;
    std::uint64_t bls_seed = 0;
};

/// Trained PruHCN feeding a ridge-solved enhancement head.
struct DwnetModel {
    PruHcn pruhcn;
    BlsHead head;
    DwnetProvenance provenance;
};

struct DwnetFitResult {
    DwnetModel model;
    HcnModel hcn;  // the trained parent network, Fc7 included
    HcnTrainResult training;
    RidgeReport ridge;
};

/// Digest of the ids and labels of a training set.
std::string dataset_hash(std::span<const SkeletonSequence> sequences);

/// Stage 1-2: trains the full network and prunes it.
struct TrainedMapper {
    HcnModel hcn;
    HcnTrainResult training;
    PruHcn pruhcn;
};

TrainedMapper train_mapper(std::span<const SkeletonSequence> train,
                           std::span<const SkeletonSequence> valid, const HcnConfig& config,
                           std::uint64_t init_seed);

/// Stage 4: fits the head on inference-mode features of the given clips.
DwnetModel dwnet_compose(const PruHcn& pruhcn, const Tensor& features, std::span<const int> labels,
                         const BlsConfig& bls_config, RidgeReport* report = nullptr);

/// Train HCN, prune, extract features (dropout off, no crop), fit the head.
/// Failures are rethrown as StageError naming the stage.
DwnetFitResult dwnet_fit(std::span<const SkeletonSequence> train,
                         std::span<const SkeletonSequence> valid, const HcnConfig& hcn_config,
                         const BlsConfig& bls_config, std::uint64_t init_seed);

struct ClassPrediction {
    int label = 0;
    Tensor scores;  // [C]
};

ClassPrediction dwnet_predict(const DwnetModel& model, const ClipTensors& clip);
Prediction dwnet_predict_batch(const DwnetModel& model, std::span<const ClipTensors> clips);

/// Untrained random PruHCN mappers whose concatenated outputs feed one head.
struct HcnblsModel {
    std::vector<PruHcn> mappers;
    BlsHead head;
};

/// [N, mappers * D] concatenated mapper features.
Tensor hcnbls_features(std::span<const PruHcn> mappers, std::span<const ClipTensors> clips);

HcnblsModel hcnbls_fit(std::span<const SkeletonSequence> train, const HcnConfig& hcn_config,
                       std::size_t n_mappers, const BlsConfig& bls_config, std::uint64_t seed);
HcnblsModel hcnbls_fit_clips(std::span<const ClipTensors> clips, std::span<const int> labels,
                             const HcnConfig& hcn_config, std::size_t n_mappers,
                             const BlsConfig& bls_config, std::uint64_t seed);

ClassPrediction hcnbls_predict(const HcnblsModel& model, const ClipTensors& clip);
Prediction hcnbls_predict_batch(const HcnblsModel& model, std::span<const ClipTensors> clips);

/// Bundle directory: pruhcn.json, head.json, provenance.json (+ hcn.json when given).
void save_dwnet_bundle(const std::filesystem::path& dir, const DwnetModel& model,
                       const HcnModel* parent = nullptr, const Json& extra_provenance = {});
DwnetModel load_dwnet_bundle(const std::filesystem::path& dir);

Json provenance_to_json(const DwnetProvenance& p);

}  // namespace dwnet

#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dwnet/nn.hpp"
#include "dwnet/serialize.hpp"
#include "dwnet/skeleton.hpp"

namespace dwnet {

/// Architecture and training hyperparameters of the co-occurrence network.
///
/// Layer plan per stream: Conv1 1x1 -> ReLU -> Conv2 3x1 (time) -> swap joint and
/// channel axes -> Conv3 3x3 -> Conv4 3x3 -> ReLU -> MaxPool/2. The two streams are
/// concatenated on channels, then Conv5 3x3 -> ReLU -> MaxPool/2, element-wise max
/// over persons, flatten -> Fc6 -> ReLU -> Dropout -> Fc7.
struct HcnConfig {
    std::size_t frames = 16;
    std::size_t joints = 15;
    std::size_t persons = 2;
    std::size_t channels = 3;
    std::array<std::size_t, 5> widths{64, 32, 32, 64, 128};
    std::size_t feature_dim = 64;
    std::size_t num_classes = 8;
    double dropout_rate = 0.5;
    /// Random temporal crop ratio applied per sample per epoch; 1 disables it.
    double crop_ratio = 1.0;
    SgdConfig sgd{};

    static HcnConfig sbu();
    static HcnConfig ntu();

    void validate() const;
    /// Flattened Conv5 output width fed to Fc6.
    std::size_t flat_dim() const;
};

Json hcn_config_to_json(const HcnConfig& config);
HcnConfig hcn_config_from_json(const Json& j);
std::string hcn_config_hash(const HcnConfig& config);

struct HcnStream {
    ConvLayer conv1, conv2, conv3, conv4;
};

/// Everything up to and including Fc6. Shared by the full and pruned networks.
struct HcnTrunk {
    HcnStream position;
    HcnStream motion;
    ConvLayer conv5;
    DenseLayer fc6;
};

struct HcnModel {
    HcnConfig config;
    HcnTrunk trunk;
    DenseLayer fc7;
};

/// HCN with Dropout and Fc7 removed: a trained feature map producing D values.
struct PruHcn {
    HcnConfig config;
    std::shared_ptr<const HcnTrunk> trunk;
    std::string parent_config_hash;

    std::size_t feature_dim() const { return config.feature_dim; }
};

HcnModel build_hcn(const HcnConfig& config, Rng& rng);

/// Parameters in a fixed order: per stream (position, motion) conv1..conv4 weight
/// and bias, then conv5, fc6, fc7.
std::vector<Tensor*> hcn_parameters(HcnModel& model);
std::vector<const Tensor*> hcn_parameters(const HcnModel& model);
std::vector<std::string> hcn_parameter_names();

/// Digest of every trunk parameter value, used to detect mutation.
std::string trunk_hash(const HcnTrunk& trunk);

/// Stacks clips into [B*P, 3, T, K] position and motion batches.
std::pair<Tensor, Tensor> stack_clips(std::span<const ClipTensors> clips, const HcnConfig& config);

struct HcnOutput {
    Tensor features;  // [B, D], post-ReLU Fc6
    Tensor logits;    // [B, C]
};

HcnOutput hcn_forward_batch(const HcnModel& model, std::span<const ClipTensors> clips,
                            bool training, Rng& rng);

/// Logits [C] for a single clip.
Tensor hcn_forward(const HcnModel& model, const ClipTensors& clip, bool training, Rng& rng);

struct HcnGradients {
    double loss = 0.0;
    Tensor logits;
    std::vector<Tensor> grads;  // parallel to hcn_parameters()
};

/// Mean softmax cross-entropy over the batch and its gradient for every parameter.
HcnGradients hcn_backprop(const HcnModel& model, std::span<const ClipTensors> clips,
                          std::span<const int> labels, bool training, Rng& rng);

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;  // on training batches, training mode
    double valid_accuracy = -1.0; // -1 when no validation set
};

struct HcnTrainResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;
    /// Inference-mode accuracy on the (uncropped) training set after training.
    double final_train_accuracy = 0.0;
};

/// Minibatch SGD on softmax cross-entropy. When a validation set is given the
/// best-validation snapshot is restored at the end.
HcnTrainResult hcn_train(HcnModel& model, std::span<const SkeletonSequence> train,
                         std::span<const SkeletonSequence> valid);

/// Encodes a sequence with the network's T, K and P.
ClipTensors encode_for(const HcnConfig& config, const SkeletonSequence& seq);
std::vector<ClipTensors> encode_all(const HcnConfig& config,
                                    std::span<const SkeletonSequence> sequences);

std::vector<int> hcn_predict(const HcnModel& model, std::span<const ClipTensors> clips);

PruHcn prune(const HcnModel& model);
PruHcn prune(const PruHcn& model);

/// Builds an untrained feature mapper directly (random weights, no Fc7).
PruHcn random_pruhcn(const HcnConfig& config, Rng& rng);

/// [D] feature vector, every entry >= 0.
Tensor pruhcn_features(const PruHcn& model, const ClipTensors& clip);
/// [N, D]; row i is bit-identical to pruhcn_features(model, clips[i]).
Tensor pruhcn_features_batch(const PruHcn& model, std::span<const ClipTensors> clips);

Json hcn_to_json(const HcnModel& model);
HcnModel hcn_from_json(const Json& j);
Json pruhcn_to_json(const PruHcn& model);
PruHcn pruhcn_from_json(const Json& j);

}  // namespace dwnet

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dwnet/random.hpp"
#include "dwnet/serialize.hpp"
#include "dwnet/skeleton.hpp"
#include "dwnet/tensor.hpp"

namespace dwnet {

/// Enhancement-node head settings.
struct BlsConfig {
    std::size_t enhancement_nodes = 550;
    double scale = 0.8;   // shrink factor applied to the random enhancement weights
    double ridge = 1e-8;  // lambda
    std::uint64_t seed = 0;

    void validate() const;
};

Json bls_config_to_json(const BlsConfig& config);
BlsConfig bls_config_from_json(const Json& j);

/// tanh written as 2/(1+exp(-2x)) - 1, elementwise.
double tansig(double x);
Tensor tansig(const Tensor& x);

/// Row-wise product A[N,k] * B[k,m] with a fixed accumulation order, so each output
/// row depends only on the matching input row.
Tensor matmul_rows(const Tensor& a, const Tensor& b);

struct EnhancementParams {
    Tensor weights;  // [D, m], uniform(-1, 1) * scale
    Tensor bias;     // [m],    uniform(-1, 1)
};

EnhancementParams gen_enhancement_params(std::size_t feature_dim, const BlsConfig& config, Rng& rng);

/// H = tansig(Z * W_h + beta_h).
Tensor enhance(const Tensor& features, const EnhancementParams& params);

enum class RidgeForm { primal, dual };

struct RidgeReport {
    RidgeForm form = RidgeForm::primal;
    double residual = 0.0;        // max |(A'A + lambda I) W - A'Y|
    double residual_bound = 0.0;  // 1e-8 * max(1, max |A'Y|)
    int refinement_steps = 0;
};

/// W = (A'A + lambda I)^-1 A'Y through a Cholesky solve. When N < columns and
/// lambda > 0 the equivalent N x N system W = A'(AA' + lambda I)^-1 Y is solved
/// instead. lambda = 0 requires A'A to be numerically invertible, otherwise
/// NumericalError is raised.
Tensor ridge_fit(const Tensor& design, const Tensor& targets, double lambda,
                 RidgeReport* report = nullptr);

/// {0,1} one-hot rows.
Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

/// Index of the largest entry in each row; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& scores);

struct BlsHead {
    BlsConfig config;
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    EnhancementParams enhancement;
    Tensor output_weights;  // [D + m, C]
};

/// [Z | enhance(Z)].
Tensor bls_design(const BlsHead& head, const Tensor& features);

/// Draws the enhancement nodes from Rng(config.seed), then ridge-solves the output
/// weights against one-hot labels.
BlsHead bls_fit(const Tensor& features, std::span<const int> labels, std::size_t num_classes,
                const BlsConfig& config, RidgeReport* report = nullptr);

struct Prediction {
    Tensor scores;  // [N, C]
    std::vector<int> classes;
};

Prediction bls_predict(const BlsHead& head, const Tensor& features);

/// When store_enhancement is false only the seed is written and the random
/// enhancement parameters are regenerated on load.
Json bls_head_to_json(const BlsHead& head, bool store_enhancement = true);
BlsHead bls_head_from_json(const Json& j);

// ---- flat baseline -----------------------------------------------------------

struct FlatBlsConfig {
    std::size_t feature_nodes = 100;
    std::size_t enhancement_nodes = 8000;
    double scale = 0.8;
    double ridge = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

Json flat_bls_config_to_json(const FlatBlsConfig& config);
FlatBlsConfig flat_bls_config_from_json(const Json& j);

/// Per person the position image (T x K x 3, row-major) then the motion image,
/// persons concatenated: width P * 2 * T * K * 3 (2880 for SBU clips).
Tensor flatten_clips(std::span<const ClipTensors> clips);

struct FlatBls {
    FlatBlsConfig config;
    std::size_t input_width = 0;
    Tensor feature_weights;  // [input_width, feature_nodes]
    Tensor feature_bias;     // [feature_nodes]
    BlsHead head;
};

/// Linear random feature nodes on flattened clips.
Tensor flat_feature_nodes(const FlatBls& model, const Tensor& flat);

FlatBls flat_bls_fit(std::span<const ClipTensors> clips, std::span<const int> labels,
                     std::size_t num_classes, const FlatBlsConfig& config);
Prediction flat_bls_predict(const FlatBls& model, std::span<const ClipTensors> clips);

Json flat_bls_to_json(const FlatBls& model);
FlatBls flat_bls_from_json(const Json& j);

}  // namespace dwnet

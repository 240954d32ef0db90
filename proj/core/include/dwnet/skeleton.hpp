#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dwnet/random.hpp"
#include "dwnet/serialize.hpp"
#include "dwnet/tensor.hpp"

namespace dwnet {

/// Labeled multi-person skeleton sequence. coords is [frames, persons, joints, 3].
struct SkeletonSequence {
    std::string id;
    int label = 0;
    std::string group;
    std::size_t frames = 0;
    std::size_t persons = 0;
    std::size_t joints = 0;
    std::vector<double> coords;

    SkeletonSequence() = default;
    SkeletonSequence(std::string id, int label, std::size_t frames, std::size_t persons,
                     std::size_t joints);

    double& at(std::size_t f, std::size_t p, std::size_t k, std::size_t d) {
        return coords[((f * persons + p) * joints + k) * 3 + d];
    }
    double at(std::size_t f, std::size_t p, std::size_t k, std::size_t d) const {
        return coords[((f * persons + p) * joints + k) * 3 + d];
    }

    /// Throws ConfigError when dims are zero, frames < 2, coords has the wrong
    /// length or holds non-finite values.
    void validate() const;

    friend bool operator==(const SkeletonSequence&, const SkeletonSequence&) = default;
};

/// Network input for one sample: two [P, 3, T, K] images.
struct ClipTensors {
    Tensor position;
    Tensor motion;
};

struct ManifestEntry {
    std::string id;
    std::string path;  // relative to the manifest, empty for inline data
    int label = 0;
    std::string group;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names;
    std::size_t joints = 0;
    std::size_t persons = 0;

    std::size_t num_classes() const { return class_names.size(); }
    bool has_groups() const;
    /// Labels must be dense in [0, num_classes).
    void validate() const;
};

Json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const Json& j);

struct Dataset {
    DatasetManifest manifest;
    std::vector<SkeletonSequence> sequences;  // parallel to manifest.entries
};

// ---- SBU text layout: one row per frame, "index, v1, ..., v90" ----------------

inline constexpr std::size_t kSbuPersons = 2;
inline constexpr std::size_t kSbuJoints = 15;
inline constexpr std::size_t kSbuFieldsPerRow = 1 + kSbuPersons * kSbuJoints * 3;

SkeletonSequence parse_sbu_text(std::string_view text, std::string_view source = "<sbu>");
SkeletonSequence parse_sbu(const std::filesystem::path& file);
std::string format_sbu(const SkeletonSequence& seq);

/// Scans an SBU-style tree (<pair>/<action>/<take>/skeleton_pos.txt). The action
/// folder gives the label, the subject-pair folder the group tag. A manifest.json at
/// the root, when present, takes precedence.
Dataset load_sbu_dir(const std::filesystem::path& root);

// ---- JSONL layout ------------------------------------------------------------

struct JsonlShape {
    std::size_t joints = 0;
    std::size_t persons = 0;
};

std::vector<SkeletonSequence> parse_jsonl_text(std::string_view text,
                                               std::optional<JsonlShape> expected = {},
                                               std::string_view source = "<jsonl>");
std::vector<SkeletonSequence> parse_jsonl(const std::filesystem::path& file,
                                          std::optional<JsonlShape> expected = {});
std::string to_jsonl_line(const SkeletonSequence& seq);

/// Loads a JSONL file and pairs it with its manifest. Without a manifest, one is
/// derived from the sequences (class names "class_<i>").
Dataset load_jsonl_dataset(const std::filesystem::path& jsonl,
                           const std::optional<std::filesystem::path>& manifest = {});
void save_jsonl_dataset(const Dataset& data, const std::filesystem::path& dir);

// ---- preprocessing -----------------------------------------------------------

/// Linear interpolation to `frames` samples over [0, F-1]. Endpoints are exact.
SkeletonSequence resample(const SkeletonSequence& seq, std::size_t frames);

/// Contiguous sub-sequence of floor(ratio*F) frames at a uniform random offset.
SkeletonSequence random_crop(const SkeletonSequence& seq, double ratio, Rng& rng);

/// motion[:, :, t, :] = position[:, :, t+1, :] - position[:, :, t, :]; last frame zero.
Tensor compute_motion(const Tensor& position);

struct EncodeOptions {
    /// Pad with all-zero persons up to this count (0 keeps the sequence's count).
    std::size_t persons = 0;
    /// Subtract frame-0, person-0, joint-0 coordinates from every joint.
    bool center = false;
};

ClipTensors encode_clip(const SkeletonSequence& seq, std::size_t frames, std::size_t joints,
                        const EncodeOptions& options = {});

// ---- cross-validation --------------------------------------------------------

struct FoldSplit {
    std::size_t fold = 0;
    std::vector<std::size_t> train;  // indices into manifest.entries
    std::vector<std::size_t> test;
};

/// k folds. With group tags, whole groups go to one fold; otherwise items are
/// stratified by label. Each fold is the test set exactly once.
std::vector<FoldSplit> kfold_splits(const DatasetManifest& manifest, std::size_t k,
                                    std::uint64_t seed);

/// Two-way split: entries whose group is in `test_groups` form the test set.
FoldSplit holdout_split(const DatasetManifest& manifest,
                        const std::vector<std::string>& test_groups);

// ---- synthetic data ----------------------------------------------------------

/// Each class is a set of per-joint sinusoids with class-specific frequency and
/// phases. noise_sigma controls per-coordinate Gaussian noise and the per-sequence
/// phase and body-offset jitter; at 0 all sequences of a class are identical.
struct SynthConfig {
    int classes = 8;
    int sequences_per_class = 20;
    std::size_t joints = kSbuJoints;
    std::size_t persons = kSbuPersons;
    std::size_t frames = 40;
    double noise_sigma = 0.1;
    std::uint64_t seed = 7;

    void validate() const;
};

Json synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const Json& j);

Dataset synth_generate(const SynthConfig& config);

}  // namespace dwnet

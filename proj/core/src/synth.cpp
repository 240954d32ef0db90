#include <cmath>
#include <cstdio>
#include <numbers>

#include "dwnet/error.hpp"
#include "dwnet/skeleton.hpp"

namespace dwnet {

void SynthConfig::validate() const {
    if (classes < 2) {
        throw ConfigError("synth: classes must be >= 2");
    }
    if (sequences_per_class < 1) {
        throw ConfigError("synth: sequences_per_class must be >= 1");
    }
    if (joints < 1 || persons < 1) {
        throw ConfigError("synth: joints and persons must be >= 1");
    }
    if (frames < 2) {
        throw ConfigError("synth: frames must be >= 2");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw ConfigError("synth: noise_sigma must be a non-negative finite number");
    }
}

Json synth_config_to_json(const SynthConfig& c) {
    Json j;
    j["classes"] = c.classes;
    j["sequences_per_class"] = c.sequences_per_class;
    j["joints"] = c.joints;
    j["persons"] = c.persons;
    j["frames"] = c.frames;
    j["noise_sigma"] = c.noise_sigma;
    j["seed"] = c.seed;
    return j;
}

SynthConfig synth_config_from_json(const Json& j) {
    SynthConfig c;
    c.classes = j.value("classes", c.classes);
    c.sequences_per_class = j.value("sequences_per_class", c.sequences_per_class);
    c.joints = j.value("joints", c.joints);
    c.persons = j.value("persons", c.persons);
    c.frames = j.value("frames", c.frames);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

namespace {

struct ClassPattern {
    double cycles = 1.0;            // full periods over the sequence
    std::vector<double> amplitude;  // [P, K, 3]
    std::vector<double> phase;      // [P, K, 3]
};

}  // namespace

Dataset synth_generate(const SynthConfig& config) {
    config.validate();
    const std::size_t P = config.persons, K = config.joints, F = config.frames;
    const std::size_t per_frame = P * K * 3;
    constexpr double two_pi = 2.0 * std::numbers::pi;

    // Rest pose shared by every class, so classes differ only in how they move.
    std::vector<double> rest(per_frame);
    {
        Rng rng(derive_seed(config.seed, 0x7265737400ULL));
        for (auto& v : rest) {
            v = rng.uniform(-1.0, 1.0);
        }
    }

    std::vector<ClassPattern> patterns(static_cast<std::size_t>(config.classes));
    for (std::size_t c = 0; c < patterns.size(); ++c) {
        Rng rng(derive_seed(config.seed, 0x636c617373ULL + c));
        auto& pat = patterns[c];
        pat.cycles = 0.75 + 0.5 * static_cast<double>(c) + rng.uniform(0.0, 0.25);
        pat.amplitude.resize(per_frame);
        pat.phase.resize(per_frame);
        for (std::size_t i = 0; i < per_frame; ++i) {
            pat.amplitude[i] = rng.uniform(0.05, 0.3);
            pat.phase[i] = rng.uniform(0.0, two_pi);
        }
    }

    Dataset data;
    data.manifest.joints = K;
    data.manifest.persons = P;
    for (int c = 0; c < config.classes; ++c) {
        data.manifest.class_names.push_back("synthetic_" + std::to_string(c));
    }

    const double sigma = config.noise_sigma;
    std::size_t index = 0;
    for (int c = 0; c < config.classes; ++c) {
        const auto& pat = patterns[static_cast<std::size_t>(c)];
        for (int s = 0; s < config.sequences_per_class; ++s, ++index) {
            char id[64];
            std::snprintf(id, sizeof(id), "synth_c%02d_%04d", c, s);
            SkeletonSequence seq(id, c, F, P, K);
            Rng rng(derive_seed(config.seed, 0x73657100000ULL + index));
            // Per-sequence nuisance: a time shift of the whole pattern and a body offset.
            const double shift = sigma * std::numbers::pi * rng.normal();
            std::vector<double> offset(P * 3);
            for (auto& o : offset) {
                o = 2.0 * sigma * rng.normal();
            }
            for (std::size_t f = 0; f < F; ++f) {
                const double t = static_cast<double>(f) / static_cast<double>(F - 1);
                for (std::size_t p = 0; p < P; ++p) {
                    for (std::size_t k = 0; k < K; ++k) {
                        for (std::size_t d = 0; d < 3; ++d) {
                            const std::size_t i = (p * K + k) * 3 + d;
                            const double wave = pat.amplitude[i] *
                                                std::sin(two_pi * pat.cycles * t + pat.phase[i] + shift);
                            seq.coords[f * per_frame + i] =
                                rest[i] + offset[p * 3 + d] + wave + sigma * rng.normal();
                        }
                    }
                }
            }
            data.manifest.entries.push_back({seq.id, {}, seq.label, {}});
            data.sequences.push_back(std::move(seq));
        }
    }
    data.manifest.validate();
    return data;
}

}  // namespace dwnet

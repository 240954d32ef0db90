#include "dwnet/hcn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "dwnet/error.hpp"

namespace dwnet {

// ---- configuration -----------------------------------------------------------

HcnConfig HcnConfig::sbu() { return HcnConfig{}; }

HcnConfig HcnConfig::ntu() {
    HcnConfig c;
    c.frames = 32;
    c.joints = 25;
    c.persons = 2;
    c.feature_dim = 256;
    c.num_classes = 60;
    c.crop_ratio = 0.9;
    return c;
}

void HcnConfig::validate() const {
    if (frames < 1 || joints < 1 || persons < 1 || channels < 1) {
        throw ConfigError("hcn: frames, joints, persons and channels must be >= 1");
    }
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] < 1) {
            throw ConfigError("hcn: conv" + std::to_string(i + 1) + " width must be >= 1");
        }
    }
    if (feature_dim < 1) {
        throw ConfigError("hcn: feature_dim must be >= 1");
    }
    if (num_classes < 2) {
        throw ConfigError("hcn: num_classes must be >= 2");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw ConfigError("hcn: dropout_rate must be in [0, 1)");
    }
    if (!(crop_ratio > 0.0 && crop_ratio <= 1.0)) {
        throw ConfigError("hcn: crop_ratio must be in (0, 1]");
    }
    // Conv1..Conv4 preserve T x K (then T x width2 after the axis swap); each pool halves.
    const std::size_t h = frames, w = widths[1];
    if (h < 2 || w < 2) {
        throw ConfigError("hcn: conv4 pooling collapses the " + std::to_string(h) + "x" +
                          std::to_string(w) + " map below 1 (needs frames >= 2 and conv2 width >= 2)");
    }
    if (h / 2 < 2 || w / 2 < 2) {
        throw ConfigError("hcn: conv5 pooling collapses the " + std::to_string(h / 2) + "x" +
                          std::to_string(w / 2) +
                          " map below 1 (needs frames >= 4 and conv2 width >= 4)");
    }
    sgd.validate();
}

std::size_t HcnConfig::flat_dim() const { return widths[4] * (frames / 2 / 2) * (widths[1] / 2 / 2); }

Json hcn_config_to_json(const HcnConfig& c) {
    Json j;
    j["frames"] = c.frames;
    j["joints"] = c.joints;
    j["persons"] = c.persons;
    j["channels"] = c.channels;
    j["widths"] = c.widths;
    j["feature_dim"] = c.feature_dim;
    j["num_classes"] = c.num_classes;
    j["dropout_rate"] = c.dropout_rate;
    j["crop_ratio"] = c.crop_ratio;
    Json s;
    s["learning_rate"] = c.sgd.learning_rate;
    s["momentum"] = c.sgd.momentum;
    s["weight_decay"] = c.sgd.weight_decay;
    s["epochs"] = c.sgd.epochs;
    s["batch_size"] = c.sgd.batch_size;
    s["seed"] = c.sgd.seed;
    j["sgd"] = std::move(s);
    return j;
}

HcnConfig hcn_config_from_json(const Json& j) {
    HcnConfig c;
    try {
        c.frames = j.value("frames", c.frames);
        c.joints = j.value("joints", c.joints);
        c.persons = j.value("persons", c.persons);
        c.channels = j.value("channels", c.channels);
        if (j.contains("widths")) {
            c.widths = j.at("widths").get<std::array<std::size_t, 5>>();
        }
        c.feature_dim = j.value("feature_dim", c.feature_dim);
        c.num_classes = j.value("num_classes", c.num_classes);
        c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
        c.crop_ratio = j.value("crop_ratio", c.crop_ratio);
        if (j.contains("sgd")) {
            const auto& s = j.at("sgd");
            c.sgd.learning_rate = s.value("learning_rate", c.sgd.learning_rate);
            c.sgd.momentum = s.value("momentum", c.sgd.momentum);
            c.sgd.weight_decay = s.value("weight_decay", c.sgd.weight_decay);
            c.sgd.epochs = s.value("epochs", c.sgd.epochs);
            c.sgd.batch_size = s.value("batch_size", c.sgd.batch_size);
            c.sgd.seed = s.value("seed", c.sgd.seed);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("hcn config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string hcn_config_hash(const HcnConfig& config) {
    return hex64(hash_string(hcn_config_to_json(config).dump()));
}

// ---- construction ------------------------------------------------------------

namespace {

ConvLayer make_conv(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw, Rng& rng) {
    ConvLayer layer;
    layer.weights = Tensor({out, in, kh, kw});
    layer.bias = Tensor({out});
    layer.padding = {kh / 2, kw / 2};
    glorot_uniform(layer.weights, in * kh * kw, out * kh * kw, rng);
    return layer;
}

DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
    DenseLayer layer{Tensor({in, out}), Tensor({out})};
    glorot_uniform(layer.weights, in, out, rng);
    return layer;
}

HcnStream make_stream(const HcnConfig& c, Rng& rng) {
    HcnStream s;
    s.conv1 = make_conv(c.channels, c.widths[0], 1, 1, rng);
    s.conv2 = make_conv(c.widths[0], c.widths[1], 3, 1, rng);
    s.conv3 = make_conv(c.joints, c.widths[2], 3, 3, rng);
    s.conv4 = make_conv(c.widths[2], c.widths[3], 3, 3, rng);
    return s;
}

HcnTrunk make_trunk(const HcnConfig& c, Rng& rng) {
    HcnTrunk t;
    t.position = make_stream(c, rng);
    t.motion = make_stream(c, rng);
    t.conv5 = make_conv(2 * c.widths[3], c.widths[4], 3, 3, rng);
    t.fc6 = make_dense(c.flat_dim(), c.feature_dim, rng);
    return t;
}

}  // namespace

HcnModel build_hcn(const HcnConfig& config, Rng& rng) {
    config.validate();
    HcnModel m;
    m.config = config;
    m.trunk = make_trunk(config, rng);
    m.fc7 = make_dense(config.feature_dim, config.num_classes, rng);
    return m;
}

PruHcn random_pruhcn(const HcnConfig& config, Rng& rng) {
    config.validate();
    PruHcn p;
    p.config = config;
    p.trunk = std::make_shared<const HcnTrunk>(make_trunk(config, rng));
    p.parent_config_hash = hcn_config_hash(config);
    return p;
}

namespace {

template <typename Model, typename Ptr>
std::vector<Ptr> collect_parameters(Model& m) {
    std::vector<Ptr> out;
    auto conv = [&](auto& layer) {
        out.push_back(&layer.weights);
        out.push_back(&layer.bias);
    };
    for (auto* s : {&m.trunk.position, &m.trunk.motion}) {
        conv(s->conv1);
        conv(s->conv2);
        conv(s->conv3);
        conv(s->conv4);
    }
    conv(m.trunk.conv5);
    conv(m.trunk.fc6);
    conv(m.fc7);
    return out;
}

}  // namespace

std::vector<Tensor*> hcn_parameters(HcnModel& model) {
    return collect_parameters<HcnModel, Tensor*>(model);
}

std::vector<const Tensor*> hcn_parameters(const HcnModel& model) {
    return collect_parameters<const HcnModel, const Tensor*>(model);
}

std::vector<std::string> hcn_parameter_names() {
    std::vector<std::string> names;
    for (const char* stream : {"position", "motion"}) {
        for (int l = 1; l <= 4; ++l) {
            names.push_back(std::string(stream) + ".conv" + std::to_string(l) + ".weights");
            names.push_back(std::string(stream) + ".conv" + std::to_string(l) + ".bias");
        }
    }
    for (const char* layer : {"conv5", "fc6", "fc7"}) {
        names.push_back(std::string(layer) + ".weights");
        names.push_back(std::string(layer) + ".bias");
    }
    return names;
}

std::string trunk_hash(const HcnTrunk& trunk) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto conv = [&](const auto& layer) {
        h = hash_doubles(layer.weights.data(), h);
        h = hash_doubles(layer.bias.data(), h);
    };
    for (const auto* s : {&trunk.position, &trunk.motion}) {
        conv(s->conv1);
        conv(s->conv2);
        conv(s->conv3);
        conv(s->conv4);
    }
    conv(trunk.conv5);
    conv(trunk.fc6);
    return hex64(h);
}

// ---- forward / backward ------------------------------------------------------

namespace {

// [N, C, T, K] -> [N, K, T, C]. Self-inverse, so it also routes gradients back.
Tensor swap_channel_width(const Tensor& x) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor out({n, w, h, c});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t hi = 0; hi < h; ++hi) {
                for (std::size_t wi = 0; wi < w; ++wi) {
                    out.at(i, wi, hi, ci) = x.at(i, ci, hi, wi);
                }
            }
        }
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
    Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
    for (std::size_t i = 0; i < n; ++i) {
        const double* pa = a.data().data() + i * ca * plane;
        const double* pb = b.data().data() + i * cb * plane;
        double* po = out.data().data() + i * (ca + cb) * plane;
        std::copy(pa, pa + ca * plane, po);
        std::copy(pb, pb + cb * plane, po + ca * plane);
    }
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& g, std::size_t ca) {
    const std::size_t n = g.dim(0), c = g.dim(1), cb = c - ca, plane = g.dim(2) * g.dim(3);
    Tensor a({n, ca, g.dim(2), g.dim(3)});
    Tensor b({n, cb, g.dim(2), g.dim(3)});
    for (std::size_t i = 0; i < n; ++i) {
        const double* pg = g.data().data() + i * c * plane;
        std::copy(pg, pg + ca * plane, a.data().data() + i * ca * plane);
        std::copy(pg + ca * plane, pg + c * plane, b.data().data() + i * cb * plane);
    }
    return {std::move(a), std::move(b)};
}

struct PersonMax {
    Tensor output;                    // [B, C, H, W]
    std::vector<std::size_t> source;  // flat index into the [B*P, ...] input
};

PersonMax person_max(const Tensor& x, std::size_t persons) {
    const std::size_t batch = x.dim(0) / persons;
    const std::size_t per = x.dim(1) * x.dim(2) * x.dim(3);
    PersonMax r{Tensor({batch, x.dim(1), x.dim(2), x.dim(3)}), {}};
    r.source.resize(r.output.size());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t e = 0; e < per; ++e) {
            std::size_t best = (b * persons) * per + e;
            for (std::size_t p = 1; p < persons; ++p) {
                const std::size_t idx = (b * persons + p) * per + e;
                if (x[idx] > x[best]) {
                    best = idx;
                }
            }
            r.output[b * per + e] = x[best];
            r.source[b * per + e] = best;
        }
    }
    return r;
}

struct StreamCache {
    Tensor x, a1, r1, a2, swapped, a3, a4, r4;
    PoolResult p4;
};

struct TrunkCache {
    StreamCache pos, mot;
    Tensor cat, a5, r5;
    PoolResult p5;
    PersonMax fused;
    Tensor flat, f6, z;
};

void stream_forward(const HcnStream& s, const Tensor& x, StreamCache& c) {
    c.x = x;
    c.a1 = conv2d_forward(c.x, s.conv1);
    c.r1 = relu(c.a1);
    c.a2 = conv2d_forward(c.r1, s.conv2);
    c.swapped = swap_channel_width(c.a2);
    c.a3 = conv2d_forward(c.swapped, s.conv3);
    c.a4 = conv2d_forward(c.a3, s.conv4);
    c.r4 = relu(c.a4);
    c.p4 = maxpool2d(c.r4);
}

void trunk_forward(const HcnTrunk& t, const HcnConfig& cfg, const Tensor& pos, const Tensor& mot,
                   TrunkCache& c) {
    stream_forward(t.position, pos, c.pos);
    stream_forward(t.motion, mot, c.mot);
    c.cat = concat_channels(c.pos.p4.output, c.mot.p4.output);
    c.a5 = conv2d_forward(c.cat, t.conv5);
    c.r5 = relu(c.a5);
    c.p5 = maxpool2d(c.r5);
    c.fused = person_max(c.p5.output, cfg.persons);
    const std::size_t batch = c.fused.output.dim(0);
    c.flat = c.fused.output.reshaped({batch, c.fused.output.size() / batch});
    c.f6 = dense_forward(c.flat, t.fc6);
    c.z = relu(c.f6);
}

// Gradients are appended in hcn_parameters() order for one stream.
void stream_backward(const HcnStream& s, const StreamCache& c, const Tensor& grad_pool,
                     std::vector<Tensor>& grads, std::size_t offset) {
    Tensor g = maxpool2d_backward(grad_pool, c.p4.argmax, c.r4.shape());
    g = relu_backward(g, c.a4);
    ConvGrads g4 = conv2d_backward(g, c.a3, s.conv4);
    ConvGrads g3 = conv2d_backward(g4.input, c.swapped, s.conv3);
    Tensor g2out = swap_channel_width(g3.input);
    ConvGrads g2 = conv2d_backward(g2out, c.r1, s.conv2);
    Tensor g1out = relu_backward(g2.input, c.a1);
    ConvGrads g1 = conv2d_backward(g1out, c.x, s.conv1);
    grads[offset + 0] = std::move(g1.weights);
    grads[offset + 1] = std::move(g1.bias);
    grads[offset + 2] = std::move(g2.weights);
    grads[offset + 3] = std::move(g2.bias);
    grads[offset + 4] = std::move(g3.weights);
    grads[offset + 5] = std::move(g3.bias);
    grads[offset + 6] = std::move(g4.weights);
    grads[offset + 7] = std::move(g4.bias);
}

void trunk_backward(const HcnTrunk& t, const TrunkCache& c, const Tensor& grad_z,
                    std::vector<Tensor>& grads) {
    Tensor g6 = relu_backward(grad_z, c.f6);
    DenseGrads d6 = dense_backward(g6, c.flat, t.fc6);
    grads[18] = std::move(d6.weights);
    grads[19] = std::move(d6.bias);
    Tensor g_fused = std::move(d6.input).reshaped(c.fused.output.shape());
    Tensor g_p5(c.p5.output.shape());
    for (std::size_t i = 0; i < c.fused.source.size(); ++i) {
        g_p5[c.fused.source[i]] += g_fused[i];
    }
    Tensor g = maxpool2d_backward(g_p5, c.p5.argmax, c.r5.shape());
    g = relu_backward(g, c.a5);
    ConvGrads g5 = conv2d_backward(g, c.cat, t.conv5);
    grads[16] = std::move(g5.weights);
    grads[17] = std::move(g5.bias);
    auto [g_pos, g_mot] = split_channels(g5.input, c.pos.p4.output.dim(1));
    stream_backward(t.position, c.pos, g_pos, grads, 0);
    stream_backward(t.motion, c.mot, g_mot, grads, 8);
}

void check_clip(const ClipTensors& clip, const HcnConfig& cfg) {
    const Shape expected{cfg.persons, cfg.channels, cfg.frames, cfg.joints};
    require_shape(clip.position, expected, "clip position");
    require_shape(clip.motion, expected, "clip motion");
}

}  // namespace

std::pair<Tensor, Tensor> stack_clips(std::span<const ClipTensors> clips, const HcnConfig& cfg) {
    if (clips.empty()) {
        throw ShapeError("stack_clips: empty batch");
    }
    const std::size_t per = cfg.persons * cfg.channels * cfg.frames * cfg.joints;
    Tensor pos({clips.size() * cfg.persons, cfg.channels, cfg.frames, cfg.joints});
    Tensor mot(pos.shape());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        check_clip(clips[i], cfg);
        std::copy(clips[i].position.data().begin(), clips[i].position.data().end(),
                  pos.data().begin() + static_cast<std::ptrdiff_t>(i * per));
        std::copy(clips[i].motion.data().begin(), clips[i].motion.data().end(),
                  mot.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return {std::move(pos), std::move(mot)};
}

HcnOutput hcn_forward_batch(const HcnModel& model, std::span<const ClipTensors> clips,
                            bool training, Rng& rng) {
    auto [pos, mot] = stack_clips(clips, model.config);
    TrunkCache cache;
    trunk_forward(model.trunk, model.config, pos, mot, cache);
    DropoutResult d = dropout(cache.z, model.config.dropout_rate, training, rng);
    Tensor logits = dense_forward(d.output, model.fc7);
    return {std::move(cache.z), std::move(logits)};
}

Tensor hcn_forward(const HcnModel& model, const ClipTensors& clip, bool training, Rng& rng) {
    HcnOutput out = hcn_forward_batch(model, std::span(&clip, 1), training, rng);
    return std::move(out.logits).reshaped({model.config.num_classes});
}

HcnGradients hcn_backprop(const HcnModel& model, std::span<const ClipTensors> clips,
                          std::span<const int> labels, bool training, Rng& rng) {
    auto [pos, mot] = stack_clips(clips, model.config);
    TrunkCache cache;
    trunk_forward(model.trunk, model.config, pos, mot, cache);
    DropoutResult d = dropout(cache.z, model.config.dropout_rate, training, rng);
    Tensor logits = dense_forward(d.output, model.fc7);
    LossResult loss = softmax_cross_entropy(logits, labels);

    HcnGradients out;
    out.loss = loss.loss;
    out.grads.resize(22);
    DenseGrads d7 = dense_backward(loss.grad_logits, d.output, model.fc7);
    out.grads[20] = std::move(d7.weights);
    out.grads[21] = std::move(d7.bias);
    Tensor grad_z = dropout_backward(d7.input, d.mask);
    trunk_backward(model.trunk, cache, grad_z, out.grads);
    out.logits = std::move(logits);
    return out;
}

// ---- training ----------------------------------------------------------------

ClipTensors encode_for(const HcnConfig& config, const SkeletonSequence& seq) {
    return encode_clip(seq, config.frames, config.joints, EncodeOptions{config.persons, false});
}

std::vector<ClipTensors> encode_all(const HcnConfig& config,
                                    std::span<const SkeletonSequence> sequences) {
    std::vector<ClipTensors> clips;
    clips.reserve(sequences.size());
    for (const auto& s : sequences) {
        clips.push_back(encode_for(config, s));
    }
    return clips;
}

namespace {

std::size_t argmax_row(const Tensor& scores, std::size_t row) {
    const std::size_t c = scores.dim(1);
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
        if (scores.at(row, j) > scores.at(row, best)) {
            best = j;
        }
    }
    return best;
}

double accuracy_of(const std::vector<int>& predicted, std::span<const SkeletonSequence> seqs) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        correct += predicted[i] == seqs[i].label ? 1 : 0;
    }
    return seqs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(seqs.size());
}

}  // namespace

std::vector<int> hcn_predict(const HcnModel& model, std::span<const ClipTensors> clips) {
    std::vector<int> out;
    out.reserve(clips.size());
    Rng unused(0);
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < clips.size(); start += chunk) {
        const auto part = clips.subspan(start, std::min(chunk, clips.size() - start));
        HcnOutput o = hcn_forward_batch(model, part, false, unused);
        for (std::size_t r = 0; r < part.size(); ++r) {
            out.push_back(static_cast<int>(argmax_row(o.logits, r)));
        }
    }
    return out;
}

HcnTrainResult hcn_train(HcnModel& model, std::span<const SkeletonSequence> train,
                         std::span<const SkeletonSequence> valid) {
    if (train.empty()) {
        throw ConfigError("hcn_train: training set is empty");
    }
    const HcnConfig& cfg = model.config;
    cfg.validate();
    for (const auto& s : train) {
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= cfg.num_classes) {
            throw ConfigError("hcn_train: label " + std::to_string(s.label) + " of '" + s.id +
                              "' outside [0, " + std::to_string(cfg.num_classes) + ")");
        }
    }
    const std::uint64_t seed = cfg.sgd.seed;
    Rng shuffle_rng(derive_seed(seed, 1));
    Rng dropout_rng(derive_seed(seed, 2));
    Rng crop_rng(derive_seed(seed, 3));

    const bool augment = cfg.crop_ratio < 1.0;
    const std::vector<ClipTensors> train_clips = encode_all(cfg, train);
    const std::vector<ClipTensors> valid_clips = encode_all(cfg, valid);

    HcnTrainResult result;
    SgdState state;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch_size = static_cast<std::size_t>(cfg.sgd.batch_size);
    std::optional<HcnModel> best;
    double best_valid = -1.0;

    for (int epoch = 0; epoch < cfg.sgd.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span(order));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            std::vector<ClipTensors> clips;
            std::vector<int> labels;
            clips.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const auto& seq = train[order[i]];
                if (augment) {
                    clips.push_back(encode_for(cfg, random_crop(seq, cfg.crop_ratio, crop_rng)));
                } else {
                    clips.push_back(train_clips[order[i]]);
                }
                labels.push_back(seq.label);
            }
            HcnGradients g = hcn_backprop(model, clips, labels, true, dropout_rng);
            loss_sum += g.loss * static_cast<double>(end - start);
            for (std::size_t r = 0; r < labels.size(); ++r) {
                correct += static_cast<int>(argmax_row(g.logits, r)) == labels[r] ? 1 : 0;
            }
            const auto params = hcn_parameters(model);
            sgd_step(params, g.grads, cfg.sgd, state);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss_sum / static_cast<double>(train.size());
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
        if (!valid.empty()) {
            stats.valid_accuracy = accuracy_of(hcn_predict(model, valid_clips), valid);
            if (stats.valid_accuracy > best_valid) {
                best_valid = stats.valid_accuracy;
                best = model;
                result.best_epoch = epoch;
            }
        } else {
            result.best_epoch = epoch;
        }
        if (!std::isfinite(stats.loss)) {
            throw NumericalError("hcn_train: loss diverged at epoch " + std::to_string(epoch));
        }
        result.history.push_back(stats);
    }
    if (best) {
        model = std::move(*best);
    }
    result.final_train_accuracy = accuracy_of(hcn_predict(model, train_clips), train);
    return result;
}

// ---- pruning -----------------------------------------------------------------

PruHcn prune(const HcnModel& model) {
    PruHcn p;
    p.config = model.config;
    p.trunk = std::make_shared<const HcnTrunk>(model.trunk);
    p.parent_config_hash = hcn_config_hash(model.config);
    return p;
}

PruHcn prune(const PruHcn& model) { return model; }

Tensor pruhcn_features_batch(const PruHcn& model, std::span<const ClipTensors> clips) {
    if (!model.trunk) {
        throw ConfigError("pruhcn: model has no weights");
    }
    if (clips.empty()) {
        return Tensor();
    }
    const std::size_t d = model.config.feature_dim;
    Tensor out({clips.size(), d});
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < clips.size(); start += chunk) {
        const auto part = clips.subspan(start, std::min(chunk, clips.size() - start));
        auto [pos, mot] = stack_clips(part, model.config);
        TrunkCache cache;
        trunk_forward(*model.trunk, model.config, pos, mot, cache);
        std::copy(cache.z.data().begin(), cache.z.data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(start * d));
    }
    return out;
}

Tensor pruhcn_features(const PruHcn& model, const ClipTensors& clip) {
    return pruhcn_features_batch(model, std::span(&clip, 1)).reshaped({model.config.feature_dim});
}

// ---- serialization -----------------------------------------------------------

namespace {

Json trunk_to_json(const HcnTrunk& t) {
    Json j;
    for (const auto& [name, s] : {std::pair{"position", &t.position}, std::pair{"motion", &t.motion}}) {
        Json js;
        js["conv1"] = conv_to_json(s->conv1);
        js["conv2"] = conv_to_json(s->conv2);
        js["conv3"] = conv_to_json(s->conv3);
        js["conv4"] = conv_to_json(s->conv4);
        j[name] = std::move(js);
    }
    j["conv5"] = conv_to_json(t.conv5);
    j["fc6"] = dense_to_json(t.fc6);
    return j;
}

void load_conv(ConvLayer& dst, const Json& j) {
    ConvLayer src = conv_from_json(j);
    require_shape(src.weights, dst.weights.shape(), "conv record weights");
    if (src.stride != dst.stride || src.padding != dst.padding) {
        throw ParseError("conv record: stride/padding do not match the architecture");
    }
    dst = std::move(src);
}

void load_dense(DenseLayer& dst, const Json& j) {
    DenseLayer src = dense_from_json(j);
    require_shape(src.weights, dst.weights.shape(), "dense record weights");
    dst = std::move(src);
}

void trunk_from_json(HcnTrunk& t, const Json& j) {
    try {
        for (const auto& [name, s] : {std::pair{"position", &t.position}, std::pair{"motion", &t.motion}}) {
            const Json& js = j.at(name);
            load_conv(s->conv1, js.at("conv1"));
            load_conv(s->conv2, js.at("conv2"));
            load_conv(s->conv3, js.at("conv3"));
            load_conv(s->conv4, js.at("conv4"));
        }
        load_conv(t.conv5, j.at("conv5"));
        load_dense(t.fc6, j.at("fc6"));
    } catch (const Json::exception& e) {
        throw ParseError(std::string("hcn layers: ") + e.what());
    }
}

}  // namespace

Json hcn_to_json(const HcnModel& model) {
    Json j;
    j["kind"] = "hcn";
    j["config"] = hcn_config_to_json(model.config);
    j["config_hash"] = hcn_config_hash(model.config);
    j["layers"] = trunk_to_json(model.trunk);
    j["layers"]["fc7"] = dense_to_json(model.fc7);
    return j;
}

HcnModel hcn_from_json(const Json& j) {
    if (j.value("kind", std::string{}) != "hcn") {
        throw ParseError("hcn model: 'kind' must be \"hcn\"");
    }
    Rng rng(0);
    HcnModel m = build_hcn(hcn_config_from_json(j.at("config")), rng);
    trunk_from_json(m.trunk, j.at("layers"));
    load_dense(m.fc7, j.at("layers").at("fc7"));
    return m;
}

Json pruhcn_to_json(const PruHcn& model) {
    Json j;
    j["kind"] = "pruhcn";
    j["config"] = hcn_config_to_json(model.config);
    j["parent_config_hash"] = model.parent_config_hash;
    j["layers"] = trunk_to_json(*model.trunk);
    return j;
}

PruHcn pruhcn_from_json(const Json& j) {
    if (j.value("kind", std::string{}) != "pruhcn") {
        throw ParseError("pruhcn model: 'kind' must be \"pruhcn\"");
    }
    Rng rng(0);
    PruHcn p = random_pruhcn(hcn_config_from_json(j.at("config")), rng);
    HcnTrunk trunk = *p.trunk;
    trunk_from_json(trunk, j.at("layers"));
    p.trunk = std::make_shared<const HcnTrunk>(std::move(trunk));
    p.parent_config_hash = j.value("parent_config_hash", std::string{});
    return p;
}

}  // namespace dwnet

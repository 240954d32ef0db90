#include <doctest.h>

#include <algorithm>

#include "dwnet/error.hpp"
#include "dwnet/hcn.hpp"
#include "hcn_oracle.hpp"
#include "support.hpp"

using namespace dwnet;

namespace {

HcnConfig tiny_config() {
    HcnConfig c;
    c.frames = 8;
    c.joints = 4;
    c.persons = 2;
    c.widths = {4, 4, 4, 8, 8};
    c.feature_dim = 8;
    c.num_classes = 3;
    c.dropout_rate = 0.5;
    return c;
}

HcnConfig small_config() {
    HcnConfig c;
    c.widths = {8, 8, 8, 8, 16};
    c.feature_dim = 16;
    return c;
}

ClipTensors random_clip(const HcnConfig& c, Rng& rng) {
    return encode_for(c, testing::make_sequence(c.frames + 5, c.persons, c.joints, rng));
}

/// Clips with ReLU-safe random inputs in both streams.
ClipTensors raw_clip(const HcnConfig& c, Rng& rng) {
    return {testing::random_tensor({c.persons, 3, c.frames, c.joints}, rng),
            testing::random_tensor({c.persons, 3, c.frames, c.joints}, rng)};
}

ClipTensors swap_persons(const ClipTensors& c) {
    auto swap = [](const Tensor& x) {
        const std::size_t per = x.size() / 2;
        std::vector<double> v(x.values().begin() + static_cast<long>(per), x.values().end());
        v.insert(v.end(), x.values().begin(), x.values().begin() + static_cast<long>(per));
        return Tensor(x.shape(), std::move(v));
    };
    return {swap(c.position), swap(c.motion)};
}

}  // namespace

TEST_SUITE("hcn build") {
    TEST_CASE("sbu layout gives finite logits of length 8 for a zero clip") {
        Rng rng(1);
        const HcnConfig cfg = HcnConfig::sbu();
        const HcnModel m = build_hcn(cfg, rng);
        const ClipTensors zero{Tensor({2, 3, 16, 15}), Tensor({2, 3, 16, 15})};
        const Tensor logits = hcn_forward(m, zero, false, rng);
        CHECK(logits.shape() == Shape{8});
        CHECK(logits.all_finite());
        CHECK(cfg.flat_dim() == 128 * 4 * 8);
        CHECK(m.trunk.fc6.weights.shape() == Shape{cfg.flat_dim(), 64});
    }

    TEST_CASE("ntu layout outputs 60 classes") {
        Rng rng(2);
        HcnConfig cfg = HcnConfig::ntu();
        cfg.widths = {8, 8, 8, 8, 8};  // narrow for speed; layout is what matters
        const HcnModel m = build_hcn(cfg, rng);
        const ClipTensors zero{Tensor({2, 3, 32, 25}), Tensor({2, 3, 32, 25})};
        CHECK(hcn_forward(m, zero, false, rng).shape() == Shape{60});
        CHECK(m.trunk.fc6.out_dim() == 256);
    }

    TEST_CASE("same seed gives bit-identical weights; glorot bounds hold") {
        const HcnConfig cfg = tiny_config();
        Rng a(9), b(9);
        const HcnModel ma = build_hcn(cfg, a);
        const HcnModel mb = build_hcn(cfg, b);
        const auto pa = hcn_parameters(ma);
        const auto pb = hcn_parameters(mb);
        REQUIRE(pa.size() == 22);
        for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
        const Tensor& w = ma.trunk.position.conv2.weights;  // fan_in 4*3, fan_out 4*3
        const double bound = std::sqrt(6.0 / 24.0);
        for (double v : w.values()) CHECK(std::abs(v) <= bound);
    }

    TEST_CASE("collapsing layouts are rejected with the offending layer") {
        HcnConfig cfg = tiny_config();
        cfg.frames = 3;
        try {
            cfg.validate();
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("conv") != std::string::npos);
        }
        cfg = tiny_config();
        cfg.num_classes = 1;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = tiny_config();
        cfg.feature_dim = 0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_SUITE("hcn forward") {
    TEST_CASE("matches the compositional oracle") {
        Rng rng(3);
        const HcnConfig cfg = small_config();
        const HcnModel m = build_hcn(cfg, rng);
        for (int i = 0; i < 3; ++i) {
            const ClipTensors clip = random_clip(cfg, rng);
            const testing::OracleOut want = testing::hcn_oracle(m, clip);
            const Tensor got = hcn_forward(m, clip, false, rng);
            CHECK(max_abs_diff(got, want.logits.reshaped({cfg.num_classes})) <= 1e-12);
        }
    }

    TEST_CASE("person order does not matter") {
        Rng rng(4);
        const HcnConfig cfg = small_config();
        const HcnModel m = build_hcn(cfg, rng);
        const ClipTensors clip = random_clip(cfg, rng);
        const Tensor a = hcn_forward(m, clip, false, rng);
        const Tensor b = hcn_forward(m, swap_persons(clip), false, rng);
        CHECK(max_abs_diff(a, b) <= 1e-12);
        const PruHcn p = prune(m);
        CHECK(max_abs_diff(pruhcn_features(p, clip), pruhcn_features(p, swap_persons(clip))) <= 1e-12);
    }

    TEST_CASE("inference is deterministic, training mode uses dropout") {
        Rng rng(5);
        const HcnConfig cfg = small_config();
        const HcnModel m = build_hcn(cfg, rng);
        const ClipTensors clip = random_clip(cfg, rng);
        CHECK(hcn_forward(m, clip, false, rng) == hcn_forward(m, clip, false, rng));
        CHECK(hcn_forward(m, clip, true, rng) != hcn_forward(m, clip, false, rng));
    }

    TEST_CASE("mismatched clip shapes are rejected") {
        Rng rng(6);
        const HcnConfig cfg = small_config();
        const HcnModel m = build_hcn(cfg, rng);
        const ClipTensors bad{Tensor({2, 3, 16, 14}), Tensor({2, 3, 16, 14})};
        CHECK_THROWS_AS(hcn_forward(m, bad, false, rng), ShapeError);
    }
}

TEST_SUITE("prune") {
    TEST_CASE("features equal the post-ReLU Fc6 tap") {
        Rng rng(7);
        const HcnConfig cfg = small_config();
        const HcnModel m = build_hcn(cfg, rng);
        const PruHcn p = prune(m);
        CHECK(p.feature_dim() == 16);
        for (int i = 0; i < 5; ++i) {
            const ClipTensors clip = random_clip(cfg, rng);
            const Tensor z = pruhcn_features(p, clip);
            CHECK(z.shape() == Shape{16});
            CHECK(max_abs_diff(z, testing::hcn_oracle(m, clip).fc6.reshaped({16})) <= 1e-12);
            for (double v : z.values()) CHECK(v >= 0.0);
        }
    }

    TEST_CASE("pruning shares weights, is idempotent and mutates nothing") {
        Rng rng(8);
        const HcnModel m = build_hcn(tiny_config(), rng);
        const std::string before = trunk_hash(m.trunk);
        const PruHcn p = prune(m);
        const PruHcn pp = prune(p);
        CHECK(pp.trunk == p.trunk);
        CHECK(trunk_hash(*p.trunk) == before);
        CHECK(trunk_hash(m.trunk) == before);
        CHECK(p.trunk->fc6.weights == m.trunk.fc6.weights);
    }

    TEST_CASE("zero Fc6 gives zero features") {
        Rng rng(9);
        HcnModel m = build_hcn(tiny_config(), rng);
        m.trunk.fc6.weights.fill(0.0);
        m.trunk.fc6.bias.fill(0.0);
        const Tensor z = pruhcn_features(prune(m), random_clip(m.config, rng));
        for (double v : z.values()) CHECK(v == 0.0);
    }

    TEST_CASE("batch extraction is bit-identical to single extraction") {
        Rng rng(10);
        const HcnConfig cfg = small_config();
        const PruHcn p = prune(build_hcn(cfg, rng));
        std::vector<ClipTensors> clips;
        for (int i = 0; i < 7; ++i) clips.push_back(random_clip(cfg, rng));
        const Tensor batch = pruhcn_features_batch(p, clips);
        REQUIRE(batch.shape() == Shape{7, 16});
        for (std::size_t i = 0; i < 7; ++i) {
            const Tensor one = pruhcn_features(p, clips[i]);
            for (std::size_t j = 0; j < 16; ++j) REQUIRE(batch.at(i, j) == one[j]);
        }
        CHECK(pruhcn_features_batch(p, {}).empty());
    }
}

TEST_SUITE("hcn training") {
    TEST_CASE("end-to-end gradients match finite differences") {
        Rng rng(11);
        const HcnConfig cfg = tiny_config();
        HcnModel m = build_hcn(cfg, rng);
        // Non-zero biases so every bias gradient path is exercised.
        for (Tensor* t : hcn_parameters(m)) {
            if (t->rank() == 1) {
                for (auto& v : t->data()) v = rng.uniform(-0.1, 0.1);
            }
        }
        std::vector<ClipTensors> clips{raw_clip(cfg, rng), raw_clip(cfg, rng)};
        const std::vector<int> labels{0, 2};
        const HcnGradients g = hcn_backprop(m, clips, labels, false, rng);
        auto loss = [&] {
            return softmax_cross_entropy(hcn_forward_batch(m, clips, false, rng).logits, labels).loss;
        };
        CHECK(std::abs(loss() - g.loss) <= 1e-12);
        const auto params = hcn_parameters(m);
        const auto names = hcn_parameter_names();
        double worst = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double err = testing::max_fd_error(*params[i], g.grads[i], loss);
            INFO(names[i], " rel err ", err);
            CHECK(err <= 1e-3);
            worst = std::max(worst, err);
        }
        MESSAGE("worst end-to-end relative error: " << worst);
    }

    TEST_CASE("one sample is memorized") {
        Rng rng(12);
        HcnConfig cfg = tiny_config();
        cfg.sgd.epochs = 200;
        cfg.sgd.batch_size = 1;
        cfg.dropout_rate = 0.0;
        HcnModel m = build_hcn(cfg, rng);
        SkeletonSequence s = testing::make_sequence(10, 2, 4, rng, 1);
        const std::vector<SkeletonSequence> train{s};
        const HcnTrainResult r = hcn_train(m, train, {});
        REQUIRE(r.history.size() == 200);
        CHECK(r.history.back().loss < 0.01);
        CHECK(r.final_train_accuracy == 1.0);
    }

    TEST_CASE("zero learning rate leaves weights unchanged") {
        Rng rng(13);
        HcnConfig cfg = tiny_config();
        cfg.sgd.learning_rate = 0.0;
        cfg.sgd.epochs = 1;
        HcnModel m = build_hcn(cfg, rng);
        const HcnModel before = m;
        std::vector<SkeletonSequence> train;
        for (int i = 0; i < 6; ++i) train.push_back(testing::make_sequence(10, 2, 4, rng, i % 3));
        hcn_train(m, train, {});
        const auto a = hcn_parameters(m);
        const auto b = hcn_parameters(before);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
    }

    TEST_CASE("seeded training is bit-reproducible") {
        HcnConfig cfg = tiny_config();
        cfg.sgd.epochs = 3;
        cfg.sgd.batch_size = 4;
        cfg.crop_ratio = 0.8;
        Rng data_rng(14);
        std::vector<SkeletonSequence> train;
        for (int i = 0; i < 9; ++i) train.push_back(testing::make_sequence(12, 2, 4, data_rng, i % 3));
        Rng a(15), b(15);
        HcnModel ma = build_hcn(cfg, a), mb = build_hcn(cfg, b);
        const auto ra = hcn_train(ma, train, {});
        const auto rb = hcn_train(mb, train, {});
        CHECK(trunk_hash(ma.trunk) == trunk_hash(mb.trunk));
        CHECK(ra.history.back().loss == rb.history.back().loss);
    }

    TEST_CASE("empty training set is rejected") {
        Rng rng(16);
        HcnModel m = build_hcn(tiny_config(), rng);
        CHECK_THROWS_AS(hcn_train(m, {}, {}), ConfigError);
    }
}

TEST_SUITE("hcn serialization") {
    TEST_CASE("full and pruned models round-trip exactly") {
        Rng rng(17);
        const HcnModel m = build_hcn(tiny_config(), rng);
        const HcnModel back = hcn_from_json(Json::parse(hcn_to_json(m).dump()));
        const auto a = hcn_parameters(m);
        const auto b = hcn_parameters(back);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

        const PruHcn p = prune(m);
        const PruHcn pb = pruhcn_from_json(Json::parse(pruhcn_to_json(p).dump()));
        CHECK(trunk_hash(*pb.trunk) == trunk_hash(*p.trunk));
        CHECK(pb.parent_config_hash == hcn_config_hash(m.config));
        CHECK_THROWS_AS(pruhcn_from_json(hcn_to_json(m)), ParseError);
    }

    TEST_CASE("config round trip") {
        const HcnConfig c = HcnConfig::ntu();
        const HcnConfig back = hcn_config_from_json(hcn_config_to_json(c));
        CHECK(hcn_config_hash(back) == hcn_config_hash(c));
        CHECK(back.feature_dim == 256);
    }
}

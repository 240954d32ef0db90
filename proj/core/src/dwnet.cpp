#include "dwnet/dwnet.hpp"

#include "dwnet/error.hpp"

namespace dwnet {

std::string dataset_hash(std::span<const SkeletonSequence> sequences) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : sequences) {
        const std::string key = s.id + ":" + std::to_string(s.label) + ";";
        h = fnv1a64({reinterpret_cast<const unsigned char*>(key.data()), key.size()}, h);
    }
    return hex64(h);
}

TrainedMapper train_mapper(std::span<const SkeletonSequence> train,
                           std::span<const SkeletonSequence> valid, const HcnConfig& config,
                           std::uint64_t init_seed) {
    TrainedMapper out;
    try {
        Rng rng(init_seed);
        out.hcn = build_hcn(config, rng);
        out.training = hcn_train(out.hcn, train, valid);
    } catch (const Error& e) {
        throw StageError("train-hcn", e.what());
    }
    try {
        out.pruhcn = prune(out.hcn);
    } catch (const Error& e) {
        throw StageError("prune", e.what());
    }
    return out;
}

DwnetModel dwnet_compose(const PruHcn& pruhcn, const Tensor& features, std::span<const int> labels,
                         const BlsConfig& bls_config, RidgeReport* report) {
    if (features.dim(1) != pruhcn.feature_dim()) {
        throw ShapeError("dwnet_compose: feature width does not match the PruHCN output");
    }
    DwnetModel m;
    m.pruhcn = pruhcn;
    m.head = bls_fit(features, labels, pruhcn.config.num_classes, bls_config, report);
    m.provenance.hcn_config_hash = pruhcn.parent_config_hash;
    m.provenance.trunk_hash = trunk_hash(*pruhcn.trunk);
    m.provenance.train_seed = pruhcn.config.sgd.seed;
    m.provenance.bls_seed = bls_config.seed;
    return m;
}

DwnetFitResult dwnet_fit(std::span<const SkeletonSequence> train,
                         std::span<const SkeletonSequence> valid, const HcnConfig& hcn_config,
                         const BlsConfig& bls_config, std::uint64_t init_seed) {
    if (train.empty()) {
        throw StageError("input", "training set is empty");
    }
    TrainedMapper mapper = train_mapper(train, valid, hcn_config, init_seed);

    Tensor features;
    std::vector<int> labels;
    try {
        const std::vector<ClipTensors> clips = encode_all(hcn_config, train);
        features = pruhcn_features_batch(mapper.pruhcn, clips);
        for (const auto& s : train) {
            labels.push_back(s.label);
        }
    } catch (const Error& e) {
        throw StageError("extract-features", e.what());
    }

    DwnetFitResult result;
    try {
        result.model = dwnet_compose(mapper.pruhcn, features, labels, bls_config, &result.ridge);
    } catch (const Error& e) {
        throw StageError("fit-bls", e.what());
    }
    result.model.provenance.init_seed = init_seed;
    result.model.provenance.dataset_hash = dataset_hash(train);
    result.hcn = std::move(mapper.hcn);
    result.training = std::move(mapper.training);
    return result;
}

Prediction dwnet_predict_batch(const DwnetModel& model, std::span<const ClipTensors> clips) {
    return bls_predict(model.head, pruhcn_features_batch(model.pruhcn, clips));
}

ClassPrediction dwnet_predict(const DwnetModel& model, const ClipTensors& clip) {
    Prediction p = dwnet_predict_batch(model, std::span(&clip, 1));
    return {p.classes.front(), std::move(p.scores).reshaped({model.head.num_classes})};
}

// ---- HCNBLS ------------------------------------------------------------------

Tensor hcnbls_features(std::span<const PruHcn> mappers, std::span<const ClipTensors> clips) {
    if (mappers.empty()) {
        throw ConfigError("hcnbls: at least one mapper is required");
    }
    const std::size_t d = mappers.front().feature_dim();
    const std::size_t width = mappers.size() * d;
    Tensor out({clips.size(), width});
    for (std::size_t m = 0; m < mappers.size(); ++m) {
        if (mappers[m].feature_dim() != d) {
            throw ShapeError("hcnbls: mappers must share one feature dimension");
        }
        const Tensor z = pruhcn_features_batch(mappers[m], clips);
        for (std::size_t r = 0; r < clips.size(); ++r) {
            std::copy_n(z.data().data() + r * d, d, out.data().data() + r * width + m * d);
        }
    }
    return out;
}

HcnblsModel hcnbls_fit_clips(std::span<const ClipTensors> clips, std::span<const int> labels,
                             const HcnConfig& hcn_config, std::size_t n_mappers,
                             const BlsConfig& bls_config, std::uint64_t seed) {
    if (n_mappers < 1) {
        throw ConfigError("hcnbls: n_mappers must be >= 1");
    }
    if (clips.empty()) {
        throw ConfigError("hcnbls: training set is empty");
    }
    HcnblsModel model;
    for (std::size_t m = 0; m < n_mappers; ++m) {
        Rng rng(derive_seed(seed, m));
        model.mappers.push_back(random_pruhcn(hcn_config, rng));
    }
    const Tensor features = hcnbls_features(model.mappers, clips);
    model.head = bls_fit(features, labels, hcn_config.num_classes, bls_config);
    return model;
}

HcnblsModel hcnbls_fit(std::span<const SkeletonSequence> train, const HcnConfig& hcn_config,
                       std::size_t n_mappers, const BlsConfig& bls_config, std::uint64_t seed) {
    const std::vector<ClipTensors> clips = encode_all(hcn_config, train);
    std::vector<int> labels;
    for (const auto& s : train) {
        labels.push_back(s.label);
    }
    return hcnbls_fit_clips(clips, labels, hcn_config, n_mappers, bls_config, seed);
}

Prediction hcnbls_predict_batch(const HcnblsModel& model, std::span<const ClipTensors> clips) {
    return bls_predict(model.head, hcnbls_features(model.mappers, clips));
}

ClassPrediction hcnbls_predict(const HcnblsModel& model, const ClipTensors& clip) {
    Prediction p = hcnbls_predict_batch(model, std::span(&clip, 1));
    return {p.classes.front(), std::move(p.scores).reshaped({model.head.num_classes})};
}

// ---- bundles -----------------------------------------------------------------

Json provenance_to_json(const DwnetProvenance& p) {
    Json j;
    j["hcn_config_hash"] = p.hcn_config_hash;
    j["trunk_hash"] = p.trunk_hash;
    j["dataset_hash"] = p.dataset_hash;
    j["seeds"] = {{"init", p.init_seed}, {"train", p.train_seed}, {"bls", p.bls_seed}};
    return j;
}

void save_dwnet_bundle(const std::filesystem::path& dir, const DwnetModel& model,
                       const HcnModel* parent, const Json& extra_provenance) {
    std::filesystem::create_directories(dir);
    write_json_file(dir / "pruhcn.json", pruhcn_to_json(model.pruhcn));
    write_json_file(dir / "head.json", bls_head_to_json(model.head, true));
    if (parent != nullptr) {
        write_json_file(dir / "hcn.json", hcn_to_json(*parent));
    }
    Json prov = provenance_to_json(model.provenance);
    prov["hcn_config"] = hcn_config_to_json(model.pruhcn.config);
    prov["bls_config"] = bls_config_to_json(model.head.config);
    if (!extra_provenance.is_null()) {
        prov["run"] = extra_provenance;
    }
    write_json_file(dir / "provenance.json", prov);
}

DwnetModel load_dwnet_bundle(const std::filesystem::path& dir) {
    DwnetModel m;
    m.pruhcn = pruhcn_from_json(read_json_file(dir / "pruhcn.json"));
    m.head = bls_head_from_json(read_json_file(dir / "head.json"));
    const Json prov = read_json_file(dir / "provenance.json");
    try {
        m.provenance.hcn_config_hash = prov.at("hcn_config_hash").get<std::string>();
        m.provenance.trunk_hash = prov.at("trunk_hash").get<std::string>();
        m.provenance.dataset_hash = prov.at("dataset_hash").get<std::string>();
        m.provenance.init_seed = prov.at("seeds").at("init").get<std::uint64_t>();
        m.provenance.train_seed = prov.at("seeds").at("train").get<std::uint64_t>();
        m.provenance.bls_seed = prov.at("seeds").at("bls").get<std::uint64_t>();
    } catch (const Json::exception& e) {
        throw ParseError(std::string("provenance.json: ") + e.what());
    }
    if (m.head.feature_dim != m.pruhcn.feature_dim()) {
        throw ParseError("bundle: head feature dimension does not match the PruHCN output");
    }
    if (trunk_hash(*m.pruhcn.trunk) != m.provenance.trunk_hash) {
        throw ParseError("bundle: PruHCN weights do not match the recorded trunk hash");
    }
    return m;
}

}  // namespace dwnet

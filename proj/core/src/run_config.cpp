#include "dwnet/run_config.hpp"

#include <algorithm>
#include <set>

#include "dwnet/error.hpp"
#include "dwnet/random.hpp"
#include "dwnet/serialize.hpp"

namespace dwnet {

namespace fs = std::filesystem;

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::hcn: return "hcn";
        case ModelKind::bls_flat: return "bls-flat";
        case ModelKind::hcnbls: return "hcnbls";
        case ModelKind::dwnet: return "dwnet";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "hcn") return ModelKind::hcn;
    if (name == "bls-flat" || name == "bls") return ModelKind::bls_flat;
    if (name == "hcnbls") return ModelKind::hcnbls;
    if (name == "dwnet") return ModelKind::dwnet;
    throw ConfigError("unknown model kind '" + name + "' (expected hcn, bls-flat, hcnbls or dwnet)");
}

namespace {

std::string dataset_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::synthetic: return "synthetic";
        case DatasetKind::jsonl: return "jsonl";
        case DatasetKind::sbu: return "sbu";
    }
    return "?";
}

DatasetKind dataset_kind_from(const std::string& s) {
    if (s == "synthetic") return DatasetKind::synthetic;
    if (s == "jsonl") return DatasetKind::jsonl;
    if (s == "sbu") return DatasetKind::sbu;
    throw ConfigError("unknown dataset kind '" + s + "' (expected synthetic, jsonl or sbu)");
}

void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.contains(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    if (path.is_relative() && !base.empty()) {
        return base / path;
    }
    return path;
}

}  // namespace

std::vector<std::size_t> SweepConfig::grid() const {
    if (m_step == 0 || m_start == 0 || m_end < m_start) {
        throw ConfigError("sweep grid: need 0 < m_start <= m_end and m_step > 0");
    }
    std::vector<std::size_t> g;
    for (std::size_t m = m_start; m <= m_end; m += m_step) {
        g.push_back(m);
    }
    return g;
}

void RunConfig::validate() const {
    hcn.validate();
    bls.validate();
    flat_bls.validate();
    hcnbls_bls.validate();
    if (hcnbls_mappers == 0) {
        throw ConfigError("hcnbls: mappers must be >= 1");
    }
    if (split.mode == SplitConfig::Mode::kfold && split.folds < 2) {
        throw ConfigError("split: folds must be >= 2");
    }
    if (split.mode == SplitConfig::Mode::holdout && split.test_groups.empty()) {
        throw ConfigError("split: holdout mode needs test_groups");
    }
    (void)sweep.grid();
    if (timing.reps < 10) {
        throw ConfigError("timing: reps must be >= 10");
    }
    if (timing.warmup < 1) {
        throw ConfigError("timing: warmup must be >= 1");
    }
    switch (dataset.kind) {
        case DatasetKind::synthetic:
            dataset.synth.validate();
            if (dataset.synth.joints != hcn.joints) {
                throw ConfigError("synthetic joints (" + std::to_string(dataset.synth.joints) +
                                  ") differ from hcn joints (" + std::to_string(hcn.joints) + ")");
            }
            if (static_cast<std::size_t>(dataset.synth.classes) != hcn.num_classes) {
                throw ConfigError("synthetic classes differ from hcn num_classes");
            }
            break;
        case DatasetKind::jsonl:
        case DatasetKind::sbu:
            if (dataset.path.empty()) {
                throw ConfigError("dataset: path is required for " + dataset_kind_name(dataset.kind));
            }
            if (!fs::exists(dataset.path)) {
                throw ConfigError("dataset path not found: " + dataset.path.string());
            }
            if (!dataset.manifest.empty() && !fs::exists(dataset.manifest)) {
                throw ConfigError("manifest not found: " + dataset.manifest.string());
            }
            break;
    }
    if (!fixtures.empty() && !fs::exists(fixtures)) {
        throw ConfigError("fixtures file not found: " + fixtures.string());
    }
}

Json run_config_to_json(const RunConfig& c) {
    Json j;
    Json ds;
    ds["kind"] = dataset_kind_name(c.dataset.kind);
    if (c.dataset.kind == DatasetKind::synthetic) {
        ds["synth"] = synth_config_to_json(c.dataset.synth);
    } else {
        ds["path"] = c.dataset.path.string();
        if (!c.dataset.manifest.empty()) {
            ds["manifest"] = c.dataset.manifest.string();
        }
    }
    j["dataset"] = ds;
    j["model"] = to_string(c.model);
    j["hcn"] = hcn_config_to_json(c.hcn);
    j["bls"] = bls_config_to_json(c.bls);
    j["flat_bls"] = flat_bls_config_to_json(c.flat_bls);
    j["hcnbls"] = {{"mappers", c.hcnbls_mappers}, {"bls", bls_config_to_json(c.hcnbls_bls)}};
    Json split;
    if (c.split.mode == SplitConfig::Mode::kfold) {
        split["mode"] = "kfold";
        split["folds"] = c.split.folds;
    } else {
        split["mode"] = "holdout";
        split["test_groups"] = c.split.test_groups;
    }
    j["split"] = split;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir.string();
    j["sweep"] = {{"m_start", c.sweep.m_start}, {"m_end", c.sweep.m_end}, {"m_step", c.sweep.m_step}};
    Json models = Json::array();
    for (auto m : c.timing.models) {
        models.push_back(to_string(m));
    }
    j["timing"] = {{"reps", c.timing.reps},
                   {"warmup", c.timing.warmup},
                   {"max_samples", c.timing.max_samples},
                   {"models", models}};
    if (!c.fixtures.empty()) {
        j["fixtures"] = c.fixtures.string();
    }
    return j;
}

RunConfig run_config_from_json(const Json& j, const fs::path& base_dir) {
    RunConfig c;
    reject_unknown(j,
                   {"dataset", "model", "hcn", "bls", "flat_bls", "hcnbls", "split", "seed",
                    "output_dir", "sweep", "timing", "fixtures"},
                   "run config");
    try {
        if (j.contains("dataset")) {
            const Json& ds = j.at("dataset");
            reject_unknown(ds, {"kind", "path", "manifest", "synth"}, "run config dataset");
            c.dataset.kind = dataset_kind_from(ds.value("kind", std::string("synthetic")));
            c.dataset.path = resolve(base_dir, ds.value("path", std::string{}));
            c.dataset.manifest = resolve(base_dir, ds.value("manifest", std::string{}));
            if (ds.contains("synth")) {
                c.dataset.synth = synth_config_from_json(ds.at("synth"));
            }
        }
        if (j.contains("model")) {
            c.model = model_kind_from_string(j.at("model").get<std::string>());
        }
        if (j.contains("hcn")) {
            c.hcn = hcn_config_from_json(j.at("hcn"));
        }
        if (j.contains("bls")) {
            c.bls = bls_config_from_json(j.at("bls"));
        }
        if (j.contains("flat_bls")) {
            c.flat_bls = flat_bls_config_from_json(j.at("flat_bls"));
        }
        if (j.contains("hcnbls")) {
            const Json& h = j.at("hcnbls");
            reject_unknown(h, {"mappers", "bls"}, "run config hcnbls");
            c.hcnbls_mappers = h.value("mappers", c.hcnbls_mappers);
            if (h.contains("bls")) {
                c.hcnbls_bls = bls_config_from_json(h.at("bls"));
            }
        }
        if (j.contains("split")) {
            const Json& s = j.at("split");
            reject_unknown(s, {"mode", "folds", "test_groups"}, "run config split");
            const std::string mode = s.value("mode", std::string("kfold"));
            if (mode == "kfold") {
                c.split.mode = SplitConfig::Mode::kfold;
            } else if (mode == "holdout") {
                c.split.mode = SplitConfig::Mode::holdout;
            } else {
                throw ConfigError("split mode must be kfold or holdout, got '" + mode + "'");
            }
            c.split.folds = s.value("folds", c.split.folds);
            c.split.test_groups = s.value("test_groups", c.split.test_groups);
        }
        c.seed = j.value("seed", c.seed);
        if (j.contains("output_dir")) {
            c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
        }
        if (j.contains("sweep")) {
            const Json& s = j.at("sweep");
            reject_unknown(s, {"m_start", "m_end", "m_step"}, "run config sweep");
            c.sweep.m_start = s.value("m_start", c.sweep.m_start);
            c.sweep.m_end = s.value("m_end", c.sweep.m_end);
            c.sweep.m_step = s.value("m_step", c.sweep.m_step);
        }
        if (j.contains("timing")) {
            const Json& t = j.at("timing");
            reject_unknown(t, {"reps", "warmup", "max_samples", "models"}, "run config timing");
            c.timing.reps = t.value("reps", c.timing.reps);
            c.timing.warmup = t.value("warmup", c.timing.warmup);
            c.timing.max_samples = t.value("max_samples", c.timing.max_samples);
            if (t.contains("models")) {
                c.timing.models.clear();
                for (const auto& m : t.at("models")) {
                    c.timing.models.push_back(model_kind_from_string(m.get<std::string>()));
                }
            }
        }
        if (j.contains("fixtures")) {
            c.fixtures = resolve(base_dir, j.at("fixtures").get<std::string>());
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const fs::path& file) {
    if (!fs::exists(file)) {
        throw ConfigError("config file not found: " + file.string());
    }
    return run_config_from_json(read_json_file(file), file.parent_path());
}

Dataset load_dataset(const DatasetSource& source) {
    switch (source.kind) {
        case DatasetKind::synthetic:
            return synth_generate(source.synth);
        case DatasetKind::jsonl:
            if (!fs::exists(source.path)) {
                throw ConfigError("dataset path not found: " + source.path.string());
            }
            return load_jsonl_dataset(source.path, source.manifest.empty()
                                                       ? std::optional<fs::path>{}
                                                       : std::optional<fs::path>{source.manifest});
        case DatasetKind::sbu:
            if (!fs::exists(source.path)) {
                throw ConfigError("dataset path not found: " + source.path.string());
            }
            return load_sbu_dir(source.path);
    }
    throw ConfigError("unknown dataset kind");
}

FoldSeeds fold_seeds(std::uint64_t run_seed, std::size_t fold) {
    const std::uint64_t base = derive_seed(run_seed, fold);
    return FoldSeeds{derive_seed(base, 1), derive_seed(base, 2), derive_seed(base, 3)};
}

}  // namespace dwnet

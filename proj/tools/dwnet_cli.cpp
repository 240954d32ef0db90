#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "dwnet/dwnet.hpp"
#include "dwnet/error.hpp"
#include "dwnet/eval.hpp"
#include "dwnet/run_config.hpp"
#include "dwnet/serialize.hpp"

namespace fs = std::filesystem;
using namespace dwnet;

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::string model;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> folds;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("-c,--config", f.config, "run config (JSON)")->required();
    cmd->add_option("-o,--out", f.out, "output directory (overrides config)");
    cmd->add_option("--seed", f.seed, "run seed (overrides config)");
    cmd->add_option("--folds", f.folds, "number of folds (overrides config)");
}

RunConfig resolve_config(const CommonFlags& f) {
    RunConfig cfg = load_run_config(f.config);
    if (!f.out.empty()) cfg.output_dir = f.out;
    if (f.seed) cfg.seed = *f.seed;
    if (f.folds) {
        cfg.split.mode = SplitConfig::Mode::kfold;
        cfg.split.folds = *f.folds;
    }
    if (!f.model.empty()) cfg.model = model_kind_from_string(f.model);
    cfg.validate();
    return cfg;
}

int cmd_synth(const SynthConfig& synth, const std::string& out) {
    const Dataset data = synth_generate(synth);
    save_jsonl_dataset(data, out);
    std::cout << "wrote " << data.sequences.size() << " sequences to " << out << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const Dataset data = load_dataset(cfg.dataset);
    const fs::path dir = cfg.output_dir;
    const FoldSeeds seeds = fold_seeds(cfg.seed, 0);
    std::span<const SkeletonSequence> all = data.sequences;
    switch (cfg.model) {
        case ModelKind::dwnet: {
            HcnConfig hcn = cfg.hcn;
            hcn.sgd.seed = seeds.train;
            BlsConfig bls = cfg.bls;
            bls.seed = seeds.head;
            DwnetFitResult r = dwnet_fit(all, {}, hcn, bls, seeds.init);
            Json extra;
            extra["hcn_train_accuracy"] = r.training.final_train_accuracy;
            save_dwnet_bundle(dir, r.model, &r.hcn, extra);
            std::cout << "hcn train accuracy " << r.training.final_train_accuracy << "\n";
            break;
        }
        case ModelKind::hcn: {
            HcnConfig hcn = cfg.hcn;
            hcn.sgd.seed = seeds.train;
            Rng rng(seeds.init);
            HcnModel model = build_hcn(hcn, rng);
            const HcnTrainResult t = hcn_train(model, all, {});
            write_json_file(dir / "hcn.json", hcn_to_json(model));
            std::cout << "hcn train accuracy " << t.final_train_accuracy << "\n";
            break;
        }
        case ModelKind::hcnbls: {
            BlsConfig bls = cfg.hcnbls_bls;
            bls.seed = seeds.head;
            const HcnblsModel m = hcnbls_fit(all, cfg.hcn, cfg.hcnbls_mappers, bls, seeds.init);
            Json j;
            j["kind"] = "hcnbls";
            j["mappers"] = Json::array();
            for (const auto& p : m.mappers) j["mappers"].push_back(pruhcn_to_json(p));
            j["head"] = bls_head_to_json(m.head, false);
            write_json_file(dir / "hcnbls.json", j);
            break;
        }
        case ModelKind::bls_flat: {
            FlatBlsConfig flat = cfg.flat_bls;
            flat.seed = seeds.head;
            const std::vector<ClipTensors> clips = encode_all(cfg.hcn, all);
            std::vector<int> labels;
            for (const auto& s : all) labels.push_back(s.label);
            const FlatBls m = flat_bls_fit(clips, labels, data.manifest.num_classes(), flat);
            write_json_file(dir / "flat_bls.json", flat_bls_to_json(m));
            break;
        }
    }
    write_json_file(dir / "run_config.json", run_config_to_json(cfg));
    std::cout << "model written to " << dir.string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    const EvalReport report = run_cv(cfg);
    write_eval_outputs(cfg.output_dir, report);
    std::cout << summary_text(report);
    return 0;
}

int cmd_bench(const RunConfig& cfg) {
    const TimingReport report = run_bench(cfg);
    write_json_file(cfg.output_dir / "timing.json", timing_report_to_json(report));
    write_text_file(cfg.output_dir / "timing.csv", timing_csv(report));
    std::cout << timing_csv(report);
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    const Dataset data = load_dataset(cfg.dataset);
    const std::vector<FoldSplit> splits = make_splits(data, cfg);
    const FeatureCache cache = build_feature_cache(data, splits, cfg.hcn, cfg.seed);
    const SweepReport report = sweep_enhancement(cache, cfg.bls, cfg.sweep);
    Json j = sweep_report_to_json(report);
    j["run_config"] = run_config_to_json(cfg);
    write_json_file(cfg.output_dir / "sweep.json", j);
    write_text_file(cfg.output_dir / "sweep.csv", sweep_csv(report));
    std::cout << sweep_csv(report) << "best m = " << report.best_enhancement_nodes << " ("
              << report.best_accuracy << "%)\n";
    return 0;
}

int cmd_report(const std::string& dir, const std::string& fixtures) {
    const fs::path report_file = fs::path(dir) / "eval_report.json";
    if (!fs::exists(report_file)) {
        throw ConfigError("eval report not found: " + report_file.string());
    }
    EvalReport report = eval_report_from_json(read_json_file(report_file));
    if (!fixtures.empty()) {
        if (!fs::exists(fixtures)) {
            throw ConfigError("fixtures file not found: " + fixtures);
        }
        report.reference =
            reference_comparison(read_json_file(fixtures), report.model, report.average_accuracy);
    }
    write_eval_outputs(dir, report);
    std::cout << summary_text(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DWnet skeleton action recognition: training, evaluation and reports"};
    app.require_subcommand(1);

    SynthConfig synth;
    std::string synth_out = "synthetic";
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic skeleton dataset");
    synth_cmd->add_option("--classes", synth.classes)->capture_default_str();
    synth_cmd->add_option("--per-class", synth.sequences_per_class)->capture_default_str();
    synth_cmd->add_option("--joints", synth.joints)->capture_default_str();
    synth_cmd->add_option("--persons", synth.persons)->capture_default_str();
    synth_cmd->add_option("--frames", synth.frames)->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise_sigma)->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
    synth_cmd->add_option("-o,--out", synth_out, "output directory")->capture_default_str();

    CommonFlags train_f, eval_f, bench_f, sweep_f;
    auto* train_cmd = app.add_subcommand("train", "fit one model on the whole dataset");
    add_common(train_cmd, train_f);
    train_cmd->add_option("--model", train_f.model, "hcn | bls-flat | hcnbls | dwnet");
    auto* eval_cmd = app.add_subcommand("eval", "k-fold cross-validation report");
    add_common(eval_cmd, eval_f);
    eval_cmd->add_option("--model", eval_f.model, "hcn | bls-flat | hcnbls | dwnet");
    auto* bench_cmd = app.add_subcommand("bench", "per-sample inference timing");
    add_common(bench_cmd, bench_f);
    auto* sweep_cmd = app.add_subcommand("sweep", "enhancement-node sweep on cached features");
    add_common(sweep_cmd, sweep_f);

    std::string report_dir, report_fixtures;
    auto* report_cmd = app.add_subcommand("report", "regenerate summary and CSVs from eval_report.json");
    report_cmd->add_option("dir", report_dir, "run output directory")->required();
    report_cmd->add_option("--fixtures", report_fixtures, "reference table fixture (JSON)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) return cmd_synth(synth, synth_out);
        if (*train_cmd) return cmd_train(resolve_config(train_f));
        if (*eval_cmd) return cmd_eval(resolve_config(eval_f));
        if (*bench_cmd) return cmd_bench(resolve_config(bench_f));
        if (*sweep_cmd) return cmd_sweep(resolve_config(sweep_f));
        if (*report_cmd) return cmd_report(report_dir, report_fixtures);
    } catch (const StageError& e) {
        std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "dwnet/bls.hpp"
#include "dwnet/eval.hpp"
#include "dwnet/hcn.hpp"
#include "dwnet/run_config.hpp"
#include "hcn_oracle.hpp"
#include "ridge_oracle.hpp"
#include "support.hpp"

using namespace dwnet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    Json record = Json::object();  // deterministic content compared on rerun
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, const char* format = "%.3g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

// ---- 1: finite differences -----------------------------------------------------

Outcome gradient_checks() {
    const auto t0 = Clock::now();
    Rng rng(101);
    using testing::dot;
    using testing::max_fd_error;
    using testing::random_tensor;
    Json layers;

    {
        ConvLayer l{random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng), {1, 1}, {1, 1}};
        Tensor x = random_tensor({2, 2, 5, 4}, rng);
        const Tensor r = random_tensor({2, 3, 5, 4}, rng);
        const ConvGrads g = conv2d_backward(r, x, l);
        auto loss = [&] { return dot(conv2d_forward(x, l), r); };
        layers["conv2d"] = std::max({max_fd_error(x, g.input, loss), max_fd_error(l.weights, g.weights, loss),
                                     max_fd_error(l.bias, g.bias, loss)});
    }
    {
        ConvLayer l{random_tensor({2, 2, 3, 1}, rng), random_tensor({2}, rng), {2, 1}, {1, 0}};
        Tensor x = random_tensor({1, 2, 7, 3}, rng);
        const Tensor r = random_tensor(conv2d_forward(x, l).shape(), rng);
        const ConvGrads g = conv2d_backward(r, x, l);
        auto loss = [&] { return dot(conv2d_forward(x, l), r); };
        layers["conv2d_strided"] = std::max({max_fd_error(x, g.input, loss),
                                             max_fd_error(l.weights, g.weights, loss),
                                             max_fd_error(l.bias, g.bias, loss)});
    }
    {
        Tensor x = random_tensor({2, 2, 4, 6}, rng);
        const PoolResult p = maxpool2d(x);
        const Tensor r = random_tensor(p.output.shape(), rng);
        const Tensor g = maxpool2d_backward(r, p.argmax, x.shape());
        auto loss = [&] { return dot(maxpool2d(x).output, r); };
        layers["maxpool2d"] = max_fd_error(x, g, loss);
    }
    {
        Tensor x = testing::away_from_zero({3, 7}, rng);
        const Tensor r = random_tensor({3, 7}, rng);
        const Tensor g = relu_backward(r, x);
        auto loss = [&] { return dot(relu(x), r); };
        layers["relu"] = max_fd_error(x, g, loss);
    }
    {
        Tensor x = random_tensor({4, 6}, rng);
        const DropoutResult d = dropout(x, 0.5, true, rng);
        const Tensor r = random_tensor({4, 6}, rng);
        const Tensor g = dropout_backward(r, d.mask);
        auto loss = [&] {
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * d.mask[i] * r[i];
            return s;
        };
        layers["dropout"] = max_fd_error(x, g, loss);
    }
    {
        DenseLayer l{random_tensor({5, 4}, rng), random_tensor({4}, rng)};
        Tensor x = random_tensor({3, 5}, rng);
        const Tensor r = random_tensor({3, 4}, rng);
        const DenseGrads g = dense_backward(r, x, l);
        auto loss = [&] { return dot(dense_forward(x, l), r); };
        layers["dense"] = std::max({max_fd_error(x, g.input, loss), max_fd_error(l.weights, g.weights, loss),
                                    max_fd_error(l.bias, g.bias, loss)});
    }
    {
        Tensor z = random_tensor({4, 5}, rng, -3, 3);
        const std::vector<int> y{0, 4, 2, 2};
        const LossResult l = softmax_cross_entropy(z, y);
        auto loss = [&] { return softmax_cross_entropy(z, y).loss; };
        layers["softmax_cross_entropy"] = max_fd_error(z, l.grad_logits, loss);
    }

    HcnConfig cfg;
    cfg.frames = 8;
    cfg.joints = 4;
    cfg.widths = {4, 4, 4, 8, 8};
    cfg.feature_dim = 8;
    cfg.num_classes = 3;
    HcnModel m = build_hcn(cfg, rng);
    for (Tensor* t : hcn_parameters(m)) {
        if (t->rank() == 1) {
            for (auto& v : t->data()) v = rng.uniform(-0.1, 0.1);
        }
    }
    std::vector<ClipTensors> clips;
    for (int i = 0; i < 2; ++i) {
        clips.push_back({random_tensor({2, 3, 8, 4}, rng), random_tensor({2, 3, 8, 4}, rng)});
    }
    const std::vector<int> labels{0, 2};
    const HcnGradients g = hcn_backprop(m, clips, labels, false, rng);
    auto loss = [&] { return softmax_cross_entropy(hcn_forward_batch(m, clips, false, rng).logits, labels).loss; };
    const auto params = hcn_parameters(m);
    const auto names = hcn_parameter_names();
    double end_to_end = 0.0;
    Json per_param;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double e = max_fd_error(*params[i], g.grads[i], loss);
        per_param[names[i]] = e;
        end_to_end = std::max(end_to_end, e);
    }

    double per_layer = 0.0;
    for (const auto& [name, e] : layers.items()) per_layer = std::max(per_layer, e.get<double>());
    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = per_layer <= 1e-4 && end_to_end <= 1e-3 && elapsed < 60.0;
    o.detail = "worst per-layer rel err " + fmt(per_layer) + " (<= 1e-4), end-to-end " + fmt(end_to_end) +
               " (<= 1e-3), " + fmt(elapsed, "%.1f") + " s (< 60)";
    o.record = {{"layers", layers}, {"hcn", per_param}};
    return o;
}

// ---- 2: ridge vs SVD pseudo-inverse ----------------------------------------------

Tensor normal_residual(const Tensor& a, const Tensor& y, const Tensor& w, double lambda) {
    const auto am = testing::to_eigen(a), ym = testing::to_eigen(y), wm = testing::to_eigen(w);
    const testing::RowMatrix r = (am.transpose() * am + lambda * testing::RowMatrix::Identity(am.cols(), am.cols())) * wm -
                                 am.transpose() * ym;
    return Tensor({w.dim(0), w.dim(1)}, std::vector<double>(r.data(), r.data() + r.size()));
}

Outcome ridge_oracle() {
    const auto t0 = Clock::now();
    Rng rng(202);
    double worst_diff = 0.0;
    bool bound_ok = true;
    int zero_lambda = 0, dual = 0;
    Json systems = Json::array();
    for (int i = 0; i < 50; ++i) {
        const std::size_t n = 5 + rng.below(46), cols = 3 + rng.below(38), c = 2 + rng.below(4);
        const Tensor a = testing::random_tensor({n, cols}, rng);
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng.below(c));
        const Tensor y = one_hot(labels, c);
        double lambda = (i % 3 == 2) ? 1e-2 : 1e-8;
        if (i % 3 == 0 && n >= cols && testing::condition_number(a) < 1e4) lambda = 0.0;
        RidgeReport rep;
        const Tensor w = ridge_fit(a, y, lambda, &rep);
        const double diff = max_abs_diff(w, testing::svd_ridge(a, y, lambda));
        double res = 0.0;
        const Tensor r = normal_residual(a, y, w, lambda);
        for (double v : r.values()) res = std::max(res, std::abs(v));
        worst_diff = std::max(worst_diff, diff);
        bound_ok = bound_ok && rep.residual <= rep.residual_bound && res <= rep.residual_bound;
        zero_lambda += lambda == 0.0 ? 1 : 0;
        dual += rep.form == RidgeForm::dual ? 1 : 0;
        systems.push_back({{"n", n}, {"cols", cols}, {"classes", c}, {"lambda", lambda}, {"diff", diff},
                           {"residual", rep.residual}, {"independent_residual", res},
                           {"bound", rep.residual_bound}});
    }
    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = worst_diff <= 1e-8 && bound_ok && elapsed < 10.0;
    o.detail = "50 systems (" + std::to_string(zero_lambda) + " with lambda 0, " + std::to_string(dual) +
               " dual), max |W - W_svd| " + fmt(worst_diff) + " (<= 1e-8), residual bound " +
               (bound_ok ? "held" : "violated") + ", " + fmt(elapsed, "%.2f") + " s (< 10)";
    o.record = {{"systems", systems}};
    return o;
}

// ---- 3: pruning tap ---------------------------------------------------------------

Outcome pruning_consistency() {
    Rng rng(303);
    const HcnConfig cfg = HcnConfig::sbu();
    double worst = 0.0;
    Json per_init = Json::array();
    for (int init = 0; init < 5; ++init) {
        const HcnModel m = build_hcn(cfg, rng);
        const PruHcn p = prune(m);
        double w = 0.0;
        for (int i = 0; i < 20; ++i) {
            const ClipTensors clip = encode_for(cfg, testing::make_sequence(cfg.frames + 7, cfg.persons, cfg.joints, rng));
            Rng unused(0);
            const HcnOutput out = hcn_forward_batch(m, std::span<const ClipTensors>(&clip, 1), false, unused);
            const Tensor z = pruhcn_features(p, clip);
            w = std::max(w, max_abs_diff(z, out.features.reshaped({cfg.feature_dim})));
            w = std::max(w, max_abs_diff(z, testing::hcn_oracle(m, clip).fc6.reshaped({cfg.feature_dim})));
        }
        per_init.push_back(w);
        worst = std::max(worst, w);
    }
    Outcome o;
    o.pass = worst <= 1e-12;
    o.detail = "20 clips x 5 inits, max |PruHCN - Fc6 post-ReLU| " + fmt(worst) + " (<= 1e-12)";
    o.record = {{"max_abs_diff", per_init}};
    return o;
}

// ---- 4: encoding ----------------------------------------------------------------

Outcome encoding_conformance() {
    Rng rng(404);
    bool ok = true;
    Json shapes;
    const HcnConfig sbu = HcnConfig::sbu(), ntu = HcnConfig::ntu();

    SkeletonSequence still = testing::make_sequence(1, 2, 15, rng);
    std::vector<double> frame = still.coords;
    still.frames = 40;
    still.coords.clear();
    for (int f = 0; f < 40; ++f) still.coords.insert(still.coords.end(), frame.begin(), frame.end());
    const ClipTensors c = encode_for(sbu, still);
    double motion_max = 0.0;
    for (double v : c.motion.values()) motion_max = std::max(motion_max, std::abs(v));
    ok = ok && motion_max == 0.0;

    const ClipTensors s = encode_for(sbu, testing::make_sequence(23, 2, 15, rng));
    const ClipTensors n = encode_for(ntu, testing::make_sequence(71, 2, 25, rng));
    const Shape sbu_shape{2, 3, 16, 15}, ntu_shape{ntu.persons, 3, 32, 25};
    ok = ok && s.position.shape() == sbu_shape && s.motion.shape() == sbu_shape;
    ok = ok && n.position.shape() == ntu_shape && n.motion.shape() == ntu_shape;
    auto shape_str = [](const Shape& sh) {
        std::string out = "[";
        for (std::size_t i = 0; i < sh.size(); ++i) out += (i ? "," : "") + std::to_string(sh[i]);
        return out + "]";
    };
    Outcome o;
    o.pass = ok;
    o.detail = "constant-sequence motion max |v| = " + fmt(motion_max) + ", sbu clip " +
               shape_str(s.position.shape()) + ", ntu clip " + shape_str(n.position.shape());
    o.record = {{"motion_max", motion_max}, {"sbu", s.position.shape()}, {"ntu", n.position.shape()}};
    return o;
}

// ---- 5: synthetic end-to-end ------------------------------------------------------

struct SyntheticRun {
    FeatureCache cache;
    EvalReport dwnet;
    double seconds = 0.0;
};

SyntheticRun synthetic_run(const RunConfig& cfg) {
    const auto t0 = Clock::now();
    const Dataset data = load_dataset(cfg.dataset);
    const auto splits = make_splits(data, cfg);
    SyntheticRun run;
    run.cache = build_feature_cache(data, splits, cfg.hcn, cfg.seed);
    run.dwnet = evaluate_dwnet(run.cache, cfg.bls);
    run.seconds = seconds_since(t0);
    return run;
}

Outcome synthetic_end_to_end(const RunConfig& cfg, const SyntheticRun& run) {
    double min_train = 1.0;
    Json train_acc = Json::array();
    for (const auto& f : run.cache.folds) {
        min_train = std::min(min_train, f.training.final_train_accuracy);
        train_acc.push_back(f.training.final_train_accuracy);
    }
    const auto& s = cfg.dataset.synth;
    Outcome o;
    o.pass = s.classes == 8 && s.classes * s.sequences_per_class == 160 && run.cache.folds.size() == 5 &&
             cfg.bls.enhancement_nodes == 550 && min_train >= 0.95 && run.dwnet.average_accuracy >= 90.0 &&
             run.seconds < 900.0;
    o.detail = "min HCN train accuracy " + fmt(100.0 * min_train, "%.2f") + "% (>= 95), DWnet average " +
               fmt(run.dwnet.average_accuracy, "%.2f") + "% (>= 90), " + fmt(run.seconds, "%.0f") + " s (< 900)";
    o.record = {{"hcn_train_accuracy", train_acc}, {"report", strip_wall_clock(eval_report_to_json(run.dwnet))}};
    return o;
}

// ---- 6: reference comparison ------------------------------------------------------

Outcome reference_check(const RunConfig& base, const fs::path& fixtures_file) {
    const Json fixtures = read_json_file(fixtures_file);
    const double ref = fixtures.at("sbu_accuracy").at("rows").at("average").at(3).get<double>();
    const bool verdicts = reference_comparison(fixtures, "dwnet", ref - 2.9).at("verdict") == "consistent" &&
                          reference_comparison(fixtures, "dwnet", ref + 2.9).at("verdict") == "consistent" &&
                          reference_comparison(fixtures, "dwnet", ref - 3.1).at("verdict") == "divergent";
    Outcome o;
    o.pass = verdicts;
    const char* dir = std::getenv("DWNET_SBU_DIR");
    if (dir == nullptr || *dir == '\0') {
        o.detail = "informational: DWNET_SBU_DIR not set, SBU comparison skipped; verdict rule checked against "
                   "reference " + fmt(ref, "%.2f") + "% +/- 3";
        return o;
    }
    RunConfig cfg = base;
    cfg.dataset = DatasetSource{};
    cfg.dataset.kind = DatasetKind::sbu;
    cfg.dataset.path = dir;
    cfg.hcn = HcnConfig::sbu();
    cfg.model = ModelKind::dwnet;
    cfg.fixtures = fixtures_file;
    cfg.validate();
    const EvalReport r = run_cv(cfg);
    o.detail = "informational: SBU 5-fold DWnet average " + fmt(r.average_accuracy, "%.2f") + "% vs " +
               fmt(ref, "%.2f") + "%, " + r.reference.at("verdict").get<std::string>();
    return o;
}

// ---- 8: sweep -------------------------------------------------------------------

Outcome sweep_check(const RunConfig& cfg, const FeatureCache& cache) {
    const std::vector<std::string> before = [&] {
        std::vector<std::string> h;
        for (const auto& f : cache.folds) h.push_back(trunk_hash(*f.pruhcn.trunk));
        return h;
    }();
    const SweepReport r = sweep_enhancement(cache, cfg.bls, cfg.sweep);
    bool increasing = true, cache_intact = true;
    double worst_refit = 0.0;
    for (std::size_t i = 0; i < r.points.size(); ++i) {
        if (i > 0) increasing = increasing && r.points[i].enhancement_nodes > r.points[i - 1].enhancement_nodes;
        worst_refit = std::max(worst_refit, r.points[i].refit_seconds * static_cast<double>(cache.folds.size()));
    }
    for (std::size_t f = 0; f < cache.folds.size(); ++f) {
        cache_intact = cache_intact && trunk_hash(*cache.folds[f].pruhcn.trunk) == before[f];
    }
    Outcome o;
    o.pass = r.points.size() == 22 && r.points.front().enhancement_nodes == 50 &&
             r.points.back().enhancement_nodes == 1100 && increasing && cache_intact && worst_refit <= 1.0;
    o.detail = std::to_string(r.points.size()) + " points, m " + std::to_string(r.points.front().enhancement_nodes) +
               ".." + std::to_string(r.points.back().enhancement_nodes) + ", slowest per-point refit (all folds) " +
               fmt(worst_refit, "%.3f") + " s (<= 1), best m " + std::to_string(r.best_enhancement_nodes) + " at " +
               fmt(r.best_accuracy, "%.2f") + "%";
    return o;
}

// ---- 9: ordering ----------------------------------------------------------------

Outcome ordering_check(const RunConfig& base, const EvalReport& dwnet) {
    RunConfig flat_cfg = base;
    flat_cfg.model = ModelKind::bls_flat;
    RunConfig hcnbls_cfg = base;
    hcnbls_cfg.model = ModelKind::hcnbls;
    const double flat = run_cv(flat_cfg).average_accuracy;
    const double hcnbls = run_cv(hcnbls_cfg).average_accuracy;
    const double dw = dwnet.average_accuracy;
    Outcome o;
    o.pass = flat < hcnbls + 2.0 && hcnbls <= dw;
    o.detail = "flat BLS " + fmt(flat, "%.2f") + "% < HCNBLS " + fmt(hcnbls, "%.2f") + "% + 2, HCNBLS <= DWnet " +
               fmt(dw, "%.2f") + "%";
    return o;
}

bool report(int id, const std::string& title, const std::function<Outcome()>& run) {
    Outcome o;
    try {
        o = run();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("error: ") + e.what();
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << "  " << title << ": " << o.detail << std::endl;
    return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path source = argc > 1 ? fs::path(argv[1]) : fs::path(DWNET_SOURCE_DIR);
    const RunConfig cfg = load_run_config(source / "configs" / "synthetic_dwnet.json");
    const fs::path fixtures = source / "fixtures" / "reference_tables.json";

    bool all = true;
    Json first, second;
    SyntheticRun run;
    auto keep = [](Json& into, const char* key, Outcome o) {
        into[key] = o.record;
        return o;
    };

    all &= report(1, "gradient checks", [&] { return keep(first, "1", gradient_checks()); });
    all &= report(2, "ridge oracle equivalence", [&] { return keep(first, "2", ridge_oracle()); });
    all &= report(3, "pruning consistency", [&] { return keep(first, "3", pruning_consistency()); });
    all &= report(4, "encoding conformance", [&] { return keep(first, "4", encoding_conformance()); });
    all &= report(5, "synthetic end-to-end", [&] {
        run = synthetic_run(cfg);
        return keep(first, "5", synthetic_end_to_end(cfg, run));
    });
    all &= report(6, "reference comparison", [&] { return reference_check(cfg, fixtures); });
    all &= report(7, "determinism", [&] {
        second["1"] = gradient_checks().record;
        second["2"] = ridge_oracle().record;
        second["3"] = pruning_consistency().record;
        second["4"] = encoding_conformance().record;
        const SyntheticRun again = synthetic_run(cfg);
        second["5"] = synthetic_end_to_end(cfg, again).record;
        const std::string a = strip_wall_clock(first).dump(), b = strip_wall_clock(second).dump();
        if (a != b) {
            write_json_file(fs::temp_directory_path() / "acceptance_first.json", strip_wall_clock(first));
            write_json_file(fs::temp_directory_path() / "acceptance_second.json", strip_wall_clock(second));
        }
        Outcome o;
        o.pass = first.size() == 5 && a == b;
        o.detail = "criteria 1-5 rerun with the same seeds: " + std::to_string(a.size()) + " bytes of JSON, " +
                   (a == b ? "byte-identical" : "different");
        return o;
    });
    all &= report(8, "enhancement sweep", [&] { return sweep_check(cfg, run.cache); });
    all &= report(9, "baseline ordering", [&] { return ordering_check(cfg, run.dwnet); });

    std::cout << (all ? "all acceptance criteria passed" : "some acceptance criteria failed") << std::endl;
    return all ? 0 : 1;
}

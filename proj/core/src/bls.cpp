#include "dwnet/bls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Core>

#include "dwnet/error.hpp"

namespace dwnet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

ConstMatrixMap as_matrix(const Tensor& t) {
    return ConstMatrixMap(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                          static_cast<Eigen::Index>(t.dim(1)));
}

MatrixMap as_matrix(Tensor& t) {
    return MatrixMap(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                     static_cast<Eigen::Index>(t.dim(1)));
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

}  // namespace

void BlsConfig::validate() const {
    if (enhancement_nodes < 1) {
        throw ConfigError("bls: enhancement_nodes must be >= 1");
    }
    if (!(scale >= 0.0) || !std::isfinite(scale)) {
        throw ConfigError("bls: scale must be a non-negative finite number");
    }
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
        throw ConfigError("bls: ridge lambda must be a non-negative finite number");
    }
}

Json bls_config_to_json(const BlsConfig& c) {
    Json j;
    j["enhancement_nodes"] = c.enhancement_nodes;
    j["scale"] = c.scale;
    j["ridge"] = c.ridge;
    j["seed"] = c.seed;
    return j;
}

BlsConfig bls_config_from_json(const Json& j) {
    BlsConfig c;
    try {
        c.enhancement_nodes = j.value("enhancement_nodes", c.enhancement_nodes);
        c.scale = j.value("scale", c.scale);
        c.ridge = j.value("ridge", c.ridge);
        c.seed = j.value("seed", c.seed);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("bls config: ") + e.what());
    }
    return c;
}

double tansig(double x) { return 2.0 / (1.0 + std::exp(-2.0 * x)) - 1.0; }

Tensor tansig(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.data()) {
        v = tansig(v);
    }
    return out;
}

Tensor matmul_rows(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_rows lhs");
    require_rank(b, 2, "matmul_rows rhs");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul_rows: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
    }
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor out({n, m});
    for (std::size_t r = 0; r < n; ++r) {
        double* o = out.data().data() + r * m;
        const double* ar = a.data().data() + r * k;
        for (std::size_t i = 0; i < k; ++i) {
            const double av = ar[i];
            const double* bi = b.data().data() + i * m;
            for (std::size_t j = 0; j < m; ++j) {
                o[j] += av * bi[j];
            }
        }
    }
    return out;
}

EnhancementParams gen_enhancement_params(std::size_t feature_dim, const BlsConfig& config,
                                         Rng& rng) {
    if (feature_dim < 1) {
        throw ConfigError("gen_enhancement_params: feature dimension must be >= 1");
    }
    config.validate();
    const std::size_t m = config.enhancement_nodes;
    EnhancementParams p{Tensor({feature_dim, m}), Tensor({m})};
    for (auto& v : p.weights.data()) {
        v = rng.uniform(-1.0, 1.0) * config.scale;
    }
    for (auto& v : p.bias.data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    return p;
}

Tensor enhance(const Tensor& features, const EnhancementParams& params) {
    require_rank(features, 2, "enhance features");
    if (features.dim(1) != params.weights.dim(0)) {
        throw ShapeError("enhance: feature width " + std::to_string(features.dim(1)) +
                         " does not match enhancement input width " +
                         std::to_string(params.weights.dim(0)));
    }
    Tensor h = matmul_rows(features, params.weights);
    const std::size_t m = params.bias.size();
    for (std::size_t r = 0; r < h.dim(0); ++r) {
        for (std::size_t j = 0; j < m; ++j) {
            h.at(r, j) = tansig(h.at(r, j) + params.bias[j]);
        }
    }
    return h;
}

// ---- ridge solve -------------------------------------------------------------

namespace {

// In-place lower Cholesky factor of a symmetric positive-definite row-major matrix.
// Returns the index of the first failing pivot, or -1 on success.
std::ptrdiff_t cholesky_in_place(std::vector<double>& a, std::size_t n, double pivot_floor,
                                 double& failed_pivot) {
    for (std::size_t j = 0; j < n; ++j) {
        double* rj = a.data() + j * n;
        double d = rj[j];
        for (std::size_t k = 0; k < j; ++k) {
            d -= rj[k] * rj[k];
        }
        if (!(d > pivot_floor)) {
            failed_pivot = d;
            return static_cast<std::ptrdiff_t>(j);
        }
        const double l = std::sqrt(d);
        rj[j] = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double* ri = a.data() + i * n;
            double s = ri[j];
            for (std::size_t k = 0; k < j; ++k) {
                s -= ri[k] * rj[k];
            }
            ri[j] = s / l;
        }
    }
    return -1;
}

// Solves L L' X = B in place for every column of B [n, c].
void cholesky_solve(const std::vector<double>& l, std::size_t n, Tensor& b) {
    const std::size_t c = b.dim(1);
    for (std::size_t col = 0; col < c; ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b.at(i, col);
            const double* li = l.data() + i * n;
            for (std::size_t k = 0; k < i; ++k) {
                s -= li[k] * b.at(k, col);
            }
            b.at(i, col) = s / li[i];
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = b.at(ii, col);
            for (std::size_t k = ii + 1; k < n; ++k) {
                s -= l[k * n + ii] * b.at(k, col);
            }
            b.at(ii, col) = s / l[ii * n + ii];
        }
    }
}

// (A'A + lambda I) W - A'Y, evaluated without forming A'A.
Tensor normal_residual(const Tensor& a, const Tensor& y, const Tensor& w, double lambda) {
    const ConstMatrixMap am = as_matrix(a), ym = as_matrix(y), wm = as_matrix(w);
    Tensor r(w.shape());
    MatrixMap rm = as_matrix(r);
    const RowMatrix fitted_minus_target = am * wm - ym;
    rm.noalias() = am.transpose() * fitted_minus_target;
    rm += lambda * wm;
    return r;
}

}  // namespace

Tensor ridge_fit(const Tensor& design, const Tensor& targets, double lambda, RidgeReport* report) {
    require_rank(design, 2, "ridge_fit design");
    require_rank(targets, 2, "ridge_fit targets");
    if (design.dim(0) != targets.dim(0)) {
        throw ShapeError("ridge_fit: design has " + std::to_string(design.dim(0)) +
                         " rows but targets have " + std::to_string(targets.dim(0)));
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("ridge_fit: lambda must be a non-negative finite number");
    }
    if (!design.all_finite() || !targets.all_finite()) {
        throw NumericalError("ridge_fit: design or targets contain non-finite values");
    }
    const std::size_t rows = design.dim(0), cols = design.dim(1), outs = targets.dim(1);
    const bool dual = rows < cols && lambda > 0.0;
    const std::size_t n = dual ? rows : cols;
    const ConstMatrixMap am = as_matrix(design);
    const ConstMatrixMap ym = as_matrix(targets);

    std::vector<double> gram(n * n);
    {
        MatrixMap g(gram.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        if (dual) {
            g.noalias() = am * am.transpose();
        } else {
            g.noalias() = am.transpose() * am;
        }
        g.diagonal().array() += lambda;
    }
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        max_diag = std::max(max_diag, gram[i * n + i]);
    }
    // With lambda > 0 the system is positive definite in exact arithmetic; at
    // lambda = 0 pivots below roundoff level mean A'A is singular.
    const double pivot_floor =
        lambda > 0.0 ? 0.0 : static_cast<double>(n) * std::numeric_limits<double>::epsilon() * max_diag;
    std::vector<double> factor = gram;
    double failed_pivot = 0.0;
    const std::ptrdiff_t bad = cholesky_in_place(factor, n, pivot_floor, failed_pivot);
    if (bad >= 0) {
        std::ostringstream msg;
        msg << "ridge_fit: " << (dual ? "AA'" : "A'A") << " + " << lambda << "I (" << n << "x" << n
            << ") is not numerically positive definite: pivot " << bad << " = " << failed_pivot
            << " against largest diagonal " << max_diag;
        if (lambda == 0.0) {
            msg << "; use lambda > 0";
        }
        throw NumericalError(msg.str());
    }

    Tensor rhs({n, outs});
    {
        MatrixMap r = as_matrix(rhs);
        if (dual) {
            r = ym;
        } else {
            r.noalias() = am.transpose() * ym;
        }
    }
    // Primal: W solves the system directly. Dual: alpha solves (AA' + lambda I) alpha = Y
    // and W = A' alpha.
    Tensor solution = rhs;
    cholesky_solve(factor, n, solution);
    auto weights_from = [&](const Tensor& sol) {
        if (!dual) {
            return sol;
        }
        Tensor w({cols, outs});
        as_matrix(w).noalias() = am.transpose() * as_matrix(sol);
        return w;
    };
    Tensor weights = weights_from(solution);

    Tensor aty({cols, outs});
    as_matrix(aty).noalias() = am.transpose() * ym;
    const double bound = 1e-8 * std::max(1.0, max_abs(aty));
    double res = max_abs(normal_residual(design, targets, weights, lambda));
    int steps = 0;
    // Iterative refinement against the system that was factored.
    while (res > bound && steps < 3) {
        Tensor correction({n, outs});
        {
            const ConstMatrixMap g(gram.data(), static_cast<Eigen::Index>(n),
                                   static_cast<Eigen::Index>(n));
            as_matrix(correction) = as_matrix(rhs) - g * as_matrix(solution);
        }
        cholesky_solve(factor, n, correction);
        as_matrix(solution) += as_matrix(correction);
        weights = weights_from(solution);
        res = max_abs(normal_residual(design, targets, weights, lambda));
        ++steps;
    }
    if (!(res <= bound)) {
        std::ostringstream msg;
        msg << "ridge_fit: normal-equation residual " << res << " exceeds bound " << bound
            << " (" << (dual ? "dual" : "primal") << " " << n << "x" << n
            << ", lambda = " << lambda << "); the system is too ill-conditioned";
        throw NumericalError(msg.str());
    }
    if (report != nullptr) {
        report->form = dual ? RidgeForm::dual : RidgeForm::primal;
        report->residual = res;
        report->residual_bound = bound;
        report->refinement_steps = steps;
    }
    return weights;
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
    if (labels.empty()) {
        throw ConfigError("one_hot: no labels");
    }
    Tensor y({labels.size(), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw ConfigError("one_hot: label " + std::to_string(labels[i]) + " outside [0, " +
                              std::to_string(num_classes) + ")");
        }
        y.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return y;
}

std::vector<int> argmax_rows(const Tensor& scores) {
    require_rank(scores, 2, "argmax_rows scores");
    std::vector<int> out(scores.dim(0), 0);
    for (std::size_t r = 0; r < scores.dim(0); ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < scores.dim(1); ++j) {
            if (scores.at(r, j) > scores.at(r, best)) {
                best = j;
            }
        }
        out[r] = static_cast<int>(best);
    }
    return out;
}

// ---- head --------------------------------------------------------------------

Tensor bls_design(const BlsHead& head, const Tensor& features) {
    require_rank(features, 2, "bls features");
    if (features.dim(1) != head.feature_dim) {
        throw ShapeError("bls: feature width " + std::to_string(features.dim(1)) +
                         " does not match head feature dimension " +
                         std::to_string(head.feature_dim));
    }
    const Tensor h = enhance(features, head.enhancement);
    const std::size_t n = features.dim(0), d = features.dim(1), m = h.dim(1);
    Tensor a({n, d + m});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(features.data().data() + r * d, d, a.data().data() + r * (d + m));
        std::copy_n(h.data().data() + r * m, m, a.data().data() + r * (d + m) + d);
    }
    return a;
}

BlsHead bls_fit(const Tensor& features, std::span<const int> labels, std::size_t num_classes,
                const BlsConfig& config, RidgeReport* report) {
    config.validate();
    require_rank(features, 2, "bls_fit features");
    if (features.dim(0) != labels.size()) {
        throw ShapeError("bls_fit: " + std::to_string(features.dim(0)) + " feature rows but " +
                         std::to_string(labels.size()) + " labels");
    }
    if (num_classes < 2) {
        throw ConfigError("bls_fit: at least 2 classes are required");
    }
    BlsHead head;
    head.config = config;
    head.feature_dim = features.dim(1);
    head.num_classes = num_classes;
    Rng rng(config.seed);
    head.enhancement = gen_enhancement_params(head.feature_dim, config, rng);
    const Tensor a = bls_design(head, features);
    head.output_weights = ridge_fit(a, one_hot(labels, num_classes), config.ridge, report);
    return head;
}

Prediction bls_predict(const BlsHead& head, const Tensor& features) {
    Prediction p;
    p.scores = matmul_rows(bls_design(head, features), head.output_weights);
    p.classes = argmax_rows(p.scores);
    return p;
}

Json bls_head_to_json(const BlsHead& head, bool store_enhancement) {
    Json j;
    j["kind"] = "bls_head";
    j["feature_dim"] = head.feature_dim;
    j["num_classes"] = head.num_classes;
    j["config"] = bls_config_to_json(head.config);
    j["store_enhancement"] = store_enhancement;
    if (store_enhancement) {
        j["enhancement_weights"] = tensor_to_json(head.enhancement.weights);
        j["enhancement_bias"] = tensor_to_json(head.enhancement.bias);
    }
    j["output_weights"] = tensor_to_json(head.output_weights);
    return j;
}

BlsHead bls_head_from_json(const Json& j) {
    BlsHead head;
    try {
        head.feature_dim = j.at("feature_dim").get<std::size_t>();
        head.num_classes = j.at("num_classes").get<std::size_t>();
        head.config = bls_config_from_json(j.at("config"));
        head.config.validate();
        if (j.value("store_enhancement", true)) {
            head.enhancement.weights = tensor_from_json(j.at("enhancement_weights"));
            head.enhancement.bias = tensor_from_json(j.at("enhancement_bias"));
        } else {
            Rng rng(head.config.seed);
            head.enhancement = gen_enhancement_params(head.feature_dim, head.config, rng);
        }
        head.output_weights = tensor_from_json(j.at("output_weights"));
    } catch (const Json::exception& e) {
        throw ParseError(std::string("bls head: ") + e.what());
    }
    const std::size_t m = head.config.enhancement_nodes;
    require_shape(head.enhancement.weights, {head.feature_dim, m}, "bls head enhancement weights");
    require_shape(head.enhancement.bias, {m}, "bls head enhancement bias");
    require_shape(head.output_weights, {head.feature_dim + m, head.num_classes},
                  "bls head output weights");
    return head;
}

// ---- flat baseline -----------------------------------------------------------

void FlatBlsConfig::validate() const {
    if (feature_nodes < 1 || enhancement_nodes < 1) {
        throw ConfigError("flat bls: feature_nodes and enhancement_nodes must be >= 1");
    }
    if (!(scale > 0.0) || !(ridge >= 0.0)) {
        throw ConfigError("flat bls: scale must be positive and ridge non-negative");
    }
}

Json flat_bls_config_to_json(const FlatBlsConfig& c) {
    Json j;
    j["feature_nodes"] = c.feature_nodes;
    j["enhancement_nodes"] = c.enhancement_nodes;
    j["scale"] = c.scale;
    j["ridge"] = c.ridge;
    j["seed"] = c.seed;
    return j;
}

FlatBlsConfig flat_bls_config_from_json(const Json& j) {
    FlatBlsConfig c;
    try {
        c.feature_nodes = j.value("feature_nodes", c.feature_nodes);
        c.enhancement_nodes = j.value("enhancement_nodes", c.enhancement_nodes);
        c.scale = j.value("scale", c.scale);
        c.ridge = j.value("ridge", c.ridge);
        c.seed = j.value("seed", c.seed);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("flat bls config: ") + e.what());
    }
    c.validate();
    return c;
}

Tensor flatten_clips(std::span<const ClipTensors> clips) {
    if (clips.empty()) {
        throw ShapeError("flatten_clips: no clips");
    }
    const Shape& s = clips.front().position.shape();
    require_rank(clips.front().position, 4, "flatten_clips position");
    const std::size_t persons = s[0], ch = s[1], frames = s[2], joints = s[3];
    const std::size_t image = frames * joints * ch;
    Tensor out({clips.size(), persons * 2 * image});
    for (std::size_t i = 0; i < clips.size(); ++i) {
        require_shape(clips[i].position, s, "flatten_clips position");
        require_shape(clips[i].motion, s, "flatten_clips motion");
        double* row = out.data().data() + i * persons * 2 * image;
        for (std::size_t p = 0; p < persons; ++p) {
            for (const Tensor* stream : {&clips[i].position, &clips[i].motion}) {
                // T x K x 3 image, channel fastest.
                for (std::size_t t = 0; t < frames; ++t) {
                    for (std::size_t k = 0; k < joints; ++k) {
                        for (std::size_t c = 0; c < ch; ++c) {
                            *row++ = stream->at(p, c, t, k);
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor flat_feature_nodes(const FlatBls& model, const Tensor& flat) {
    require_rank(flat, 2, "flat bls input");
    if (flat.dim(1) != model.input_width) {
        throw ShapeError("flat bls: input width " + std::to_string(flat.dim(1)) +
                         " does not match fitted width " + std::to_string(model.input_width));
    }
    Tensor f = matmul_rows(flat, model.feature_weights);
    for (std::size_t r = 0; r < f.dim(0); ++r) {
        for (std::size_t j = 0; j < f.dim(1); ++j) {
            f.at(r, j) += model.feature_bias[j];
        }
    }
    return f;
}

FlatBls flat_bls_fit(std::span<const ClipTensors> clips, std::span<const int> labels,
                     std::size_t num_classes, const FlatBlsConfig& config) {
    config.validate();
    const Tensor flat = flatten_clips(clips);
    FlatBls model;
    model.config = config;
    model.input_width = flat.dim(1);
    Rng rng(derive_seed(config.seed, 0x666c6174ULL));
    model.feature_weights = Tensor({model.input_width, config.feature_nodes});
    model.feature_bias = Tensor({config.feature_nodes});
    for (auto& v : model.feature_weights.data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    for (auto& v : model.feature_bias.data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    const Tensor features = flat_feature_nodes(model, flat);
    BlsConfig head_config{config.enhancement_nodes, config.scale, config.ridge,
                          derive_seed(config.seed, 0x656e68ULL)};
    model.head = bls_fit(features, labels, num_classes, head_config);
    return model;
}

Prediction flat_bls_predict(const FlatBls& model, std::span<const ClipTensors> clips) {
    return bls_predict(model.head, flat_feature_nodes(model, flatten_clips(clips)));
}

Json flat_bls_to_json(const FlatBls& model) {
    Json j;
    j["kind"] = "flat_bls";
    j["config"] = flat_bls_config_to_json(model.config);
    j["input_width"] = model.input_width;
    j["feature_weights"] = tensor_to_json(model.feature_weights);
    j["feature_bias"] = tensor_to_json(model.feature_bias);
    j["head"] = bls_head_to_json(model.head, false);
    return j;
}

FlatBls flat_bls_from_json(const Json& j) {
    FlatBls model;
    try {
        model.config = flat_bls_config_from_json(j.at("config"));
        model.input_width = j.at("input_width").get<std::size_t>();
        model.feature_weights = tensor_from_json(j.at("feature_weights"));
        model.feature_bias = tensor_from_json(j.at("feature_bias"));
        model.head = bls_head_from_json(j.at("head"));
    } catch (const Json::exception& e) {
        throw ParseError(std::string("flat bls: ") + e.what());
    }
    require_shape(model.feature_weights, {model.input_width, model.config.feature_nodes},
                  "flat bls feature weights");
    return model;
}

}  // namespace dwnet

#include "glognn/model.hpp"

#include <cmath>
#include <iostream>
#include <random>

#include <fmt/format.h>

#include "glognn/errors.hpp"

namespace glognn {

std::string_view to_string(Ablation a) {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::no_adjacency: return "no_adjacency";
        case Ablation::no_features: return "no_features";
        case Ablation::no_local_reg: return "no_local_reg";
    }
    return "none";
}

Ablation parse_ablation(std::string_view s) {
    if (s == "none") return Ablation::none;
    if (s == "no_adjacency" || s == "na") return Ablation::no_adjacency;
    if (s == "no_features" || s == "nf") return Ablation::no_features;
    if (s == "no_local_reg" || s == "nl") return Ablation::no_local_reg;
    throw ConfigError(fmt::format("unknown ablation '{}'", s));
}

void ModelConfig::validate() const {
    auto fail = [](std::string msg) { throw ConfigError(std::move(msg)); };
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail(fmt::format("alpha = {} not in [0, 1]", alpha));
    if (!(gamma >= 0.0 && gamma <= 1.0)) fail(fmt::format("gamma = {} not in [0, 1]", gamma));
    if (!(beta1 >= 0.0)) fail(fmt::format("beta1 = {} must be >= 0", beta1));
    if (!(beta2 >= 0.0)) fail(fmt::format("beta2 = {} must be >= 0", beta2));
    if (!(beta1 + beta2 > 0.0)) fail("beta1 + beta2 must be > 0");
    if (hops < 1) fail("K (hops) must be >= 1");
    if (layers < 1) fail("norm_layers must be >= 1");
    if (hidden_dim < 1) fail("hidden_dim must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(fmt::format("dropout = {} not in [0, 1)", dropout));
}

double ModelConfig::effective_alpha() const {
    switch (ablation) {
        case Ablation::no_adjacency: return 0.0;
        case Ablation::no_features: return 1.0;
        default: return alpha;
    }
}

// ---------------------------------------------------------------------------

std::vector<DenseMat*> ModelParams::tensors() {
    return {&mlp_x.w1, &mlp_x.b1, &mlp_x.w2, &mlp_x.b2, &mlp_a.w1, &mlp_a.b1,
            &mlp_a.w2, &mlp_a.b2, &lambdas,  &sigma};
}

std::vector<const DenseMat*> ModelParams::tensors() const {
    return {&mlp_x.w1, &mlp_x.b1, &mlp_x.w2, &mlp_x.b2, &mlp_a.w1, &mlp_a.b1,
            &mlp_a.w2, &mlp_a.b2, &lambdas,  &sigma};
}

const std::vector<std::string>& ModelParams::tensor_names() {
    static const std::vector<std::string> names{
        "mlp_x.w1", "mlp_x.b1", "mlp_x.w2", "mlp_x.b2", "mlp_a.w1",
        "mlp_a.b1", "mlp_a.w2", "mlp_a.b2", "lambdas",  "sigma"};
    return names;
}

namespace {

Mlp init_mlp(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
    auto uniform = [&rng](std::size_t rows, std::size_t cols, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        DenseMat m(rows, cols);
        for (double& v : m.values()) v = u(rng);
        return m;
    };
    Mlp m;
    m.w1 = uniform(in, hidden, in);
    m.b1 = uniform(1, hidden, in);
    m.w2 = uniform(hidden, out, hidden);
    m.b2 = uniform(1, out, hidden);
    return m;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::size_t num_features, std::size_t n,
                        int num_classes, std::uint64_t seed) {
    cfg.validate();
    if (num_classes < 1) throw DimensionError("init_params: need at least one class");
    const auto c = static_cast<std::size_t>(num_classes);
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.mlp_x = init_mlp(std::max<std::size_t>(num_features, 1), cfg.hidden_dim, c, rng);
    p.mlp_a = init_mlp(n, cfg.hidden_dim, c, rng);
    p.lambdas = DenseMat::filled(1, cfg.hops, 1.0 / static_cast<double>(cfg.hops));
    if (cfg.plusplus) p.sigma = DenseMat::filled(1, c, 1.0);
    return p;
}

std::vector<ad::Var> ParamVars::all() const {
    std::vector<ad::Var> v{x_w1, x_b1, x_w2, x_b2, a_w1, a_b1, a_w2, a_b2, lambdas};
    if (sigma) v.push_back(*sigma);
    return v;
}

ParamVars bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
    auto put = [&](const DenseMat& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
    ParamVars v;
    v.x_w1 = put(params.mlp_x.w1);
    v.x_b1 = put(params.mlp_x.b1);
    v.x_w2 = put(params.mlp_x.w2);
    v.x_b2 = put(params.mlp_x.b2);
    v.a_w1 = put(params.mlp_a.w1);
    v.a_b1 = put(params.mlp_a.b1);
    v.a_w2 = put(params.mlp_a.w2);
    v.a_b2 = put(params.mlp_a.b2);
    v.lambdas = put(params.lambdas);
    if (!params.sigma.empty()) v.sigma = put(params.sigma);
    return v;
}

// ---------------------------------------------------------------------------

namespace {

ad::Var mlp_head(ad::Tape& t, ad::Var first_layer, ad::Var b1, ad::Var w2, ad::Var b2,
                 const ModelConfig& cfg, const ForwardOptions& opts, std::uint64_t stream) {
    ad::Var hidden = ad::relu(t, ad::add_row(t, first_layer, b1));
    if (opts.training && cfg.dropout > 0.0) {
        hidden = ad::dropout(t, hidden, cfg.dropout, opts.dropout_seed * 2 + stream);
    }
    return ad::add_row(t, ad::matmul(t, hidden, w2), b2);
}

}  // namespace

LayerState build_h0(const GraphDataset& g, const ParamVars& p, const ModelConfig& cfg,
                    ad::Tape& tape, const ForwardOptions& opts) {
    if (p.x_w1.rows != g.num_features() && !(g.num_features() == 0 && p.x_w1.rows == 1)) {
        throw DimensionError(fmt::format("build_h0: mlp_x expects {} features, graph has {}",
                                         p.x_w1.rows, g.num_features()));
    }
    if (p.a_w1.rows != g.n) {
        throw DimensionError(fmt::format("build_h0: mlp_a expects n = {}, graph has {}", p.a_w1.rows, g.n));
    }
    const double alpha = cfg.effective_alpha();
    std::optional<ad::Var> hx, ha;
    if (alpha < 1.0) {
        hx = mlp_head(tape, ad::matmul_const(tape, g.features, p.x_w1), p.x_b1, p.x_w2, p.x_b2, cfg, opts, 0);
    }
    if (alpha > 0.0) {
        ha = mlp_head(tape, ad::spmm_const(tape, g.adjacency, p.a_w1), p.a_b1, p.a_w2, p.a_b2, cfg, opts, 1);
    }
    ad::Var h0;
    if (!ha) h0 = *hx;
    else if (!hx) h0 = *ha;
    else h0 = ad::add(tape, ad::scale_const(tape, *hx, 1.0 - alpha), ad::scale_const(tape, *ha, alpha));
    return {h0, h0};
}

namespace {

/// Shared accelerated step. `g` is H for the plain model and H Sigma for the
/// weighted variant:
///   Q = (1-gamma)/s G - (1-gamma)/s^2 G [I/(1-gamma)^2 + G^T G / s]^-1 G^T G
///   H' = (1-gamma) H (G^T Q) + beta2 sum_k lambda_k A_hat^k Q
///        - gamma (1-gamma) H0 (G^T Q) + gamma H0
/// with s = beta1 + beta2. Every product is evaluated right to left.
ad::Var propagate(ad::Tape& t, const LayerState& st, ad::Var g, const NormalizedGraph& ng,
                  const ParamVars& p, const ModelConfig& cfg) {
    const double gamma = cfg.gamma;
    const double omg = 1.0 - gamma;
    const double s = cfg.beta1 + cfg.beta2;
    const std::size_t c = g.cols;

    const ad::Var gt = ad::transpose(t, g);
    const ad::Var gtg = ad::matmul(t, gt, g);
    const ad::Var inner = ad::add(t, t.constant(scale(DenseMat::identity(c), 1.0 / (omg * omg))),
                                  ad::scale_const(t, gtg, 1.0 / s));
    const ad::Var inv = ad::small_inverse(t, inner);
    const ad::Var correction = ad::matmul(t, g, ad::matmul(t, inv, gtg));
    const ad::Var q = ad::sub(t, ad::scale_const(t, g, omg / s), ad::scale_const(t, correction, omg / (s * s)));

    const ad::Var gtq = ad::matmul(t, gt, q);
    ad::Var out = ad::scale_const(t, ad::matmul(t, st.h, gtq), omg);
    if (gamma != 0.0) {
        out = ad::sub(t, out, ad::scale_const(t, ad::matmul(t, st.h0, gtq), gamma * omg));
    }
    if (cfg.local_regularization() && cfg.beta2 != 0.0) {
        std::optional<ad::Var> reg;
        ad::Var power = q;
        for (std::size_t k = 0; k < cfg.hops; ++k) {
            power = ad::spmm_const(t, ng.a_hat, power);
            const ad::Var term = ad::scale_var(t, ad::entry(t, p.lambdas, 0, k), power);
            reg = reg ? ad::add(t, *reg, term) : term;
        }
        out = ad::add(t, out, ad::scale_const(t, *reg, cfg.beta2));
    }
    if (gamma != 0.0) out = ad::add(t, out, ad::scale_const(t, st.h0, gamma));
    return out;
}

std::vector<double> row_values(const ad::Tape& t, ad::Var v) {
    const auto r = t.value(v).row(0);
    return {r.begin(), r.end()};
}

LayerState fast_step(const LayerState& state, const NormalizedGraph& ng, const ParamVars& p,
                     const ModelConfig& cfg, ad::Tape& tape, bool weighted) {
    if (state.h.rows != ng.n() || state.h0.rows != ng.n() || state.h.cols != state.h0.cols) {
        throw DimensionError("layer update: H and H0 must both be n x c");
    }
    if (p.lambdas.cols != cfg.hops) {
        throw DimensionError(fmt::format("layer update: {} lambdas for K = {}", p.lambdas.cols, cfg.hops));
    }
    // gamma = 1 drops the propagation term entirely.
    if (cfg.gamma == 1.0) return {state.h0, state.h0};

    const ad::Var g = weighted ? ad::scale_cols(tape, state.h, *p.sigma) : state.h;
    try {
        return {state.h0, propagate(tape, state, g, ng, p, cfg)};
    } catch (const SingularMatrixError& e) {
        if (ng.n() > cfg.naive_cap) throw;
        std::cerr << "warning: " << e.what() << "; falling back to the dense path\n";
        const auto lambdas = row_values(tape, p.lambdas);
        const auto sigma = weighted ? row_values(tape, *p.sigma) : std::vector<double>{};
        DenseMat next = layer_update_naive(tape.value(state.h), tape.value(state.h0), ng, lambdas, sigma, cfg);
        return {state.h0, tape.constant(std::move(next))};
    }
}

}  // namespace

LayerState layer_update_fast(const LayerState& state, const NormalizedGraph& ng, const ParamVars& p,
                             const ModelConfig& cfg, ad::Tape& tape) {
    return fast_step(state, ng, p, cfg, tape, false);
}

LayerState layer_update_fast_plusplus(const LayerState& state, const NormalizedGraph& ng,
                                      const ParamVars& p, const ModelConfig& cfg, ad::Tape& tape) {
    if (!p.sigma) throw DimensionError("layer_update_fast_plusplus: sigma not bound");
    if (p.sigma->cols != state.h.cols) throw DimensionError("layer_update_fast_plusplus: sigma must be 1 x c");
    return fast_step(state, ng, p, cfg, tape, true);
}

ad::Var forward(const GraphDataset& g, const NormalizedGraph& ng, const ParamVars& p,
                const ModelConfig& cfg, ad::Tape& tape, const ForwardOptions& opts) {
    LayerState st = build_h0(g, p, cfg, tape, opts);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        st = cfg.plusplus ? layer_update_fast_plusplus(st, ng, p, cfg, tape)
                          : layer_update_fast(st, ng, p, cfg, tape);
    }
    return st.h;
}

ForwardTrace evaluate(const GraphDataset& g, const NormalizedGraph& ng, const ModelParams& params,
                      const ModelConfig& cfg) {
    ad::Tape tape;
    const ParamVars p = bind(tape, params, false);
    LayerState st = build_h0(g, p, cfg, tape);
    ForwardTrace trace;
    trace.h.push_back(tape.value(st.h));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        st = cfg.plusplus ? layer_update_fast_plusplus(st, ng, p, cfg, tape)
                          : layer_update_fast(st, ng, p, cfg, tape);
        trace.h.push_back(tape.value(st.h));
    }
    return trace;
}

// ---------------------------------------------------------------------------

namespace {

void check_naive_inputs(const DenseMat& h, const DenseMat& h0, const NormalizedGraph& ng,
                        std::span<const double> lambdas, std::span<const double> sigma,
                        const ModelConfig& cfg) {
    if (ng.n() > cfg.naive_cap) {
        throw DimensionError(fmt::format(
            "dense path refused: n = {} exceeds naive_cap = {} (raise naive_cap to allow it)", ng.n(),
            cfg.naive_cap));
    }
    if (h.rows() != ng.n() || !h.same_shape(h0)) throw DimensionError("dense path: H and H0 must both be n x c");
    if (lambdas.size() != cfg.hops) throw DimensionError("dense path: need K lambdas");
    if (!sigma.empty() && sigma.size() != h.cols()) throw DimensionError("dense path: sigma must have c entries");
}

DenseMat diag(std::span<const double> d) {
    DenseMat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

/// H Sigma, or H when sigma is empty.
DenseMat weighted(const DenseMat& h, std::span<const double> sigma) {
    return sigma.empty() ? h : matmul(h, diag(sigma));
}

}  // namespace

DenseMat dense_reg_target(const NormalizedGraph& ng, std::span<const double> lambdas,
                          const ModelConfig& cfg) {
    DenseMat target(ng.n(), ng.n());
    if (!cfg.local_regularization()) return target;
    const auto powers = dense_ahat_powers(ng, lambdas.size());
    for (std::size_t k = 0; k < powers.size(); ++k) target = axpy(target, lambdas[k], powers[k]);
    return target;
}

DenseMat solve_z_naive(const DenseMat& h, const DenseMat& h0, const NormalizedGraph& ng,
                       std::span<const double> lambdas, std::span<const double> sigma,
                       const ModelConfig& cfg) {
    check_naive_inputs(h, h0, ng, lambdas, sigma, cfg);
    const std::size_t n = ng.n();
    const double gamma = cfg.gamma;
    const double omg = 1.0 - gamma;
    const double s = cfg.beta1 + cfg.beta2;
    const DenseMat ht = transpose(h);

    // Plain:    [(1-g) H H^T + b2 P - g(1-g) H0 H^T] [(1-g)^2 H H^T + s I]^-1
    // Weighted: [(1-g) H S H^T + b2 P - g(1-g) H0 S H^T] [(1-g)^2 H S S H^T + s I]^-1
    DenseMat cross_h, cross_h0, gram;
    if (sigma.empty()) {
        cross_h = matmul(h, ht);
        cross_h0 = matmul(h0, ht);
        gram = cross_h;
    } else {
        const DenseMat sd = diag(sigma);
        cross_h = matmul(h, matmul(sd, ht));
        cross_h0 = matmul(h0, matmul(sd, ht));
        gram = matmul(h, matmul(sd, matmul(sd, ht)));
    }
    DenseMat rhs = scale(cross_h, omg);
    rhs = axpy(rhs, cfg.beta2, dense_reg_target(ng, lambdas, cfg));
    rhs = axpy(rhs, -gamma * omg, cross_h0);
    DenseMat system = scale(gram, omg * omg);
    for (std::size_t i = 0; i < n; ++i) system(i, i) += s;
    return matmul(rhs, spd_inverse(system));
}

DenseMat layer_update_naive(const DenseMat& h, const DenseMat& h0, const NormalizedGraph& ng,
                            std::span<const double> lambdas, std::span<const double> sigma,
                            const ModelConfig& cfg) {
    check_naive_inputs(h, h0, ng, lambdas, sigma, cfg);
    if (cfg.gamma == 1.0) return h0;
    const DenseMat z = solve_z_naive(h, h0, ng, lambdas, sigma, cfg);
    return axpy(scale(matmul(z, weighted(h, sigma)), 1.0 - cfg.gamma), cfg.gamma, h0);
}

namespace {

DenseMat residual(const DenseMat& z, const DenseMat& h, const DenseMat& h0, std::span<const double> sigma,
                  const ModelConfig& cfg) {
    return axpy(axpy(h, -(1.0 - cfg.gamma), matmul(z, weighted(h, sigma))), -cfg.gamma, h0);
}

}  // namespace

double layer_objective(const DenseMat& z, const DenseMat& h, const DenseMat& h0, const DenseMat& target,
                       std::span<const double> sigma, const ModelConfig& cfg) {
    const double r = frob_norm(residual(z, h, h0, sigma, cfg));
    const double zn = frob_norm(z);
    const double dz = frob_norm(sub(z, target));
    return r * r + cfg.beta1 * zn * zn + cfg.beta2 * dz * dz;
}

DenseMat layer_objective_gradient(const DenseMat& z, const DenseMat& h, const DenseMat& h0,
                                  const DenseMat& target, std::span<const double> sigma,
                                  const ModelConfig& cfg) {
    const DenseMat r = residual(z, h, h0, sigma, cfg);
    DenseMat grad = scale(matmul(r, transpose(weighted(h, sigma))), -2.0 * (1.0 - cfg.gamma));
    grad = axpy(grad, 2.0 * cfg.beta1, z);
    return axpy(grad, 2.0 * cfg.beta2, sub(z, target));
}

}  // namespace glognn

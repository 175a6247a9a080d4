#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glognn/autodiff.hpp"
#include "glognn/graph.hpp"
#include "glognn/linalg.hpp"

namespace glognn {

enum class Ablation { none, no_adjacency, no_features, no_local_reg };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view s);

struct ModelConfig {
    double alpha = 0.5;   // weight of the adjacency embedding in H0
    double gamma = 0.5;   // skip-connection weight of H0
    double beta1 = 1.0;   // ridge weight on Z
    double beta2 = 1.0;   // weight pulling Z towards sum_k lambda_k A_hat^k
    std::size_t hops = 1;      // K
    std::size_t layers = 1;    // propagation layers ("norm_layers")
    std::size_t hidden_dim = 64;
    double dropout = 0.0;
    bool plusplus = false;
    Ablation ablation = Ablation::none;
    /// Largest n for which the dense O(n^3) path may run.
    std::size_t naive_cap = 2000;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
    /// alpha after applying the no_adjacency / no_features ablations.
    double effective_alpha() const;
    bool local_regularization() const { return ablation != Ablation::no_local_reg; }
};

/// Two-layer perceptron: in -> hidden (ReLU, dropout) -> out.
struct Mlp {
    DenseMat w1, b1, w2, b2;
};

struct ModelParams {
    Mlp mlp_x;        // features -> classes
    Mlp mlp_a;        // adjacency rows -> classes
    DenseMat lambdas; // 1 x K
    DenseMat sigma;   // 1 x c, empty unless plusplus

    /// Fixed declaration order shared by the optimizer and the blob format.
    std::vector<DenseMat*> tensors();
    std::vector<const DenseMat*> tensors() const;
    static const std::vector<std::string>& tensor_names();
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases,
/// lambda_k = 1/K, sigma = 1.
ModelParams init_params(const ModelConfig& cfg, std::size_t num_features, std::size_t n,
                        int num_classes, std::uint64_t seed);

struct ParamVars {
    ad::Var x_w1, x_b1, x_w2, x_b2;
    ad::Var a_w1, a_b1, a_w2, a_b2;
    ad::Var lambdas;
    std::optional<ad::Var> sigma;

    /// Same order as ModelParams::tensors(); absent sigma is skipped.
    std::vector<ad::Var> all() const;
};

/// Puts every tensor on the tape, as trainable leaves or as constants.
ParamVars bind(ad::Tape& tape, const ModelParams& params, bool trainable);

struct LayerState {
    ad::Var h0;
    ad::Var h;
};

struct ForwardOptions {
    bool training = false;  // enables dropout
    std::uint64_t dropout_seed = 0;
};

/// H0 = (1 - alpha) MLP_x(X) + alpha MLP_a(A).
LayerState build_h0(const GraphDataset& g, const ParamVars& p, const ModelConfig& cfg,
                    ad::Tape& tape, const ForwardOptions& opts = {});

/// One accelerated propagation step. Never forms an n x n matrix; the only
/// inverse is c x c.
LayerState layer_update_fast(const LayerState& state, const NormalizedGraph& ng, const ParamVars& p,
                             const ModelConfig& cfg, ad::Tape& tape);

/// Accelerated step of the variant with the learnable diagonal feature
/// weighting Sigma. Equivalent to layer_update_fast with H replaced by
/// H Sigma inside the inverse and the projections.
LayerState layer_update_fast_plusplus(const LayerState& state, const NormalizedGraph& ng,
                                      const ParamVars& p, const ModelConfig& cfg, ad::Tape& tape);

/// Returns H^(L), the pre-softmax logits.
ad::Var forward(const GraphDataset& g, const NormalizedGraph& ng, const ParamVars& p,
                const ModelConfig& cfg, ad::Tape& tape, const ForwardOptions& opts = {});

/// H^(0) .. H^(L) evaluated without dropout.
struct ForwardTrace {
    std::vector<DenseMat> h;  // h[0] = H0, h[L] = logits
};
ForwardTrace evaluate(const GraphDataset& g, const NormalizedGraph& ng, const ModelParams& params,
                      const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Dense reference path. O(n^3); guarded by cfg.naive_cap.

/// The regularization target sum_k lambda_k A_hat^k as a dense matrix
/// (zero under no_local_reg).
DenseMat dense_reg_target(const NormalizedGraph& ng, std::span<const double> lambdas,
                          const ModelConfig& cfg);

/// Closed-form minimizer Z* of the layer objective. `sigma` empty selects the
/// plain objective; otherwise the diagonal-weighted one.
DenseMat solve_z_naive(const DenseMat& h, const DenseMat& h0, const NormalizedGraph& ng,
                       std::span<const double> lambdas, std::span<const double> sigma,
                       const ModelConfig& cfg);

/// (1 - gamma) Z* H [Sigma] + gamma H0 with Z* from solve_z_naive.
DenseMat layer_update_naive(const DenseMat& h, const DenseMat& h0, const NormalizedGraph& ng,
                            std::span<const double> lambdas, std::span<const double> sigma,
                            const ModelConfig& cfg);

/// Layer objective
///   ||H - (1-gamma) Z H [Sigma] - gamma H0||^2 + beta1 ||Z||^2 + beta2 ||Z - P||^2
/// for a given regularization target P.
double layer_objective(const DenseMat& z, const DenseMat& h, const DenseMat& h0, const DenseMat& target,
                       std::span<const double> sigma, const ModelConfig& cfg);

/// Analytic gradient of layer_objective with respect to Z.
DenseMat layer_objective_gradient(const DenseMat& z, const DenseMat& h, const DenseMat& h0,
                                  const DenseMat& target, std::span<const double> sigma,
                                  const ModelConfig& cfg);

}  // namespace glognn

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "glognn/graph.hpp"
#include "glognn/linalg.hpp"
#include "glognn/model.hpp"

namespace glognn {

enum class Optimizer { adam, adamw };
enum class Metric { accuracy, auc };

std::string_view to_string(Optimizer o);
std::string_view to_string(Metric m);

struct TrainConfig {
    double lr = 0.01;
    double weight_decay = 0.0;
    std::size_t patience = 40;
    std::size_t max_epochs = 500;
    Optimizer optimizer = Optimizer::adam;
    std::uint64_t seed = 0;
    /// auc is only meaningful for two classes.
    Metric metric = Metric::accuracy;

    void validate() const;
};

/// Ordered key/value record of every hyperparameter in effect.
using ConfigRecord = std::vector<std::pair<std::string, std::string>>;

struct TrialResult {
    std::size_t split_id = 0;
    double best_val_metric = 0.0;
    double test_metric = 0.0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double wall_time_s = 0.0;
    ConfigRecord config_used;
};

struct TrainedModel {
    ModelParams params;  // parameters from the best validation epoch
    TrialResult result;
};

// ---------------------------------------------------------------------------
// Optimizers

struct AdamOptions {
    double lr = 0.01;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<DenseMat> m;
    std::vector<DenseMat> v;
    std::size_t step = 0;
};

/// Adam with L2 regularization folded into the gradient (g + wd * theta).
void adam_step(std::span<DenseMat* const> params, std::span<const DenseMat> grads, AdamState& state,
               const AdamOptions& opts);
/// AdamW: theta <- theta - lr * wd * theta, then the Adam update.
void adamw_step(std::span<DenseMat* const> params, std::span<const DenseMat> grads, AdamState& state,
                const AdamOptions& opts);

// ---------------------------------------------------------------------------
// Metrics

/// Row-argmax accuracy over `mask` (ties resolve to the lowest class).
double accuracy(const DenseMat& logits, std::span<const int> labels, std::span<const std::size_t> mask);

/// Mann-Whitney AUC with average ranks for ties, positives are label 1.
double roc_auc_binary(std::span<const double> scores, std::span<const int> labels,
                      std::span<const std::size_t> mask);

double masked_cross_entropy(const DenseMat& logits, std::span<const int> labels,
                            std::span<const std::size_t> mask);

/// accuracy or AUC (on softmax probability of class 1) per cfg.metric.
double evaluate_metric(const DenseMat& logits, std::span<const int> labels,
                       std::span<const std::size_t> mask, Metric metric);

// ---------------------------------------------------------------------------

/// Full-batch training on one split with early stopping on the validation
/// metric. Deterministic for a fixed seed.
TrainedModel train_one(const GraphDataset& g, const NormalizedGraph& ng, const SplitSet& split,
                       const ModelConfig& model_cfg, const TrainConfig& train_cfg);

}  // namespace glognn

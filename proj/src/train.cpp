#include "glognn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "glognn/config.hpp"
#include "glognn/errors.hpp"

namespace glognn {

std::string_view to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "adamw"; }
std::string_view to_string(Metric m) { return m == Metric::accuracy ? "accuracy" : "auc"; }

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw ConfigError(fmt::format("lr = {} must be >= 0", lr));
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (patience < 1) throw ConfigError("early_stopping patience must be >= 1");
}

// ---------------------------------------------------------------------------

namespace {

void adam_core(std::span<DenseMat* const> params, std::span<const DenseMat> grads, AdamState& state,
               const AdamOptions& o, bool decoupled) {
    if (params.size() != grads.size()) throw DimensionError("adam: one gradient per parameter required");
    if (state.m.empty()) {
        for (const DenseMat* p : params) {
            state.m.emplace_back(p->rows(), p->cols());
            state.v.emplace_back(p->rows(), p->cols());
        }
    }
    if (state.m.size() != params.size()) throw DimensionError("adam: state does not match parameters");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(o.beta1, t);
    const double bc2 = 1.0 - std::pow(o.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        DenseMat& p = *params[k];
        if (!p.same_shape(grads[k]) || !p.same_shape(state.m[k])) {
            throw DimensionError(fmt::format("adam: shape mismatch for parameter {}", k));
        }
        auto pv = p.values();
        const auto gv = grads[k].values();
        auto mv = state.m[k].values();
        auto vv = state.v[k].values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            double g = gv[i];
            if (decoupled) pv[i] -= o.lr * o.weight_decay * pv[i];
            else g += o.weight_decay * pv[i];
            mv[i] = o.beta1 * mv[i] + (1.0 - o.beta1) * g;
            vv[i] = o.beta2 * vv[i] + (1.0 - o.beta2) * g * g;
            const double mhat = mv[i] / bc1;
            const double vhat = vv[i] / bc2;
            pv[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
        }
    }
}

}  // namespace

void adam_step(std::span<DenseMat* const> params, std::span<const DenseMat> grads, AdamState& state,
               const AdamOptions& opts) {
    adam_core(params, grads, state, opts, false);
}

void adamw_step(std::span<DenseMat* const> params, std::span<const DenseMat> grads, AdamState& state,
                const AdamOptions& opts) {
    adam_core(params, grads, state, opts, true);
}

// ---------------------------------------------------------------------------

double accuracy(const DenseMat& logits, std::span<const int> labels, std::span<const std::size_t> mask) {
    if (mask.empty()) throw DimensionError("accuracy: empty mask");
    std::size_t hit = 0;
    for (std::size_t i : mask) {
        const auto r = logits.row(i);
        const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
        hit += (static_cast<int>(best) == labels[i]);
    }
    return static_cast<double>(hit) / static_cast<double>(mask.size());
}

double roc_auc_binary(std::span<const double> scores, std::span<const int> labels,
                      std::span<const std::size_t> mask) {
    if (mask.empty()) throw DimensionError("roc_auc_binary: empty mask");
    std::vector<std::size_t> idx(mask.begin(), mask.end());
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < idx.size();) {
        std::size_t e = k;
        while (e < idx.size() && scores[idx[e]] == scores[idx[k]]) ++e;
        const double avg_rank = 0.5 * static_cast<double>(k + 1 + e);  // ranks k+1 .. e
        for (std::size_t t = k; t < e; ++t) {
            if (labels[idx[t]] == 1) {
                pos_rank_sum += avg_rank;
                ++pos;
            }
        }
        k = e;
    }
    const std::size_t neg = idx.size() - pos;
    if (pos == 0 || neg == 0) throw DimensionError("roc_auc_binary: mask must contain both classes");
    const double p = static_cast<double>(pos);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double masked_cross_entropy(const DenseMat& logits, std::span<const int> labels,
                            std::span<const std::size_t> mask) {
    double loss = 0.0;
    for (std::size_t i : mask) {
        const auto r = logits.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double lse = 0.0;
        for (double v : r) lse += std::exp(v - mx);
        loss -= r[static_cast<std::size_t>(labels[i])] - mx - std::log(lse);
    }
    return loss / static_cast<double>(mask.size());
}

double evaluate_metric(const DenseMat& logits, std::span<const int> labels,
                       std::span<const std::size_t> mask, Metric metric) {
    if (metric == Metric::accuracy) return accuracy(logits, labels, mask);
    if (logits.cols() != 2) throw ConfigError("metric = auc requires exactly two classes");
    std::vector<double> scores(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double a = logits(i, 0), b = logits(i, 1);
        scores[i] = 1.0 / (1.0 + std::exp(a - b));
    }
    return roc_auc_binary(scores, labels, mask);
}

// ---------------------------------------------------------------------------

TrainedModel train_one(const GraphDataset& g, const NormalizedGraph& ng, const SplitSet& split,
                       const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
    model_cfg.validate();
    train_cfg.validate();
    validate_split(split, g.n);
    const auto start = std::chrono::steady_clock::now();

    ModelParams params = init_params(model_cfg, g.num_features(), g.n, g.num_classes, train_cfg.seed);
    const AdamOptions opts{train_cfg.lr, train_cfg.weight_decay};
    AdamState state;

    auto score = [&](const ModelParams& p, const std::vector<std::size_t>& mask, double* loss) {
        const DenseMat logits = evaluate(g, ng, p, model_cfg).h.back();
        if (loss) *loss = masked_cross_entropy(logits, g.labels, mask);
        return evaluate_metric(logits, g.labels, mask, train_cfg.metric);
    };

    ModelParams best = params;
    double best_loss = 0.0;
    double best_val = score(params, split.val, &best_loss);
    std::size_t best_epoch = 0;
    std::size_t epoch = 0;

    while (epoch < train_cfg.max_epochs) {
        ++epoch;
        std::vector<DenseMat> grads;
        try {
            ad::Tape tape;
            const ParamVars vars = bind(tape, params, true);
            const ForwardOptions fo{true, train_cfg.seed * 1000003ULL + epoch};
            const ad::Var logits = forward(g, ng, vars, model_cfg, tape, fo);
            const ad::Var loss = ad::cross_entropy_masked(tape, logits, g.labels, split.train);
            const ad::Gradients table = tape.backward(loss);
            for (ad::Var v : vars.all()) grads.push_back(table.of(v));
        } catch (const NumericalError& e) {
            throw NumericalError(fmt::format("training diverged at epoch {}: {}", epoch, e.what()));
        }

        std::vector<DenseMat*> tensors;
        for (DenseMat* t : params.tensors())
            if (!t->empty()) tensors.push_back(t);
        if (train_cfg.optimizer == Optimizer::adam) adam_step(tensors, grads, state, opts);
        else adamw_step(tensors, grads, state, opts);

        double val_loss = 0.0;
        double val = 0.0;
        try {
            val = score(params, split.val, &val_loss);
        } catch (const NumericalError& e) {
            throw NumericalError(fmt::format("training diverged at epoch {}: {}", epoch, e.what()));
        }
        if (!std::isfinite(val_loss)) {
            throw NumericalError(fmt::format("training diverged at epoch {}: validation loss is NaN", epoch));
        }
        // Accuracy plateaus are common on small graphs; equal accuracy with a
        // lower validation loss still counts as progress.
        if (val > best_val || (val == best_val && val_loss < best_loss)) {
            best_val = val;
            best_loss = val_loss;
            best = params;
            best_epoch = epoch;
        } else if (epoch - best_epoch >= train_cfg.patience) {
            break;
        }
    }

    TrainedModel out;
    out.result.split_id = split.split_id;
    out.result.best_val_metric = best_val;
    out.result.test_metric = score(best, split.test, nullptr);
    out.result.epochs_run = epoch;
    out.result.best_epoch = best_epoch;
    out.result.config_used = to_record(model_cfg, train_cfg);
    out.result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.params = std::move(best);
    return out;
}

}  // namespace glognn

#include "glognn/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "glognn/errors.hpp"

namespace glognn {

RunConfig lattice_config(const RunConfig& base, const Lattice& lattice, std::size_t index) {
    RunConfig cfg = base;
    for (const auto& [k, v] : lattice_point(lattice, index)) apply_setting(cfg, k, v);
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

std::size_t select_best(const std::vector<SweepPoint>& points) {
    if (points.empty()) throw ConfigError("grid search: empty lattice");
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const auto& a = points[i];
        const auto& b = points[best];
        if (a.mean_val > b.mean_val) best = i;
        else if (a.mean_val == b.mean_val) {
            if (a.mean_epochs < b.mean_epochs ||
                (a.mean_epochs == b.mean_epochs && a.lattice_index < b.lattice_index)) {
                best = i;
            }
        }
    }
    return best;
}

SweepResult grid_search(const GraphDataset& g, const NormalizedGraph& ng, const std::vector<SplitSet>& splits,
                        const RunConfig& base, const Lattice& lattice, const SweepOptions& opts) {
    if (splits.empty()) throw DataError("grid search: no splits");
    const std::size_t total = lattice_size(lattice);
    if (total == 0) throw ConfigError("grid search: empty lattice");

    std::vector<std::size_t> indices;
    if (opts.sample && *opts.sample < total) {
        std::vector<std::size_t> all(total);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::mt19937_64 rng(opts.sample_seed);
        std::sample(all.begin(), all.end(), std::back_inserter(indices), *opts.sample, rng);
    } else {
        if (total > opts.max_points && !opts.sample) {
            throw ConfigError(fmt::format("grid has {} points (limit {}); pass --sample N to subsample it", total,
                                          opts.max_points));
        }
        indices.resize(total);
        std::iota(indices.begin(), indices.end(), std::size_t{0});
    }

    SweepResult out;
    out.points.resize(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        out.points[k].lattice_index = indices[k];
        out.points[k].config = lattice_config(base, lattice, indices[k]);
    }

    std::atomic<std::size_t> next{0};
    std::size_t done = 0;
    std::mutex mu;
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= out.points.size()) return;
            {
                std::lock_guard lock(mu);
                if (failure) return;
            }
            SweepPoint& pt = out.points[k];
            try {
                for (const auto& split : splits) {
                    pt.trials.push_back(train_one(g, ng, split, pt.config.model, pt.config.train).result);
                }
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                return;
            }
            double v = 0.0, t = 0.0, e = 0.0;
            for (const auto& tr : pt.trials) {
                v += tr.best_val_metric;
                t += tr.test_metric;
                e += static_cast<double>(tr.epochs_run);
            }
            const double m = static_cast<double>(pt.trials.size());
            pt.mean_val = v / m;
            pt.mean_test = t / m;
            pt.mean_epochs = e / m;
            std::lock_guard lock(mu);
            ++done;
            if (opts.progress) opts.progress(done, out.points.size());
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, out.points.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    out.best = select_best(out.points);
    return out;
}

}  // namespace glognn

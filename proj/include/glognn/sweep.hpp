#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "glognn/config.hpp"
#include "glognn/graph.hpp"
#include "glognn/train.hpp"

namespace glognn {

struct SweepOptions {
    std::size_t jobs = 1;
    /// Lattices above this size are refused unless `sample` is set.
    std::size_t max_points = 10000;
    /// Evaluate a seeded random subset of this many lattice points.
    std::optional<std::size_t> sample;
    std::uint64_t sample_seed = 0;
    /// Called after each finished point (from worker threads, serialized).
    std::function<void(std::size_t done, std::size_t total)> progress;
};

struct SweepPoint {
    std::size_t lattice_index = 0;
    RunConfig config;
    std::vector<TrialResult> trials;  // one per split, in split order
    double mean_val = 0.0;
    double mean_test = 0.0;
    double mean_epochs = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;  // ascending lattice index
    std::size_t best = 0;            // position in `points`
};

/// Config for one lattice point applied over `base`.
RunConfig lattice_config(const RunConfig& base, const Lattice& lattice, std::size_t index);

/// Index of the winner: highest mean validation metric, then fewer mean
/// epochs, then lowest lattice index.
std::size_t select_best(const std::vector<SweepPoint>& points);

/// Runs every (point, split) trial and selects the best point.
SweepResult grid_search(const GraphDataset& g, const NormalizedGraph& ng, const std::vector<SplitSet>& splits,
                        const RunConfig& base, const Lattice& lattice, const SweepOptions& opts = {});

}  // namespace glognn

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "glognn/model.hpp"
#include "glognn/train.hpp"

namespace glognn {

/// Everything a training run needs besides data.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

/// Applies one `key = value` setting. Unknown keys and unparsable values
/// throw ConfigError.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Parses flat `key = value` text; `#` starts a comment.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& file, RunConfig base = {});

/// Canonical record in a fixed key order (also the results.csv columns).
ConfigRecord to_record(const ModelConfig& model, const TrainConfig& train);
inline ConfigRecord to_record(const RunConfig& cfg) { return to_record(cfg.model, cfg.train); }

/// Serializes back to config text that parse_config reads.
std::string to_config_text(const RunConfig& cfg);

/// One grid dimension: a config key and the values it takes.
struct GridAxis {
    std::string key;
    std::vector<std::string> values;
};
using Lattice = std::vector<GridAxis>;

/// `key = v1, v2, ...` per line.
Lattice parse_grid(std::string_view text);
Lattice load_grid(const std::filesystem::path& file);

/// Number of points in the lattice.
std::size_t lattice_size(const Lattice& lattice);

/// Settings of the point with the given lexicographic index (first axis
/// varies slowest).
std::vector<std::pair<std::string, std::string>> lattice_point(const Lattice& lattice, std::size_t index);

/// Search space for the small datasets. Continuous ranges are discretized:
/// dropout, gamma on [0, 0.9] and alpha on [0, 1] in steps of 0.1; K = 1..6.
Lattice paper_small_grid();
/// Search space for the large datasets (optimizer set to adamw).
Lattice paper_large_grid();

}  // namespace glognn

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glognn/config.hpp"
#include "glognn/graph.hpp"
#include "glognn/model.hpp"
#include "glognn/train.hpp"

namespace glognn {

inline constexpr std::uint32_t kBlobVersion = 1;
inline constexpr const char* kArtifactVersion = "1.0.0";

/// A trained model as stored on disk: the architecture-defining
/// hyperparameters plus every tensor.
struct ModelBlob {
    ModelConfig config;
    ModelParams params;
};

/// Layout is documented in docs/param_blob.md.
void write_blob(const std::filesystem::path& file, const ModelConfig& cfg, const ModelParams& params);
ModelBlob read_blob(const std::filesystem::path& file);

/// One row per trial: dataset, split_id, every hyperparameter, val, test,
/// epochs, wall_time_s.
void write_results_csv(const std::filesystem::path& file, const std::string& dataset,
                       const std::vector<TrialResult>& trials);

/// FNV-1a 64 over the dataset TSV files in a fixed order, hex encoded.
std::string dataset_digest(const std::filesystem::path& data_dir);

struct Manifest {
    std::string command_line;
    std::string config_text;
    std::uint64_t seed = 0;
    std::string dataset_digest;
};

/// Writes manifest.json with status "started".
void write_manifest_started(const std::filesystem::path& out_dir, const Manifest& m);
/// Rewrites it with status "completed" (or "failed") and a finish time.
void finish_manifest(const std::filesystem::path& out_dir, const std::string& status);

/// Node order by (label, id).
std::vector<std::size_t> label_order(const std::vector<int>& labels);

/// Rows (and for square matrices, columns) reordered by label. The header
/// row names the columns: class ids for n x c, sorted node ids for n x n.
void write_label_sorted_csv(const std::filesystem::path& file, const DenseMat& m, const std::vector<int>& labels);

}  // namespace glognn

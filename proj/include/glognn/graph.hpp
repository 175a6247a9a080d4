#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "glognn/linalg.hpp"

namespace glognn {

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected, unweighted node-classification graph.
struct GraphDataset {
    std::string name;
    std::size_t n = 0;
    /// Canonical undirected edges, u < v, sorted, unique.
    std::vector<Edge> edges;
    DenseMat features;  // n x f
    std::vector<int> labels;
    int num_classes = 0;
    /// Symmetric 0/1 adjacency, zero diagonal.
    CsrMat adjacency;

    std::size_t self_loops_dropped = 0;
    std::size_t duplicate_edges = 0;

    std::size_t num_features() const noexcept { return features.cols(); }
};

/// Canonicalizes a raw edge list (symmetrize, dedupe, drop self-loops) and
/// validates labels/indices. Throws DataError.
GraphDataset make_dataset(std::string name, std::size_t n, const std::vector<Edge>& raw_edges,
                          DenseMat features, std::vector<int> labels);

/// Reads edges.tsv, features.tsv and labels.tsv from `dir`.
GraphDataset load_dataset(const std::filesystem::path& dir);

/// Writes the three TSV files in dense feature format.
void write_dataset(const std::filesystem::path& dir, const GraphDataset& g);

struct NormalizedGraph {
    /// D~^{-1/2} (A + I) D~^{-1/2}
    CsrMat a_hat;
    bool laplacian_available = true;

    std::size_t n() const noexcept { return a_hat.rows(); }
};

NormalizedGraph normalize(const GraphDataset& g);
NormalizedGraph normalize(const CsrMat& adjacency);

/// I - A_hat.
CsrMat laplacian(const NormalizedGraph& ng);

/// sum_{k=1..K} lambdas[k-1] * A_hat^k * q, by K sparse products.
DenseMat ahat_power_apply(const NormalizedGraph& ng, const DenseMat& q, std::size_t hops,
                          std::span<const double> lambdas);

/// Dense A_hat^1 .. A_hat^K. Reference code only; O(K n^3).
std::vector<DenseMat> dense_ahat_powers(const NormalizedGraph& ng, std::size_t hops);

/// Fraction of edges whose endpoints share a label.
double edge_homophily(const GraphDataset& g);

struct SplitSet {
    std::size_t split_id = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Checks disjointness, index range and non-emptiness. Throws DataError.
void validate_split(const SplitSet& s, std::size_t n);

/// Reads split_0.tsv, split_1.tsv, ... until the first missing index.
std::vector<SplitSet> load_splits(const std::filesystem::path& dir, std::size_t n);
void write_splits(const std::filesystem::path& dir, const std::vector<SplitSet>& splits);

/// Stratified random splits with the given train/val fractions per class.
std::vector<SplitSet> random_splits(const GraphDataset& g, std::size_t count, double train_frac,
                                    double val_frac, std::uint64_t seed);

/// BFS hop distance from `source`; unreachable nodes get SIZE_MAX.
std::vector<std::size_t> hop_distances(const GraphDataset& g, std::size_t source);

/// Per hop bucket k = 1..K plus a final "> K" bucket (which also holds
/// unreachable nodes): mean over nodes of the number of other nodes at that
/// exact shortest-path distance sharing the node's label.
std::vector<double> khop_same_label_stats(const GraphDataset& g, std::size_t hops);

struct SyntheticGraphSpec {
    std::size_t n = 100;
    int num_classes = 2;
    std::size_t num_features = 16;
    double mean_degree = 4.0;
    /// Probability that a sampled edge joins two nodes of the same class.
    double edge_homophily = 0.2;
    /// Distance between class feature centroids relative to unit noise.
    double feature_signal = 1.0;
    std::uint64_t seed = 1;
};

/// Class-balanced planted-partition graph with Gaussian class-centroid
/// features. Mean degree is approximate; edges are sampled with controlled
/// same-class fraction.
GraphDataset make_synthetic(const SyntheticGraphSpec& spec);

}  // namespace glognn

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glognn/graph.hpp"
#include "glognn/linalg.hpp"
#include "glognn/model.hpp"

namespace glognn {

/// Exact layer problem with its dense minimizer.
struct VerifyInstance {
    std::size_t id = 0;
    GraphDataset graph;
    NormalizedGraph ng;
    DenseMat h, h0;
    std::vector<double> lambdas;
    std::vector<double> sigma;  // empty for the plain variant
    ModelConfig cfg;
    DenseMat target;  // sum_k lambda_k A_hat^k
    DenseMat z;       // dense Z*
};

struct InstanceSpec {
    std::size_t n = 16;
    std::size_t c = 3;
    std::size_t hops = 2;
    double gamma = 0.3;
    double beta1 = 1.0;
    double beta2 = 1.0;
    double edge_prob = 0.25;
    bool plusplus = false;
    std::uint64_t seed = 0;
};

/// Random Erdos-Renyi graph with Gaussian H, H0, lambdas in [-1, 1] and
/// (for plusplus) sigma in [0.5, 1.5].
VerifyInstance make_instance(const InstanceSpec& spec, std::size_t id = 0);

/// Wraps explicit inputs and solves for Z*.
VerifyInstance make_instance(GraphDataset graph, DenseMat h, DenseMat h0, std::vector<double> lambdas,
                             std::vector<double> sigma, const ModelConfig& cfg, std::size_t id = 0);

/// One accelerated layer step on the instance inputs.
DenseMat fast_layer(const VerifyInstance& inst);
/// The same step through Z*.
DenseMat naive_layer(const VerifyInstance& inst);

/// max over (i, p) of |Z*_ip - fixed-point right-hand side|.
double check_lemma1_stationarity(const VerifyInstance& inst);

enum class Lemma { lemma2, lemma3 };

struct LemmaBoundReport {
    std::size_t instance_id = 0;
    Lemma lemma = Lemma::lemma2;
    std::size_t i = 0, j = 0, p = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
    bool satisfied = false;
    double eta = 0.0;  // lemma3 only
    /// The separate additive terms of the bound, in order.
    std::vector<double> aux;
};

/// Every (i, j, p) triple when `max_triples` is 0, otherwise a seeded sample.
std::vector<LemmaBoundReport> check_lemma2(const VerifyInstance& inst, std::size_t max_triples = 0,
                                           std::uint64_t seed = 0);
std::vector<LemmaBoundReport> check_lemma3(const VerifyInstance& inst, std::size_t max_triples = 0,
                                           std::uint64_t seed = 0);

/// min over rows p of J_p(0) - J_p(z_p*); non-negative at the optimum.
double objective_row_margin(const VerifyInstance& inst);

/// max |direct inverse - low-rank expansion| of (1-gamma)^2 H H^T + (beta1+beta2) I.
double woodbury_check(const DenseMat& h, double gamma, double beta1, double beta2);

struct GroupingReport {
    double within_class_z_dist = 0.0;
    double cross_class_z_dist = 0.0;
    double ratio = 0.0;
    /// Fraction of |entries| mass inside same-label blocks (n x n input) or in
    /// the node's own label column (n x c input).
    double block_structure_score = 0.0;
    std::size_t within_pairs = 0;
    std::size_t cross_pairs = 0;
};

/// Row-pair L2 distances; exhaustive when a pair class has at most
/// `max_pairs` members, otherwise a seeded sample of that many.
GroupingReport grouping_structure(const DenseMat& m, const std::vector<int>& labels, std::uint64_t seed = 0,
                                  std::size_t max_pairs = 10000);

struct HomophilySignReport {
    /// Entry k-1 is hop k; the last entry is the "> K" bucket.
    std::vector<double> mean_same_class;
    std::vector<double> mean_positive_same_class;
};

/// Counts, per node, same-label nodes at each exact hop distance and those of
/// them with Z_ij > positive_tol.
HomophilySignReport homophily_sign_study(const GraphDataset& g, const DenseMat& z, std::size_t hops,
                                         double positive_tol = 0.0);
void write_homophily_csv(const std::filesystem::path& file, const HomophilySignReport& r);

struct ContinuityReport {
    std::vector<double> eps;
    std::vector<double> medians;  // median |Z_ip - Z_jp| over twin pairs and p
    bool strictly_decreasing = false;
};

/// Twin nodes with identical closed neighbourhoods whose H and H0 rows differ
/// by eps times a fixed direction.
ContinuityReport continuity_probe(std::uint64_t seed, const std::vector<double>& eps = {1e-2, 1e-4, 1e-6},
                                  std::size_t instances = 10);

// ---------------------------------------------------------------------------
// Suites

struct CheckResult {
    std::string name;
    bool pass = false;
    double worst = 0.0;      // largest deviation or smallest slack, per check
    double threshold = 0.0;
    std::size_t count = 0;   // instances or triples examined
    std::string detail;
};

struct SuiteOptions {
    std::uint64_t seed = 0;
    std::size_t n = 16;         // lemma instances
    std::size_t trials = 0;     // 0 selects each suite's default
    /// Added to every fast-path output in the oracle sweep (negative control).
    double inject_fault = 0.0;
};

struct OracleReport {
    std::size_t instances = 0;
    double worst_plain = 0.0;
    double worst_plusplus = 0.0;
};

/// Fast vs dense over the (n, c, K, gamma, beta1, beta2) grid. `limit` > 0
/// keeps a seeded subset of that many configurations per variant.
OracleReport oracle_sweep(std::uint64_t seed, std::size_t limit = 0, double inject_fault = 0.0);

std::vector<CheckResult> run_suite(const std::string& suite, const SuiteOptions& opts);
void write_verify_report(const std::filesystem::path& file, const std::string& suite,
                         const SuiteOptions& opts, const std::vector<CheckResult>& results);

/// Trained plain model on the two-block heterophilous fixture, with Z* of the
/// last layer. Used by the grouping checks.
struct GroupingFixture {
    GraphDataset graph;
    DenseMat z;
    DenseMat h;  // final embeddings
    double test_accuracy = 0.0;
};
GroupingFixture train_grouping_fixture(std::uint64_t seed);

}  // namespace glognn

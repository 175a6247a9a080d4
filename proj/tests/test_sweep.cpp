#include <doctest.h>

#include "glognn/errors.hpp"
#include "glognn/io.hpp"
#include "glognn/sweep.hpp"
#include "helpers.hpp"

using namespace glognn;

namespace {

/// Features carry the class; edges are uninformative.
GraphDataset feature_graph() {
    SyntheticGraphSpec spec;
    spec.n = 60;
    spec.num_classes = 2;
    spec.num_features = 4;
    spec.edge_homophily = 0.5;
    spec.feature_signal = 4.0;
    spec.seed = 5;
    return make_synthetic(spec);
}

RunConfig quick_base() {
    RunConfig c;
    c.model.hidden_dim = 8;
    c.model.gamma = 0.5;
    c.train.max_epochs = 40;
    c.train.patience = 40;
    c.train.lr = 0.05;
    return c;
}

SweepPoint fake_point(std::size_t idx, double val, double epochs) {
    SweepPoint p;
    p.lattice_index = idx;
    p.mean_val = val;
    p.mean_epochs = epochs;
    return p;
}

}  // namespace

TEST_CASE("select_best tie breaks") {
    CHECK(select_best({fake_point(0, 0.5, 10), fake_point(1, 0.7, 90)}) == 1);
    CHECK(select_best({fake_point(0, 0.7, 90), fake_point(1, 0.7, 10)}) == 1);
    CHECK(select_best({fake_point(0, 0.7, 10), fake_point(1, 0.7, 10)}) == 0);
    CHECK_THROWS_AS(select_best({}), ConfigError);
}

TEST_CASE("a size-one lattice reproduces train_one") {
    const GraphDataset g = feature_graph();
    const NormalizedGraph ng = normalize(g);
    const auto splits = random_splits(g, 2, 0.5, 0.25, 3);
    const RunConfig base = quick_base();
    const Lattice l = parse_grid("K = 2\n");
    const SweepResult r = grid_search(g, ng, splits, base, l);
    REQUIRE(r.points.size() == 1);
    REQUIRE(r.points[0].trials.size() == 2);
    RunConfig c = base;
    c.model.hops = 2;
    for (std::size_t s = 0; s < 2; ++s) {
        const TrainedModel t = train_one(g, ng, splits[s], c.model, c.train);
        CHECK(r.points[0].trials[s].best_val_metric == t.result.best_val_metric);
        CHECK(r.points[0].trials[s].test_metric == t.result.test_metric);
    }
}

TEST_CASE("the sweep finds the dominating configuration") {
    const GraphDataset g = feature_graph();
    const NormalizedGraph ng = normalize(g);
    const auto splits = random_splits(g, 2, 0.5, 0.25, 3);
    const Lattice l = parse_grid("ablation = no_features, no_adjacency\ngamma = 1\n");
    const SweepResult r = grid_search(g, ng, splits, quick_base(), l);
    CHECK(r.points[r.best].config.model.ablation == Ablation::no_adjacency);
    CHECK(r.points[r.best].mean_val > r.points[0].mean_val);
}

TEST_CASE("parallel and serial sweeps agree") {
    const GraphDataset g = feature_graph();
    const NormalizedGraph ng = normalize(g);
    const auto splits = random_splits(g, 2, 0.5, 0.25, 3);
    const Lattice l = parse_grid("lr = 0.01, 0.05\nK = 1, 2\n");
    SweepOptions serial, parallel;
    parallel.jobs = 4;
    std::size_t calls = 0;
    parallel.progress = [&](std::size_t, std::size_t total) {
        ++calls;
        CHECK(total == 4);
    };
    const SweepResult a = grid_search(g, ng, splits, quick_base(), l, serial);
    const SweepResult b = grid_search(g, ng, splits, quick_base(), l, parallel);
    CHECK(calls == 4);
    REQUIRE(a.points.size() == 4);
    REQUIRE(b.points.size() == 4);
    CHECK(a.best == b.best);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a.points[i].lattice_index == i);
        CHECK(a.points[i].mean_val == b.points[i].mean_val);
        CHECK(a.points[i].mean_test == b.points[i].mean_test);
    }

    // 2 x 2 lattice over 2 splits gives 8 rows plus the header.
    testutil::TempDir d("sweep");
    std::vector<TrialResult> rows;
    for (const auto& p : a.points) rows.insert(rows.end(), p.trials.begin(), p.trials.end());
    write_results_csv(d / "results.csv", "synthetic", rows);
    const std::string text = testutil::read_text(d / "results.csv");
    CHECK(std::count(text.begin(), text.end(), '\n') == 9);
}

TEST_CASE("oversized lattices need sampling") {
    const GraphDataset g = feature_graph();
    const NormalizedGraph ng = normalize(g);
    const auto splits = random_splits(g, 1, 0.5, 0.25, 3);
    const Lattice l = parse_grid("lr = 0.01, 0.02, 0.03\nK = 1, 2\n");
    SweepOptions o;
    o.max_points = 5;
    CHECK_THROWS_AS(grid_search(g, ng, splits, quick_base(), l, o), ConfigError);
    o.sample = 2;
    o.sample_seed = 9;
    const SweepResult r = grid_search(g, ng, splits, quick_base(), l, o);
    REQUIRE(r.points.size() == 2);
    CHECK(r.points[0].lattice_index < r.points[1].lattice_index);
    const SweepResult again = grid_search(g, ng, splits, quick_base(), l, o);
    CHECK(again.points[0].lattice_index == r.points[0].lattice_index);
    CHECK(again.points[1].lattice_index == r.points[1].lattice_index);
}

TEST_CASE("invalid lattice points surface as ConfigError") {
    const GraphDataset g = feature_graph();
    const NormalizedGraph ng = normalize(g);
    const auto splits = random_splits(g, 1, 0.5, 0.25, 3);
    const Lattice l = parse_grid("gamma = 0.5, 3\n");
    CHECK_THROWS_AS(grid_search(g, ng, splits, quick_base(), l), ConfigError);
}

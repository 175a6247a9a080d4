#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "glognn/errors.hpp"
#include "glognn/io.hpp"
#include "helpers.hpp"

using namespace glognn;
using testutil::TempDir;

namespace {

ModelBlob sample_blob(bool pp) {
    ModelBlob b;
    b.config.alpha = 0.3;
    b.config.gamma = 0.6;
    b.config.beta1 = 10;
    b.config.beta2 = 0.1;
    b.config.hops = 3;
    b.config.layers = 2;
    b.config.hidden_dim = 7;
    b.config.plusplus = pp;
    b.config.ablation = Ablation::no_local_reg;
    b.params = init_params(b.config, 5, 11, 4, 2);
    return b;
}

}  // namespace

TEST_CASE("parameter blob round trip is exact") {
    TempDir d("io");
    for (bool pp : {false, true}) {
        const ModelBlob b = sample_blob(pp);
        write_blob(d / "m.bin", b.config, b.params);
        const ModelBlob r = read_blob(d / "m.bin");
        CHECK(r.config.alpha == b.config.alpha);
        CHECK(r.config.gamma == b.config.gamma);
        CHECK(r.config.beta1 == b.config.beta1);
        CHECK(r.config.beta2 == b.config.beta2);
        CHECK(r.config.hops == 3);
        CHECK(r.config.layers == 2);
        CHECK(r.config.hidden_dim == 7);
        CHECK(r.config.plusplus == pp);
        CHECK(r.config.ablation == Ablation::no_local_reg);
        const auto a = r.params.tensors();
        const auto e = b.params.tensors();
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(*a[k] == *e[k]);
    }
}

TEST_CASE("corrupt blobs are DataError") {
    TempDir d("io");
    const ModelBlob b = sample_blob(false);
    write_blob(d / "m.bin", b.config, b.params);
    std::string bytes = testutil::read_text(d / "m.bin");

    std::string bad = bytes;
    bad[0] = 'X';
    testutil::write_text(d / "bad.bin", bad);
    CHECK_THROWS_AS(read_blob(d / "bad.bin"), DataError);

    testutil::write_text(d / "short.bin", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_blob(d / "short.bin"), DataError);

    testutil::write_text(d / "long.bin", bytes + "x");
    CHECK_THROWS_AS(read_blob(d / "long.bin"), DataError);

    std::string ver = bytes;
    ver[4] = 9;
    testutil::write_text(d / "ver.bin", ver);
    CHECK_THROWS_AS(read_blob(d / "ver.bin"), DataError);

    CHECK_THROWS_AS(read_blob(d / "absent.bin"), DataError);

    // Well-formed arrays whose shapes disagree: lambdas longer than K.
    ModelBlob mism = b;
    mism.params.lambdas = DenseMat(1, b.config.hops + 1);
    write_blob(d / "shape.bin", mism.config, mism.params);
    CHECK_THROWS_AS(read_blob(d / "shape.bin"), DataError);
}

TEST_CASE("manifest lifecycle") {
    TempDir d("io");
    write_manifest_started(d.path(), {"glognn train --data x", "alpha = 0.5\n", 3, "abc"});
    {
        std::ifstream in(d / "manifest.json");
        const auto j = nlohmann::json::parse(in);
        CHECK(j["status"] == "started");
        CHECK(j["seed"] == 3);
        CHECK(j["artifact_version"] == kArtifactVersion);
        CHECK(!j.contains("finished_at"));
    }
    finish_manifest(d.path(), "completed");
    std::ifstream in(d / "manifest.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["status"] == "completed");
    CHECK(j["dataset_digest"] == "abc");
    CHECK(j.contains("finished_at"));
}

TEST_CASE("dataset digest tracks content") {
    TempDir d("io");
    testutil::write_text(d / "edges.tsv", "0\t1\n");
    testutil::write_text(d / "features.tsv", "0\t1\n1\t2\n");
    testutil::write_text(d / "labels.tsv", "0\t0\n1\t1\n");
    const std::string a = dataset_digest(d.path());
    CHECK(a.size() == 16);
    CHECK(dataset_digest(d.path()) == a);
    testutil::write_text(d / "labels.tsv", "0\t1\n1\t1\n");
    CHECK(dataset_digest(d.path()) != a);
    std::filesystem::remove(d / "edges.tsv");
    CHECK_THROWS_AS(dataset_digest(d.path()), DataError);
}

TEST_CASE("label-sorted export") {
    TempDir d("io");
    const std::vector<int> labels{1, 0, 1, 0};
    CHECK(label_order(labels) == std::vector<std::size_t>{1, 3, 0, 2});

    DenseMat sq(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) sq(i, j) = 10.0 * i + j;
    write_label_sorted_csv(d / "z.csv", sq, labels);
    CHECK(testutil::read_text(d / "z.csv") ==
          "1,3,0,2\n11,13,10,12\n31,33,30,32\n1,3,0,2\n21,23,20,22\n");

    const DenseMat h{{0.5, 1}, {2, 3}, {4, 5}, {6, 0.1}};
    write_label_sorted_csv(d / "h.csv", h, labels);
    CHECK(testutil::read_text(d / "h.csv") == "0,1\n2,3\n6,0.10000000000000001\n0.5,1\n4,5\n");

    CHECK_THROWS_AS(write_label_sorted_csv(d / "x.csv", h, {0, 1}), DimensionError);
}

// End-to-end checks of the glognn executable: exit codes, output files and
// determinism. GLOGNN_CLI is the built binary's path.
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "glognn/graph.hpp"
#include "glognn/io.hpp"
#include "helpers.hpp"

using namespace glognn;
using testutil::read_text;
using testutil::TempDir;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run cli(const TempDir& scratch, const std::string& args) {
    const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
    const std::string cmd = std::string(GLOGNN_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text(out);
    r.err = read_text(err);
    return r;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

/// Synthetic dataset with three splits written in the on-disk layout.
std::filesystem::path make_data(const TempDir& d, std::size_t n = 40) {
    SyntheticGraphSpec spec;
    spec.n = n;
    spec.num_classes = 2;
    spec.num_features = 4;
    spec.feature_signal = 2.0;
    spec.seed = 3;
    const GraphDataset g = make_synthetic(spec);
    const auto dir = d / "data";
    write_dataset(dir, g);
    write_splits(dir / "splits", random_splits(g, 3, 0.5, 0.25, 1));
    return dir;
}

const char* kQuick = " --set max_epochs=20 --set hidden_dim=8 --set early_stopping=20";

/// results.csv without the wall-clock column.
std::string strip_wall_time(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
}

nlohmann::json manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("train writes results, parameters and a completed manifest") {
    TempDir d("cli");
    const auto data = make_data(d);
    const auto out = d / "run";
    const Run r = cli(d, "train --data " + data.string() + " --seed 5 --out " + out.string() + kQuick);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("mean_test") != std::string::npos);
    const std::string csv = read_text(out / "results.csv");
    CHECK(line_count(csv) == 4);
    CHECK(csv.rfind("dataset,split_id,alpha,", 0) == 0);
    const auto m = manifest(out);
    CHECK(m["status"] == "completed");
    CHECK(m["seed"] == 5);
    CHECK(m["dataset_digest"] == dataset_digest(data));
    const ModelBlob blob = read_blob(out / "best_params.bin");
    CHECK(blob.config.hidden_dim == 8);

    SUBCASE("same seed reproduces the results") {
        const auto again = d / "run2";
        REQUIRE(cli(d, "train --data " + data.string() + " --seed 5 --out " + again.string() + kQuick).code == 0);
        CHECK(strip_wall_time(read_text(again / "results.csv")) == strip_wall_time(csv));
        CHECK(read_text(again / "best_params.bin") == read_text(out / "best_params.bin"));
    }
    SUBCASE("eval scores the saved model") {
        const Run e = cli(d, "eval --model " + (out / "best_params.bin").string() + " --data " + data.string() +
                                 " --out " + (d / "ev").string());
        REQUIRE_MESSAGE(e.code == 0, e.err);
        CHECK(line_count(read_text(d / "ev" / "eval.csv")) == 4);
        CHECK(manifest(d / "ev")["status"] == "completed");
    }
    SUBCASE("export writes label-sorted matrices") {
        const Run h = cli(d, "export --model " + (out / "best_params.bin").string() + " --data " + data.string() +
                                 " --what h --out " + (d / "h.csv").string());
        REQUIRE_MESSAGE(h.code == 0, h.err);
        CHECK(line_count(read_text(d / "h.csv")) == 41);
        const Run z = cli(d, "export --model " + (out / "best_params.bin").string() + " --data " + data.string() +
                                 " --what z --out " + (d / "z.csv").string());
        REQUIRE_MESSAGE(z.code == 0, z.err);
        CHECK(line_count(read_text(d / "z.csv")) == 41);
        const Run capped = cli(d, "export --model " + (out / "best_params.bin").string() + " --data " +
                                      data.string() + " --what z --naive-cap 10 --out " + (d / "z2.csv").string());
        CHECK(capped.code == 2);
        CHECK(capped.err.find("--naive-cap 40") != std::string::npos);
    }
    SUBCASE("homophily with a model writes the sign table") {
        const Run h = cli(d, "homophily --data " + data.string() + " --khop 2 --model " +
                                 (out / "best_params.bin").string() + " --out " + (d / "signs.csv").string());
        REQUIRE_MESSAGE(h.code == 0, h.err);
        CHECK(h.out.find("edge_homophily") != std::string::npos);
        const std::string csv2 = read_text(d / "signs.csv");
        CHECK(line_count(csv2) == 4);
        CHECK(csv2.find(">2,") != std::string::npos);
    }
}

TEST_CASE("sweep writes one row per trial and the winning config") {
    TempDir d("cli");
    const auto data = make_data(d);
    testutil::write_text(d / "grid.txt", "lr = 0.01, 0.05\nK = 1, 2\n");
    const auto out = d / "sw";
    const Run r = cli(d, "sweep --data " + data.string() + " --grid " + (d / "grid.txt").string() + " --jobs 2 --out " +
                             out.string() + kQuick);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(line_count(read_text(out / "results.csv")) == 1 + 4 * 3);
    CHECK(r.out.find("best lattice_index") != std::string::npos);
    const Run again = cli(d, "train --data " + data.string() + " --config " + (out / "best_config.txt").string() +
                                 " --out " + (d / "tr").string());
    CHECK_MESSAGE(again.code == 0, again.err);
}

TEST_CASE("error families map to exit codes") {
    TempDir d("cli");
    const auto data = make_data(d);

    CHECK(cli(d, "train --data " + data.string() + " --out " + (d / "a").string() + " --set bogus=1").code == 2);
    CHECK(cli(d, "train --data " + data.string() + " --out " + (d / "a").string() + " --set gamma=3").code == 2);
    CHECK(cli(d, "train --data " + data.string() + " --out x --config /nonexistent.cfg").code == 2);
    CHECK(cli(d, "frobnicate").code == 2);
    CHECK(cli(d, "train --out x").code == 2);

    std::filesystem::copy(data, d / "nolabels", std::filesystem::copy_options::recursive);
    std::filesystem::remove(d / "nolabels" / "labels.tsv");
    const Run missing = cli(d, "train --data " + (d / "nolabels").string() + " --out " + (d / "b").string());
    CHECK(missing.code == 3);
    CHECK(missing.err.find("labels.tsv") != std::string::npos);

    // Failing after the manifest is written marks it failed.
    const Run nosplits = cli(d, "train --data " + data.string() + " --splits " + (d / "empty").string() + " --out " +
                                    (d / "c").string());
    CHECK(nosplits.code == 3);
    CHECK(manifest(d / "c")["status"] == "failed");

    testutil::write_text(d / "junk.bin", "not a blob");
    CHECK(cli(d, "eval --model " + (d / "junk.bin").string() + " --data " + data.string()).code == 3);
}

TEST_CASE("verify passes clean suites and fails an injected fault") {
    TempDir d("cli");
    const Run ok = cli(d, "verify --suite woodbury --trials 3 --report " + (d / "v" / "r.json").string());
    CHECK_MESSAGE(ok.code == 0, ok.err);
    CHECK(ok.out.find("PASS woodbury_identity") != std::string::npos);
    CHECK(std::filesystem::exists(d / "v" / "manifest.json"));

    const Run lem = cli(d, "verify --suite lemmas --trials 2 --n 8 --report " + (d / "l.json").string());
    CHECK_MESSAGE(lem.code == 0, lem.err);

    const Run bad = cli(d, "verify --suite oracle --trials 5 --inject-fault 1e-3 --report " + (d / "f.json").string());
    CHECK(bad.code == 5);
    CHECK(bad.out.find("FAIL oracle_plain") != std::string::npos);
    std::ifstream in(d / "f.json");
    CHECK(nlohmann::json::parse(in)["pass"] == false);
}

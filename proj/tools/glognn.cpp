#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "glognn/config.hpp"
#include "glognn/errors.hpp"
#include "glognn/graph.hpp"
#include "glognn/io.hpp"
#include "glognn/model.hpp"
#include "glognn/sweep.hpp"
#include "glognn/train.hpp"
#include "glognn/verify.hpp"

namespace fs = std::filesystem;
using namespace glognn;

namespace {

enum Exit { ok = 0, config_error = 2, data_error = 3, numerical_error = 4, verify_failed = 5 };

std::string g_command_line;
/// Directory of the manifest currently marked "started", if any.
std::optional<fs::path> g_open_manifest;

struct RunOptions {
    std::string data;
    std::string splits;
    std::string config;
    std::string out;
    std::vector<std::string> sets;
    bool plusplus = false;
    std::string ablation;
    std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const RunOptions& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    for (const auto& kv : o.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        apply_setting(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (o.plusplus) cfg.model.plusplus = true;
    if (!o.ablation.empty()) cfg.model.ablation = parse_ablation(o.ablation);
    if (o.seed) cfg.train.seed = *o.seed;
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

std::string splits_dir(const RunOptions& o) {
    return o.splits.empty() ? (fs::path(o.data) / "splits").string() : o.splits;
}

void start_manifest(const fs::path& dir, const std::string& config_text, std::uint64_t seed,
                    const std::string& data_dir) {
    Manifest m;
    m.command_line = g_command_line;
    m.config_text = config_text;
    m.seed = seed;
    m.dataset_digest = data_dir.empty() ? "" : dataset_digest(data_dir);
    write_manifest_started(dir, m);
    g_open_manifest = dir;
}

void close_manifest(const fs::path& dir, const std::string& status) {
    finish_manifest(dir, status);
    g_open_manifest.reset();
}

fs::path dir_of(const std::string& file) {
    const fs::path p = fs::path(file).parent_path();
    return p.empty() ? fs::path(".") : p;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

int cmd_train(const RunOptions& o) {
    const RunConfig cfg = resolve_config(o);
    start_manifest(o.out, to_config_text(cfg), cfg.train.seed, o.data);
    const GraphDataset g = load_dataset(o.data);
    const NormalizedGraph ng = normalize(g);
    const auto splits = load_splits(splits_dir(o), g.n);

    std::vector<TrialResult> trials;
    std::optional<TrainedModel> best;
    for (const auto& split : splits) {
        TrainedModel tm = train_one(g, ng, split, cfg.model, cfg.train);
        std::cout << fmt::format("split {} val {:.4f} test {:.4f} epochs {}\n", split.split_id,
                                 tm.result.best_val_metric, tm.result.test_metric, tm.result.epochs_run);
        trials.push_back(tm.result);
        if (!best || tm.result.best_val_metric > best->result.best_val_metric) best = std::move(tm);
    }
    write_results_csv(fs::path(o.out) / "results.csv", g.name, trials);
    write_blob(fs::path(o.out) / "best_params.bin", cfg.model, best->params);

    std::vector<double> test;
    for (const auto& t : trials) test.push_back(t.test_metric);
    std::cout << fmt::format("mean_test {:.4f} std {:.4f} splits {}\n", mean(test), sample_std(test), trials.size());
    close_manifest(o.out, "completed");
    return ok;
}

int cmd_eval(const std::string& model, const RunOptions& o, const std::string& metric) {
    const ModelBlob blob = read_blob(model);
    RunConfig cfg;
    cfg.model = blob.config;
    if (!metric.empty()) apply_setting(cfg, "metric", metric);
    if (!o.out.empty()) start_manifest(o.out, to_config_text(cfg), 0, o.data);
    const GraphDataset g = load_dataset(o.data);
    const NormalizedGraph ng = normalize(g);
    const auto splits = load_splits(splits_dir(o), g.n);
    const DenseMat logits = evaluate(g, ng, blob.params, blob.config).h.back();
    std::vector<double> test;
    std::string csv = "split_id,val,test\n";
    for (const auto& s : splits) {
        const double v = evaluate_metric(logits, g.labels, s.val, cfg.train.metric);
        const double t = evaluate_metric(logits, g.labels, s.test, cfg.train.metric);
        test.push_back(t);
        csv += fmt::format("{},{},{}\n", s.split_id, v, t);
        std::cout << fmt::format("split {} val {:.4f} test {:.4f}\n", s.split_id, v, t);
    }
    std::cout << fmt::format("mean_test {:.4f} std {:.4f}\n", mean(test), sample_std(test));
    if (!o.out.empty()) {
        std::FILE* f = std::fopen((fs::path(o.out) / "eval.csv").c_str(), "w");
        if (!f) throw DataError("cannot write eval.csv");
        std::fputs(csv.c_str(), f);
        std::fclose(f);
        close_manifest(o.out, "completed");
    }
    return ok;
}

int cmd_sweep(const RunOptions& o, const std::string& grid, std::size_t jobs, std::optional<std::size_t> sample) {
    const RunConfig base = resolve_config(o);
    const Lattice lattice = grid.empty() ? paper_small_grid() : load_grid(grid);
    std::string text = to_config_text(base);
    for (const auto& a : lattice) {
        text += "# grid " + a.key + " =";
        for (std::size_t k = 0; k < a.values.size(); ++k) text += (k ? ", " : " ") + a.values[k];
        text += "\n";
    }
    start_manifest(o.out, text, base.train.seed, o.data);
    const GraphDataset g = load_dataset(o.data);
    const NormalizedGraph ng = normalize(g);
    const auto splits = load_splits(splits_dir(o), g.n);

    SweepOptions so;
    so.jobs = jobs;
    so.sample = sample;
    so.sample_seed = base.train.seed;
    so.progress = [](std::size_t done, std::size_t total) {
        std::cerr << fmt::format("\rsweep {}/{}", done, total) << (done == total ? "\n" : "") << std::flush;
    };
    const SweepResult res = grid_search(g, ng, splits, base, lattice, so);

    std::vector<TrialResult> all;
    for (const auto& p : res.points) all.insert(all.end(), p.trials.begin(), p.trials.end());
    write_results_csv(fs::path(o.out) / "results.csv", g.name, all);

    const SweepPoint& best = res.points[res.best];
    {
        std::FILE* f = std::fopen((fs::path(o.out) / "best_config.txt").c_str(), "w");
        if (!f) throw DataError("cannot write best_config.txt");
        std::fputs(to_config_text(best.config).c_str(), f);
        std::fclose(f);
    }
    std::vector<double> test;
    for (const auto& t : best.trials) test.push_back(t.test_metric);
    std::cout << fmt::format("points {} trials {}\n", res.points.size(), all.size());
    std::cout << fmt::format("best lattice_index {} mean_val {:.4f} mean_test {:.4f} std {:.4f}\n",
                             best.lattice_index, best.mean_val, best.mean_test, sample_std(test));
    for (const auto& [k, v] : to_record(best.config)) std::cout << k << " = " << v << "\n";
    close_manifest(o.out, "completed");
    return ok;
}

int cmd_verify(const std::string& suite, const SuiteOptions& so, const std::string& report) {
    start_manifest(dir_of(report), fmt::format("suite = {}\nn = {}\ntrials = {}\n", suite, so.n, so.trials), so.seed,
                   "");
    const auto results = run_suite(suite, so);
    write_verify_report(report, suite, so, results);
    bool pass = true;
    for (const auto& r : results) {
        std::cout << fmt::format("{} {} worst {:.3e} threshold {:.1e} count {} {}\n", r.pass ? "PASS" : "FAIL",
                                 r.name, r.worst, r.threshold, r.count, r.detail);
        pass = pass && r.pass;
    }
    close_manifest(dir_of(report), pass ? "completed" : "failed");
    return pass ? ok : verify_failed;
}

/// Z* of the last layer for a trained model.
DenseMat trained_z(const GraphDataset& g, const NormalizedGraph& ng, const ModelBlob& blob) {
    const ForwardTrace trace = evaluate(g, ng, blob.params, blob.config);
    const auto lam = blob.params.lambdas.row(0);
    const auto sig = blob.params.sigma.empty() ? std::span<const double>{} : blob.params.sigma.row(0);
    const std::size_t last = blob.config.layers - 1;
    return solve_z_naive(trace.h[last], trace.h[0], ng, {lam.begin(), lam.end()}, {sig.begin(), sig.end()},
                         blob.config);
}

void check_cap(std::size_t n, std::size_t cap) {
    if (n > cap) {
        throw ConfigError(
            fmt::format("n = {} exceeds the dense-path cap of {}; raise it with --naive-cap {}", n, cap, n));
    }
}

int cmd_homophily(const std::string& data, std::size_t khop, const std::string& model, const std::string& out,
                  std::size_t cap) {
    const bool with_model = !model.empty();
    if (with_model) start_manifest(dir_of(out), fmt::format("khop = {}\nmodel = {}\n", khop, model), 0, data);
    const GraphDataset g = load_dataset(data);
    std::cout << fmt::format("edge_homophily {:.4f}\n", edge_homophily(g));
    const auto same = khop_same_label_stats(g, khop);
    for (std::size_t k = 0; k < same.size(); ++k) {
        const std::string hop = k < khop ? std::to_string(k + 1) : ">" + std::to_string(khop);
        std::cout << fmt::format("hop {} mean_same_class {:.4f}\n", hop, same[k]);
    }
    if (with_model) {
        ModelBlob blob = read_blob(model);
        blob.config.naive_cap = cap;
        check_cap(g.n, cap);
        const NormalizedGraph ng = normalize(g);
        const auto rep = homophily_sign_study(g, trained_z(g, ng, blob), khop);
        write_homophily_csv(out, rep);
        std::cout << fmt::format("wrote {}\n", out);
        close_manifest(dir_of(out), "completed");
    }
    return ok;
}

int cmd_export(const std::string& model, const std::string& data, const std::string& what, const std::string& out,
               std::size_t cap) {
    start_manifest(dir_of(out), fmt::format("what = {}\nmodel = {}\n", what, model), 0, data);
    const GraphDataset g = load_dataset(data);
    ModelBlob blob = read_blob(model);
    blob.config.naive_cap = cap;
    const NormalizedGraph ng = normalize(g);
    DenseMat m;
    if (what == "z") {
        check_cap(g.n, cap);
        m = trained_z(g, ng, blob);
    } else {
        m = evaluate(g, ng, blob.params, blob.config).h.back();
    }
    write_label_sorted_csv(out, m, g.labels);
    std::cout << fmt::format("wrote {} ({} x {})\n", out, m.rows(), m.cols());
    close_manifest(dir_of(out), "completed");
    return ok;
}

void add_run_options(CLI::App* sub, RunOptions& o, bool needs_out) {
    sub->add_option("--data", o.data, "Dataset directory with edges.tsv, features.tsv, labels.tsv")->required();
    sub->add_option("--splits", o.splits, "Directory of split_<k>.tsv files (default: DATA/splits)");
    sub->add_option("--config", o.config, "key = value config file");
    sub->add_option("--set", o.sets, "Override one setting, key=value (repeatable)");
    sub->add_flag("--plusplus", o.plusplus, "Use the learnable diagonal feature weighting");
    sub->add_option("--ablation", o.ablation, "none, no_adjacency, no_features or no_local_reg");
    sub->add_option("--seed", o.seed, "Training seed");
    auto* out = sub->add_option("--out", o.out, "Output directory");
    if (needs_out) out->required();
}

int run(int argc, char** argv) {
    CLI::App app{"Global-homophily graph neural network: training, sweeps and verification"};
    app.require_subcommand(1);

    RunOptions train_o, sweep_o, eval_o;
    auto* train = app.add_subcommand("train", "Train on every split and write results.csv, best_params.bin");
    add_run_options(train, train_o, true);

    auto* sweep = app.add_subcommand("sweep", "Grid search over a lattice of settings");
    add_run_options(sweep, sweep_o, true);
    std::string grid;
    std::size_t jobs = 1;
    std::optional<std::size_t> sample;
    sweep->add_option("--grid", grid, "Grid file, one 'key = v1, v2, ...' per line (default: small-dataset grid)");
    sweep->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    sweep->add_option("--sample", sample, "Evaluate a seeded random subset of N lattice points");

    auto* eval = app.add_subcommand("eval", "Evaluate a saved model on every split");
    std::string eval_model, eval_metric;
    eval->add_option("--model", eval_model, "Parameter blob")->required();
    eval->add_option("--data", eval_o.data, "Dataset directory")->required();
    eval->add_option("--splits", eval_o.splits, "Split directory (default: DATA/splits)");
    eval->add_option("--metric", eval_metric, "accuracy or auc");
    eval->add_option("--out", eval_o.out, "Optional output directory for eval.csv");

    auto* verify = app.add_subcommand("verify", "Run executable checks of the theory and the fast path");
    std::string suite = "all", report = "verify-report.json";
    SuiteOptions so;
    verify->add_option("--suite", suite, "lemmas, woodbury, oracle, grouping or all")
        ->check(CLI::IsMember({"lemmas", "woodbury", "oracle", "grouping", "all"}));
    verify->add_option("--seed", so.seed, "Seed");
    verify->add_option("--n", so.n, "Nodes per lemma instance")->check(CLI::Range(2, 64));
    verify->add_option("--trials", so.trials, "Instances per check (0: suite default)");
    verify->add_option("--report", report, "Report path");
    verify->add_option("--inject-fault", so.inject_fault, "Add this offset to fast-path outputs (negative control)");

    auto* homophily = app.add_subcommand("homophily", "Edge homophily and per-hop same-class statistics");
    std::string h_data, h_model, h_out = "homophily_signs.csv";
    std::size_t khop = 6, h_cap = 2000;
    homophily->add_option("--data", h_data, "Dataset directory")->required();
    homophily->add_option("--khop", khop, "Hop buckets")->check(CLI::PositiveNumber);
    homophily->add_option("--model", h_model, "Trained blob; enables the sign study and CSV output");
    homophily->add_option("--out", h_out, "CSV path for the sign study");
    homophily->add_option("--naive-cap", h_cap, "Largest n for the dense coefficient matrix");

    auto* exp = app.add_subcommand("export", "Label-sorted CSV of Z* or the final embeddings");
    std::string x_model, x_data, x_what, x_out;
    std::size_t x_cap = 2000;
    exp->add_option("--model", x_model, "Parameter blob")->required();
    exp->add_option("--data", x_data, "Dataset directory")->required();
    exp->add_option("--what", x_what, "z or h")->required()->check(CLI::IsMember({"z", "h"}));
    exp->add_option("--out", x_out, "CSV path")->required();
    exp->add_option("--naive-cap", x_cap, "Largest n for the dense coefficient matrix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    if (*train) return cmd_train(train_o);
    if (*sweep) return cmd_sweep(sweep_o, grid, jobs, sample);
    if (*eval) return cmd_eval(eval_model, eval_o, eval_metric);
    if (*verify) return cmd_verify(suite, so, report);
    if (*homophily) return cmd_homophily(h_data, khop, h_model, h_out, h_cap);
    return cmd_export(x_model, x_data, x_what, x_out, x_cap);
}

int guarded_main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config_error;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data_error;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data_error;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return numerical_error;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data_error;
    }
}

}  // namespace

int main(int argc, char** argv) {
    glognn::tune_allocator();
    for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);
    const int code = guarded_main(argc, argv);
    if (g_open_manifest) {
        try {
            finish_manifest(*g_open_manifest, "failed");
        } catch (const std::exception&) {
        }
    }
    return code;
}

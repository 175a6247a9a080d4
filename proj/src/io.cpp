#include "glognn/io.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "glognn/errors.hpp"

namespace glognn {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'L', 'G', 'N'};

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const fs::path& file) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw DataError(fmt::format("{}: truncated parameter blob", file.string()));
    }
    return v;
}

double ablation_code(Ablation a) { return static_cast<double>(static_cast<int>(a)); }

Ablation ablation_from_code(double c, const fs::path& file) {
    const int k = static_cast<int>(c);
    if (k < 0 || k > 3 || static_cast<double>(k) != c) {
        throw DataError(fmt::format("{}: invalid ablation code {}", file.string(), c));
    }
    return static_cast<Ablation>(k);
}

std::string iso_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + '"';
}

}  // namespace

void write_blob(const fs::path& file, const ModelConfig& cfg, const ModelParams& params) {
    std::vector<const DenseMat*> arrays;
    DenseMat hyper(1, 9);
    const double hv[9] = {cfg.alpha,
                          cfg.gamma,
                          cfg.beta1,
                          cfg.beta2,
                          static_cast<double>(cfg.hops),
                          static_cast<double>(cfg.layers),
                          static_cast<double>(cfg.hidden_dim),
                          cfg.plusplus ? 1.0 : 0.0,
                          ablation_code(cfg.ablation)};
    std::copy(std::begin(hv), std::end(hv), hyper.values().begin());
    arrays.push_back(&hyper);
    for (const DenseMat* t : params.tensors()) arrays.push_back(t);

    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", file.string()));
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kBlobVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const DenseMat* a : arrays) {
        put<std::uint64_t>(out, a->rows());
        put<std::uint64_t>(out, a->cols());
        for (double v : a->values()) put<double>(out, v);
    }
    if (!out) throw DataError(fmt::format("write failed for {}", file.string()));
}

ModelBlob read_blob(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open parameter blob {}", file.string()));
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError(fmt::format("{}: not a parameter blob (bad magic)", file.string()));
    }
    const auto version = get<std::uint32_t>(in, file);
    if (version != kBlobVersion) {
        throw DataError(fmt::format("{}: unsupported blob version {}", file.string(), version));
    }
    const auto count = get<std::uint32_t>(in, file);
    const std::size_t expected = 1 + ModelParams::tensor_names().size();
    if (count != expected) {
        throw DataError(fmt::format("{}: expected {} arrays, found {}", file.string(), expected, count));
    }
    std::vector<DenseMat> arrays;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto r = get<std::uint64_t>(in, file);
        const auto c = get<std::uint64_t>(in, file);
        if (r > (1u << 28) || c > (1u << 28) || (r && c > (1ull << 32) / r)) {
            throw DataError(fmt::format("{}: implausible array shape {}x{}", file.string(), r, c));
        }
        DenseMat m(r, c);
        for (double& v : m.values()) v = get<double>(in, file);
        arrays.push_back(std::move(m));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw DataError(fmt::format("{}: trailing bytes after last array", file.string()));
    }

    const DenseMat& h = arrays[0];
    if (h.rows() != 1 || h.cols() != 9) throw DataError(fmt::format("{}: bad hyperparameter array", file.string()));
    ModelBlob blob;
    blob.config.alpha = h(0, 0);
    blob.config.gamma = h(0, 1);
    blob.config.beta1 = h(0, 2);
    blob.config.beta2 = h(0, 3);
    blob.config.hops = static_cast<std::size_t>(h(0, 4));
    blob.config.layers = static_cast<std::size_t>(h(0, 5));
    blob.config.hidden_dim = static_cast<std::size_t>(h(0, 6));
    blob.config.plusplus = h(0, 7) != 0.0;
    blob.config.ablation = ablation_from_code(h(0, 8), file);
    try {
        blob.config.validate();
    } catch (const ConfigError& e) {
        throw DataError(fmt::format("{}: {}", file.string(), e.what()));
    }
    auto dst = blob.params.tensors();
    for (std::size_t k = 0; k < dst.size(); ++k) *dst[k] = std::move(arrays[k + 1]);
    if (blob.config.plusplus == blob.params.sigma.empty()) {
        throw DataError(fmt::format("{}: sigma presence does not match the plusplus flag", file.string()));
    }
    const ModelParams& p = blob.params;
    const std::size_t hid = blob.config.hidden_dim, c = p.mlp_x.w2.cols();
    auto shaped = [](const DenseMat& m, std::size_t r, std::size_t cols) { return m.rows() == r && m.cols() == cols; };
    const bool ok = c > 0 && p.mlp_x.w1.cols() == hid && shaped(p.mlp_x.b1, 1, hid) && shaped(p.mlp_x.w2, hid, c) &&
                    shaped(p.mlp_x.b2, 1, c) && p.mlp_a.w1.cols() == hid && shaped(p.mlp_a.b1, 1, hid) &&
                    shaped(p.mlp_a.w2, hid, c) && shaped(p.mlp_a.b2, 1, c) &&
                    shaped(p.lambdas, 1, blob.config.hops) && (p.sigma.empty() || shaped(p.sigma, 1, c));
    if (!ok) throw DataError(fmt::format("{}: array shapes do not agree with each other", file.string()));
    return blob;
}

void write_results_csv(const fs::path& file, const std::string& dataset, const std::vector<TrialResult>& trials) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", file.string()));
    out << "dataset,split_id";
    if (!trials.empty()) {
        for (const auto& [k, v] : trials.front().config_used) out << ',' << k;
    }
    out << ",val,test,epochs,wall_time_s\n";
    for (const auto& t : trials) {
        out << csv_field(dataset) << ',' << t.split_id;
        for (const auto& [k, v] : t.config_used) out << ',' << csv_field(v);
        out << fmt::format(",{},{},{},{:.6f}\n", t.best_val_metric, t.test_metric, t.epochs_run, t.wall_time_s);
    }
}

std::string dataset_digest(const fs::path& data_dir) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(p[i]);
            h *= 1099511628211ULL;
        }
    };
    for (const char* name : {"edges.tsv", "features.tsv", "labels.tsv"}) {
        std::ifstream in(data_dir / name, std::ios::binary);
        if (!in) throw DataError(fmt::format("{}: missing {}", data_dir.string(), name));
        mix(name, std::strlen(name) + 1);
        char buf[1 << 16];
        while (in.read(buf, sizeof buf) || in.gcount() > 0) mix(buf, static_cast<std::size_t>(in.gcount()));
    }
    return fmt::format("{:016x}", h);
}

void write_manifest_started(const fs::path& out_dir, const Manifest& m) {
    fs::create_directories(out_dir);
    nlohmann::ordered_json j;
    j["artifact_version"] = kArtifactVersion;
    j["command_line"] = m.command_line;
    j["config"] = m.config_text;
    j["seed"] = m.seed;
    j["dataset_digest"] = m.dataset_digest;
    j["started_at"] = iso_now();
    j["status"] = "started";
    std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", (out_dir / "manifest.json").string()));
    out << j.dump(2) << '\n';
}

void finish_manifest(const fs::path& out_dir, const std::string& status) {
    const fs::path file = out_dir / "manifest.json";
    nlohmann::ordered_json j;
    {
        std::ifstream in(file);
        if (!in) throw DataError(fmt::format("cannot read {}", file.string()));
        j = nlohmann::ordered_json::parse(in);
    }
    j["status"] = status;
    j["finished_at"] = iso_now();
    std::ofstream out(file, std::ios::trunc);
    out << j.dump(2) << '\n';
}

std::vector<std::size_t> label_order(const std::vector<int>& labels) {
    std::vector<std::size_t> idx(labels.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
    return idx;
}

void write_label_sorted_csv(const fs::path& file, const DenseMat& m, const std::vector<int>& labels) {
    if (m.rows() != labels.size()) throw DimensionError("label-sorted export: one label per row required");
    const bool square = m.rows() == m.cols();
    const auto order = label_order(labels);
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", file.string()));
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << (square ? order[j] : j);
    out << '\n';
    for (std::size_t i : order) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out << (j ? "," : "") << fmt::format("{:.17g}", m(i, square ? order[j] : j));
        }
        out << '\n';
    }
}

}  // namespace glognn

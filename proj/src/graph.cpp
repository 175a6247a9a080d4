#include "glognn/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string_view>

#include <fmt/format.h>

#include "glognn/errors.hpp"

namespace glognn {

namespace fs = std::filesystem;

namespace {

struct Line {
    std::size_t number;
    std::string text;
};

std::vector<Line> read_data_lines(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open {}", file.string()));
    std::vector<Line> lines;
    std::string s;
    std::size_t number = 0;
    while (std::getline(in, s)) {
        ++number;
        if (!s.empty() && s.back() == '\r') s.pop_back();
        const auto first = s.find_first_not_of(" \t");
        if (first == std::string::npos || s[first] == '#') continue;
        lines.push_back({number, std::move(s)});
    }
    return lines;
}

[[noreturn]] void bad_line(const fs::path& file, std::size_t number, std::string_view why) {
    throw DataError(fmt::format("{}:{}: {}", file.string(), number, why));
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    s = trim(s);
    T v{};
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end) return std::nullopt;
    return v;
}

/// Splits "key<TAB>rest" (any run of blanks accepted as the separator).
std::pair<std::string_view, std::string_view> split_key(std::string_view s) {
    s = trim(s);
    const auto sep = s.find_first_of(" \t");
    if (sep == std::string_view::npos) return {s, {}};
    return {s.substr(0, sep), trim(s.substr(sep + 1))};
}

std::size_t parse_node(const fs::path& file, const Line& line, std::string_view tok) {
    const auto v = parse_number<long long>(tok);
    if (!v) bad_line(file, line.number, fmt::format("expected a node id, got '{}'", tok));
    if (*v < 0) bad_line(file, line.number, fmt::format("negative node id {}", *v));
    return static_cast<std::size_t>(*v);
}

}  // namespace

GraphDataset make_dataset(std::string name, std::size_t n, const std::vector<Edge>& raw_edges,
                          DenseMat features, std::vector<int> labels) {
    if (labels.size() != n) {
        throw DataError(fmt::format("{} labels for {} nodes", labels.size(), n));
    }
    if (features.rows() != n) {
        throw DataError(fmt::format("{} feature rows for {} nodes", features.rows(), n));
    }
    GraphDataset g;
    g.name = std::move(name);
    g.n = n;
    int max_label = -1;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0) throw DataError(fmt::format("node {} has negative label", i));
        max_label = std::max(max_label, labels[i]);
    }
    g.num_classes = max_label + 1;
    g.labels = std::move(labels);
    g.features = std::move(features);

    std::vector<Edge> canon;
    canon.reserve(raw_edges.size());
    for (auto [u, v] : raw_edges) {
        if (u >= n || v >= n) {
            throw DataError(fmt::format("edge ({}, {}) references a node >= n = {}", u, v, n));
        }
        if (u == v) {
            ++g.self_loops_dropped;
            continue;
        }
        canon.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(canon.begin(), canon.end());
    const auto last = std::unique(canon.begin(), canon.end());
    g.duplicate_edges = static_cast<std::size_t>(canon.end() - last);
    canon.erase(last, canon.end());
    g.edges = std::move(canon);

    std::vector<Triplet> t;
    t.reserve(2 * g.edges.size());
    for (auto [u, v] : g.edges) {
        t.push_back({u, v, 1.0});
        t.push_back({v, u, 1.0});
    }
    g.adjacency = CsrMat::from_triplets(n, n, std::move(t));
    return g;
}

GraphDataset load_dataset(const fs::path& dir) {
    const fs::path edges_file = dir / "edges.tsv";
    const fs::path features_file = dir / "features.tsv";
    const fs::path labels_file = dir / "labels.tsv";
    for (const auto& f : {edges_file, features_file, labels_file}) {
        if (!fs::exists(f)) throw DataError(fmt::format("missing file {}", f.string()));
    }

    // Labels define the node set.
    std::vector<std::pair<std::size_t, int>> label_entries;
    std::size_t n = 0;
    for (const auto& line : read_data_lines(labels_file)) {
        auto [key, rest] = split_key(line.text);
        const std::size_t id = parse_node(labels_file, line, key);
        const auto lab = parse_number<long long>(rest);
        if (!lab) bad_line(labels_file, line.number, fmt::format("expected a label, got '{}'", rest));
        if (*lab < 0 || *lab > std::numeric_limits<int>::max()) {
            bad_line(labels_file, line.number, fmt::format("label {} out of range", *lab));
        }
        label_entries.emplace_back(id, static_cast<int>(*lab));
        n = std::max(n, id + 1);
    }
    if (n == 0) throw DataError(fmt::format("{} contains no labels", labels_file.string()));
    std::vector<int> labels(n, -1);
    for (auto [id, lab] : label_entries) {
        if (labels[id] != -1 && labels[id] != lab) {
            throw DataError(fmt::format("{}: node {} has conflicting labels", labels_file.string(), id));
        }
        labels[id] = lab;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0) throw DataError(fmt::format("{}: node {} has no label", labels_file.string(), i));
    }

    std::vector<Edge> raw;
    for (const auto& line : read_data_lines(edges_file)) {
        auto [a, b] = split_key(line.text);
        if (b.empty()) bad_line(edges_file, line.number, "expected 'u<TAB>v'");
        const std::size_t u = parse_node(edges_file, line, a);
        const std::size_t v = parse_node(edges_file, line, b);
        if (u >= n || v >= n) {
            bad_line(edges_file, line.number,
                     fmt::format("node index out of range (n = {} from labels)", n));
        }
        raw.emplace_back(u, v);
    }

    const auto feature_lines = read_data_lines(features_file);
    enum class Format { Dense, Sparse };
    std::optional<Format> format;
    std::size_t f = 0;
    struct Row {
        std::size_t node;
        std::vector<std::pair<std::size_t, double>> entries;
    };
    std::vector<Row> rows;
    rows.reserve(feature_lines.size());
    for (const auto& line : feature_lines) {
        auto [key, rest] = split_key(line.text);
        const std::size_t id = parse_node(features_file, line, key);
        if (id >= n) bad_line(features_file, line.number, fmt::format("node {} >= n = {}", id, n));
        if (!format) format = (rest.find(':') != std::string_view::npos || rest.empty())
                                  ? Format::Sparse : Format::Dense;
        Row row{id, {}};
        if (*format == Format::Dense) {
            std::size_t col = 0;
            std::size_t pos = 0;
            while (pos <= rest.size()) {
                const auto comma = rest.find(',', pos);
                const auto tok = rest.substr(pos, comma == std::string_view::npos ? rest.npos : comma - pos);
                const auto v = parse_number<double>(tok);
                if (!v) bad_line(features_file, line.number, fmt::format("bad feature value '{}'", tok));
                if (*v != 0.0) row.entries.emplace_back(col, *v);
                ++col;
                if (comma == std::string_view::npos) break;
                pos = comma + 1;
            }
            if (rows.empty()) f = col;
            if (col != f) {
                bad_line(features_file, line.number,
                         fmt::format("{} feature values, expected {}", col, f));
            }
        } else {
            std::size_t pos = 0;
            while (pos < rest.size()) {
                const auto end = rest.find_first_of(" \t", pos);
                const auto tok = rest.substr(pos, end == std::string_view::npos ? rest.npos : end - pos);
                pos = (end == std::string_view::npos) ? rest.size() : rest.find_first_not_of(" \t", end);
                if (pos == std::string_view::npos) pos = rest.size();
                if (tok.empty()) continue;
                const auto colon = tok.find(':');
                if (colon == std::string_view::npos) {
                    bad_line(features_file, line.number, fmt::format("expected idx:val, got '{}'", tok));
                }
                const auto idx = parse_number<long long>(tok.substr(0, colon));
                const auto val = parse_number<double>(tok.substr(colon + 1));
                if (!idx || *idx < 0 || !val) {
                    bad_line(features_file, line.number, fmt::format("bad sparse entry '{}'", tok));
                }
                row.entries.emplace_back(static_cast<std::size_t>(*idx), *val);
                f = std::max(f, static_cast<std::size_t>(*idx) + 1);
            }
        }
        rows.push_back(std::move(row));
    }

    DenseMat x(n, f);
    for (const auto& row : rows) {
        for (auto [j, v] : row.entries) x(row.node, j) = v;
    }
    ensure_finite(x, features_file.string());
    return make_dataset(dir.filename().string(), n, raw, std::move(x), std::move(labels));
}

void write_dataset(const fs::path& dir, const GraphDataset& g) {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "edges.tsv");
        for (auto [u, v] : g.edges) out << u << '\t' << v << '\n';
    }
    {
        std::ofstream out(dir / "features.tsv");
        for (std::size_t i = 0; i < g.n; ++i) {
            out << i << '\t';
            const auto r = g.features.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) {
                if (j) out << ',';
                out << fmt::format("{}", r[j]);
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "labels.tsv");
        for (std::size_t i = 0; i < g.n; ++i) out << i << '\t' << g.labels[i] << '\n';
    }
}

// ---------------------------------------------------------------------------

NormalizedGraph normalize(const CsrMat& adjacency) {
    const std::size_t n = adjacency.rows();
    if (adjacency.cols() != n) throw DimensionError("normalize: adjacency must be square");
    const auto rp = adjacency.row_ptr();
    const auto ci = adjacency.col_idx();
    const auto av = adjacency.vals();

    std::vector<double> deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 1.0;  // self-loop
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k)
            if (ci[k] != i) d += av[k];
        deg[i] = d;
    }
    std::vector<Triplet> t;
    t.reserve(adjacency.nnz() + n);
    for (std::size_t i = 0; i < n; ++i) {
        t.push_back({i, i, 1.0 / deg[i]});
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
            if (ci[k] == i) continue;
            t.push_back({i, ci[k], av[k] / std::sqrt(deg[i] * deg[ci[k]])});
        }
    }
    return NormalizedGraph{CsrMat::from_triplets(n, n, std::move(t)), true};
}

NormalizedGraph normalize(const GraphDataset& g) { return normalize(g.adjacency); }

CsrMat laplacian(const NormalizedGraph& ng) {
    const std::size_t n = ng.n();
    std::vector<Triplet> t;
    t.reserve(ng.a_hat.nnz() + n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    const auto rp = ng.a_hat.row_ptr();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k)
            t.push_back({i, ng.a_hat.col_idx()[k], -ng.a_hat.vals()[k]});
    return CsrMat::from_triplets(n, n, std::move(t));
}

DenseMat ahat_power_apply(const NormalizedGraph& ng, const DenseMat& q, std::size_t hops,
                          std::span<const double> lambdas) {
    if (hops == 0 || lambdas.size() != hops) {
        throw DimensionError(fmt::format("ahat_power_apply: K = {} with {} weights", hops, lambdas.size()));
    }
    if (q.rows() != ng.n()) throw DimensionError("ahat_power_apply: q.rows must equal n");
    DenseMat acc(q.rows(), q.cols());
    DenseMat cur = q;
    for (std::size_t k = 0; k < hops; ++k) {
        cur = spmm(ng.a_hat, cur);
        acc = axpy(acc, lambdas[k], cur);
    }
    return acc;
}

std::vector<DenseMat> dense_ahat_powers(const NormalizedGraph& ng, std::size_t hops) {
    std::vector<DenseMat> powers;
    const DenseMat a = ng.a_hat.to_dense();
    DenseMat cur = a;
    for (std::size_t k = 0; k < hops; ++k) {
        if (k > 0) cur = matmul(cur, a);
        powers.push_back(cur);
    }
    return powers;
}

double edge_homophily(const GraphDataset& g) {
    if (g.edges.empty()) throw DataError("edge_homophily: graph has no edges");
    std::size_t same = 0;
    for (auto [u, v] : g.edges) same += (g.labels[u] == g.labels[v]);
    return static_cast<double>(same) / static_cast<double>(g.edges.size());
}

// ---------------------------------------------------------------------------

void validate_split(const SplitSet& s, std::size_t n) {
    std::vector<char> seen(n, 0);
    auto mark = [&](const std::vector<std::size_t>& set, const char* name) {
        if (set.empty()) {
            throw DataError(fmt::format("split {}: empty {} set", s.split_id, name));
        }
        for (std::size_t i : set) {
            if (i >= n) throw DataError(fmt::format("split {}: node {} >= n = {}", s.split_id, i, n));
            if (seen[i]) {
                throw DataError(fmt::format("split {}: node {} assigned to more than one set",
                                            s.split_id, i));
            }
            seen[i] = 1;
        }
    };
    mark(s.train, "train");
    mark(s.val, "val");
    mark(s.test, "test");
}

std::vector<SplitSet> load_splits(const fs::path& dir, std::size_t n) {
    std::vector<SplitSet> out;
    for (std::size_t id = 0;; ++id) {
        const fs::path file = dir / fmt::format("split_{}.tsv", id);
        if (!fs::exists(file)) break;
        SplitSet s;
        s.split_id = id;
        for (const auto& line : read_data_lines(file)) {
            auto [key, rest] = split_key(line.text);
            const std::size_t node = parse_node(file, line, key);
            if (rest == "train") s.train.push_back(node);
            else if (rest == "val") s.val.push_back(node);
            else if (rest == "test") s.test.push_back(node);
            else bad_line(file, line.number, fmt::format("unknown set '{}'", rest));
        }
        try {
            validate_split(s, n);
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}: {}", file.string(), e.what()));
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw DataError(fmt::format("no split_0.tsv in {}", dir.string()));
    return out;
}

void write_splits(const fs::path& dir, const std::vector<SplitSet>& splits) {
    fs::create_directories(dir);
    for (const auto& s : splits) {
        std::ofstream out(dir / fmt::format("split_{}.tsv", s.split_id));
        for (std::size_t i : s.train) out << i << "\ttrain\n";
        for (std::size_t i : s.val) out << i << "\tval\n";
        for (std::size_t i : s.test) out << i << "\ttest\n";
    }
}

std::vector<SplitSet> random_splits(const GraphDataset& g, std::size_t count, double train_frac,
                                    double val_frac, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(g.num_classes));
    for (std::size_t i = 0; i < g.n; ++i) by_class[static_cast<std::size_t>(g.labels[i])].push_back(i);
    std::vector<SplitSet> out;
    std::mt19937_64 rng(seed);
    for (std::size_t s = 0; s < count; ++s) {
        SplitSet split;
        split.split_id = s;
        for (auto members : by_class) {
            std::shuffle(members.begin(), members.end(), rng);
            const auto m = members.size();
            auto ntr = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(m)));
            auto nva = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(m)));
            if (m >= 3) {
                ntr = std::max<std::size_t>(ntr, 1);
                nva = std::max<std::size_t>(nva, 1);
            }
            ntr = std::min(ntr, m);
            nva = std::min(nva, m - ntr);
            for (std::size_t k = 0; k < m; ++k) {
                auto& dst = k < ntr ? split.train : (k < ntr + nva ? split.val : split.test);
                dst.push_back(members[k]);
            }
        }
        std::sort(split.train.begin(), split.train.end());
        std::sort(split.val.begin(), split.val.end());
        std::sort(split.test.begin(), split.test.end());
        validate_split(split, g.n);
        out.push_back(std::move(split));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> hop_distances(const GraphDataset& g, std::size_t source) {
    constexpr auto inf = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> dist(g.n, inf);
    std::queue<std::size_t> frontier;
    dist[source] = 0;
    frontier.push(source);
    const auto rp = g.adjacency.row_ptr();
    const auto ci = g.adjacency.col_idx();
    while (!frontier.empty()) {
        const std::size_t u = frontier.front();
        frontier.pop();
        for (std::size_t k = rp[u]; k < rp[u + 1]; ++k) {
            const std::size_t v = ci[k];
            if (dist[v] == inf) {
                dist[v] = dist[u] + 1;
                frontier.push(v);
            }
        }
    }
    return dist;
}

std::vector<double> khop_same_label_stats(const GraphDataset& g, std::size_t hops) {
    std::vector<double> totals(hops + 1, 0.0);
    for (std::size_t i = 0; i < g.n; ++i) {
        const auto dist = hop_distances(g, i);
        for (std::size_t j = 0; j < g.n; ++j) {
            if (j == i || g.labels[j] != g.labels[i]) continue;
            const std::size_t bucket = (dist[j] <= hops) ? dist[j] - 1 : hops;
            totals[bucket] += 1.0;
        }
    }
    for (double& t : totals) t /= static_cast<double>(g.n);
    return totals;
}

GraphDataset make_synthetic(const SyntheticGraphSpec& spec) {
    if (spec.num_classes < 1 || spec.n < static_cast<std::size_t>(spec.num_classes)) {
        throw DimensionError("make_synthetic: need at least one node per class");
    }
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto c = static_cast<std::size_t>(spec.num_classes);

    std::vector<int> labels(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) labels[i] = static_cast<int>(i % c);
    std::shuffle(labels.begin(), labels.end(), rng);

    std::vector<std::vector<std::size_t>> members(c);
    for (std::size_t i = 0; i < spec.n; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);

    DenseMat centroids(c, spec.num_features);
    for (double& v : centroids.values()) v = gauss(rng);
    DenseMat x(spec.n, spec.num_features);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const auto mu = centroids.row(static_cast<std::size_t>(labels[i]));
        for (std::size_t j = 0; j < spec.num_features; ++j) x(i, j) = spec.feature_signal * mu[j] + gauss(rng);
    }

    const auto target = static_cast<std::size_t>(std::llround(spec.mean_degree * static_cast<double>(spec.n) / 2.0));
    std::set<Edge> edges;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_node(0, spec.n - 1);
    std::size_t attempts = 0;
    while (edges.size() < target && attempts < 50 * target + 100) {
        ++attempts;
        const std::size_t u = pick_node(rng);
        const auto cu = static_cast<std::size_t>(labels[u]);
        std::size_t cv = cu;
        if (c > 1 && unif(rng) >= spec.edge_homophily) {
            cv = std::uniform_int_distribution<std::size_t>(0, c - 2)(rng);
            if (cv >= cu) ++cv;
        }
        const auto& pool = members[cv];
        const std::size_t v = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        if (u == v) continue;
        edges.emplace(std::min(u, v), std::max(u, v));
    }
    return make_dataset("synthetic", spec.n, {edges.begin(), edges.end()}, std::move(x), std::move(labels));
}

}  // namespace glognn

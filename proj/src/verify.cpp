#include "glognn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "glognn/errors.hpp"
#include "glognn/train.hpp"

namespace glognn {

namespace {

DenseMat gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    DenseMat m(r, c);
    for (double& v : m.values()) v = g(rng);
    return m;
}

std::vector<double> uniform_vec(std::size_t k, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(k);
    for (double& x : v) x = u(rng);
    return v;
}

std::vector<Edge> random_edges(std::size_t n, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(p);
    std::vector<Edge> e;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v)
            if (coin(rng)) e.emplace_back(u, v);
    return e;
}

GraphDataset bare_graph(std::size_t n, std::vector<Edge> edges, std::size_t c, std::mt19937_64& rng) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % std::max<std::size_t>(c, 1));
    std::shuffle(labels.begin(), labels.end(), rng);
    return make_dataset("instance", n, edges, DenseMat(n, 1), std::move(labels));
}

/// H Sigma, or H when sigma is empty.
DenseMat projected(const DenseMat& h, const std::vector<double>& sigma) {
    if (sigma.empty()) return h;
    DenseMat g = h;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) *= sigma[j];
    return g;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

const std::vector<double>& effective_lambdas(const VerifyInstance& inst, std::vector<double>& zeros) {
    if (inst.cfg.local_regularization()) return inst.lambdas;
    zeros.assign(inst.lambdas.size(), 0.0);
    return zeros;
}

void require_plain(const VerifyInstance& inst, const char* what) {
    if (!inst.sigma.empty()) throw DimensionError(fmt::format("{}: bounds are stated for the plain variant", what));
}

template <typename Fn>
void for_each_triple(std::size_t n, std::size_t max_triples, std::uint64_t seed, Fn&& fn) {
    if (max_triples == 0 || max_triples >= n * n * n) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t p = 0; p < n; ++p) fn(i, j, p);
        return;
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t t = 0; t < max_triples; ++t) {
        const std::size_t i = pick(rng), j = pick(rng), p = pick(rng);
        fn(i, j, p);
    }
}

}  // namespace

VerifyInstance make_instance(GraphDataset graph, DenseMat h, DenseMat h0, std::vector<double> lambdas,
                             std::vector<double> sigma, const ModelConfig& cfg, std::size_t id) {
    VerifyInstance inst;
    inst.id = id;
    inst.ng = normalize(graph);
    inst.graph = std::move(graph);
    inst.h = std::move(h);
    inst.h0 = std::move(h0);
    inst.lambdas = std::move(lambdas);
    inst.sigma = std::move(sigma);
    inst.cfg = cfg;
    inst.cfg.hops = inst.lambdas.size();
    inst.cfg.plusplus = !inst.sigma.empty();
    inst.cfg.naive_cap = std::max(inst.cfg.naive_cap, inst.ng.n());
    inst.target = dense_reg_target(inst.ng, inst.lambdas, inst.cfg);
    inst.z = solve_z_naive(inst.h, inst.h0, inst.ng, inst.lambdas, inst.sigma, inst.cfg);
    return inst;
}

VerifyInstance make_instance(const InstanceSpec& spec, std::size_t id) {
    std::mt19937_64 rng(spec.seed);
    GraphDataset g = bare_graph(spec.n, random_edges(spec.n, spec.edge_prob, rng), spec.c, rng);
    DenseMat h = gaussian(spec.n, spec.c, rng);
    DenseMat h0 = gaussian(spec.n, spec.c, rng);
    auto lambdas = uniform_vec(spec.hops, -1.0, 1.0, rng);
    std::vector<double> sigma;
    if (spec.plusplus) sigma = uniform_vec(spec.c, 0.5, 1.5, rng);
    ModelConfig cfg;
    cfg.gamma = spec.gamma;
    cfg.beta1 = spec.beta1;
    cfg.beta2 = spec.beta2;
    return make_instance(std::move(g), std::move(h), std::move(h0), std::move(lambdas), std::move(sigma), cfg, id);
}

DenseMat fast_layer(const VerifyInstance& inst) {
    ad::Tape tape;
    ParamVars p{};
    DenseMat lam(1, inst.lambdas.size());
    std::copy(inst.lambdas.begin(), inst.lambdas.end(), lam.values().begin());
    p.lambdas = tape.constant(std::move(lam));
    if (!inst.sigma.empty()) {
        DenseMat sg(1, inst.sigma.size());
        std::copy(inst.sigma.begin(), inst.sigma.end(), sg.values().begin());
        p.sigma = tape.constant(std::move(sg));
    }
    const LayerState st{tape.constant(inst.h0), tape.constant(inst.h)};
    const LayerState next = inst.sigma.empty() ? layer_update_fast(st, inst.ng, p, inst.cfg, tape)
                                               : layer_update_fast_plusplus(st, inst.ng, p, inst.cfg, tape);
    return tape.value(next.h);
}

DenseMat naive_layer(const VerifyInstance& inst) {
    if (inst.cfg.gamma == 1.0) return inst.h0;
    const DenseMat g = projected(inst.h, inst.sigma);
    return axpy(scale(matmul(inst.z, g), 1.0 - inst.cfg.gamma), inst.cfg.gamma, inst.h0);
}

double check_lemma1_stationarity(const VerifyInstance& inst) {
    const std::size_t n = inst.h.rows(), c = inst.h.cols();
    const double omg = 1.0 - inst.cfg.gamma;
    const double s = inst.cfg.beta1 + inst.cfg.beta2;
    const DenseMat g = projected(inst.h, inst.sigma);
    const DenseMat zg = matmul(inst.z, g);
    double worst = 0.0;
    std::vector<double> r(c);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < c; ++k) r[k] = inst.h(i, k) - omg * zg(i, k) - inst.cfg.gamma * inst.h0(i, k);
        for (std::size_t p = 0; p < n; ++p) {
            const double rhs = (omg * dot(r, g.row(p)) + inst.cfg.beta2 * inst.target(i, p)) / s;
            worst = std::max(worst, std::abs(inst.z(i, p) - rhs));
        }
    }
    return worst;
}

std::vector<LemmaBoundReport> check_lemma2(const VerifyInstance& inst, std::size_t max_triples, std::uint64_t seed) {
    require_plain(inst, "check_lemma2");
    const std::size_t n = inst.h.rows(), c = inst.h.cols();
    const double gamma = inst.cfg.gamma, omg = 1.0 - gamma;
    const double b2 = inst.cfg.beta2, s = inst.cfg.beta1 + b2;
    std::vector<double> zeros;
    const auto& lam = effective_lambdas(inst, zeros);
    const auto powers = dense_ahat_powers(inst.ng, lam.size());

    DenseMat m = scale(matmul(inst.h, transpose(inst.h)), omg * omg);
    for (std::size_t i = 0; i < n; ++i) m(i, i) += s;
    const DenseMat r_all = matmul(spd_inverse(m), matmul(inst.h, transpose(inst.h)));  // column p is R for h_p
    const DenseMat ht_r = matmul(transpose(inst.h), r_all);                             // c x n

    std::vector<double> u_norm(n), r_norm(n);
    for (std::size_t p = 0; p < n; ++p) {
        double uu = 0.0, rr = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double u = inst.h(p, k) - omg * omg * ht_r(k, p);
            uu += u * u;
        }
        for (std::size_t q = 0; q < n; ++q) rr += r_all(q, p) * r_all(q, p);
        u_norm[p] = std::sqrt(uu);
        r_norm[p] = std::sqrt(rr);
    }

    std::vector<LemmaBoundReport> out;
    for_each_triple(n, max_triples, seed, [&](std::size_t i, std::size_t j, std::size_t p) {
        const double dh = dist(inst.h.row(i), inst.h.row(j));
        const double dh0 = dist(inst.h0.row(i), inst.h0.row(j));
        double rows = 0.0, entries = 0.0;
        for (std::size_t k = 0; k < lam.size(); ++k) {
            rows += std::abs(lam[k]) * dist(powers[k].row(i), powers[k].row(j));
            entries += std::abs(lam[k]) * std::abs(powers[k](i, p) - powers[k](j, p));
        }
        LemmaBoundReport rep;
        rep.instance_id = inst.id;
        rep.lemma = Lemma::lemma2;
        rep.i = i;
        rep.j = j;
        rep.p = p;
        rep.aux = {omg / s * dh * u_norm[p], gamma * omg / s * dh0 * u_norm[p], b2 * omg * omg / s * rows * r_norm[p],
                   b2 / s * entries};
        rep.lhs = std::abs(inst.z(i, p) - inst.z(j, p));
        rep.rhs = rep.aux[0] + rep.aux[1] + rep.aux[2] + rep.aux[3];
        rep.slack = rep.rhs - rep.lhs;
        rep.satisfied = rep.lhs <= rep.rhs + 1e-9;
        out.push_back(std::move(rep));
    });
    return out;
}

std::vector<LemmaBoundReport> check_lemma3(const VerifyInstance& inst, std::size_t max_triples, std::uint64_t seed) {
    require_plain(inst, "check_lemma3");
    const std::size_t n = inst.h.rows(), c = inst.h.cols();
    const double gamma = inst.cfg.gamma, omg = 1.0 - gamma;
    const double b2 = inst.cfg.beta2, s = inst.cfg.beta1 + b2;
    std::vector<double> zeros;
    const auto& lam = effective_lambdas(inst, zeros);
    const auto powers = dense_ahat_powers(inst.ng, lam.size());

    std::vector<double> eta(n);
    for (std::size_t p = 0; p < n; ++p) {
        double a = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double d = inst.h(p, k) - gamma * inst.h0(p, k);
            a += d * d;
        }
        const double t = norm2(inst.target.row(p));
        eta[p] = std::sqrt(a + b2 * t * t);
    }

    std::vector<LemmaBoundReport> out;
    for_each_triple(n, max_triples, seed, [&](std::size_t i, std::size_t j, std::size_t p) {
        double entries = 0.0;
        for (std::size_t k = 0; k < lam.size(); ++k) {
            entries += std::abs(lam[k]) * std::abs(powers[k](p, i) - powers[k](p, j));
        }
        LemmaBoundReport rep;
        rep.instance_id = inst.id;
        rep.lemma = Lemma::lemma3;
        rep.i = i;
        rep.j = j;
        rep.p = p;
        rep.eta = eta[p];
        rep.aux = {eta[p] * omg * dist(inst.h.row(i), inst.h.row(j)) / s, b2 * entries / s};
        rep.lhs = std::abs(inst.z(p, i) - inst.z(p, j));
        rep.rhs = rep.aux[0] + rep.aux[1];
        rep.slack = rep.rhs - rep.lhs;
        rep.satisfied = rep.lhs <= rep.rhs + 1e-9;
        out.push_back(std::move(rep));
    });
    return out;
}

double objective_row_margin(const VerifyInstance& inst) {
    const std::size_t n = inst.h.rows(), c = inst.h.cols();
    const double gamma = inst.cfg.gamma, omg = 1.0 - gamma;
    const DenseMat zg = matmul(inst.z, projected(inst.h, inst.sigma));
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < n; ++p) {
        double res = 0.0, base = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double b = inst.h(p, k) - gamma * inst.h0(p, k);
            base += b * b;
            const double r = b - omg * zg(p, k);
            res += r * r;
        }
        double zn = 0.0, dz = 0.0, tn = 0.0;
        for (std::size_t q = 0; q < n; ++q) {
            const double z = inst.z(p, q), t = inst.target(p, q);
            zn += z * z;
            dz += (z - t) * (z - t);
            tn += t * t;
        }
        const double j_star = res + inst.cfg.beta1 * zn + inst.cfg.beta2 * dz;
        const double j_zero = base + inst.cfg.beta2 * tn;
        worst = std::min(worst, j_zero - j_star);
    }
    return worst;
}

double woodbury_check(const DenseMat& h, double gamma, double beta1, double beta2) {
    const std::size_t n = h.rows(), c = h.cols();
    const double omg = 1.0 - gamma, s = beta1 + beta2;
    if (!(s > 0.0)) throw ConfigError("woodbury_check: beta1 + beta2 must be positive");
    DenseMat m = scale(matmul(h, transpose(h)), omg * omg);
    for (std::size_t i = 0; i < n; ++i) m(i, i) += s;
    const DenseMat direct = spd_inverse(m);

    DenseMat expanded = scale(DenseMat::identity(n), 1.0 / s);
    if (omg != 0.0) {
        DenseMat inner = scale(matmul(transpose(h), h), 1.0 / s);
        for (std::size_t k = 0; k < c; ++k) inner(k, k) += 1.0 / (omg * omg);
        const DenseMat corr = matmul(h, matmul(small_inverse(inner), transpose(h)));
        expanded = axpy(expanded, -1.0 / (s * s), corr);
    }
    return max_abs_diff(direct, expanded);
}

GroupingReport grouping_structure(const DenseMat& m, const std::vector<int>& labels, std::uint64_t seed,
                                  std::size_t max_pairs) {
    const std::size_t n = m.rows();
    if (labels.size() != n) throw DimensionError("grouping_structure: one label per row required");
    std::vector<std::size_t> class_size;
    for (int y : labels) {
        if (y < 0) throw DimensionError("grouping_structure: negative label");
        if (static_cast<std::size_t>(y) >= class_size.size()) class_size.resize(static_cast<std::size_t>(y) + 1, 0);
        ++class_size[static_cast<std::size_t>(y)];
    }
    const auto present = std::count_if(class_size.begin(), class_size.end(), [](std::size_t k) { return k > 0; });
    if (present < 2) throw DimensionError("grouping_structure: need at least two classes");

    std::size_t within_total = 0;
    for (std::size_t k : class_size) within_total += k * (k - 1) / 2;
    const std::size_t cross_total = n * (n - 1) / 2 - within_total;

    GroupingReport rep;
    double wsum = 0.0, csum = 0.0;
    const bool exhaustive_w = within_total <= max_pairs, exhaustive_c = cross_total <= max_pairs;
    if (exhaustive_w || exhaustive_c) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const bool same = labels[i] == labels[j];
                if (same && exhaustive_w) {
                    wsum += row_l2_dist(m, i, j);
                    ++rep.within_pairs;
                } else if (!same && exhaustive_c) {
                    csum += row_l2_dist(m, i, j);
                    ++rep.cross_pairs;
                }
            }
        }
    }
    if (!exhaustive_w || !exhaustive_c) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        while ((!exhaustive_w && rep.within_pairs < max_pairs) || (!exhaustive_c && rep.cross_pairs < max_pairs)) {
            const std::size_t i = pick(rng), j = pick(rng);
            if (i == j) continue;
            const bool same = labels[i] == labels[j];
            if (same && !exhaustive_w && rep.within_pairs < max_pairs) {
                wsum += row_l2_dist(m, i, j);
                ++rep.within_pairs;
            } else if (!same && !exhaustive_c && rep.cross_pairs < max_pairs) {
                csum += row_l2_dist(m, i, j);
                ++rep.cross_pairs;
            }
        }
    }
    rep.within_class_z_dist = rep.within_pairs ? wsum / static_cast<double>(rep.within_pairs) : 0.0;
    rep.cross_class_z_dist = csum / static_cast<double>(rep.cross_pairs);
    rep.ratio = rep.cross_class_z_dist > 0.0 ? rep.within_class_z_dist / rep.cross_class_z_dist
                                             : std::numeric_limits<double>::infinity();

    double inside = 0.0, total = 0.0;
    const bool square = m.rows() == m.cols();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double a = std::abs(m(i, j));
            total += a;
            if (square ? labels[i] == labels[j] : static_cast<int>(j) == labels[i]) inside += a;
        }
    }
    rep.block_structure_score = total > 0.0 ? inside / total : 0.0;
    return rep;
}

HomophilySignReport homophily_sign_study(const GraphDataset& g, const DenseMat& z, std::size_t hops,
                                         double positive_tol) {
    if (z.rows() != g.n || z.cols() != g.n) throw DimensionError("homophily_sign_study: Z must be n x n");
    if (hops == 0) throw ConfigError("homophily_sign_study: K must be >= 1");
    HomophilySignReport rep;
    rep.mean_same_class.assign(hops + 1, 0.0);
    rep.mean_positive_same_class.assign(hops + 1, 0.0);
    for (std::size_t i = 0; i < g.n; ++i) {
        const auto d = hop_distances(g, i);
        for (std::size_t j = 0; j < g.n; ++j) {
            if (j == i || g.labels[j] != g.labels[i]) continue;
            const std::size_t bucket = d[j] <= hops ? d[j] - 1 : hops;
            rep.mean_same_class[bucket] += 1.0;
            if (z(i, j) > positive_tol) rep.mean_positive_same_class[bucket] += 1.0;
        }
    }
    for (std::size_t k = 0; k <= hops; ++k) {
        rep.mean_same_class[k] /= static_cast<double>(g.n);
        rep.mean_positive_same_class[k] /= static_cast<double>(g.n);
    }
    return rep;
}

void write_homophily_csv(const std::filesystem::path& file, const HomophilySignReport& r) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", file.string()));
    const std::size_t k = r.mean_same_class.size() - 1;
    out << "hop,mean_same_class,mean_positive_z\n";
    for (std::size_t b = 0; b <= k; ++b) {
        const std::string hop = b < k ? std::to_string(b + 1) : ">" + std::to_string(k);
        out << fmt::format("{},{:.10g},{:.10g}\n", hop, r.mean_same_class[b], r.mean_positive_same_class[b]);
    }
}

ContinuityReport continuity_probe(std::uint64_t seed, const std::vector<double>& eps, std::size_t instances) {
    ContinuityReport rep;
    rep.eps = eps;
    std::vector<std::vector<double>> diffs(eps.size());
    for (std::size_t t = 0; t < instances; ++t) {
        std::mt19937_64 rng(seed * 7919 + t);
        const std::size_t n = 12, c = 3, a = n - 2, b = n - 1;
        auto edges = random_edges(n - 2, 0.3, rng);
        edges.emplace_back(a, b);
        std::bernoulli_distribution coin(0.4);
        bool any = false;
        for (std::size_t v = 0; v < n - 2; ++v) {
            if (coin(rng) || (!any && v == n - 3)) {
                edges.emplace_back(v, a);
                edges.emplace_back(v, b);
                any = true;
            }
        }
        GraphDataset g = bare_graph(n, edges, c, rng);
        const DenseMat h = gaussian(n, c, rng), h0 = gaussian(n, c, rng);
        const DenseMat dir = gaussian(2, c, rng);
        const auto lambdas = uniform_vec(2, 0.0, 1.0, rng);
        ModelConfig cfg;
        cfg.gamma = 0.3;
        for (std::size_t e = 0; e < eps.size(); ++e) {
            DenseMat he = h, h0e = h0;
            for (std::size_t k = 0; k < c; ++k) {
                he(b, k) = h(a, k) + eps[e] * dir(0, k);
                h0e(b, k) = h0(a, k) + eps[e] * dir(1, k);
            }
            const VerifyInstance inst = make_instance(g, std::move(he), std::move(h0e), lambdas, {}, cfg, t);
            for (std::size_t p = 0; p < n; ++p) diffs[e].push_back(std::abs(inst.z(a, p) - inst.z(b, p)));
        }
    }
    for (auto& d : diffs) {
        std::sort(d.begin(), d.end());
        const std::size_t m = d.size();
        rep.medians.push_back(m % 2 ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]));
    }
    rep.strictly_decreasing = !rep.medians.empty();
    for (std::size_t e = 1; e < rep.medians.size(); ++e) {
        if (!(rep.medians[e] < rep.medians[e - 1])) rep.strictly_decreasing = false;
    }
    return rep;
}

OracleReport oracle_sweep(std::uint64_t seed, std::size_t limit, double inject_fault) {
    struct Point {
        std::size_t n, c, k;
        double gamma, beta1, beta2;
    };
    std::vector<Point> grid;
    for (std::size_t n : {8, 16, 32, 64})
        for (std::size_t c = 2; c <= 8; ++c)
            for (std::size_t k : {1, 2, 3})
                for (double gm : {0.0, 0.3, 0.9})
                    for (double b1 : {0.0, 1.0, 10.0})
                        for (double b2 : {0.1, 1.0, 10.0}) grid.push_back({n, c, k, gm, b1, b2});
    if (limit > 0 && limit < grid.size()) {
        std::vector<Point> kept;
        std::mt19937_64 rng(seed);
        std::sample(grid.begin(), grid.end(), std::back_inserter(kept), limit, rng);
        grid = std::move(kept);
    }
    OracleReport rep;
    for (bool plusplus : {false, true}) {
        for (std::size_t idx = 0; idx < grid.size(); ++idx) {
            const Point& pt = grid[idx];
            InstanceSpec spec{pt.n, pt.c, pt.k, pt.gamma, pt.beta1, pt.beta2, 0.25, plusplus,
                              seed * 1000003ULL + idx * 2 + (plusplus ? 1 : 0)};
            const VerifyInstance inst = make_instance(spec, idx);
            DenseMat fast = fast_layer(inst);
            if (inject_fault != 0.0)
                for (double& v : fast.values()) v += inject_fault;
            const DenseMat naive = naive_layer(inst);
            const double err = max_abs_diff(fast, naive) / (1.0 + max_abs(naive));
            double& worst = plusplus ? rep.worst_plusplus : rep.worst_plain;
            worst = std::max(worst, err);
            ++rep.instances;
        }
    }
    return rep;
}

GroupingFixture train_grouping_fixture(std::uint64_t seed) {
    SyntheticGraphSpec spec;
    spec.n = 120;
    spec.num_classes = 2;
    spec.num_features = 16;
    spec.mean_degree = 6.0;
    spec.edge_homophily = 0.1;
    spec.feature_signal = 1.0;
    spec.seed = seed + 1;
    GroupingFixture fx;
    fx.graph = make_synthetic(spec);
    const NormalizedGraph ng = normalize(fx.graph);
    const auto splits = random_splits(fx.graph, 1, 0.5, 0.25, seed);

    ModelConfig mc;
    mc.alpha = 0.5;
    mc.gamma = 0.5;
    mc.beta1 = 1.0;
    mc.beta2 = 0.1;
    mc.hops = 2;
    mc.layers = 1;
    mc.hidden_dim = 32;
    TrainConfig tc;
    tc.lr = 0.01;
    tc.weight_decay = 5e-5;
    tc.patience = 100;
    tc.max_epochs = 300;
    tc.seed = seed;
    const TrainedModel tm = train_one(fx.graph, ng, splits.front(), mc, tc);
    fx.test_accuracy = tm.result.test_metric;

    const ForwardTrace trace = evaluate(fx.graph, ng, tm.params, mc);
    const auto lam = tm.params.lambdas.row(0);
    fx.z = solve_z_naive(trace.h[mc.layers - 1], trace.h[0], ng, {lam.begin(), lam.end()}, {}, mc);
    fx.h = trace.h.back();
    return fx;
}

// ---------------------------------------------------------------------------

namespace {

void lemma_suite(const SuiteOptions& o, std::vector<CheckResult>& out) {
    const std::size_t count = o.trials ? o.trials : 100;
    std::mt19937_64 rng(o.seed);
    auto pick = [&](std::initializer_list<double> v) {
        return *(v.begin() + std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng));
    };
    CheckResult l1{"lemma1_stationarity", true, 0.0, 1e-8, 0, ""};
    CheckResult l2{"lemma2_bound", true, std::numeric_limits<double>::infinity(), 0.0, 0, ""};
    CheckResult l3{"lemma3_bound", true, std::numeric_limits<double>::infinity(), 0.0, 0, ""};
    CheckResult jm{"objective_not_above_zero_point", true, std::numeric_limits<double>::infinity(), 0.0, 0, ""};
    std::size_t v2 = 0, v3 = 0;
    for (std::size_t t = 0; t < count; ++t) {
        InstanceSpec spec;
        spec.n = o.n;
        spec.c = static_cast<std::size_t>(pick({2, 3, 4, 5}));
        spec.hops = static_cast<std::size_t>(pick({1, 2, 3}));
        spec.gamma = pick({0.0, 0.3, 0.5, 0.9});
        spec.beta1 = pick({0.0, 1.0, 10.0});
        spec.beta2 = pick({0.1, 1.0, 10.0});
        spec.seed = rng();
        const VerifyInstance inst = make_instance(spec, t);

        l1.worst = std::max(l1.worst, check_lemma1_stationarity(inst));
        ++l1.count;
        for (const auto& r : check_lemma2(inst)) {
            if (r.i != r.j) l2.worst = std::min(l2.worst, r.slack);
            v2 += !r.satisfied;
            ++l2.count;
        }
        for (const auto& r : check_lemma3(inst)) {
            if (r.i != r.j) l3.worst = std::min(l3.worst, r.slack);
            v3 += !r.satisfied;
            ++l3.count;
        }
        const double margin = objective_row_margin(inst);
        jm.worst = std::min(jm.worst, margin);
        if (margin < -1e-9) jm.pass = false;
        ++jm.count;
    }
    l1.pass = l1.worst <= l1.threshold;
    l2.pass = v2 == 0;
    l3.pass = v3 == 0;
    l2.detail = fmt::format("{} violated triples; worst is the smallest slack with i != j", v2);
    l3.detail = fmt::format("{} violated triples; worst is the smallest slack with i != j", v3);
    l1.detail = fmt::format("{} instances of n = {}", count, o.n);
    jm.detail = "min over rows of J(0) - J(z*)";
    out.push_back(l1);
    out.push_back(l2);
    out.push_back(l3);
    out.push_back(jm);
}

void woodbury_suite(const SuiteOptions& o, std::vector<CheckResult>& out) {
    const std::size_t count = o.trials ? o.trials : 20;
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> ug(0.0, 0.9), ub1(0.0, 10.0), ub2(0.1, 10.0);
    CheckResult r{"woodbury_identity", true, 0.0, 1e-8, 0, "n = 32, c = 4"};
    for (std::size_t t = 0; t < count; ++t) {
        const DenseMat h = gaussian(32, 4, rng);
        const double g = ug(rng), b1 = ub1(rng), b2 = ub2(rng);
        r.worst = std::max(r.worst, woodbury_check(h, g, b1, b2));
        ++r.count;
    }
    r.pass = r.worst <= r.threshold;
    out.push_back(r);

    CheckResult near{"woodbury_gamma_0.999", true, 0.0, 1e-6, 0, "conditioning probe"};
    for (std::size_t t = 0; t < count; ++t) {
        near.worst = std::max(near.worst, woodbury_check(gaussian(32, 4, rng), 0.999, 1.0, 1.0));
        ++near.count;
    }
    near.pass = near.worst <= near.threshold;
    out.push_back(near);
}

void oracle_suite(const SuiteOptions& o, std::vector<CheckResult>& out) {
    const OracleReport rep = oracle_sweep(o.seed, o.trials, o.inject_fault);
    const std::size_t per = rep.instances / 2;
    out.push_back({"oracle_plain", rep.worst_plain <= 1e-6, rep.worst_plain, 1e-6, per,
                   "max |fast - dense| / (1 + max |dense|)"});
    out.push_back({"oracle_plusplus", rep.worst_plusplus <= 1e-6, rep.worst_plusplus, 1e-6, per,
                   "max |fast - dense| / (1 + max |dense|)"});
}

void grouping_suite(const SuiteOptions& o, std::vector<CheckResult>& out) {
    const ContinuityReport cont = continuity_probe(o.seed);
    std::string med;
    for (double m : cont.medians) med += fmt::format("{}{:.3g}", med.empty() ? "" : " ", m);
    out.push_back({"continuity_probe", cont.strictly_decreasing, cont.medians.empty() ? 0.0 : cont.medians.back(), 0.0,
                   cont.medians.size(), "medians " + med});

    std::mt19937_64 rng(o.seed);
    const DenseMat zr = gaussian(64, 64, rng);
    std::vector<int> labels(64);
    for (std::size_t i = 0; i < 64; ++i) labels[i] = static_cast<int>(i % 4);
    const GroupingReport null = grouping_structure(zr, labels, o.seed);
    out.push_back({"grouping_null_band", null.ratio >= 0.9 && null.ratio <= 1.1, null.ratio, 1.1, 1,
                   "random Gaussian Z, ratio in [0.9, 1.1]"});

    const GroupingFixture fx = train_grouping_fixture(o.seed);
    const GroupingReport g = grouping_structure(fx.z, fx.graph.labels, o.seed);
    out.push_back({"grouping_trained_ratio", g.ratio < 0.5, g.ratio, 0.5, g.within_pairs + g.cross_pairs,
                   fmt::format("block score {:.4f}, test accuracy {:.3f}", g.block_structure_score, fx.test_accuracy)});
}

}  // namespace

std::vector<CheckResult> run_suite(const std::string& suite, const SuiteOptions& opts) {
    std::vector<CheckResult> out;
    const bool all = suite == "all";
    if (!all && suite != "lemmas" && suite != "woodbury" && suite != "oracle" && suite != "grouping") {
        throw ConfigError(fmt::format("unknown verify suite '{}'", suite));
    }
    if (all || suite == "lemmas") lemma_suite(opts, out);
    if (all || suite == "woodbury") woodbury_suite(opts, out);
    if (all || suite == "oracle") oracle_suite(opts, out);
    if (all || suite == "grouping") grouping_suite(opts, out);
    return out;
}

void write_verify_report(const std::filesystem::path& file, const std::string& suite, const SuiteOptions& opts,
                         const std::vector<CheckResult>& results) {
    nlohmann::ordered_json j;
    j["suite"] = suite;
    j["seed"] = opts.seed;
    j["n"] = opts.n;
    j["pass"] = std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json c;
        c["name"] = r.name;
        c["pass"] = r.pass;
        c["worst"] = std::isfinite(r.worst) ? nlohmann::ordered_json(r.worst) : nlohmann::ordered_json(nullptr);
        c["threshold"] = r.threshold;
        c["count"] = r.count;
        c["detail"] = r.detail;
        j["checks"].push_back(std::move(c));
    }
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", file.string()));
    out << j.dump(2) << '\n';
}

}  // namespace glognn

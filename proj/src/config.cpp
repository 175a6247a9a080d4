#include "glognn/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "glognn/errors.hpp"

namespace glognn {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(std::string_view key, std::string_view v) {
    double out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end) throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
    return out;
}

std::uint64_t to_count(std::string_view key, std::string_view v) {
    std::uint64_t out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end) {
        throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, v));
    }
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot open config file {}", file.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename Fn>
void for_each_setting(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(fmt::format("line {}: expected 'key = value', got '{}'", line_no, line));
        }
        fn(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
    }
}

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
    ModelConfig& m = cfg.model;
    TrainConfig& t = cfg.train;
    if (key == "alpha") m.alpha = to_double(key, value);
    else if (key == "gamma") m.gamma = to_double(key, value);
    else if (key == "beta1") m.beta1 = to_double(key, value);
    else if (key == "beta2") m.beta2 = to_double(key, value);
    else if (key == "K" || key == "hops" || key == "max_hop_count") m.hops = to_count(key, value);
    else if (key == "norm_layers" || key == "layers" || key == "L") m.layers = to_count(key, value);
    else if (key == "hidden_dim") m.hidden_dim = to_count(key, value);
    else if (key == "dropout") m.dropout = to_double(key, value);
    else if (key == "plusplus") m.plusplus = to_bool(key, value);
    else if (key == "ablation") m.ablation = parse_ablation(value);
    else if (key == "naive_cap") m.naive_cap = to_count(key, value);
    else if (key == "lr") t.lr = to_double(key, value);
    else if (key == "weight_decay") t.weight_decay = to_double(key, value);
    else if (key == "early_stopping" || key == "patience") t.patience = to_count(key, value);
    else if (key == "max_epochs") t.max_epochs = to_count(key, value);
    else if (key == "seed") t.seed = to_count(key, value);
    else if (key == "optimizer") {
        if (value == "adam") t.optimizer = Optimizer::adam;
        else if (value == "adamw") t.optimizer = Optimizer::adamw;
        else throw ConfigError(fmt::format("optimizer: unknown value '{}'", value));
    } else if (key == "metric") {
        if (value == "accuracy") t.metric = Metric::accuracy;
        else if (value == "auc") t.metric = Metric::auc;
        else throw ConfigError(fmt::format("metric: unknown value '{}'", value));
    } else {
        throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
}

RunConfig parse_config(std::string_view text, RunConfig base) {
    for_each_setting(text, [&](std::string_view k, std::string_view v, std::size_t line_no) {
        try {
            apply_setting(base, k, v);
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
        }
    });
    base.model.validate();
    base.train.validate();
    return base;
}

RunConfig load_config(const std::filesystem::path& file, RunConfig base) {
    try {
        return parse_config(read_file(file), std::move(base));
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", file.string(), e.what()));
    }
}

ConfigRecord to_record(const ModelConfig& m, const TrainConfig& t) {
    return {
        {"alpha", fmt::format("{}", m.alpha)},
        {"gamma", fmt::format("{}", m.gamma)},
        {"beta1", fmt::format("{}", m.beta1)},
        {"beta2", fmt::format("{}", m.beta2)},
        {"K", fmt::format("{}", m.hops)},
        {"norm_layers", fmt::format("{}", m.layers)},
        {"hidden_dim", fmt::format("{}", m.hidden_dim)},
        {"dropout", fmt::format("{}", m.dropout)},
        {"plusplus", m.plusplus ? "true" : "false"},
        {"ablation", std::string(to_string(m.ablation))},
        {"lr", fmt::format("{}", t.lr)},
        {"weight_decay", fmt::format("{}", t.weight_decay)},
        {"early_stopping", fmt::format("{}", t.patience)},
        {"max_epochs", fmt::format("{}", t.max_epochs)},
        {"optimizer", std::string(to_string(t.optimizer))},
        {"metric", std::string(to_string(t.metric))},
        {"seed", fmt::format("{}", t.seed)},
    };
}

std::string to_config_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : to_record(cfg)) out += fmt::format("{} = {}\n", k, v);
    out += fmt::format("naive_cap = {}\n", cfg.model.naive_cap);
    return out;
}

Lattice parse_grid(std::string_view text) {
    Lattice lattice;
    for_each_setting(text, [&](std::string_view k, std::string_view v, std::size_t line_no) {
        GridAxis axis{std::string(k), {}};
        while (!v.empty()) {
            const auto comma = v.find(',');
            const auto tok = trim(v.substr(0, comma));
            if (tok.empty()) throw ConfigError(fmt::format("line {}: empty grid value for '{}'", line_no, k));
            axis.values.emplace_back(tok);
            v = comma == std::string_view::npos ? std::string_view{} : v.substr(comma + 1);
        }
        if (axis.values.empty()) throw ConfigError(fmt::format("line {}: no values for '{}'", line_no, k));
        // Reject bad keys/values now rather than mid-sweep.
        for (const auto& val : axis.values) {
            RunConfig probe;
            try {
                apply_setting(probe, axis.key, val);
            } catch (const ConfigError& e) {
                throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
            }
        }
        lattice.push_back(std::move(axis));
    });
    return lattice;
}

Lattice load_grid(const std::filesystem::path& file) {
    try {
        return parse_grid(read_file(file));
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", file.string(), e.what()));
    }
}

std::size_t lattice_size(const Lattice& lattice) {
    std::size_t n = 1;
    for (const auto& a : lattice) n *= a.values.size();
    return n;
}

std::vector<std::pair<std::string, std::string>> lattice_point(const Lattice& lattice, std::size_t index) {
    std::vector<std::pair<std::string, std::string>> out(lattice.size());
    for (std::size_t a = lattice.size(); a-- > 0;) {
        const auto& axis = lattice[a];
        out[a] = {axis.key, axis.values[index % axis.values.size()]};
        index /= axis.values.size();
    }
    return out;
}

namespace {

std::vector<std::string> steps(double lo, double hi, double step) {
    std::vector<std::string> v;
    const auto count = static_cast<int>(std::lround((hi - lo) / step));
    for (int i = 0; i <= count; ++i) v.push_back(fmt::format("{}", std::round((lo + i * step) * 10.0) / 10.0));
    return v;
}

}  // namespace

Lattice paper_small_grid() {
    return {
        {"lr", {"0.01", "0.005"}},
        {"dropout", steps(0.0, 0.9, 0.1)},
        {"early_stopping", {"40", "200", "300"}},
        {"weight_decay", {"1e-05", "5e-05", "0.0001"}},
        {"alpha", steps(0.0, 1.0, 0.1)},
        {"beta1", {"0", "1", "10"}},
        {"beta2", {"0.1", "1", "10", "100", "1000"}},
        {"gamma", steps(0.0, 0.9, 0.1)},
        {"norm_layers", {"1", "2", "3"}},
        {"K", {"1", "2", "3", "4", "5", "6"}},
    };
}

Lattice paper_large_grid() {
    return {
        {"optimizer", {"adamw"}},
        {"lr", {"0.01", "0.005", "0.001"}},
        {"dropout", steps(0.0, 0.9, 0.1)},
        {"weight_decay", {"0", "0.001", "0.01", "0.1"}},
        {"alpha", {"0.1", "0.5", "0.9"}},
        {"beta1", {"0", "0.1", "1"}},
        {"beta2", {"0.1", "1"}},
        {"gamma", {"0.1", "0.5", "0.9"}},
        {"norm_layers", {"1", "2", "3"}},
        {"K", {"1", "2", "3"}},
    };
}

}  // namespace glognn

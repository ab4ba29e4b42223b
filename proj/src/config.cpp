#include "dpl/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dpl {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(const std::string& key, const std::string& what) {
    throw std::invalid_argument(key + ": " + what);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) fail(key, "trailing characters in number '" + value + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(key, "expected a number, got '" + value + "'");
    } catch (const std::out_of_range&) {
        fail(key, "number out of range: '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        fail(key, "expected a non-negative integer, got '" + value + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    fail(key, "expected true|false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string fmt_list(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_same_v<T, std::string>) {
            out += values[i];
        } else {
            out += fmt(values[i]);
        }
    }
    return out;
}

struct KeyHandler {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    // absent getter: write-only alias, skipped by the serializer
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, KeyHandler>& schema() {
    static const std::map<std::string, KeyHandler> table = [] {
        std::map<std::string, KeyHandler> t;
        auto add = [&t](const std::string& key, auto set, auto get) {
            t[key] = KeyHandler{set, get};
        };

        add("data.classes",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.data.classes = parse_u64(k, v);
                if (c.data.classes < 2) fail(k, "must be >= 2");
            },
            [](const ExperimentConfig& c) { return fmt(c.data.classes); });
        add("data.dim",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.data.dim = parse_u64(k, v);
                if (c.data.dim < 2) fail(k, "must be >= 2");
            },
            [](const ExperimentConfig& c) { return fmt(c.data.dim); });
        add("data.separation",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.data.centroid_separation = parse_double(k, v);
                if (c.data.centroid_separation <= 0) fail(k, "must be > 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.data.centroid_separation); });
        add("data.cluster_scale",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.data.cluster_scale = parse_double(k, v);
                if (c.data.cluster_scale <= 0) fail(k, "must be > 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.data.cluster_scale); });

        add("pool.mode",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v != "single" && v != "dual") fail(k, "must be single|dual");
                c.pool_mode = v;
            },
            [](const ExperimentConfig& c) { return c.pool_mode; });
        auto add_imbalance = [&add](const std::string& prefix, ImbalanceSpec ExperimentConfig::* member) {
            add(prefix + ".gamma",
                [member, prefix](ExperimentConfig& c, const std::string& k, const std::string& v) {
                    (c.*member).gamma = parse_double(k, v);
                    if ((c.*member).gamma < 1.0) fail(k, "must be >= 1");
                },
                [member](const ExperimentConfig& c) { return fmt((c.*member).gamma); });
            add(prefix + ".n_max",
                [member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                    (c.*member).n_max = parse_u64(k, v);
                    if ((c.*member).n_max == 0) fail(k, "must be >= 1");
                },
                [member](const ExperimentConfig& c) { return fmt((c.*member).n_max); });
        };
        add_imbalance("pool", &ExperimentConfig::pool);
        add_imbalance("labeled_pool", &ExperimentConfig::labeled_pool);
        add_imbalance("unlabeled_pool", &ExperimentConfig::unlabeled_pool);

        add("test.per_class",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.test_per_class = parse_u64(k, v);
                if (c.test_per_class == 0) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.test_per_class); });

        add("split.mode",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v == "per_class") c.split.mode = LabelBudget::Mode::per_class;
                else if (v == "fraction") c.split.mode = LabelBudget::Mode::fraction;
                else fail(k, "must be per_class|fraction");
            },
            [](const ExperimentConfig& c) {
                return c.split.mode == LabelBudget::Mode::per_class ? "per_class" : "fraction";
            });
        add("split.per_class",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.split.per_class = parse_u64(k, v);
                if (c.split.per_class == 0) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.split.per_class); });
        add("split.fraction",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.split.fraction = parse_double(k, v);
                if (c.split.fraction < 0.0 || c.split.fraction > 1.0) fail(k, "must be in [0,1]");
            },
            [](const ExperimentConfig& c) { return fmt(c.split.fraction); });

        add("aug.weak_noise",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.aug.weak_noise = parse_double(k, v);
                if (c.train.aug.weak_noise < 0) fail(k, "must be >= 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.aug.weak_noise); });
        add("aug.strong_noise",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.aug.strong_noise = parse_double(k, v);
                if (c.train.aug.strong_noise < 0) fail(k, "must be >= 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.aug.strong_noise); });
        add("aug.mask_fraction",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.aug.mask_fraction = parse_double(k, v);
                if (c.train.aug.mask_fraction < 0.0 || c.train.aug.mask_fraction >= 1.0) {
                    fail(k, "must be in [0,1)");
                }
            },
            [](const ExperimentConfig& c) { return fmt(c.train.aug.mask_fraction); });

        add("train.method",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                try {
                    c.train.method = parse_method(v);
                } catch (const std::invalid_argument& e) {
                    fail(k, e.what());
                }
            },
            [](const ExperimentConfig& c) { return method_name(c.train.method); });
        add("train.batch",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.batch = parse_u64(k, v);
                if (c.train.batch == 0) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.batch); });
        add("train.mu",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.mu = parse_u64(k, v);
                if (c.train.mu < 1) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.mu); });
        add("train.tau",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.tau = parse_double(k, v);
                if (!(c.train.tau > 0.0 && c.train.tau <= 1.0)) fail(k, "must be in (0,1]");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.tau); });
        add("train.lambda_u",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.lambda_u = parse_double(k, v);
                if (c.train.lambda_u < 0) fail(k, "must be >= 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.lambda_u); });
        add("train.steps",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.total_steps = parse_u64(k, v);
            },
            [](const ExperimentConfig& c) { return fmt(c.train.total_steps); });
        add("train.lr",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.base_lr = parse_double(k, v);
                if (c.train.base_lr <= 0) fail(k, "must be > 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.base_lr); });
        add("train.eval_every",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.eval_every = parse_u64(k, v);
                if (c.train.eval_every == 0) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.eval_every); });
        add("train.momentum",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.sgd_momentum = parse_double(k, v);
                if (c.train.sgd_momentum < 0.0 || c.train.sgd_momentum >= 1.0) fail(k, "must be in [0,1)");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.sgd_momentum); });
        add("train.weight_decay",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.weight_decay = parse_double(k, v);
                if (c.train.weight_decay < 0) fail(k, "must be >= 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.weight_decay); });
        add("train.ema_decay",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.ema_decay = parse_double(k, v);
                if (c.train.ema_decay < 0.0 || c.train.ema_decay >= 1.0) fail(k, "must be in [0,1)");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.ema_decay); });
        add("train.hidden",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                std::vector<std::size_t> dims;
                for (const auto& item : split_list(v)) {
                    dims.push_back(parse_u64(k, item));
                    if (dims.back() == 0) fail(k, "layer widths must be >= 1");
                }
                if (dims.empty()) fail(k, "must name at least one layer");
                c.train.hidden = std::move(dims);
            },
            [](const ExperimentConfig& c) { return fmt_list(c.train.hidden); });
        add("train.pseudo_from_ema",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.pseudo_from_ema = parse_bool(k, v);
            },
            [](const ExperimentConfig& c) { return fmt(c.train.pseudo_from_ema); });
        add("train.clip_fallback",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.clip_fallback = parse_bool(k, v);
            },
            [](const ExperimentConfig& c) { return fmt(c.train.clip_fallback); });

        // debias.lambda drives both coefficients; the two specific keys
        // override independently.
        t["debias.lambda"] = KeyHandler{
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                const double lambda = parse_double(k, v);
                if (lambda < 0) fail(k, "must be >= 0");
                c.train.lambda_debias = lambda;
                c.train.lambda_margin = lambda;
            },
            nullptr};
        add("debias.lambda_debias",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.lambda_debias = parse_double(k, v);
                if (c.train.lambda_debias < 0) fail(k, "must be >= 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.lambda_debias); });
        add("debias.lambda_margin",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.lambda_margin = parse_double(k, v);
                if (c.train.lambda_margin < 0) fail(k, "must be >= 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.lambda_margin); });
        add("debias.momentum",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.p_hat_momentum = parse_double(k, v);
                if (c.train.p_hat_momentum < 0.0 || c.train.p_hat_momentum >= 1.0) {
                    fail(k, "must be in [0,1)");
                }
            },
            [](const ExperimentConfig& c) { return fmt(c.train.p_hat_momentum); });

        add("da.uniform_target",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.da_uniform_target = parse_bool(k, v);
            },
            [](const ExperimentConfig& c) { return fmt(c.train.da_uniform_target); });
        add("la.tau",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.tau_la = parse_double(k, v);
                if (c.train.tau_la < 0) fail(k, "must be >= 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.train.tau_la); });

        add("zsl.tau_clip",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.zsl.tau_clip = parse_double(k, v);
                if (c.zsl.tau_clip <= 0.0) fail(k, "must be > 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.zsl.tau_clip); });
        add("zsl.rotation",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.teacher.rotation = parse_double(k, v);
            },
            [](const ExperimentConfig& c) { return fmt(c.teacher.rotation); });
        add("zsl.translation",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                std::vector<double> tr;
                for (const auto& item : split_list(v)) tr.push_back(parse_double(k, item));
                if (tr.empty()) fail(k, "must be a number or comma list");
                c.teacher.translation = std::move(tr);
            },
            [](const ExperimentConfig& c) { return fmt_list(c.teacher.translation); });
        add("zsl.teacher_steps",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.teacher.steps = parse_u64(k, v);
                if (c.teacher.steps == 0) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.teacher.steps); });
        add("zsl.teacher_lr",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.teacher.base_lr = parse_double(k, v);
                if (c.teacher.base_lr <= 0) fail(k, "must be > 0");
            },
            [](const ExperimentConfig& c) { return fmt(c.teacher.base_lr); });
        add("zsl.min_imbalance",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.teacher.min_imbalance = parse_double(k, v);
                if (c.teacher.min_imbalance < 1.0) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.teacher.min_imbalance); });
        add("zsl.source_gamma",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.zsl_source.gamma = parse_double(k, v);
                if (c.zsl_source.gamma < 1.0) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.zsl_source.gamma); });
        add("zsl.source_n_max",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.zsl_source.n_max = parse_u64(k, v);
                if (c.zsl_source.n_max == 0) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.zsl_source.n_max); });
        add("zsl.target_per_class",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.zsl_target_per_class = parse_u64(k, v);
                if (c.zsl_target_per_class == 0) fail(k, "must be >= 1");
            },
            [](const ExperimentConfig& c) { return fmt(c.zsl_target_per_class); });

        add("sweep.lambdas",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                std::vector<double> ls;
                for (const auto& item : split_list(v)) {
                    ls.push_back(parse_double(k, item));
                    if (ls.back() < 0) fail(k, "lambdas must be >= 0");
                }
                if (ls.empty()) fail(k, "must be a non-empty comma list");
                c.sweep_lambdas = std::move(ls);
            },
            [](const ExperimentConfig& c) { return fmt_list(c.sweep_lambdas); });
        add("sweep.methods",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                auto names = split_list(v);
                if (names.empty()) fail(k, "must be a non-empty comma list");
                for (const auto& n : names) {
                    try {
                        parse_method(n);
                    } catch (const std::invalid_argument& e) {
                        fail(k, e.what());
                    }
                }
                c.sweep_methods = std::move(names);
            },
            [](const ExperimentConfig& c) { return fmt_list(c.sweep_methods); });
        add("sweep.jobs",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.sweep_jobs = parse_u64(k, v);
            },
            [](const ExperimentConfig& c) { return fmt(c.sweep_jobs); });

        add("out.dir",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
            [](const ExperimentConfig& c) { return c.out_dir; });
        add("seeds",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                std::vector<std::uint64_t> seeds;
                for (const auto& item : split_list(v)) seeds.push_back(parse_u64(k, item));
                if (seeds.empty()) fail(k, "must be a non-empty comma list");
                c.seeds = std::move(seeds);
            },
            [](const ExperimentConfig& c) { return fmt_list(c.seeds); });

        return t;
    }();
    return table;
}

void apply_line(ExperimentConfig& cfg, const std::string& raw, std::size_t line_no) {
    std::string line = raw;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.resize(comment);
    line = trim(line);
    if (line.empty()) return;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = schema();
    const auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("unknown key '" + key + "'");
    it->second.set(cfg, key, value);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        apply_line(cfg, line, line_no);
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [key, handler] : schema()) {
        if (!handler.get) continue;
        out += key;
        out += " = ";
        out += handler.get(cfg);
        out += "\n";
    }
    return out;
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("override '" + assignment + "': expected key=value");
    }
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const auto& table = schema();
    const auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("unknown key '" + key + "'");
    it->second.set(cfg, key, value);
}

void validate_config(const ExperimentConfig& cfg) {
    validate(cfg.train);
    if (cfg.split.mode == LabelBudget::Mode::fraction &&
        (cfg.split.fraction < 0.0 || cfg.split.fraction > 1.0)) {
        throw std::invalid_argument("split.fraction: must be in [0,1]");
    }
    if (cfg.pool_mode != "single" && cfg.pool_mode != "dual") {
        throw std::invalid_argument("pool.mode: must be single|dual");
    }
    if (cfg.seeds.empty()) throw std::invalid_argument("seeds: must name at least one seed");
}

}  // namespace dpl

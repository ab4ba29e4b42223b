// dpl: semi-supervised / transductive zero-shot training harness over
// synthetic Gaussian-mixture benchmarks, with debiased pseudo-labeling and
// the usual thresholded self-training baselines.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpl/checkpoint.hpp"
#include "dpl/harness.hpp"
#include "dpl/kernels.hpp"
#include "dpl/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string seed_list;
    std::string method;
    double lambda = -1.0;  // < 0: keep config value
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "config file (key = value lines)");
    cmd->add_option("--out", opts.out_dir,
                    "output directory (falls back to out.dir from the config, then to "
                    "$DPL_OUT_ROOT/<subcommand>)");
    cmd->add_option("--seed", opts.seed_list, "seed or comma list, overrides `seeds`");
    cmd->add_option("--method", opts.method, "fixmatch|debiaspl|fixmatch+da|fixmatch+la");
    cmd->add_option("--lambda", opts.lambda, "debias factor, sets both debias.lambda_* keys");
    cmd->add_option("--override", opts.overrides, "key=value, any config key, repeatable")
        ->take_all();
}

dpl::ExperimentConfig resolve_config(const CommonOpts& opts) {
    dpl::ExperimentConfig cfg =
        opts.config_path.empty() ? dpl::parse_config("") : dpl::load_config_file(opts.config_path);
    for (const auto& ov : opts.overrides) dpl::apply_override(cfg, ov);
    if (!opts.method.empty()) dpl::apply_override(cfg, "train.method=" + opts.method);
    if (opts.lambda >= 0.0) {
        dpl::apply_override(cfg, "debias.lambda_debias=" + std::to_string(opts.lambda));
        dpl::apply_override(cfg, "debias.lambda_margin=" + std::to_string(opts.lambda));
    }
    if (!opts.seed_list.empty()) dpl::apply_override(cfg, "seeds=" + opts.seed_list);
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    dpl::validate_config(cfg);
    return cfg;
}

fs::path resolve_out_dir(const dpl::ExperimentConfig& cfg, const std::string& subcommand) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* root = std::getenv("DPL_OUT_ROOT")) {
        return fs::path(root) / subcommand;
    }
    throw std::runtime_error("no output directory: pass --out, set out.dir, or export DPL_OUT_ROOT");
}

unsigned worker_count(std::size_t jobs, std::size_t runs) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t want = jobs > 0 ? jobs : runs;
    return static_cast<unsigned>(std::min<std::size_t>(want, std::min<std::size_t>(hw, runs)));
}

// Runs tasks over a small worker pool; rethrows the first failure.
void parallel_runs(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& task) {
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

int cmd_gen_data(const CommonOpts& opts) {
    const dpl::ExperimentConfig cfg = resolve_config(opts);
    const fs::path out = resolve_out_dir(cfg, "gen-data");
    fs::create_directories(out);
    for (const auto seed : cfg.seeds) {
        const dpl::BenchData bench = dpl::build_ssl_benchmark(cfg, seed);
        const fs::path dir = out / ("seed_" + std::to_string(seed));
        fs::create_directories(dir);
        dpl::save_dataset_csv(dir / "train.csv", bench.train, cfg.pool.gamma, seed);
        dpl::save_dataset_csv(dir / "test.csv", bench.test, 1.0, seed);
        std::cout << "wrote " << (dir / "train.csv").string() << " (" << bench.train.size()
                  << " rows, " << bench.train.labeled_count() << " labeled) and test.csv ("
                  << bench.test.size() << " rows)\n";
    }
    return 0;
}

void write_ssl_run_dir(const fs::path& dir, const dpl::ExperimentConfig& cfg,
                       const dpl::TrainConfig& tc, const dpl::SslRunOutput& out,
                       const dpl::Dataset& test) {
    fs::create_directories(dir);
    dpl::ExperimentConfig snapshot = cfg;
    snapshot.train = tc;
    snapshot.seeds = {tc.seed};
    dpl::save_run_outputs(dir, dpl::serialize_config(snapshot), tc, out.result, test, out.wall_sec);
    const dpl::Matrix probs = dpl::softmax_rows(dpl::forward(out.result.ema, test.features));
    dpl::EvalScope scope(test);
    dpl::save_predictions_csv(dir / "predictions_final.csv", probs, test.labels_copy());
}

int cmd_train(const CommonOpts& opts) {
    const dpl::ExperimentConfig cfg = resolve_config(opts);
    const fs::path out = resolve_out_dir(cfg, "train");
    const unsigned workers = worker_count(cfg.sweep_jobs, cfg.seeds.size());
    std::mutex io_mutex;
    parallel_runs(cfg.seeds.size(), workers, [&](std::size_t i) {
        const auto seed = cfg.seeds[i];
        const dpl::BenchData bench = dpl::build_ssl_benchmark(cfg, seed);
        const dpl::TrainConfig tc = dpl::train_config_for_seed(cfg, seed);
        const dpl::SslRunOutput run = dpl::execute_ssl_run(bench, tc);
        write_ssl_run_dir(out / ("seed_" + std::to_string(seed)), cfg, tc, run, bench.test);
        std::lock_guard lock(io_mutex);
        std::printf("seed %llu  %s  test_acc %.4f  balanced %.4f  (%.1fs)\n",
                    static_cast<unsigned long long>(seed), dpl::method_name(tc.method).c_str(),
                    run.final_scores.acc, run.final_scores.balanced_acc, run.wall_sec);
    });
    std::cout << "run directories under " << out.string() << "\n";
    return 0;
}

int cmd_zsl(const CommonOpts& opts) {
    const dpl::ExperimentConfig cfg = resolve_config(opts);
    const fs::path out = resolve_out_dir(cfg, "zsl");
    const unsigned workers = worker_count(cfg.sweep_jobs, cfg.seeds.size());
    std::mutex io_mutex;
    parallel_runs(cfg.seeds.size(), workers, [&](std::size_t i) {
        const auto seed = cfg.seeds[i];
        const dpl::ZslData data = dpl::build_zsl_benchmark(cfg, seed);
        const dpl::ZslRunOutput run = dpl::execute_zsl_run(data, cfg, seed);
        const fs::path dir = out / ("seed_" + std::to_string(seed));
        fs::create_directories(dir);

        const dpl::TrainConfig tc = dpl::train_config_for_seed(cfg, seed);
        dpl::ExperimentConfig snapshot = cfg;
        snapshot.train = tc;
        snapshot.seeds = {seed};
        dpl::save_run_outputs(dir, dpl::serialize_config(snapshot), tc, run.result, data.test,
                              run.wall_sec);
        dpl::save_checkpoint(dir / "checkpoints" / "teacher.ckpt", run.teacher.params,
                             {{"role", "teacher"}});
        {
            dpl::EvalScope scope(data.target);
            dpl::save_predictions_csv(dir / "teacher_probs.csv",
                                      dpl::teacher_probs(run.teacher, data.target.features),
                                      data.target.labels_copy());
        }
        {
            dpl::EvalScope scope(data.test);
            dpl::save_predictions_csv(
                dir / "predictions_final.csv",
                dpl::softmax_rows(dpl::forward(run.result.ema, data.test.features)),
                data.test.labels_copy());
        }
        json extra;
        extra["teacher"] = {{"balanced_test_acc", run.teacher_scores.balanced_acc},
                            {"test_acc", run.teacher_scores.acc},
                            {"target_imbalance", run.teacher.target_imbalance}};
        extra["bootstrap_counts"] = run.bootstrap_counts;
        std::ofstream side(dir / "zsl.json");
        side << extra.dump(2) << "\n";

        std::lock_guard lock(io_mutex);
        std::printf("seed %llu  %s  student balanced %.4f  teacher balanced %.4f  (%.1fs)\n",
                    static_cast<unsigned long long>(seed), dpl::method_name(tc.method).c_str(),
                    run.final_scores.balanced_acc, run.teacher_scores.balanced_acc, run.wall_sec);
    });
    std::cout << "run directories under " << out.string() << "\n";
    return 0;
}

int cmd_analyze(const CommonOpts& opts, const std::string& pred_path, const std::string& data_path,
                const std::string& ckpt_path, std::vector<double> taus) {
    const dpl::ExperimentConfig cfg = resolve_config(opts);
    const fs::path out = resolve_out_dir(cfg, "analyze");
    fs::create_directories(out);
    const dpl::StoredPredictions stored = dpl::load_predictions_csv(pred_path);
    const auto predicted = dpl::argmax_rows(stored.probs);
    const std::vector<std::uint8_t> all(predicted.size(), 1);

    const auto stats = dpl::per_class_pr(predicted, all, stored.truth, stored.probs.cols);
    dpl::save_histogram_csv(out / "histogram.csv", stats.counts);
    dpl::save_pr_csv(out / "pr.csv", stats);
    dpl::save_confusion_csv(out / "confusion.csv",
                            dpl::confusion(predicted, all, stored.truth, stored.probs.cols));
    if (taus.empty()) taus = {0.2, 0.4, 0.6, 0.8, 0.9, 0.95};
    std::sort(taus.begin(), taus.end());
    const auto sweep = dpl::threshold_sweep(stored.probs, stored.truth, taus);
    dpl::save_sweep_csv(out / "sweep.csv", sweep);

    json index;
    index["inputs"] = {{"predictions", pred_path}};
    index["files"] = {"histogram.csv", "pr.csv", "confusion.csv", "sweep.csv"};
    index["imbalance_ratio"] =
        std::isinf(stats.imbalance) ? json("inf") : json(stats.imbalance);

    if (!data_path.empty() && !ckpt_path.empty()) {
        const dpl::Dataset ds = dpl::load_dataset_csv(data_path);
        const dpl::MlpParams params = dpl::load_checkpoint(ckpt_path);
        const dpl::Matrix hidden = dpl::forward_hidden(params, ds.features);
        dpl::EvalScope scope(ds);
        const dpl::Matrix sim = dpl::centroid_similarity(hidden, ds.labels_copy(), ds.num_classes());
        dpl::save_similarity_csv(out / "centroid_similarity.csv", sim);
        index["files"].push_back("centroid_similarity.csv");
        index["centroid_similarity_note"] =
            "centroids are means of L2-normalized penultimate-layer activations of the "
            "given checkpoint, a stand-in for an external embedding model";
    }

    std::ofstream side(out / "index.json");
    side << index.dump(2) << "\n";
    std::cout << "report written to " << out.string() << "\n";
    return 0;
}

int cmd_sweep(const CommonOpts& opts) {
    const dpl::ExperimentConfig cfg = resolve_config(opts);
    const fs::path out = resolve_out_dir(cfg, "sweep");
    fs::create_directories(out);

    struct Cell {
        std::string method;
        double lambda;
        std::uint64_t seed;
        double balanced = 0.0;
        double acc = 0.0;
    };
    std::vector<Cell> grid;
    for (const auto& method : cfg.sweep_methods) {
        for (const double lambda : cfg.sweep_lambdas) {
            for (const auto seed : cfg.seeds) grid.push_back({method, lambda, seed});
        }
    }

    const unsigned workers = worker_count(cfg.sweep_jobs, grid.size());
    std::mutex io_mutex;
    parallel_runs(grid.size(), workers, [&](std::size_t i) {
        Cell& cell = grid[i];
        dpl::ExperimentConfig run_cfg = cfg;
        run_cfg.train.method = dpl::parse_method(cell.method);
        run_cfg.train.lambda_debias = cell.lambda;
        run_cfg.train.lambda_margin = cell.lambda;
        const dpl::BenchData bench = dpl::build_ssl_benchmark(run_cfg, cell.seed);
        const dpl::TrainConfig tc = dpl::train_config_for_seed(run_cfg, cell.seed);
        const dpl::SslRunOutput run = dpl::execute_ssl_run(bench, tc);
        cell.balanced = run.final_scores.balanced_acc;
        cell.acc = run.final_scores.acc;
        char leaf[96];
        std::snprintf(leaf, sizeof(leaf), "%s_lambda%.4g_seed%llu", cell.method.c_str(), cell.lambda,
                      static_cast<unsigned long long>(cell.seed));
        write_ssl_run_dir(out / leaf, run_cfg, tc, run, bench.test);
        std::lock_guard lock(io_mutex);
        std::printf("%-12s lambda %-5.3g seed %-3llu balanced %.4f\n", cell.method.c_str(), cell.lambda,
                    static_cast<unsigned long long>(cell.seed), cell.balanced);
    });

    // mean +- std per (method, lambda)
    std::ofstream table(out / "sweep_summary.csv");
    table << "method,lambda,seeds,balanced_mean,balanced_std,acc_mean,acc_std\n";
    std::cout << "\nmethod        lambda   balanced acc (mean +- std over " << cfg.seeds.size()
              << " seeds)\n";
    for (const auto& method : cfg.sweep_methods) {
        for (const double lambda : cfg.sweep_lambdas) {
            std::vector<double> bal, acc;
            for (const auto& cell : grid) {
                if (cell.method == method && cell.lambda == lambda) {
                    bal.push_back(cell.balanced);
                    acc.push_back(cell.acc);
                }
            }
            auto mean_std = [](const std::vector<double>& xs) {
                double mean = 0.0;
                for (double x : xs) mean += x;
                mean /= static_cast<double>(xs.size());
                double var = 0.0;
                for (double x : xs) var += (x - mean) * (x - mean);
                var = xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0;
                return std::pair{mean, std::sqrt(var)};
            };
            const auto [bm, bs] = mean_std(bal);
            const auto [am, as] = mean_std(acc);
            char row[160];
            std::snprintf(row, sizeof(row), "%s,%.17g,%zu,%.17g,%.17g,%.17g,%.17g\n", method.c_str(),
                          lambda, bal.size(), bm, bs, am, as);
            table << row;
            std::printf("%-12s %-8.4g %.4f +- %.4f\n", method.c_str(), lambda, bm, bs);
        }
    }
    std::cout << "sweep summary at " << (out / "sweep_summary.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "dpl: debiased pseudo-labeling on synthetic mixture benchmarks\n"
        "semi-supervised and transductive zero-shot training with bias diagnostics"};
    app.require_subcommand(1);

    CommonOpts gen_opts, train_opts, zsl_opts, analyze_opts, sweep_opts;

    add_common(app.add_subcommand("gen-data", "generate dataset CSV files"), gen_opts);
    add_common(app.add_subcommand("train", "run semi-supervised training per seed"), train_opts);
    add_common(app.add_subcommand("zsl", "biased teacher + bootstrap + student training"), zsl_opts);

    auto* analyze = app.add_subcommand("analyze", "bias diagnostics over stored predictions");
    std::string pred_path, data_path, ckpt_path;
    std::vector<double> taus;
    add_common(analyze, analyze_opts);
    analyze->add_option("--pred", pred_path, "predictions CSV (index,truth,p_0..p_{C-1})")->required();
    analyze->add_option("--data", data_path, "dataset CSV for centroid similarity (needs --ckpt)");
    analyze->add_option("--ckpt", ckpt_path, "checkpoint whose penultimate activations embed --data");
    analyze->add_option("--taus", taus, "thresholds for the confidence sweep")->take_all();
    auto* report = app.add_subcommand("report", "alias of analyze");
    CommonOpts report_opts;
    std::string r_pred, r_data, r_ckpt;
    std::vector<double> r_taus;
    add_common(report, report_opts);
    report->add_option("--pred", r_pred, "predictions CSV (index,truth,p_0..p_{C-1})")->required();
    report->add_option("--data", r_data, "dataset CSV for centroid similarity (needs --ckpt)");
    report->add_option("--ckpt", r_ckpt, "checkpoint whose penultimate activations embed --data");
    report->add_option("--taus", r_taus, "thresholds for the confidence sweep")->take_all();

    add_common(app.add_subcommand("sweep", "seed x method x lambda grid with a mean +- std table"),
               sweep_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_opts);
        if (app.got_subcommand("train")) return cmd_train(train_opts);
        if (app.got_subcommand("zsl")) return cmd_zsl(zsl_opts);
        if (app.got_subcommand("analyze")) return cmd_analyze(analyze_opts, pred_path, data_path, ckpt_path, taus);
        if (app.got_subcommand("report")) return cmd_analyze(report_opts, r_pred, r_data, r_ckpt, r_taus);
        if (app.got_subcommand("sweep")) return cmd_sweep(sweep_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

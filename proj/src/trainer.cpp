#include "dpl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string_view>

#include <json.hpp>

#include "dpl/checkpoint.hpp"
#include "dpl/kernels.hpp"

namespace dpl {

std::string method_name(Method m) {
    switch (m) {
        case Method::fixmatch: return "fixmatch";
        case Method::debiaspl: return "debiaspl";
        case Method::fixmatch_da: return "fixmatch+da";
        case Method::fixmatch_la: return "fixmatch+la";
    }
    throw std::logic_error("unknown method");
}

Method parse_method(const std::string& name) {
    if (name == "fixmatch") return Method::fixmatch;
    if (name == "debiaspl") return Method::debiaspl;
    if (name == "fixmatch+da" || name == "fixmatch_da") return Method::fixmatch_da;
    if (name == "fixmatch+la" || name == "fixmatch_la") return Method::fixmatch_la;
    throw std::invalid_argument("unknown method '" + name +
                                "' (expected fixmatch|debiaspl|fixmatch+da|fixmatch+la)");
}

void validate(const TrainConfig& cfg) {
    if (cfg.batch == 0) throw std::invalid_argument("train.batch must be >= 1");
    if (cfg.mu < 1) throw std::invalid_argument("train.mu must be >= 1");
    if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw std::invalid_argument("train.tau must be in (0,1]");
    if (cfg.lambda_u < 0.0) throw std::invalid_argument("train.lambda_u must be >= 0");
    if (cfg.base_lr <= 0.0) throw std::invalid_argument("train.lr must be > 0");
    if (cfg.eval_every == 0) throw std::invalid_argument("train.eval_every must be >= 1");
    if (cfg.lambda_debias < 0.0 || cfg.lambda_margin < 0.0) {
        throw std::invalid_argument("debias.lambda must be >= 0");
    }
    if (cfg.p_hat_momentum < 0.0 || cfg.p_hat_momentum >= 1.0) {
        throw std::invalid_argument("debias.momentum must be in [0,1)");
    }
    if (cfg.sgd_momentum < 0.0 || cfg.sgd_momentum >= 1.0) {
        throw std::invalid_argument("train.momentum must be in [0,1)");
    }
    if (cfg.weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be >= 0");
    if (cfg.ema_decay < 0.0 || cfg.ema_decay >= 1.0) {
        throw std::invalid_argument("train.ema_decay must be in [0,1)");
    }
    if (cfg.hidden.empty()) throw std::invalid_argument("train.hidden must name at least one layer");
    validate(cfg.aug);
}

RunState make_run_state(const TrainConfig& cfg, std::size_t input_dim, std::size_t classes) {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (auto h : cfg.hidden) dims.push_back(h);
    dims.push_back(classes);

    Rng init_rng = Rng::stream(cfg.seed, rng_tag::init);
    RunState rs;
    rs.student = init_mlp(dims, init_rng, /*zero_output_layer=*/true);
    rs.opt = make_optim_state(rs.student, cfg.sgd_momentum, cfg.weight_decay, cfg.base_lr);
    rs.ema = make_ema_teacher(rs.student, cfg.ema_decay);
    // The debias lambdas are live only for the debiaspl method; the baselines
    // run the identical pipeline with zero correction.
    const bool debias_on = cfg.method == Method::debiaspl;
    rs.debias = DebiasState::uniform(classes, cfg.p_hat_momentum, debias_on ? cfg.lambda_debias : 0.0,
                                     debias_on ? cfg.lambda_margin : 0.0);
    return rs;
}

namespace {

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& indices) {
    Matrix out(indices.size(), src.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto s = src.row(indices[i]);
        std::copy(s.begin(), s.end(), out.row(i).begin());
    }
    return out;
}

std::vector<double> row_vector(const Matrix& m, std::size_t i) {
    auto r = m.row(i);
    return {r.begin(), r.end()};
}

// Cycles a shuffled index order; reshuffles at the start of every pass.
class IndexLoader {
public:
    IndexLoader(std::vector<std::size_t> indices, Rng rng) : order_(std::move(indices)), rng_(rng) {
        pos_ = order_.size();  // force a shuffle before the first batch
    }

    bool empty() const { return order_.empty(); }

    std::vector<std::size_t> next(std::size_t n) {
        std::vector<std::size_t> batch;
        batch.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (pos_ == order_.size()) {
                rng_.shuffle(order_);
                pos_ = 0;
            }
            batch.push_back(order_[pos_++]);
        }
        return batch;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t pos_;
    Rng rng_;
};

std::vector<double> labeled_marginal(const Dataset& ds) {
    std::vector<double> marginal(ds.num_classes(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!ds.labeled_mask[i]) continue;
        marginal[static_cast<std::size_t>(ds.label(i))] += 1.0;
        total += 1.0;
    }
    if (total == 0.0) throw std::runtime_error("labeled_marginal: labeled set is empty");
    for (double& v : marginal) v = std::max(v / total, kPHatFloor);
    return marginal;
}

std::vector<double> uniform_simplex(std::size_t classes) {
    return std::vector<double>(classes, 1.0 / static_cast<double>(classes));
}

}  // namespace

LossResult supervised_loss(const MlpParams& params, const Matrix& x, const std::vector<int>& y) {
    if (x.rows == 0) throw std::invalid_argument("supervised_loss: empty batch");
    if (x.rows != y.size()) throw std::invalid_argument("supervised_loss: label count mismatch");
    ForwardCache cache;
    const Matrix logits = forward(params, x, cache);
    Margins zero;
    zero.delta.assign(logits.cols, 0.0);
    Matrix grad(logits.rows, logits.cols);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(x.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        auto [li, gi] = marginal_loss(row_vector(logits, i), y[i], zero);
        loss += li;
        auto dst = grad.row(i);
        for (std::size_t j = 0; j < logits.cols; ++j) dst[j] = gi[j] * inv;
    }
    return {loss * inv, backward(params, cache, grad)};
}

UnsupResult unsupervised_loss(const MlpParams& params, const MlpParams& pseudo_params, const Matrix& weak,
                              const Matrix& strong, const DebiasState& state, const TrainConfig& cfg,
                              const std::vector<double>* da_target, const std::vector<double>* la_prior,
                              const Matrix* fallback_probs, double fallback_tau) {
    const std::size_t classes = state.p_hat.size();
    if (weak.rows != strong.rows) throw std::invalid_argument("unsupervised_loss: view count mismatch");
    if (weak.rows == 0) {
        return {0.0, zeros_like(params), 0.0, std::vector<std::int64_t>(classes, 0), Matrix(0, classes)};
    }

    const Matrix weak_logits = forward(pseudo_params, weak);

    // probabilities driving the p_hat update: the (possibly) debiased weak view
    Matrix debiased_probs = softmax_rows(debias_logits_rows(weak_logits, state));

    // probabilities driving the pseudo-labels, per method
    Matrix pseudo_basis;
    switch (cfg.method) {
        case Method::fixmatch:
        case Method::debiaspl:
            pseudo_basis = debiased_probs;
            break;
        case Method::fixmatch_da: {
            const Matrix raw = softmax_rows(weak_logits);
            debiased_probs = raw;  // DA tracks the raw marginal
            pseudo_basis = Matrix(raw.rows, raw.cols);
            if (!da_target) throw std::invalid_argument("unsupervised_loss: DA needs a target marginal");
            for (std::size_t i = 0; i < raw.rows; ++i) {
                auto aligned = distribution_alignment(row_vector(raw, i), *da_target, state.p_hat);
                std::copy(aligned.begin(), aligned.end(), pseudo_basis.row(i).begin());
            }
            break;
        }
        case Method::fixmatch_la: {
            if (!la_prior) throw std::invalid_argument("unsupervised_loss: LA needs a class prior");
            Matrix adjusted(weak_logits.rows, weak_logits.cols);
            for (std::size_t i = 0; i < weak_logits.rows; ++i) {
                auto row = logit_adjust(row_vector(weak_logits, i), *la_prior, cfg.tau_la);
                std::copy(row.begin(), row.end(), adjusted.row(i).begin());
            }
            pseudo_basis = softmax_rows(adjusted);
            debiased_probs = softmax_rows(weak_logits);
            break;
        }
    }

    std::vector<int> labels(weak.rows);
    std::vector<std::uint8_t> accept(weak.rows, 0);
    for (std::size_t i = 0; i < weak.rows; ++i) {
        const auto pl = pseudo_label(row_vector(pseudo_basis, i), cfg.tau);
        labels[i] = pl.label;
        accept[i] = pl.accepted ? 1 : 0;
        if (!pl.accepted && fallback_probs) {
            // the frozen teacher may rescue a rejected instance it is sure about
            const auto fb = pseudo_label(row_vector(*fallback_probs, i), 1.0);
            if ((*fallback_probs)(i, static_cast<std::size_t>(fb.label)) > fallback_tau) {
                labels[i] = fb.label;
                accept[i] = 1;
            }
        }
    }

    const Margins margins = adaptive_margins(state);
    ForwardCache cache;
    const Matrix strong_logits = forward(params, strong, cache);
    Matrix grad(strong_logits.rows, strong_logits.cols);
    const double inv = 1.0 / static_cast<double>(weak.rows);
    double loss = 0.0;
    double accepted = 0.0;
    std::vector<std::int64_t> hist(classes, 0);
    for (std::size_t i = 0; i < strong_logits.rows; ++i) {
        if (!accept[i]) continue;
        auto [li, gi] = marginal_loss(row_vector(strong_logits, i), labels[i], margins);
        loss += li;
        auto dst = grad.row(i);
        for (std::size_t j = 0; j < classes; ++j) dst[j] = gi[j] * inv;
        hist[static_cast<std::size_t>(labels[i])]++;
        accepted += 1.0;
    }

    return {loss * inv, backward(params, cache, grad), accepted * inv, std::move(hist),
            std::move(debiased_probs)};
}

void train_step(RunState& rs, const Matrix& labeled_x, const std::vector<int>& labeled_y, const Matrix& weak,
                const Matrix& strong, const TrainConfig& cfg, const std::vector<double>* da_target,
                const std::vector<double>* la_prior, const Matrix* fallback_probs, double fallback_tau) {
    if (rs.step >= cfg.total_steps) throw std::logic_error("train_step: past total_steps");
    const double lr = cosine_lr(rs.step, cfg.total_steps, cfg.base_lr);

    LossResult sup;
    UnsupResult uns;
    try {
        sup = supervised_loss(rs.student, labeled_x, labeled_y);
        const MlpParams& pseudo_params = cfg.pseudo_from_ema ? rs.ema.shadow : rs.student;
        uns = unsupervised_loss(rs.student, pseudo_params, weak, strong, rs.debias, cfg, da_target,
                                la_prior, fallback_probs, fallback_tau);

        const double total = sup.loss + cfg.lambda_u * uns.loss;
        if (!std::isfinite(total)) throw DivergedError(rs.step);

        axpy_params(sup.grads, uns.grads, cfg.lambda_u);
        sgd_nesterov_step(rs.student, sup.grads, rs.opt, lr);
    } catch (const DivergedError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        // blown-up parameters first surface as non-finite logits inside
        // softmax; report them as a divergence with the failing step
        if (std::string_view(e.what()) == "non-finite logits") throw DivergedError(rs.step);
        throw;
    } catch (const std::runtime_error& e) {
        if (std::string_view(e.what()) == "diverged") throw DivergedError(rs.step);
        throw;
    }
    update_p_hat(rs.debias, uns.weak_probs);
    ema_update(rs.ema, rs.student);

    rs.metrics.steps.push_back({rs.step, lr, sup.loss, uns.loss, uns.mask_rate, std::move(uns.pseudo_hist)});
    rs.metrics.p_hat_trajectory.push_back(rs.debias.p_hat);
    rs.step++;
}

EvalScores evaluate(const MlpParams& params, const Dataset& ds) {
    EvalScope scope(ds);
    const auto pred = argmax_rows(forward(params, ds.features));
    const auto truth = ds.labels_copy();
    return {accuracy(pred, truth), balanced_accuracy(pred, truth, ds.num_classes())};
}

namespace {

double labeled_accuracy(const MlpParams& params, const Dataset& ds) {
    EvalScope scope(ds);
    const auto idx = ds.labeled_indices();
    if (idx.empty()) return 0.0;
    const Matrix x = gather_rows(ds.features, idx);
    const auto pred = argmax_rows(forward(params, x));
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (pred[i] == ds.label(idx[i])) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train_run(const Dataset& train_ds, const Dataset& test_ds, const TrainConfig& cfg,
                      const Teacher* fallback_teacher, double fallback_tau) {
    validate(cfg);
    const auto labeled = train_ds.labeled_indices();
    if (labeled.empty()) throw std::runtime_error("train_run: labeled set is empty");
    const auto unlabeled = train_ds.unlabeled_indices();
    const std::size_t classes = train_ds.num_classes();

    RunState rs = make_run_state(cfg, train_ds.dim(), classes);
    if (cfg.total_steps == 0) {
        return {rs.student, rs.ema.shadow, std::move(rs.metrics)};
    }

    const std::vector<double> marginal = labeled_marginal(train_ds);
    const std::vector<double> da_target = cfg.da_uniform_target ? uniform_simplex(classes) : marginal;
    const std::vector<double>* da_ptr = cfg.method == Method::fixmatch_da ? &da_target : nullptr;
    const std::vector<double>* la_ptr = cfg.method == Method::fixmatch_la ? &marginal : nullptr;

    // CLIP-style fallback labels are frozen, so score the pool once up front.
    Matrix fallback_all;
    if (fallback_teacher) fallback_all = teacher_probs(*fallback_teacher, train_ds.features);

    IndexLoader lab_loader(labeled, Rng::stream(cfg.seed, rng_tag::loader_labeled));
    IndexLoader unlab_loader(unlabeled, Rng::stream(cfg.seed, rng_tag::loader_unlabeled));
    Rng aug_rng = Rng::stream(cfg.seed, rng_tag::augment);

    double win_loss_s = 0.0, win_loss_u = 0.0, win_mask = 0.0;
    std::vector<std::int64_t> win_hist(classes, 0);
    std::size_t win_len = 0;

    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        const auto lab_idx = lab_loader.next(cfg.batch);
        const Matrix lx = augment_weak(cfg.aug, gather_rows(train_ds.features, lab_idx), aug_rng);
        std::vector<int> ly(lab_idx.size());
        for (std::size_t i = 0; i < lab_idx.size(); ++i) ly[i] = train_ds.label(lab_idx[i]);

        Matrix weak(0, train_ds.dim()), strong(0, train_ds.dim());
        Matrix fallback_batch;
        const Matrix* fallback_ptr = nullptr;
        if (!unlab_loader.empty()) {
            const auto unlab_idx = unlab_loader.next(cfg.mu * cfg.batch);
            const Matrix ux = gather_rows(train_ds.features, unlab_idx);
            weak = augment_weak(cfg.aug, ux, aug_rng);
            strong = augment_strong(cfg.aug, ux, aug_rng);
            if (fallback_teacher) {
                fallback_batch = gather_rows(fallback_all, unlab_idx);
                fallback_ptr = &fallback_batch;
            }
        }

        train_step(rs, lx, ly, weak, strong, cfg, da_ptr, la_ptr, fallback_ptr, fallback_tau);

        const StepRecord& rec = rs.metrics.steps.back();
        win_loss_s += rec.loss_s;
        win_loss_u += rec.loss_u;
        win_mask += rec.mask_rate;
        for (std::size_t c = 0; c < classes; ++c) win_hist[c] += rec.pseudo_hist[c];
        win_len++;

        if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.total_steps) {
            const EvalScores test_scores = evaluate(rs.ema.shadow, test_ds);
            const double train_acc = labeled_accuracy(rs.ema.shadow, train_ds);
            const double inv = 1.0 / static_cast<double>(win_len);
            rs.metrics.evals.push_back({step + 1, rec.lr, win_loss_s * inv, win_loss_u * inv, win_mask * inv,
                                        train_acc, test_scores.acc, test_scores.balanced_acc,
                                        imbalance_ratio(win_hist), win_hist});
            win_loss_s = win_loss_u = win_mask = 0.0;
            win_hist.assign(classes, 0);
            win_len = 0;
        }
    }

    return {rs.student, rs.ema.shadow, std::move(rs.metrics)};
}

Matrix teacher_probs(const Teacher& teacher, const Matrix& features) {
    return softmax_rows(forward(teacher.params, features));
}

Teacher make_biased_teacher(const Dataset& source, const Dataset& target, const TeacherConfig& cfg) {
    if (source.dim() != target.dim() || source.num_classes() != target.num_classes()) {
        throw std::invalid_argument("make_biased_teacher: source/target shape mismatch");
    }
    std::vector<double> translation = cfg.translation;
    if (translation.size() == 1) translation.assign(source.dim(), cfg.translation[0]);
    const Dataset shifted = shift_domain(source, cfg.rotation, translation);

    std::vector<std::size_t> dims;
    dims.push_back(shifted.dim());
    for (auto h : cfg.hidden) dims.push_back(h);
    dims.push_back(shifted.num_classes());
    Rng init_rng = Rng::stream(cfg.seed, rng_tag::teacher);
    MlpParams params = init_mlp(dims, init_rng, /*zero_output_layer=*/true);
    OptimState opt = make_optim_state(params, cfg.sgd_momentum, cfg.weight_decay, cfg.base_lr);

    std::vector<std::size_t> all(shifted.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    IndexLoader loader(all, Rng::stream(cfg.seed ^ 0x7ea9e5, rng_tag::teacher));

    constexpr std::size_t kTeacherBatch = 64;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto idx = loader.next(kTeacherBatch);
        const Matrix x = gather_rows(shifted.features, idx);
        std::vector<int> y(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) y[i] = shifted.label(idx[i]);
        LossResult sup = supervised_loss(params, x, y);
        if (!std::isfinite(sup.loss)) throw DivergedError(step);
        sgd_nesterov_step(params, sup.grads, opt, cosine_lr(step, cfg.steps, cfg.base_lr));
    }

    // the construction is only useful if the teacher actually comes out
    // biased; min_imbalance == 1 disables the check (a ratio of 1 is the
    // definitional floor)
    const Matrix probs = softmax_rows(forward(params, target.features));
    const auto pred = argmax_rows(probs);
    std::vector<std::int64_t> hist(target.num_classes(), 0);
    for (int p : pred) hist[static_cast<std::size_t>(p)]++;
    const double ratio = imbalance_ratio(hist);
    if (cfg.min_imbalance > 1.0 && !(ratio > cfg.min_imbalance)) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "make_biased_teacher: target imbalance ratio %.3f is not above %.2f; "
                      "increase the domain shift or the source imbalance",
                      ratio, cfg.min_imbalance);
        throw std::runtime_error(buf);
    }
    return {std::move(params), ratio};
}

BootstrapResult zsl_bootstrap(const Dataset& target_ds, const Teacher& teacher, const ZslConfig& zcfg) {
    return zsl_bootstrap_from_probs(target_ds, teacher_probs(teacher, target_ds.features), zcfg);
}

BootstrapResult zsl_bootstrap_from_probs(const Dataset& target_ds, const Matrix& probs,
                                         const ZslConfig& zcfg) {
    if (probs.rows != target_ds.size()) throw std::invalid_argument("zsl_bootstrap: row count mismatch");
    const auto pred = argmax_rows(probs);
    BootstrapResult result;
    result.ds = target_ds;
    result.accepted_per_class.assign(target_ds.num_classes(), 0);
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < target_ds.size(); ++i) {
        const double conf = probs(i, static_cast<std::size_t>(pred[i]));
        if (conf > zcfg.tau_clip) {
            result.ds.set_label(i, pred[i]);
            result.ds.labeled_mask[i] = 1;
            result.accepted_per_class[static_cast<std::size_t>(pred[i])]++;
            accepted++;
        } else {
            result.ds.labeled_mask[i] = 0;
        }
    }
    if (accepted == 0) throw std::runtime_error("threshold too high");
    return result;
}

TrainResult zsl_run(const Dataset& target_ds, const Dataset& test_ds, const Teacher& teacher,
                    const ZslConfig& zcfg, const TrainConfig& cfg) {
    const BootstrapResult boot = zsl_bootstrap(target_ds, teacher, zcfg);
    const Teacher* fallback = cfg.clip_fallback ? &teacher : nullptr;
    return train_run(boot.ds, test_ds, cfg, fallback, zcfg.tau_clip);
}

void save_run_outputs(const std::filesystem::path& dir, const std::string& config_snapshot,
                      const TrainConfig& cfg, const TrainResult& result, const Dataset& test_ds,
                      double wall_time_sec) {
    std::filesystem::create_directories(dir / "checkpoints");

    {
        std::ofstream out(dir / "config.snapshot");
        if (!out) throw std::runtime_error("cannot write config snapshot");
        out << config_snapshot;
    }

    {
        std::ofstream out(dir / "metrics.csv");
        if (!out) throw std::runtime_error("cannot write metrics.csv");
        out << "step,lr,loss_s,loss_u,mask_rate,train_acc,test_acc,balanced_test_acc,imbalance_ratio\n";
        char buf[64];
        auto cell = [&](double v) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf;
        };
        for (const auto& e : result.metrics.evals) {
            out << e.step << ",";
            cell(e.lr); out << ",";
            cell(e.loss_s); out << ",";
            cell(e.loss_u); out << ",";
            cell(e.mask_rate); out << ",";
            cell(e.train_acc); out << ",";
            cell(e.test_acc); out << ",";
            cell(e.balanced_test_acc); out << ",";
            cell(e.imbalance); out << "\n";
        }
    }

    save_p_hat_trajectory(dir / "p_hat.csv", result.metrics.p_hat_trajectory);

    {
        EvalScope scope(test_ds);
        const auto pred = argmax_rows(forward(result.ema, test_ds.features));
        const auto truth = test_ds.labels_copy();
        const std::vector<std::uint8_t> all(pred.size(), 1);
        save_confusion_csv(dir / "confusion_final.csv", confusion(pred, all, truth, test_ds.num_classes()));
    }

    const EvalScores final_scores = evaluate(result.ema, test_ds);
    nlohmann::json summary;
    summary["method"] = method_name(cfg.method);
    summary["seed"] = cfg.seed;
    summary["steps"] = cfg.total_steps;
    summary["final"] = {{"test_acc", final_scores.acc},
                        {"balanced_test_acc", final_scores.balanced_acc}};
    if (!result.metrics.evals.empty()) {
        const auto& last = result.metrics.evals.back();
        summary["final"]["train_acc"] = last.train_acc;
        summary["final"]["mask_rate"] = last.mask_rate;
        summary["final"]["pseudo_label_imbalance"] =
            std::isinf(last.imbalance) ? -1.0 : last.imbalance;
    }
    summary["wall_time_sec"] = wall_time_sec;
    std::ofstream out(dir / "summary.json");
    if (!out) throw std::runtime_error("cannot write summary.json");
    out << summary.dump(2) << "\n";

    save_checkpoint(dir / "checkpoints" / "student.ckpt", result.student, {{"role", "student"}});
    save_checkpoint(dir / "checkpoints" / "ema.ckpt", result.ema, {{"role", "ema"}});
}

}  // namespace dpl

#include "dpl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "dpl/kernels.hpp"

namespace dpl {

namespace {

constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

void write_cell(std::ofstream& out, double v) {
    if (!metric_defined(v)) {
        out << "nan";
        return;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

}  // namespace

bool metric_defined(double v) { return !std::isnan(v); }

double imbalance_ratio(const std::vector<std::int64_t>& counts) {
    if (counts.empty()) throw std::invalid_argument("imbalance_ratio: empty counts");
    std::int64_t mx = counts[0];
    std::int64_t mn = counts[0];
    for (auto c : counts) {
        mx = std::max(mx, c);
        mn = std::min(mn, c);
    }
    if (mx == 0) return 1.0;
    if (mn == 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(mx) / static_cast<double>(mn);
}

PseudoLabelStats per_class_pr(const std::vector<int>& predicted, const std::vector<std::uint8_t>& accepted,
                              const std::vector<int>& truth, std::size_t classes) {
    if (predicted.size() != truth.size() || predicted.size() != accepted.size()) {
        throw std::invalid_argument("per_class_pr: length mismatch");
    }
    std::vector<std::int64_t> pred_count(classes, 0);
    std::vector<std::int64_t> true_count(classes, 0);
    std::vector<std::int64_t> correct(classes, 0);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (!accepted[i]) continue;
        const auto p = static_cast<std::size_t>(predicted[i]);
        const auto t = static_cast<std::size_t>(truth[i]);
        pred_count[p]++;
        true_count[t]++;
        if (p == t) correct[p]++;
    }
    PseudoLabelStats stats;
    stats.counts = pred_count;
    stats.precision.resize(classes);
    stats.recall.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        stats.precision[c] = pred_count[c] > 0
                                 ? static_cast<double>(correct[c]) / static_cast<double>(pred_count[c])
                                 : kUndefined;
        stats.recall[c] = true_count[c] > 0
                              ? static_cast<double>(correct[c]) / static_cast<double>(true_count[c])
                              : kUndefined;
    }
    stats.imbalance = imbalance_ratio(pred_count);
    return stats;
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t sum = 0;
    for (auto c : cells) sum += c;
    return sum;
}

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<std::uint8_t>& accepted,
                          const std::vector<int>& truth, std::size_t classes) {
    if (predicted.size() != truth.size() || predicted.size() != accepted.size()) {
        throw std::invalid_argument("confusion: length mismatch");
    }
    ConfusionMatrix cm;
    cm.classes = classes;
    cm.cells.assign(classes * classes, 0);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (!accepted[i]) continue;
        cm.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i]))++;
    }
    return cm;
}

Matrix centroid_similarity(const Matrix& features, const std::vector<int>& labels, std::size_t classes) {
    if (features.rows != labels.size()) throw std::invalid_argument("centroid_similarity: length mismatch");
    Matrix centroids(classes, features.cols);
    std::vector<std::int64_t> counts(classes, 0);
    for (std::size_t i = 0; i < features.rows; ++i) {
        auto row = features.row(i);
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) norm = 1.0;
        const auto c = static_cast<std::size_t>(labels[i]);
        auto dst = centroids.row(c);
        for (std::size_t j = 0; j < features.cols; ++j) dst[j] += row[j] / norm;
        counts[c]++;
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] == 0) throw std::runtime_error("centroid_similarity: empty class " + std::to_string(c));
        auto row = centroids.row(c);
        for (double& v : row) v /= static_cast<double>(counts[c]);
    }
    Matrix sim(classes, classes);
    std::vector<double> norms(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        double n = 0.0;
        for (double v : centroids.row(c)) n += v * v;
        norms[c] = std::sqrt(n);
    }
    for (std::size_t a = 0; a < classes; ++a) {
        for (std::size_t b = 0; b < classes; ++b) {
            double dot = 0.0;
            auto ra = centroids.row(a);
            auto rb = centroids.row(b);
            for (std::size_t j = 0; j < features.cols; ++j) dot += ra[j] * rb[j];
            sim(a, b) = dot / (norms[a] * norms[b]);
        }
    }
    return sim;
}

std::vector<SweepPoint> threshold_sweep(const Matrix& probs, const std::vector<int>& truth,
                                        const std::vector<double>& taus) {
    if (probs.rows != truth.size()) throw std::invalid_argument("threshold_sweep: length mismatch");
    for (std::size_t i = 1; i < taus.size(); ++i) {
        if (taus[i] < taus[i - 1]) throw std::invalid_argument("threshold_sweep: taus must be ascending");
    }
    const auto predicted = argmax_rows(probs);
    std::vector<double> confidence(probs.rows);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        confidence[i] = probs(i, static_cast<std::size_t>(predicted[i]));
    }
    std::vector<SweepPoint> out;
    out.reserve(taus.size());
    for (double tau : taus) {
        std::vector<std::uint8_t> accepted(probs.rows);
        std::int64_t n_accepted = 0;
        for (std::size_t i = 0; i < probs.rows; ++i) {
            accepted[i] = confidence[i] >= tau ? 1 : 0;
            n_accepted += accepted[i];
        }
        const auto stats = per_class_pr(predicted, accepted, truth, probs.cols);
        double psum = 0.0, rsum = 0.0;
        std::size_t pdef = 0, rdef = 0;
        for (std::size_t c = 0; c < probs.cols; ++c) {
            if (metric_defined(stats.precision[c])) {
                psum += stats.precision[c];
                pdef++;
            }
            if (metric_defined(stats.recall[c])) {
                rsum += stats.recall[c];
                rdef++;
            }
        }
        out.push_back({tau, n_accepted, stats.imbalance,
                       pdef ? psum / static_cast<double>(pdef) : kUndefined,
                       rdef ? rsum / static_cast<double>(rdef) : kUndefined});
    }
    return out;
}

double balanced_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth, std::size_t classes) {
    if (predicted.size() != truth.size()) throw std::invalid_argument("balanced_accuracy: length mismatch");
    std::vector<std::int64_t> correct(classes, 0);
    std::vector<std::int64_t> total(classes, 0);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        total[t]++;
        if (predicted[i] == truth[i]) correct[t]++;
    }
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        if (total[c] > 0) {
            sum += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
            defined++;
        }
    }
    if (defined == 0) throw std::invalid_argument("balanced_accuracy: no class has samples");
    return sum / static_cast<double>(defined);
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (predicted.empty()) throw std::invalid_argument("accuracy: empty input");
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == truth[i]) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

void save_histogram_csv(const std::filesystem::path& path, const std::vector<std::int64_t>& counts) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "class,count\n";
    for (std::size_t c = 0; c < counts.size(); ++c) out << c << "," << counts[c] << "\n";
}

void save_pr_csv(const std::filesystem::path& path, const PseudoLabelStats& stats) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "class,count,precision,recall\n";
    for (std::size_t c = 0; c < stats.counts.size(); ++c) {
        out << c << "," << stats.counts[c] << ",";
        write_cell(out, stats.precision[c]);
        out << ",";
        write_cell(out, stats.recall[c]);
        out << "\n";
    }
}

void save_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "truth";
    for (std::size_t c = 0; c < cm.classes; ++c) out << ",pred_" << c;
    out << "\n";
    for (std::size_t t = 0; t < cm.classes; ++t) {
        out << t;
        for (std::size_t p = 0; p < cm.classes; ++p) out << "," << cm.at(t, p);
        out << "\n";
    }
}

void save_similarity_csv(const std::filesystem::path& path, const Matrix& sim) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "class";
    for (std::size_t c = 0; c < sim.cols; ++c) out << ",sim_" << c;
    out << "\n";
    for (std::size_t a = 0; a < sim.rows; ++a) {
        out << a;
        for (std::size_t b = 0; b < sim.cols; ++b) {
            out << ",";
            write_cell(out, sim(a, b));
        }
        out << "\n";
    }
}

void save_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& sweep) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "tau,accepted,imbalance_ratio,mean_precision,mean_recall\n";
    for (const auto& point : sweep) {
        write_cell(out, point.tau);
        out << "," << point.accepted << ",";
        write_cell(out, point.imbalance);
        out << ",";
        write_cell(out, point.mean_precision);
        out << ",";
        write_cell(out, point.mean_recall);
        out << "\n";
    }
}

}  // namespace dpl

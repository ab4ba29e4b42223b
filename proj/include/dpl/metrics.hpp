#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dpl/matrix.hpp"

namespace dpl {

// Bias diagnostics: pseudo-label histograms, imbalance ratio, per-class
// precision/recall, confusion matrices, class-centroid similarity and
// confidence-threshold sweeps. Pure functions over immutable inputs.

// Undefined precision/recall cells (zero denominator) are quiet NaN, never 0.
bool metric_defined(double v);

// max(counts)/min(counts). Infinity when min is 0 and max > 0; 1 when all
// counts are zero.
double imbalance_ratio(const std::vector<std::int64_t>& counts);

struct PseudoLabelStats {
    std::vector<std::int64_t> counts;  // accepted pseudo-labels per class
    std::vector<double> precision;     // NaN where undefined
    std::vector<double> recall;
    double imbalance = 1.0;
};

// precision_c = correct_c / predicted_c, recall_c = correct_c / true_c,
// restricted to accepted instances.
PseudoLabelStats per_class_pr(const std::vector<int>& predicted, const std::vector<std::uint8_t>& accepted,
                              const std::vector<int>& truth, std::size_t classes);

struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::int64_t> cells;  // classes x classes, row = truth, col = predicted

    std::int64_t& at(std::size_t truth_class, std::size_t pred_class) {
        return cells[truth_class * classes + pred_class];
    }
    std::int64_t at(std::size_t truth_class, std::size_t pred_class) const {
        return cells[truth_class * classes + pred_class];
    }
    std::int64_t total() const;
};

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<std::uint8_t>& accepted,
                          const std::vector<int>& truth, std::size_t classes);

// Cosine similarity between per-class centroids, where a centroid is the
// mean of the L2-normalized feature rows of a class. Throws on empty class.
Matrix centroid_similarity(const Matrix& features, const std::vector<int>& labels, std::size_t classes);

struct SweepPoint {
    double tau;
    std::int64_t accepted;
    double imbalance;
    double mean_precision;  // NaN when no cell is defined
    double mean_recall;
};

// Accepts rows of class probabilities; at each tau an instance passes when
// its max probability is >= tau. Accepted count is non-increasing in tau.
std::vector<SweepPoint> threshold_sweep(const Matrix& probs, const std::vector<int>& truth,
                                        const std::vector<double>& taus);

// Mean per-class recall; the headline number for long-tail / ZSL runs.
double balanced_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth, std::size_t classes);
double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

// CSV emitters (plot-ready; no rendering here).
void save_histogram_csv(const std::filesystem::path& path, const std::vector<std::int64_t>& counts);
void save_pr_csv(const std::filesystem::path& path, const PseudoLabelStats& stats);
void save_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);
void save_similarity_csv(const std::filesystem::path& path, const Matrix& sim);
void save_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& sweep);

}  // namespace dpl

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpl/matrix.hpp"
#include "dpl/rng.hpp"

namespace dpl {

struct DatasetSpec {
    std::size_t classes = 10;           // C
    std::size_t dim = 8;                // feature dimension
    double centroid_separation = 6.0;   // pairwise centroid distance floor
    double cluster_scale = 1.0;         // isotropic per-class stddev
    std::uint64_t seed = 1;
};

// Long-tailed class counts: class c receives round(n_max * gamma^(-c/(C-1))),
// the exponential profile used for the standard long-tailed benchmark splits.
struct ImbalanceSpec {
    double gamma = 1.0;        // imbalance ratio, >= 1
    std::size_t n_max = 500;   // count of the most frequent class
};

std::vector<std::int64_t> imbalance_counts(const ImbalanceSpec& imb, std::size_t classes);

// Records every ground-truth label read. Evaluation operations flag their
// reads through EvalScope, which is how the hygiene test separates training
// reads from evaluation reads.
struct LabelReadLog {
    struct Entry {
        std::size_t index;
        bool in_eval;
    };
    std::vector<Entry> entries;
    bool in_eval = false;
};

class Dataset {
public:
    Matrix features;                         // n x dim
    std::vector<std::uint8_t> labeled_mask;  // n
    std::vector<std::int64_t> class_counts;  // C

    Dataset() = default;
    Dataset(Matrix feats, std::vector<int> labels, std::vector<std::uint8_t> mask,
            std::vector<std::int64_t> counts);

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
    std::size_t num_classes() const { return class_counts.size(); }
    std::size_t labeled_count() const;

    // The only access path to ground truth. Unlabeled rows may be read
    // exclusively inside evaluation operations; the attached log makes
    // violations observable.
    int label(std::size_t i) const {
        if (read_log) read_log->entries.push_back({i, read_log->in_eval});
        return labels_[i];
    }
    std::vector<int> labels_copy() const;

    std::vector<std::size_t> labeled_indices() const;
    std::vector<std::size_t> unlabeled_indices() const;

    void set_label(std::size_t i, int value) { labels_[i] = value; }

    mutable LabelReadLog* read_log = nullptr;

private:
    std::vector<int> labels_;
};

// Marks label reads as evaluation reads for its lifetime.
class EvalScope {
public:
    explicit EvalScope(const Dataset& ds) : log_(ds.read_log) {
        if (log_) log_->in_eval = true;
    }
    ~EvalScope() {
        if (log_) log_->in_eval = false;
    }
    EvalScope(const EvalScope&) = delete;
    EvalScope& operator=(const EvalScope&) = delete;

private:
    LabelReadLog* log_;
};

// Centroid layout is a pure function of (classes, dim, separation, seed):
// candidates are drawn uniformly in a box until the pairwise distance floor
// holds. Throws if placement fails after bounded retries.
std::vector<std::vector<double>> mixture_centroids(const DatasetSpec& spec);

// Isotropic Gaussian mixture around the seed-determined centroids with
// counts from the imbalance profile, shuffled. sample_stream selects an
// independent draw from the same mixture (train pool, held-out test set,
// domain-shift source, ...) without moving the centroids.
Dataset sample_mixture(const DatasetSpec& spec, const ImbalanceSpec& imb, std::uint64_t sample_stream);

// sample_mixture with stream 0.
Dataset generate_mixture(const DatasetSpec& spec, const ImbalanceSpec& imb);

struct LabelBudget {
    enum class Mode { per_class, fraction };
    Mode mode = Mode::per_class;
    std::size_t per_class = 4;  // balanced mode: exactly this many per class
    double fraction = 0.1;      // fraction mode: floor(fraction * n_c) per class
};

// Marks the labeled subset. Balanced mode requires every class to hold at
// least per_class samples; fraction mode keeps the imbalance profile.
Dataset split_labeled(const Dataset& ds, const LabelBudget& budget, Rng& rng);

struct Augmentor {
    double weak_noise = 0.3;     // alpha: gaussian jitter scale
    double strong_noise = 1.0;   // beta jitter scale, >= weak_noise
    double mask_fraction = 0.25; // beta zeroes this fraction of coordinates
};

void validate(const Augmentor& aug);

// Jitter of scale weak_noise. weak_noise == 0 returns the input bitwise.
Matrix augment_weak(const Augmentor& aug, const Matrix& x, Rng& rng);

// Heavier jitter, then zero round(mask_fraction * dim) coordinates per row.
Matrix augment_strong(const Augmentor& aug, const Matrix& x, Rng& rng);

// Rotates the first two feature coordinates and translates all of them;
// labels are untouched. translation must have dim entries.
Dataset shift_domain(const Dataset& ds, double rotation_angle, const std::vector<double>& translation);

// CSV with header f0..f{dim-1},label,is_labeled (17 significant digits, so
// save → load round-trips bitwise) plus a JSON sidecar
// {C, dim, gamma, seed, class_counts} at <path>.json.
void save_dataset_csv(const std::filesystem::path& path, const Dataset& ds, double gamma, std::uint64_t seed);
Dataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace dpl

#include "dpl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dpl {

std::vector<std::int64_t> imbalance_counts(const ImbalanceSpec& imb, std::size_t classes) {
    if (imb.gamma < 1.0) throw std::invalid_argument("imbalance gamma must be >= 1");
    if (classes < 2) throw std::invalid_argument("need at least 2 classes");
    std::vector<std::int64_t> counts(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        const double exponent = -static_cast<double>(c) / static_cast<double>(classes - 1);
        counts[c] = std::llround(static_cast<double>(imb.n_max) * std::pow(imb.gamma, exponent));
    }
    return counts;
}

Dataset::Dataset(Matrix feats, std::vector<int> labels, std::vector<std::uint8_t> mask,
                 std::vector<std::int64_t> counts)
    : features(std::move(feats)),
      labeled_mask(std::move(mask)),
      class_counts(std::move(counts)),
      labels_(std::move(labels)) {
    if (labels_.size() != features.rows || labeled_mask.size() != features.rows) {
        throw std::invalid_argument("dataset: row count mismatch");
    }
}

std::size_t Dataset::labeled_count() const {
    std::size_t n = 0;
    for (auto m : labeled_mask) n += m ? 1 : 0;
    return n;
}

std::vector<int> Dataset::labels_copy() const {
    std::vector<int> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = label(i);
    return out;
}

std::vector<std::size_t> Dataset::labeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i) {
        if (labeled_mask[i]) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> Dataset::unlabeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!labeled_mask[i]) out.push_back(i);
    }
    return out;
}

namespace {

std::vector<std::vector<double>> place_centroids(const DatasetSpec& spec, Rng& rng) {
    // box side grows with the class count but is capped, so absurd
    // class/dimension combinations fail the retry bound instead of
    // stretching the feature scale without limit
    const double box_half_width =
        spec.centroid_separation *
        std::max(2.0, std::min(8.0, std::pow(static_cast<double>(spec.classes),
                                             1.0 / static_cast<double>(spec.dim))));
    constexpr int kMaxTries = 1000;
    std::vector<std::vector<double>> centroids;
    centroids.reserve(spec.classes);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
            std::vector<double> candidate(spec.dim);
            for (auto& v : candidate) v = (2.0 * rng.next_unit() - 1.0) * box_half_width;
            placed = true;
            for (const auto& other : centroids) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < spec.dim; ++j) {
                    const double diff = candidate[j] - other[j];
                    d2 += diff * diff;
                }
                if (d2 < spec.centroid_separation * spec.centroid_separation) {
                    placed = false;
                    break;
                }
            }
            if (placed) centroids.push_back(std::move(candidate));
        }
        if (!placed) throw std::runtime_error("generate_mixture: infeasible centroid placement");
    }
    return centroids;
}

// sample streams live in their own tag range so they never collide with the
// module tags
constexpr std::uint64_t kSampleTagBase = 0x100;

}  // namespace

std::vector<std::vector<double>> mixture_centroids(const DatasetSpec& spec) {
    if (spec.classes < 2 || spec.dim < 2) throw std::invalid_argument("DatasetSpec: need C >= 2 and dim >= 2");
    if (spec.centroid_separation <= 0.0 || spec.cluster_scale <= 0.0) {
        throw std::invalid_argument("DatasetSpec: separation and scale must be positive");
    }
    Rng rng = Rng::stream(spec.seed, rng_tag::data);
    return place_centroids(spec, rng);
}

Dataset sample_mixture(const DatasetSpec& spec, const ImbalanceSpec& imb, std::uint64_t sample_stream) {
    const auto centroids = mixture_centroids(spec);
    Rng rng = Rng::stream(spec.seed, kSampleTagBase + sample_stream);
    const auto counts = imbalance_counts(imb, spec.classes);

    std::size_t total = 0;
    for (auto n : counts) total += static_cast<std::size_t>(n);

    Matrix features(total, spec.dim);
    std::vector<int> labels(total);
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::int64_t i = 0; i < counts[c]; ++i, ++row) {
            auto sample = gaussian_sample(rng, centroids[c], spec.cluster_scale);
            std::copy(sample.begin(), sample.end(), features.row(row).begin());
            labels[row] = static_cast<int>(c);
        }
    }

    std::vector<std::size_t> perm(total);
    for (std::size_t i = 0; i < total; ++i) perm[i] = i;
    rng.shuffle(perm);

    Matrix shuffled(total, spec.dim);
    std::vector<int> shuffled_labels(total);
    for (std::size_t i = 0; i < total; ++i) {
        auto src = features.row(perm[i]);
        std::copy(src.begin(), src.end(), shuffled.row(i).begin());
        shuffled_labels[i] = labels[perm[i]];
    }

    return Dataset(std::move(shuffled), std::move(shuffled_labels),
                   std::vector<std::uint8_t>(total, 0), counts);
}

Dataset generate_mixture(const DatasetSpec& spec, const ImbalanceSpec& imb) {
    return sample_mixture(spec, imb, 0);
}

Dataset split_labeled(const Dataset& ds, const LabelBudget& budget, Rng& rng) {
    const std::size_t classes = ds.num_classes();
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        by_class[static_cast<std::size_t>(ds.label(i))].push_back(i);
    }

    Dataset out = ds;
    std::fill(out.labeled_mask.begin(), out.labeled_mask.end(), std::uint8_t{0});
    for (std::size_t c = 0; c < classes; ++c) {
        auto& members = by_class[c];
        std::size_t want = 0;
        if (budget.mode == LabelBudget::Mode::per_class) {
            want = budget.per_class;
            if (members.size() < want) {
                throw std::runtime_error("split_labeled: class " + std::to_string(c) +
                                         " has fewer samples than requested");
            }
        } else {
            if (budget.fraction < 0.0 || budget.fraction > 1.0) {
                throw std::invalid_argument("split_labeled: fraction must be in [0,1]");
            }
            want = static_cast<std::size_t>(std::floor(budget.fraction * static_cast<double>(members.size())));
        }
        // partial Fisher-Yates picks `want` distinct members
        for (std::size_t k = 0; k < want; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.below(members.size() - k));
            std::swap(members[k], members[j]);
            out.labeled_mask[members[k]] = 1;
        }
    }
    return out;
}

void validate(const Augmentor& aug) {
    if (aug.weak_noise < 0.0 || aug.strong_noise < 0.0) {
        throw std::invalid_argument("augmentor: noise scales must be >= 0");
    }
    if (aug.strong_noise < aug.weak_noise) {
        throw std::invalid_argument("augmentor: strong_noise must be >= weak_noise");
    }
    if (aug.mask_fraction < 0.0 || aug.mask_fraction >= 1.0) {
        throw std::invalid_argument("augmentor: mask_fraction must be in [0,1)");
    }
}

Matrix augment_weak(const Augmentor& aug, const Matrix& x, Rng& rng) {
    if (aug.weak_noise == 0.0) return x;
    Matrix out = x;
    for (double& v : out.data) v += aug.weak_noise * rng.next_gaussian();
    return out;
}

Matrix augment_strong(const Augmentor& aug, const Matrix& x, Rng& rng) {
    Matrix out = x;
    if (aug.strong_noise != 0.0) {
        for (double& v : out.data) v += aug.strong_noise * rng.next_gaussian();
    }
    const auto masked = static_cast<std::size_t>(std::llround(aug.mask_fraction * static_cast<double>(x.cols)));
    if (masked == 0) return out;
    std::vector<std::size_t> coords(x.cols);
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t j = 0; j < x.cols; ++j) coords[j] = j;
        auto row = out.row(r);
        for (std::size_t k = 0; k < masked; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.below(coords.size() - k));
            std::swap(coords[k], coords[j]);
            row[coords[k]] = 0.0;
        }
    }
    return out;
}

Dataset shift_domain(const Dataset& ds, double rotation_angle, const std::vector<double>& translation) {
    if (translation.size() != ds.dim()) throw std::invalid_argument("shift_domain: translation dimension mismatch");
    Dataset out = ds;
    const double c = std::cos(rotation_angle);
    const double s = std::sin(rotation_angle);
    for (std::size_t r = 0; r < out.size(); ++r) {
        auto row = out.features.row(r);
        const double x0 = row[0];
        const double x1 = row[1];
        row[0] = c * x0 - s * x1;
        row[1] = s * x0 + c * x1;
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += translation[j];
    }
    return out;
}

void save_dataset_csv(const std::filesystem::path& path, const Dataset& ds, double gamma, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open dataset file for writing: " + path.string());
    for (std::size_t j = 0; j < ds.dim(); ++j) out << "f" << j << ",";
    out << "label,is_labeled\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto row = ds.features.row(i);
        for (double v : row) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf << ",";
        }
        out << ds.label(i) << "," << (ds.labeled_mask[i] ? 1 : 0) << "\n";
    }
    if (!out) throw std::runtime_error("dataset write failed: " + path.string());

    nlohmann::json meta;
    meta["C"] = ds.num_classes();
    meta["dim"] = ds.dim();
    meta["gamma"] = gamma;
    meta["seed"] = seed;
    meta["class_counts"] = ds.class_counts;
    std::ofstream side(path.string() + ".json");
    if (!side) throw std::runtime_error("cannot open dataset sidecar for writing");
    side << meta.dump(2) << "\n";
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
    std::ifstream side(path.string() + ".json");
    if (!side) throw std::runtime_error("missing dataset sidecar: " + path.string() + ".json");
    nlohmann::json meta = nlohmann::json::parse(side);
    const std::size_t classes = meta.at("C").get<std::size_t>();
    const std::size_t dim = meta.at("dim").get<std::size_t>();
    const auto counts = meta.at("class_counts").get<std::vector<std::int64_t>>();
    if (counts.size() != classes) throw std::runtime_error("dataset sidecar: class_counts length mismatch");

    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path.string());

    std::vector<double> values;
    std::vector<int> labels;
    std::vector<std::uint8_t> mask;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (std::size_t j = 0; j < dim; ++j) {
            if (!std::getline(ss, cell, ',')) throw std::runtime_error("dataset row too short");
            values.push_back(std::stod(cell));
        }
        if (!std::getline(ss, cell, ',')) throw std::runtime_error("dataset row missing label");
        labels.push_back(std::stoi(cell));
        if (!std::getline(ss, cell, ',')) throw std::runtime_error("dataset row missing is_labeled");
        mask.push_back(cell == "1" ? 1 : 0);
    }
    const std::size_t rows = labels.size();
    return Dataset(Matrix(rows, dim, std::move(values)), std::move(labels), std::move(mask), counts);
}

}  // namespace dpl

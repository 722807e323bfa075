#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dermboost/dataset.hpp"
#include "dermboost/metrics.hpp"

namespace testsup {

// Scratch directory removed on destruction.
class temp_dir {
public:
    explicit temp_dir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("dermboost_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path_);
    }
    ~temp_dir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    os << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Independent metric oracles (kept free of the library's ROC code paths).
// ---------------------------------------------------------------------------

// O(n^2) pairwise concordance with half credit for ties.
inline double pairwise_auc_oracle(const std::vector<int>& labels,
                                  const std::vector<double>& scores) {
    double concordant = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                concordant += 1.0;
            else if (scores[i] == scores[j])
                concordant += 0.5;
        }
    }
    return concordant / static_cast<double>(pairs);
}

// Dense trapezoid over the ROC polyline sampled at `samples` FPR points.
// Builds the curve directly from sorted (score,label) pairs, independent of
// the library implementation.
inline double dense_partial_auc_oracle(const std::vector<int>& labels,
                                       const std::vector<double>& scores, double tpr_floor,
                                       std::size_t samples = 1000000) {
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double total_pos = 0, total_neg = 0;
    for (int y : labels) (y ? total_pos : total_neg) += 1;

    // Vertices with distinct FPR; vertical jumps keep the upper TPR.
    std::vector<double> fpr{0.0}, tpr{0.0};
    double tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            (labels[order[i]] ? tp : fp) += 1;
            ++i;
        }
        const double f = fp / total_neg;
        const double t = tp / total_pos;
        if (f == fpr.back())
            tpr.back() = t;
        else {
            fpr.push_back(f);
            tpr.push_back(t);
        }
    }

    // Midpoint Riemann sum of max(TPR(f) - floor, 0), segment by segment.
    const double step = 1.0 / static_cast<double>(samples);
    double area = 0.0;
    std::size_t seg = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        const double f = (static_cast<double>(s) + 0.5) * step;
        while (seg + 1 < fpr.size() && f > fpr[seg + 1]) ++seg;
        const double f0 = fpr[seg], f1 = fpr[seg + 1];
        const double t0 = tpr[seg], t1 = tpr[seg + 1];
        const double t = t0 + (t1 - t0) * (f - f0) / (f1 - f0);
        const double v = t - tpr_floor;
        if (v > 0) area += v;
    }
    return area * step;
}

// Random labeled scores with forced ties.
inline dermboost::labeled_scores random_instance(std::mt19937_64& gen, std::size_t max_n = 200) {
    std::uniform_int_distribution<std::size_t> n_dist(2, max_n);
    std::uniform_int_distribution<int> tie_levels(2, 12);
    std::uniform_real_distribution<double> u(0, 1);

    dermboost::labeled_scores data;
    const std::size_t n = n_dist(gen);
    const int levels = tie_levels(gen);
    const bool quantized = u(gen) < 0.5;
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = u(gen) < 0.3 ? 1 : 0;
        double score = u(gen);
        if (quantized) score = std::floor(score * levels) / levels;
        data.labels.push_back(label);
        data.scores.push_back(score);
        (label ? has_pos : has_neg) = true;
    }
    if (!has_pos) data.labels[0] = 1;
    if (!has_neg) data.labels[data.labels.size() - 1] = 0;
    return data;
}

}  // namespace testsup

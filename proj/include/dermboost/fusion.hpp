#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "dermboost/csv.hpp"
#include "dermboost/errors.hpp"
#include "dermboost/metrics.hpp"
#include "dermboost/search.hpp"

namespace dermboost {

// Heterogeneous per-model score columns over a shared row set.
struct score_matrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> model_names;
    std::vector<double> scores;  // row-major, rows x models

    std::size_t rows() const { return row_ids.size(); }
    std::size_t models() const { return model_names.size(); }
    double at(std::size_t r, std::size_t m) const { return scores[r * models() + m]; }
    double& at(std::size_t r, std::size_t m) { return scores[r * models() + m]; }

    std::vector<double> column(std::size_t m) const {
        std::vector<double> out(rows());
        for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, m);
        return out;
    }
};

enum class weight_provenance { optimized, averaged, manual };

struct weight_vector {
    std::map<std::string, double> weights;
    weight_provenance provenance = weight_provenance::optimized;
};

// Average ranks for ties, then rank r -> (r-1)/(n-1). A single value maps
// to 0.5.
inline std::vector<double> rank_normalize(const std::vector<double>& column) {
    if (column.empty()) throw argument_error("rank_normalize needs at least one value");
    for (double v : column)
        if (!std::isfinite(v)) throw argument_error("rank_normalize needs finite scores");
    const std::size_t n = column.size();
    if (n == 1) return {0.5};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return column[a] < column[b]; });

    std::vector<double> out(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && column[order[j]] == column[order[i]]) ++j;
        // 1-based ranks i+1 .. j averaged
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        const double normalized = (avg_rank - 1.0) / static_cast<double>(n - 1);
        for (std::size_t k = i; k < j; ++k) out[order[k]] = normalized;
        i = j;
    }
    return out;
}

// fused_i = sum_m w_m * rank_normalize(column_m)_i. Models without a weight
// entry count as weight zero.
inline std::vector<double> blend(const score_matrix& matrix, const weight_vector& weights) {
    if (matrix.rows() == 0) throw argument_error("empty score matrix");
    std::vector<double> w(matrix.models(), 0.0);
    double total = 0;
    for (std::size_t m = 0; m < matrix.models(); ++m) {
        const auto it = weights.weights.find(matrix.model_names[m]);
        if (it == weights.weights.end()) continue;
        if (it->second < 0) throw argument_error("blend weights must be non-negative");
        w[m] = it->second;
        total += it->second;
    }
    if (total <= 0) throw argument_error("all effective blend weights are zero");

    std::vector<double> fused(matrix.rows(), 0.0);
    for (std::size_t m = 0; m < matrix.models(); ++m) {
        if (w[m] == 0) continue;
        const std::vector<double> ranks = rank_normalize(matrix.column(m));
        for (std::size_t r = 0; r < matrix.rows(); ++r) fused[r] += w[m] * ranks[r];
    }
    return fused;
}

// Coefficient search over [0,1]^models with OOF partial ROC AUC of the
// blend as the objective. Seeding with every unit vector and the uniform
// vector guarantees the best trial is at least as good as any single model.
inline study_result optimize_weights(const score_matrix& matrix, const std::vector<int>& labels,
                                     const std::vector<int>& fold_of, int n_trials,
                                     std::uint64_t seed) {
    if (matrix.models() == 0) throw argument_error("score matrix has no models");
    if (labels.size() != matrix.rows())
        throw argument_error("labels must match score matrix rows");
    if (!fold_of.empty() && fold_of.size() != matrix.rows())
        throw argument_error("fold_of must match score matrix rows");
    detail::check_roc_input({labels, std::vector<double>(matrix.rows(), 0.0), {}});

    // Rank columns are weight-independent; compute them once.
    std::vector<std::vector<double>> ranks;
    ranks.reserve(matrix.models());
    for (std::size_t m = 0; m < matrix.models(); ++m)
        ranks.push_back(rank_normalize(matrix.column(m)));

    param_space space;
    for (const auto& name : matrix.model_names)
        space.params[name] = param_spec::continuous(0.0, 1.0);

    std::vector<param_assignment> seeded;
    for (std::size_t m = 0; m < matrix.models(); ++m) {
        param_assignment unit;
        for (std::size_t j = 0; j < matrix.models(); ++j)
            unit[matrix.model_names[j]] = (j == m) ? 1.0 : 0.0;
        seeded.push_back(std::move(unit));
    }
    param_assignment uniform;
    for (const auto& name : matrix.model_names) uniform[name] = 1.0;
    seeded.push_back(std::move(uniform));

    auto objective = [&](const param_assignment& a) {
        std::vector<double> fused(matrix.rows(), 0.0);
        double total = 0;
        for (std::size_t m = 0; m < matrix.models(); ++m) {
            const double w = std::get<double>(a.at(matrix.model_names[m]));
            if (w == 0) continue;
            total += w;
            for (std::size_t r = 0; r < matrix.rows(); ++r) fused[r] += w * ranks[m][r];
        }
        if (total <= 0) throw argument_error("all weights zero");
        return partial_roc_auc_above_tpr({labels, fused, {}});
    };
    return run_study(objective, space, n_trials, seed, seeded);
}

// Pools the top_n trials of every run and averages the weights per model.
inline weight_vector average_top_trials(const std::vector<study_result>& results,
                                        int top_n = 10) {
    if (results.empty()) throw argument_error("no study results to average");
    if (top_n < 1) throw argument_error("top_n must be positive");

    std::map<std::string, double> sums;
    std::size_t pooled = 0;
    for (const auto& result : results) {
        std::size_t taken = 0;
        for (const auto& t : result.trials) {
            if (t.failed()) break;
            for (const auto& [name, value] : t.params)
                sums[name] += std::get<double>(value);
            ++pooled;
            if (++taken == static_cast<std::size_t>(top_n)) break;
        }
        if (taken < static_cast<std::size_t>(top_n))
            throw argument_error("a run has fewer than top_n successful trials");
    }

    weight_vector out;
    out.provenance = weight_provenance::averaged;
    for (auto& [name, sum] : sums) out.weights[name] = sum / static_cast<double>(pooled);
    return out;
}

// Replaces listed entries; the caller keeps the pre-override vector for the
// audit trail.
inline weight_vector apply_manual_overrides(const weight_vector& weights,
                                            const std::map<std::string, double>& overrides) {
    weight_vector out = weights;
    out.provenance = weight_provenance::manual;
    for (const auto& [name, value] : overrides) {
        if (!out.weights.count(name))
            throw argument_error("override for unknown model \"" + name + "\"");
        if (!(value >= 0.0 && value <= 1.0))
            throw argument_error("override for \"" + name + "\" must lie in [0,1]");
        out.weights[name] = value;
    }
    return out;
}

inline const char* provenance_name(weight_provenance p) {
    switch (p) {
        case weight_provenance::optimized: return "optimized";
        case weight_provenance::averaged: return "averaged";
        case weight_provenance::manual: return "manual";
    }
    return "unknown";
}

inline void save_weights_csv(const weight_vector& weights, const std::filesystem::path& path) {
    csv_writer w(path);
    w.row({"model", "weight", "provenance"});
    for (const auto& [name, value] : weights.weights)
        w.row({name, format_double(value), provenance_name(weights.provenance)});
}

inline weight_vector make_weight_vector(const param_assignment& params,
                                        weight_provenance prov) {
    weight_vector out;
    out.provenance = prov;
    for (const auto& [name, value] : params) out.weights[name] = std::get<double>(value);
    return out;
}

}  // namespace dermboost

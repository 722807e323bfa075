#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dermboost/csv.hpp"
#include "dermboost/errors.hpp"

namespace dermboost {

// Labels, scores and (optionally) patient grouping for one evaluation set.
struct labeled_scores {
    std::vector<int> labels;
    std::vector<double> scores;
    std::vector<std::string> group_ids;  // empty = no grouping available

    bool has_groups() const { return !group_ids.empty(); }
};

struct roc_point {
    double fpr;
    double tpr;
};

struct roc_curve {
    std::vector<roc_point> points;
};

namespace detail {

inline void check_roc_input(const labeled_scores& data) {
    if (data.labels.size() != data.scores.size())
        throw argument_error("labels and scores must have equal length");
    if (data.has_groups() && data.group_ids.size() != data.labels.size())
        throw argument_error("group_ids length must match labels");
    if (data.labels.empty()) throw argument_error("empty input");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        if (data.labels[i] != 0 && data.labels[i] != 1)
            throw argument_error("labels must be 0 or 1");
        if (!std::isfinite(data.scores[i]))
            throw argument_error("scores must be finite");
        pos += static_cast<std::size_t>(data.labels[i]);
    }
    if (pos == 0 || pos == data.labels.size())
        throw degenerate_input_error(
            "ROC metrics need at least one positive and one negative label");
}

}  // namespace detail

// One vertex per distinct score threshold, thresholds descending. Tied
// scores collapse into a single step.
inline roc_curve compute_roc_curve(const labeled_scores& data) {
    detail::check_roc_input(data);
    const std::size_t n = data.labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return data.scores[a] > data.scores[b];
    });

    double total_pos = 0, total_neg = 0;
    for (int y : data.labels) (y ? total_pos : total_neg) += 1;

    roc_curve curve;
    curve.points.push_back({0.0, 0.0});
    double tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        const double threshold = data.scores[order[i]];
        while (i < n && data.scores[order[i]] == threshold) {
            if (data.labels[order[i]])
                tp += 1;
            else
                fp += 1;
            ++i;
        }
        curve.points.push_back({fp / total_neg, tp / total_pos});
    }
    return curve;
}

// Trapezoidal area under the ROC curve; equals the tie-corrected pairwise
// concordance probability.
inline double roc_auc(const labeled_scores& data) {
    const roc_curve curve = compute_roc_curve(data);
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
    }
    return area;
}

// Area between the ROC curve and the TPR=tpr_floor line over the full FPR
// axis: integral of max(TPR(f) - tpr_floor, 0) df. Range [0, 1 - tpr_floor].
inline double partial_roc_auc_above_tpr(const labeled_scores& data, double tpr_floor = 0.8) {
    if (!(tpr_floor >= 0.0 && tpr_floor < 1.0))
        throw argument_error("tpr_floor must lie in [0,1)");
    const roc_curve curve = compute_roc_curve(data);
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        if (b.fpr == a.fpr) continue;  // vertical step: zero width
        double f0 = a.fpr, t0 = a.tpr;
        const double f1 = b.fpr, t1 = b.tpr;
        if (t1 <= tpr_floor) continue;  // TPR non-decreasing: whole segment below
        if (t0 < tpr_floor) {
            // exact crossing vertex
            f0 = a.fpr + (tpr_floor - t0) * (f1 - a.fpr) / (t1 - t0);
            t0 = tpr_floor;
        }
        area += (f1 - f0) * 0.5 * ((t0 - tpr_floor) + (t1 - tpr_floor));
    }
    return area;
}

// Fraction of positives captured when only each group's k highest-scored
// records are reviewed. Ties break toward the lower record index.
inline double top_k_retrieval_sensitivity(const labeled_scores& data, int k = 15) {
    if (k <= 0) throw argument_error("k must be positive");
    if (!data.has_groups())
        throw argument_error("top_k_retrieval_sensitivity requires group_ids");
    if (data.labels.size() != data.scores.size() ||
        data.group_ids.size() != data.labels.size())
        throw argument_error("labels, scores and group_ids must have equal length");

    std::size_t total_pos = 0;
    for (int y : data.labels) total_pos += static_cast<std::size_t>(y);
    if (total_pos == 0)
        throw degenerate_input_error("no positive labels for retrieval sensitivity");

    std::unordered_map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        groups[data.group_ids[i]].push_back(i);

    std::size_t captured = 0;
    for (auto& [gid, idx] : groups) {
        if (idx.size() > static_cast<std::size_t>(k)) {
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                if (data.scores[a] != data.scores[b]) return data.scores[a] > data.scores[b];
                return a < b;
            });
            idx.resize(static_cast<std::size_t>(k));
        }
        for (std::size_t i : idx) captured += static_cast<std::size_t>(data.labels[i]);
    }
    return static_cast<double>(captured) / static_cast<double>(total_pos);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct metric_triple {
    std::optional<double> roc_auc;
    std::optional<double> partial_roc_auc;
    std::optional<double> top_k_sensitivity;
};

struct metric_report {
    metric_triple oof;
    metric_triple mean_fold;
    std::vector<std::pair<int, metric_triple>> per_fold;  // sorted by fold id
    int skipped_folds = 0;  // folds with at least one unsupported metric
};

namespace detail {

inline metric_triple triple_of(const labeled_scores& data, int k) {
    metric_triple t;
    std::size_t pos = 0, neg = 0;
    for (int y : data.labels) (y ? pos : neg) += 1;
    if (pos > 0 && neg > 0) {
        t.roc_auc = roc_auc(data);
        t.partial_roc_auc = partial_roc_auc_above_tpr(data);
    }
    if (data.has_groups() && pos > 0)
        t.top_k_sensitivity = top_k_retrieval_sensitivity(data, k);
    return t;
}

}  // namespace detail

// OOF metrics on the full set plus per-fold values and their mean. Folds
// that cannot support a metric report an absent value and are excluded
// from that metric's mean.
inline metric_report evaluate(const labeled_scores& data, const std::vector<int>& fold_of,
                              int k = 15) {
    if (data.labels.empty()) throw argument_error("empty input");
    if (fold_of.size() != data.labels.size())
        throw argument_error("fold_of must assign every record");

    metric_report report;
    detail::check_roc_input(data);  // OOF must be well-posed
    report.oof = detail::triple_of(data, k);

    std::vector<int> folds = fold_of;
    std::sort(folds.begin(), folds.end());
    folds.erase(std::unique(folds.begin(), folds.end()), folds.end());

    double sum_auc = 0, sum_pauc = 0, sum_topk = 0;
    int n_auc = 0, n_topk = 0;
    for (int f : folds) {
        labeled_scores part;
        for (std::size_t i = 0; i < data.labels.size(); ++i) {
            if (fold_of[i] != f) continue;
            part.labels.push_back(data.labels[i]);
            part.scores.push_back(data.scores[i]);
            if (data.has_groups()) part.group_ids.push_back(data.group_ids[i]);
        }
        metric_triple t;
        if (!part.labels.empty()) t = detail::triple_of(part, k);
        if (t.roc_auc) {
            sum_auc += *t.roc_auc;
            sum_pauc += *t.partial_roc_auc;
            ++n_auc;
        }
        if (t.top_k_sensitivity) {
            sum_topk += *t.top_k_sensitivity;
            ++n_topk;
        }
        const bool complete = t.roc_auc && (!data.has_groups() || t.top_k_sensitivity);
        if (!complete) ++report.skipped_folds;
        report.per_fold.emplace_back(f, t);
    }
    if (n_auc > 0) {
        report.mean_fold.roc_auc = sum_auc / n_auc;
        report.mean_fold.partial_roc_auc = sum_pauc / n_auc;
    }
    if (n_topk > 0) report.mean_fold.top_k_sensitivity = sum_topk / n_topk;
    return report;
}

inline void write_metric_report_csv(const metric_report& report,
                                    const std::filesystem::path& path) {
    csv_writer w(path);
    w.row({"scope", "fold", "roc_auc", "partial_roc_auc", "top15_sensitivity"});
    auto cell = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    w.row({"oof", "", cell(report.oof.roc_auc), cell(report.oof.partial_roc_auc),
           cell(report.oof.top_k_sensitivity)});
    w.row({"mean", "", cell(report.mean_fold.roc_auc), cell(report.mean_fold.partial_roc_auc),
           cell(report.mean_fold.top_k_sensitivity)});
    for (const auto& [fold, t] : report.per_fold)
        w.row({"fold", std::to_string(fold), cell(t.roc_auc), cell(t.partial_roc_auc),
               cell(t.top_k_sensitivity)});
}

}  // namespace dermboost

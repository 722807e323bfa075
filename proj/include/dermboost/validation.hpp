#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dermboost/csv.hpp"
#include "dermboost/dataset.hpp"
#include "dermboost/errors.hpp"
#include "dermboost/metrics.hpp"
#include "dermboost/rng.hpp"

namespace dermboost {

// Record-to-fold assignment. Entries keep the source dataset's record order
// so serialization is byte-deterministic.
struct fold_plan {
    std::vector<std::pair<std::string, int>> entries;
    int k = 0;
    std::uint64_t seed = 0;

    int fold_of(const std::string& record_id) const {
        auto it = index_.find(record_id);
        if (it == index_.end()) throw argument_error("record " + record_id + " not in fold plan");
        return it->second;
    }

    bool contains(const std::string& record_id) const { return index_.count(record_id) > 0; }

    void rebuild_index() {
        index_.clear();
        for (const auto& [id, fold] : entries) {
            if (!index_.emplace(id, fold).second)
                throw integrity_error("duplicate record_id in fold plan: " + id);
        }
    }

private:
    std::unordered_map<std::string, int> index_;
};

// Whole patients go to folds; greedy pass over patients in descending
// (positive count, total count) order, each assigned to the fold that
// minimizes the squared deviation from the ideal per-fold positive count,
// then total count. The seed only shuffles the order of tied patients.
inline fold_plan stratified_group_kfold(const std::vector<std::string>& record_ids,
                                        const std::vector<std::string>& patient_ids,
                                        const std::vector<int>& labels, int k,
                                        std::uint64_t seed) {
    if (k < 2) throw argument_error("k must be at least 2");
    if (record_ids.size() != patient_ids.size() || labels.size() != record_ids.size())
        throw argument_error("record_ids, patient_ids and labels must have equal length");

    struct patient_stats {
        std::string id;
        std::size_t positives = 0;
        std::size_t total = 0;
    };
    std::vector<patient_stats> patients;
    std::unordered_map<std::string, std::size_t> patient_index;
    for (std::size_t i = 0; i < record_ids.size(); ++i) {
        auto [it, inserted] = patient_index.emplace(patient_ids[i], patients.size());
        if (inserted) patients.push_back({patient_ids[i], 0, 0});
        auto& st = patients[it->second];
        st.positives += static_cast<std::size_t>(labels[i]);
        st.total += 1;
    }
    if (patients.size() < static_cast<std::size_t>(k))
        throw argument_error("fewer patients (" + std::to_string(patients.size()) +
                             ") than folds (" + std::to_string(k) + ")");

    std::vector<std::size_t> order(patients.size());
    std::iota(order.begin(), order.end(), 0);
    rng gen(seed);
    gen.shuffle(order);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (patients[a].positives != patients[b].positives)
            return patients[a].positives > patients[b].positives;
        return patients[a].total > patients[b].total;
    });

    std::vector<std::size_t> fold_pos(static_cast<std::size_t>(k), 0);
    std::vector<std::size_t> fold_tot(static_cast<std::size_t>(k), 0);
    std::unordered_map<std::string, int> patient_fold;
    for (std::size_t pi : order) {
        const auto& st = patients[pi];
        int best = 0;
        for (int f = 1; f < k; ++f) {
            const bool key_pos = st.positives > 0 && fold_pos[f] != fold_pos[best];
            if (key_pos ? fold_pos[f] < fold_pos[best] : fold_tot[f] < fold_tot[best])
                best = f;
        }
        fold_pos[best] += st.positives;
        fold_tot[best] += st.total;
        patient_fold[st.id] = best;
    }

    fold_plan plan;
    plan.k = k;
    plan.seed = seed;
    plan.entries.reserve(record_ids.size());
    for (std::size_t i = 0; i < record_ids.size(); ++i)
        plan.entries.emplace_back(record_ids[i], patient_fold.at(patient_ids[i]));
    plan.rebuild_index();
    return plan;
}

inline fold_plan stratified_group_kfold(const dataset& data, int k, std::uint64_t seed) {
    std::vector<std::string> ids, patients;
    std::vector<int> labels;
    ids.reserve(data.size());
    for (const auto& rec : data.records()) {
        ids.push_back(rec.record_id);
        patients.push_back(rec.patient_id);
        labels.push_back(rec.label);
    }
    return stratified_group_kfold(ids, patients, labels, k, seed);
}

// Union of plans over disjoint record sets; fold i of the result is the
// union of every plan's fold i.
inline fold_plan merge_fold_plans(const std::vector<fold_plan>& plans) {
    if (plans.empty()) throw argument_error("no plans to merge");
    fold_plan out;
    out.k = plans.front().k;
    out.seed = plans.front().seed;
    for (const auto& p : plans) {
        if (p.k != out.k)
            throw argument_error("cannot merge plans with different k: " +
                                 std::to_string(p.k) + " vs " + std::to_string(out.k));
        for (const auto& e : p.entries) out.entries.push_back(e);
    }
    try {
        out.rebuild_index();
    } catch (const integrity_error& e) {
        throw integrity_error(std::string("merge_fold_plans: ") + e.what());
    }
    return out;
}

inline void save_fold_plan(const fold_plan& plan, const std::filesystem::path& path) {
    csv_writer w(path);
    w.row({"isic_id", "fold"});
    for (const auto& [id, fold] : plan.entries) w.row({id, std::to_string(fold)});
}

inline fold_plan load_fold_plan(const std::filesystem::path& path) {
    csv_reader reader(path);
    const int id_col = reader.column_of("isic_id");
    const int fold_col = reader.column_of("fold");
    if (id_col < 0 || fold_col < 0)
        throw schema_error(path.string() + ": expected header isic_id,fold");
    fold_plan plan;
    int max_fold = 0;
    std::vector<std::string> row;
    while (reader.next(row)) {
        long long f{};
        if (!parse_int(row[fold_col], f) || f < 0)
            throw parse_error(path.string() + ": bad fold value on row " +
                              std::to_string(reader.data_row()));
        plan.entries.emplace_back(row[id_col], static_cast<int>(f));
        max_fold = std::max(max_fold, static_cast<int>(f));
    }
    plan.k = max_fold + 1;
    plan.rebuild_index();
    return plan;
}

// ---------------------------------------------------------------------------
// Repeated-seed evaluation
// ---------------------------------------------------------------------------

struct repeated_eval_result {
    std::vector<std::pair<std::uint64_t, metric_report>> per_seed;
    metric_report average;  // per_fold left empty
};

inline std::vector<std::uint64_t> default_eval_seeds() { return {0, 1, 2, 3, 4}; }

// Runs `runner` once per seed and averages the resulting reports.
inline repeated_eval_result repeated_seed_eval(
    const std::function<metric_report(std::uint64_t)>& runner,
    std::vector<std::uint64_t> seeds = default_eval_seeds()) {
    if (seeds.empty()) throw argument_error("seeds must be non-empty");

    repeated_eval_result out;
    for (std::uint64_t seed : seeds) {
        try {
            out.per_seed.emplace_back(seed, runner(seed));
        } catch (const std::exception& e) {
            throw aggregate_error("seed " + std::to_string(seed) + ": " + e.what());
        }
    }

    auto average_field = [&](auto getter) -> std::optional<double> {
        double sum = 0;
        int n = 0;
        for (const auto& [seed, rep] : out.per_seed) {
            const std::optional<double> v = getter(rep);
            if (v) {
                sum += *v;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return sum / n;
    };
    out.average.oof.roc_auc = average_field([](const metric_report& r) { return r.oof.roc_auc; });
    out.average.oof.partial_roc_auc =
        average_field([](const metric_report& r) { return r.oof.partial_roc_auc; });
    out.average.oof.top_k_sensitivity =
        average_field([](const metric_report& r) { return r.oof.top_k_sensitivity; });
    out.average.mean_fold.roc_auc =
        average_field([](const metric_report& r) { return r.mean_fold.roc_auc; });
    out.average.mean_fold.partial_roc_auc =
        average_field([](const metric_report& r) { return r.mean_fold.partial_roc_auc; });
    out.average.mean_fold.top_k_sensitivity =
        average_field([](const metric_report& r) { return r.mean_fold.top_k_sensitivity; });
    return out;
}

}  // namespace dermboost

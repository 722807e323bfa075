#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dermboost/config.hpp"
#include "dermboost/dataset.hpp"
#include "dermboost/errors.hpp"
#include "dermboost/features.hpp"
#include "dermboost/fusion.hpp"
#include "dermboost/gbdt.hpp"
#include "dermboost/imbalance.hpp"
#include "dermboost/metrics.hpp"
#include "dermboost/search.hpp"
#include "dermboost/validation.hpp"

namespace dermboost {

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

inline encoded_matrix subset_matrix_rows(const encoded_matrix& m,
                                         const std::vector<std::size_t>& rows) {
    encoded_matrix out;
    out.column_names = m.column_names;
    out.row_ids.reserve(rows.size());
    out.values.reserve(rows.size() * m.cols());
    for (std::size_t r : rows) {
        out.row_ids.push_back(m.row_ids[r]);
        out.values.insert(out.values.end(), m.values.begin() + r * m.cols(),
                          m.values.begin() + (r + 1) * m.cols());
    }
    return out;
}

}  // namespace detail

inline dataset load_config_dataset(const pipeline_config& cfg) {
    return load_metadata_csv(cfg.metadata_path, cfg.schema);
}

inline std::filesystem::path fold_plan_path(const pipeline_config& cfg) {
    return cfg.output_dir / "folds.csv";
}

inline fold_plan require_fold_plan(const pipeline_config& cfg) {
    const auto path = fold_plan_path(cfg);
    if (!std::filesystem::exists(path))
        throw io_error("fold plan " + path.string() + " not found; run `split` first");
    return load_fold_plan(path);
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

inline fold_plan run_split(const pipeline_config& cfg, std::ostream& log = std::cout) {
    const dataset data = load_config_dataset(cfg);
    const fold_plan plan = stratified_group_kfold(data, cfg.folds_k, cfg.folds_seed);
    std::filesystem::create_directories(cfg.output_dir);
    save_fold_plan(plan, fold_plan_path(cfg));

    std::vector<std::set<std::string>> patients(static_cast<std::size_t>(cfg.folds_k));
    std::vector<std::size_t> records(static_cast<std::size_t>(cfg.folds_k), 0);
    std::vector<std::size_t> positives(static_cast<std::size_t>(cfg.folds_k), 0);
    for (const auto& rec : data.records()) {
        const auto f = static_cast<std::size_t>(plan.fold_of(rec.record_id));
        patients[f].insert(rec.patient_id);
        records[f] += 1;
        positives[f] += static_cast<std::size_t>(rec.label);
    }
    log << "fold,patients,records,positives\n";
    for (int f = 0; f < cfg.folds_k; ++f)
        log << f << "," << patients[static_cast<std::size_t>(f)].size() << ","
            << records[static_cast<std::size_t>(f)] << ","
            << positives[static_cast<std::size_t>(f)] << "\n";
    return plan;
}

// ---------------------------------------------------------------------------
// features (inspection export)
// ---------------------------------------------------------------------------

inline std::filesystem::path run_features(const pipeline_config& cfg,
                                          std::ostream& log = std::cout) {
    const dataset data = load_config_dataset(cfg);
    const feature_recipe recipe = fit_recipe(data, cfg.features);
    const encoded_matrix m = transform(recipe, data);
    std::filesystem::create_directories(cfg.output_dir);
    const auto path = cfg.output_dir / "encoded.csv";
    save_encoded_matrix_csv(m, path);
    log << "encoded " << m.rows() << " rows x " << m.cols() << " columns -> " << path.string()
        << "\n";
    return path;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

enum class train_stage { stage1, stage2 };

struct train_outputs {
    std::filesystem::path oof_csv;
    std::filesystem::path report_csv;
    std::vector<std::filesystem::path> model_files;
    metric_report report;
    std::string column_name;  // prediction column name of the written OOF
};

namespace detail {

struct fold_model_set {
    std::vector<double> oof_scores;  // dataset record order
    std::vector<std::variant<boosted_model, early_stop_ensemble>> models;
};

// Per fold: fit recipe on the train folds, undersample, train, predict the
// held-out fold. Aggregation features are computed within each transformed
// subset, so held-out labels never influence held-out predictions.
inline fold_model_set train_oof(const dataset& data, const fold_plan& plan,
                                const pipeline_config& cfg, const feature_config& features,
                                const train_config& base_config, std::ostream& log) {
    for (const auto& rec : data.records())
        if (!plan.contains(rec.record_id))
            throw join_error("record " + rec.record_id + " missing from the fold plan");

    // Fail fast on degenerate folds.
    std::vector<std::size_t> fold_pos(static_cast<std::size_t>(plan.k), 0);
    std::vector<std::size_t> fold_count(static_cast<std::size_t>(plan.k), 0);
    for (const auto& rec : data.records()) {
        const auto f = static_cast<std::size_t>(plan.fold_of(rec.record_id));
        fold_pos[f] += static_cast<std::size_t>(rec.label);
        fold_count[f] += 1;
    }
    std::size_t total_pos = 0, total = 0;
    for (int f = 0; f < plan.k; ++f) {
        total_pos += fold_pos[static_cast<std::size_t>(f)];
        total += fold_count[static_cast<std::size_t>(f)];
    }
    for (int f = 0; f < plan.k; ++f) {
        const std::size_t train_pos = total_pos - fold_pos[static_cast<std::size_t>(f)];
        const std::size_t train_n = total - fold_count[static_cast<std::size_t>(f)];
        if (fold_count[static_cast<std::size_t>(f)] == 0)
            throw degenerate_input_error("fold " + std::to_string(f) + " is empty");
        if (train_pos == 0 || train_pos == train_n)
            throw degenerate_input_error("training part for fold " + std::to_string(f) +
                                         " is single-class");
    }

    fold_model_set out;
    out.oof_scores.assign(data.size(), 0.0);

    for (int f = 0; f < plan.k; ++f) {
        std::vector<std::size_t> train_rows, valid_rows;
        for (std::size_t r = 0; r < data.size(); ++r)
            (plan.fold_of(data.records()[r].record_id) == f ? valid_rows : train_rows)
                .push_back(r);

        const dataset train_part = data.subset(train_rows);
        const dataset valid_part = data.subset(valid_rows);
        const feature_recipe recipe = fit_recipe(train_part, features);
        const encoded_matrix x_train = transform(recipe, train_part);
        const encoded_matrix x_valid = transform(recipe, valid_part);

        std::vector<int> y_train;
        y_train.reserve(train_rows.size());
        for (const auto& rec : train_part.records()) y_train.push_back(rec.label);

        const std::vector<std::size_t> sampled = random_undersample(
            y_train, cfg.sampler_ratio, mix_seed(cfg.sampler_seed, static_cast<std::uint64_t>(f)));
        const encoded_matrix x_sub = subset_matrix_rows(x_train, sampled);
        std::vector<int> y_sub;
        std::vector<std::string> patients_sub;
        for (std::size_t r : sampled) {
            y_sub.push_back(y_train[r]);
            patients_sub.push_back(train_part.records()[r].patient_id);
        }

        train_config tc = base_config;
        tc.seed = mix_seed(base_config.seed, static_cast<std::uint64_t>(f));
        if (cfg.use_class_weights) {
            std::map<int, std::size_t> counts;
            for (int y : y_sub) counts[y] += 1;
            const class_weights cw = square_class_weights(counts);
            tc.instance_weights.clear();
            for (int y : y_sub) tc.instance_weights.push_back(cw.weight_per_class.at(y));
        }

        std::vector<double> preds;
        if (cfg.early_stopping) {
            early_stop_ensemble ens = train_early_stop_ensemble(x_sub, y_sub, patients_sub, tc,
                                                                cfg.patience, cfg.eval_metric);
            preds = predict_proba(ens, x_valid);
            out.models.emplace_back(std::move(ens));
        } else {
            boosted_model model = train(x_sub, y_sub, tc);
            preds = predict_proba(model, x_valid);
            out.models.emplace_back(std::move(model));
        }

        for (std::size_t i = 0; i < valid_rows.size(); ++i)
            out.oof_scores[valid_rows[i]] = preds[i];
        log << "fold " << f << ": trained on " << x_sub.rows() << " of " << x_train.rows()
            << " rows (" << x_train.cols() << " columns), scored " << x_valid.rows() << "\n";
    }
    return out;
}

inline labeled_scores scores_against(const dataset& data, const std::vector<double>& scores) {
    labeled_scores out;
    out.scores = scores;
    out.labels.reserve(data.size());
    out.group_ids.reserve(data.size());
    for (const auto& rec : data.records()) {
        out.labels.push_back(rec.label);
        out.group_ids.push_back(rec.patient_id);
    }
    return out;
}

inline std::vector<int> folds_of(const dataset& data, const fold_plan& plan) {
    std::vector<int> out;
    out.reserve(data.size());
    for (const auto& rec : data.records()) out.push_back(plan.fold_of(rec.record_id));
    return out;
}

}  // namespace detail

inline train_outputs run_train(const pipeline_config& cfg, train_stage stage,
                               std::ostream& log = std::cout) {
    dataset data = load_config_dataset(cfg);
    const fold_plan plan = require_fold_plan(cfg);

    feature_config features = cfg.features;
    std::string model_name = cfg.model_id;
    if (stage == train_stage::stage2) {
        const auto inputs = cfg.stage_predictions(prediction_stage::stage2_feature);
        if (inputs.empty())
            throw config_error("stage2 training needs predictions.stage2_feature entries");
        std::vector<prediction_column> columns;
        for (const auto& in : inputs) columns.push_back(load_predictions_csv(in.path));
        data = join_predictions(data, columns, join_policy::strict).data;
        for (const auto& col : columns) features.passthrough_columns.push_back(col.name);
        model_name += "_stage2";
    }

    const auto started = std::chrono::steady_clock::now();
    const detail::fold_model_set set =
        detail::train_oof(data, plan, cfg, features, cfg.gbdt, log);

    std::filesystem::create_directories(cfg.output_dir / "models");
    train_outputs out;
    out.column_name = model_name;
    out.oof_csv = cfg.output_dir / (model_name + ".csv");
    std::vector<std::string> ids;
    ids.reserve(data.size());
    for (const auto& rec : data.records()) ids.push_back(rec.record_id);
    save_predictions_csv(ids, set.oof_scores, out.oof_csv);

    for (std::size_t f = 0; f < set.models.size(); ++f) {
        const auto path =
            cfg.output_dir / "models" / (model_name + "_fold" + std::to_string(f) + ".dbm");
        if (const auto* model = std::get_if<boosted_model>(&set.models[f]))
            save_model(*model, path);
        else
            save_ensemble(std::get<early_stop_ensemble>(set.models[f]), path);
        out.model_files.push_back(path);
    }

    out.report = evaluate(detail::scores_against(data, set.oof_scores),
                          detail::folds_of(data, plan), cfg.metrics_top_k);
    out.report_csv = cfg.output_dir / (model_name + "_report.csv");
    write_metric_report_csv(out.report, out.report_csv);

    log << model_name << ": OOF pAUC "
        << (out.report.oof.partial_roc_auc ? format_double(*out.report.oof.partial_roc_auc) : "-")
        << ", ROC AUC "
        << (out.report.oof.roc_auc ? format_double(*out.report.oof.roc_auc) : "-") << " in "
        << format_double(detail::elapsed_ms(started)) << " ms\n";
    return out;
}

// ---------------------------------------------------------------------------
// tune
// ---------------------------------------------------------------------------

struct tune_outputs {
    param_assignment refined;
    std::filesystem::path study_csv;
    std::filesystem::path refined_config;
};

// Search space for the under-sampling ratio and the booster parameters.
inline param_space gbdt_search_space() {
    param_space space;
    space.params["sampler.ratio"] = param_spec::continuous(0.003, 0.5, true);
    space.params["gbdt.n_rounds"] = param_spec::integer(50, 2000);
    space.params["gbdt.learning_rate"] = param_spec::continuous(0.005, 0.3, true);
    space.params["gbdt.max_depth"] = param_spec::integer(2, 8);
    space.params["gbdt.min_samples_leaf"] = param_spec::integer(5, 200);
    space.params["gbdt.row_subsample"] = param_spec::continuous(0.5, 1.0);
    space.params["gbdt.col_subsample"] = param_spec::continuous(0.5, 1.0);
    space.params["gbdt.lambda_l2"] = param_spec::continuous(0.0, 10.0);
    return space;
}

inline pipeline_config apply_trial_params(const pipeline_config& base,
                                          const param_assignment& params) {
    pipeline_config cfg = base;
    cfg.sampler_ratio = std::get<double>(params.at("sampler.ratio"));
    cfg.gbdt.n_rounds = static_cast<int>(std::get<std::int64_t>(params.at("gbdt.n_rounds")));
    cfg.gbdt.learning_rate = std::get<double>(params.at("gbdt.learning_rate"));
    cfg.gbdt.max_depth = static_cast<int>(std::get<std::int64_t>(params.at("gbdt.max_depth")));
    cfg.gbdt.min_samples_leaf =
        static_cast<int>(std::get<std::int64_t>(params.at("gbdt.min_samples_leaf")));
    cfg.gbdt.row_subsample = std::get<double>(params.at("gbdt.row_subsample"));
    cfg.gbdt.col_subsample = std::get<double>(params.at("gbdt.col_subsample"));
    cfg.gbdt.lambda_l2 = std::get<double>(params.at("gbdt.lambda_l2"));
    return cfg;
}

inline tune_outputs run_tune(const pipeline_config& cfg, std::ostream& log = std::cout) {
    const dataset data = load_config_dataset(cfg);
    const fold_plan plan = require_fold_plan(cfg);
    std::ostream null_log(nullptr);

    auto objective = [&](const param_assignment& params) {
        const pipeline_config trial_cfg = apply_trial_params(cfg, params);
        const detail::fold_model_set set =
            detail::train_oof(data, plan, trial_cfg, trial_cfg.features, trial_cfg.gbdt, null_log);
        return partial_roc_auc_above_tpr(detail::scores_against(data, set.oof_scores));
    };

    const study_result result =
        run_study(objective, gbdt_search_space(), cfg.tune_trials, cfg.tune_seed);
    const param_assignment refined = refine_params(result, cfg.tune_top_k);

    std::filesystem::create_directories(cfg.output_dir);
    tune_outputs out;
    out.refined = refined;
    out.study_csv = cfg.output_dir / "tune_study.csv";
    save_study_csv(result, out.study_csv);

    out.refined_config = cfg.output_dir / "tuned.conf";
    std::ofstream os(out.refined_config, std::ios::binary);
    if (!os) throw io_error("cannot write " + out.refined_config.string());
    for (const auto& [key, value] : refined)
        os << key << " = " << param_value_to_string(value) << "\n";

    log << "best trial pAUC " << format_double(result.best.objective) << "; refined -> "
        << out.refined_config.string() << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct evaluate_outputs {
    std::filesystem::path report_csv;
    metric_report report;
};

inline evaluate_outputs run_evaluate(const pipeline_config& cfg,
                                     const std::filesystem::path& predictions_csv,
                                     std::ostream& log = std::cout) {
    const dataset data = load_config_dataset(cfg);
    const fold_plan plan = require_fold_plan(cfg);
    const prediction_column preds = load_predictions_csv(predictions_csv);

    labeled_scores scored;
    scored.scores.reserve(data.size());
    for (const auto& rec : data.records()) {
        const auto it = preds.scores.find(rec.record_id);
        if (it == preds.scores.end())
            throw join_error(predictions_csv.string() + " lacks a score for " + rec.record_id);
        scored.labels.push_back(rec.label);
        scored.scores.push_back(it->second);
        scored.group_ids.push_back(rec.patient_id);
    }

    evaluate_outputs out;
    out.report = evaluate(scored, detail::folds_of(data, plan), cfg.metrics_top_k);
    std::filesystem::create_directories(cfg.output_dir);
    out.report_csv = cfg.output_dir / (predictions_csv.stem().string() + "_report.csv");
    write_metric_report_csv(out.report, out.report_csv);
    log << "report -> " << out.report_csv.string() << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

struct fuse_outputs {
    std::filesystem::path weights_csv;
    std::filesystem::path fused_csv;
    std::filesystem::path report_csv;
    std::vector<std::filesystem::path> study_csvs;
    weight_vector weights;
    metric_report report;
};

inline fuse_outputs run_fuse(const pipeline_config& cfg,
                             const std::vector<std::filesystem::path>& prediction_csvs,
                             std::ostream& log = std::cout) {
    if (prediction_csvs.empty()) throw argument_error("fuse needs at least one prediction CSV");
    const dataset data = load_config_dataset(cfg);
    const fold_plan plan = require_fold_plan(cfg);

    score_matrix matrix;
    matrix.row_ids.reserve(data.size());
    for (const auto& rec : data.records()) matrix.row_ids.push_back(rec.record_id);
    std::vector<prediction_column> columns;
    for (const auto& path : prediction_csvs) columns.push_back(load_predictions_csv(path));
    matrix.model_names.reserve(columns.size());
    for (const auto& col : columns) matrix.model_names.push_back(col.name);
    matrix.scores.resize(data.size() * columns.size());
    for (std::size_t r = 0; r < data.size(); ++r)
        for (std::size_t m = 0; m < columns.size(); ++m) {
            const auto it = columns[m].scores.find(matrix.row_ids[r]);
            if (it == columns[m].scores.end())
                throw join_error("prediction column " + columns[m].name + " lacks a score for " +
                                 matrix.row_ids[r]);
            matrix.at(r, m) = it->second;
        }

    std::vector<int> labels;
    labels.reserve(data.size());
    for (const auto& rec : data.records()) labels.push_back(rec.label);
    const std::vector<int> fold_of = detail::folds_of(data, plan);

    std::filesystem::create_directories(cfg.output_dir);
    fuse_outputs out;
    std::vector<study_result> studies;
    for (int run = 0; run < cfg.fusion_runs; ++run) {
        studies.push_back(optimize_weights(matrix, labels, fold_of, cfg.fusion_trials,
                                           mix_seed(cfg.fusion_seed, static_cast<std::uint64_t>(run))));
        const auto path =
            cfg.output_dir / ("fusion_study_run" + std::to_string(run) + ".csv");
        save_study_csv(studies.back(), path);
        out.study_csvs.push_back(path);
        log << "fusion run " << run << ": best pAUC "
            << format_double(studies.back().best.objective) << "\n";
    }

    weight_vector weights = average_top_trials(studies, cfg.fusion_top_n);
    if (!cfg.fusion_overrides.empty()) {
        save_weights_csv(weights, cfg.output_dir / "weights_pre_override.csv");
        weights = apply_manual_overrides(weights, cfg.fusion_overrides);
    }
    out.weights = weights;
    out.weights_csv = cfg.output_dir / "weights.csv";
    save_weights_csv(weights, out.weights_csv);

    const std::vector<double> fused = blend(matrix, weights);
    out.fused_csv = cfg.output_dir / "fused.csv";
    save_predictions_csv(matrix.row_ids, fused, out.fused_csv);

    labeled_scores scored = detail::scores_against(data, fused);
    out.report = evaluate(scored, fold_of, cfg.metrics_top_k);
    out.report_csv = cfg.output_dir / "fused_report.csv";
    write_metric_report_csv(out.report, out.report_csv);
    log << "fused OOF pAUC "
        << (out.report.oof.partial_roc_auc ? format_double(*out.report.oof.partial_roc_auc) : "-")
        << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

inline std::filesystem::path run_pipeline(const pipeline_config& cfg,
                                          std::ostream& log = std::cout) {
    nlohmann::json manifest;
    manifest["config_hash"] = std::to_string(config_hash(cfg));
    manifest["seeds"] = {{"folds", cfg.folds_seed},
                         {"sampler", cfg.sampler_seed},
                         {"gbdt", cfg.gbdt.seed},
                         {"fusion", cfg.fusion_seed}};

    nlohmann::json columns = nlohmann::json::object();
    for (const auto& p : cfg.predictions) {
        const std::string name = std::filesystem::path(p.path).stem().string();
        columns[name] = {
            {"path", p.path},
            {"stage",
             p.stage == prediction_stage::stage1_model ? "stage1_model" : "stage2_feature"},
            {"leakage_risk", "external_oof_unverified"}};
    }

    std::string current_stage = "split";
    try {
        auto t0 = std::chrono::steady_clock::now();
        run_split(cfg, log);
        manifest["stages"]["split"] = {{"fold_plan", "folds.csv"},
                                       {"wall_ms", detail::elapsed_ms(t0)}};

        current_stage = "stage1";
        t0 = std::chrono::steady_clock::now();
        const train_outputs stage1 = run_train(cfg, train_stage::stage1, log);
        columns[stage1.column_name] = {{"path", stage1.oof_csv.filename().string()},
                                       {"stage", "stage1_tabular"},
                                       {"leakage_risk", "patient_grouped_oof"}};
        {
            nlohmann::json models = nlohmann::json::array();
            for (const auto& m : stage1.model_files)
                models.push_back("models/" + m.filename().string());
            manifest["stages"]["stage1"] = {{"oof", stage1.oof_csv.filename().string()},
                                            {"report", stage1.report_csv.filename().string()},
                                            {"models", models},
                                            {"wall_ms", detail::elapsed_ms(t0)}};
        }

        std::optional<train_outputs> stage2;
        if (!cfg.stage_predictions(prediction_stage::stage2_feature).empty()) {
            current_stage = "stage2";
            t0 = std::chrono::steady_clock::now();
            stage2 = run_train(cfg, train_stage::stage2, log);
            columns[stage2->column_name] = {{"path", stage2->oof_csv.filename().string()},
                                            {"stage", "stage2_tabular"},
                                            {"leakage_risk", "patient_grouped_oof"}};
            nlohmann::json models = nlohmann::json::array();
            for (const auto& m : stage2->model_files)
                models.push_back("models/" + m.filename().string());
            manifest["stages"]["stage2"] = {{"oof", stage2->oof_csv.filename().string()},
                                            {"report", stage2->report_csv.filename().string()},
                                            {"models", models},
                                            {"wall_ms", detail::elapsed_ms(t0)}};
        }

        if (cfg.fusion_enabled) {
            current_stage = "fusion";
            t0 = std::chrono::steady_clock::now();
            std::vector<std::filesystem::path> fusables{stage1.oof_csv};
            for (const auto& p : cfg.stage_predictions(prediction_stage::stage1_model))
                fusables.emplace_back(p.path);
            if (stage2) fusables.push_back(stage2->oof_csv);
            const fuse_outputs fused = run_fuse(cfg, fusables, log);
            nlohmann::json studies = nlohmann::json::array();
            for (const auto& s : fused.study_csvs) studies.push_back(s.filename().string());
            manifest["stages"]["fusion"] = {{"weights", fused.weights_csv.filename().string()},
                                            {"fused", fused.fused_csv.filename().string()},
                                            {"report", fused.report_csv.filename().string()},
                                            {"studies", studies},
                                            {"wall_ms", detail::elapsed_ms(t0)}};
        }
    } catch (const error&) {
        // Leave a partial manifest naming the failed stage, then rethrow.
        manifest["failed_stage"] = current_stage;
        manifest["prediction_columns"] = columns;
        std::filesystem::create_directories(cfg.output_dir);
        std::ofstream os(cfg.output_dir / "manifest.json", std::ios::binary);
        os << manifest.dump(2) << "\n";
        throw;
    }

    manifest["prediction_columns"] = columns;
    const auto path = cfg.output_dir / "manifest.json";
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path.string());
    os << manifest.dump(2) << "\n";
    log << "manifest -> " << path.string() << "\n";
    return path;
}

}  // namespace dermboost

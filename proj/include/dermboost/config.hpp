#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dermboost/csv.hpp"
#include "dermboost/dataset.hpp"
#include "dermboost/errors.hpp"
#include "dermboost/features.hpp"
#include "dermboost/gbdt.hpp"

namespace dermboost {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        const std::string item =
            trim(comma == std::string::npos ? s.substr(start) : s.substr(start, comma - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::uint64_t fnv1a64(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Flat `section.key = value` text format; `#` starts a comment.
class kv_config {
public:
    static kv_config parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot open config " + path.string());
        kv_config out;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const std::string text = detail::trim(line);
            if (text.empty()) continue;
            const std::size_t eq = text.find('=');
            if (eq == std::string::npos)
                throw config_error(path.string() + ":" + std::to_string(line_no) +
                                   ": expected key = value");
            const std::string key = detail::trim(text.substr(0, eq));
            const std::string value = detail::trim(text.substr(eq + 1));
            if (key.empty())
                throw config_error(path.string() + ":" + std::to_string(line_no) + ": empty key");
            if (!out.values_.emplace(key, value).second)
                throw config_error(path.string() + ":" + std::to_string(line_no) +
                                   ": duplicate key " + key);
        }
        return out;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    bool any_with_prefix(const std::string& prefix) const {
        auto it = values_.lower_bound(prefix);
        return it != values_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        consumed_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_string(const std::string& key) {
        consumed_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) throw config_error("missing required config key " + key);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) {
        consumed_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        double v{};
        if (!parse_double(it->second, v))
            throw config_error(key + ": expected a number, got \"" + it->second + "\"");
        return v;
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) {
        consumed_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        long long v{};
        if (!parse_int(it->second, v))
            throw config_error(key + ": expected an integer, got \"" + it->second + "\"");
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) {
        consumed_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw config_error(key + ": expected true/false, got \"" + it->second + "\"");
    }

    std::vector<std::string> get_list(const std::string& key) {
        consumed_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return {};
        return detail::split_list(it->second);
    }

    std::map<std::string, std::string> entries_with_prefix(const std::string& prefix) {
        std::map<std::string, std::string> out;
        for (const auto& [key, value] : values_) {
            if (key.compare(0, prefix.size(), prefix) == 0) {
                out.emplace(key.substr(prefix.size()), value);
                consumed_.insert(key);
            }
        }
        return out;
    }

    // Call after reading everything; rejects typos.
    void reject_unknown_keys() const {
        for (const auto& [key, value] : values_)
            if (!consumed_.count(key)) throw config_error("unknown config key " + key);
    }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

enum class prediction_stage { stage1_model, stage2_feature };

struct prediction_input {
    std::string path;
    prediction_stage stage;
};

struct pipeline_config {
    std::string metadata_path;
    feature_schema schema;
    std::vector<prediction_input> predictions;

    int folds_k = 5;
    std::uint64_t folds_seed = 0;
    std::vector<std::uint64_t> repeat_seeds{0, 1, 2, 3, 4};

    feature_config features;

    double sampler_ratio = 0.1;
    std::uint64_t sampler_seed = 0;
    bool use_class_weights = false;

    train_config gbdt;
    bool early_stopping = false;
    int patience = 20;
    eval_metric_kind eval_metric = eval_metric_kind::pauc;

    std::string model_id = "tabular";
    int metrics_top_k = 15;

    int tune_trials = 300;
    std::uint64_t tune_seed = 0;
    int tune_top_k = 5;

    bool fusion_enabled = false;
    int fusion_trials = 300;
    int fusion_runs = 5;
    int fusion_top_n = 10;
    std::uint64_t fusion_seed = 0;
    std::map<std::string, double> fusion_overrides;

    std::filesystem::path output_dir = "out";

    std::vector<prediction_input> stage_predictions(prediction_stage stage) const {
        std::vector<prediction_input> out;
        for (const auto& p : predictions)
            if (p.stage == stage) out.push_back(p);
        return out;
    }
};

inline pipeline_config load_pipeline_config(const std::filesystem::path& path) {
    kv_config kv = kv_config::parse_file(path);
    pipeline_config cfg;

    cfg.metadata_path = kv.require_string("data.metadata");
    for (const auto& name : kv.get_list("data.numeric_features"))
        cfg.schema.push_back({name, feature_kind::numeric});
    for (const auto& name : kv.get_list("data.categorical_features"))
        cfg.schema.push_back({name, feature_kind::categorical});
    {
        std::set<std::string> seen;
        for (const auto& f : cfg.schema)
            if (!seen.insert(f.name).second)
                throw config_error("feature column listed twice: " + f.name);
    }

    for (const auto& p : kv.get_list("predictions.stage1_model"))
        cfg.predictions.push_back({p, prediction_stage::stage1_model});
    for (const auto& p : kv.get_list("predictions.stage2_feature"))
        cfg.predictions.push_back({p, prediction_stage::stage2_feature});
    {
        std::set<std::string> stems;
        for (const auto& p : cfg.stage_predictions(prediction_stage::stage2_feature))
            stems.insert(std::filesystem::path(p.path).stem().string());
        for (const auto& p : cfg.stage_predictions(prediction_stage::stage1_model)) {
            const std::string stem = std::filesystem::path(p.path).stem().string();
            if (stems.count(stem))
                throw config_error("prediction column \"" + stem +
                                   "\" cannot be both a stage1_model and a stage2_feature");
        }
    }

    cfg.folds_k = static_cast<int>(kv.get_int("folds.k", 5));
    cfg.folds_seed = static_cast<std::uint64_t>(kv.get_int("folds.seed", 0));
    if (kv.has("folds.repeat_seeds")) {
        cfg.repeat_seeds.clear();
        for (const auto& s : kv.get_list("folds.repeat_seeds")) {
            long long v{};
            if (!parse_int(s, v)) throw config_error("folds.repeat_seeds: bad integer " + s);
            cfg.repeat_seeds.push_back(static_cast<std::uint64_t>(v));
        }
    } else {
        kv.get_list("folds.repeat_seeds");
    }

    cfg.features.enable_engineered = kv.get_bool("features.engineered", true);
    cfg.features.enable_patient_deviation = kv.get_bool("features.patient_deviation", true);
    cfg.features.enable_site_deviation = kv.get_bool("features.site_deviation", true);
    cfg.features.enable_patient_extremes = kv.get_bool("features.patient_extremes", true);
    cfg.features.quantile_bins = static_cast<int>(kv.get_int("features.quantile_bins", 20));
    cfg.features.include_skin_type = kv.get_bool("features.include_skin_type", true);
    cfg.features.roles.min_diameter = kv.get_string("features.role.min_diameter", "");
    cfg.features.roles.max_diameter = kv.get_string("features.role.max_diameter", "");
    cfg.features.roles.hue_center = kv.get_string("features.role.hue_center", "");
    cfg.features.roles.hue_periphery = kv.get_string("features.role.hue_periphery", "");
    cfg.features.roles.perimeter = kv.get_string("features.role.perimeter", "");
    cfg.features.roles.area = kv.get_string("features.role.area", "");
    cfg.features.roles.skin_type = kv.get_string("features.role.skin_type", "");

    cfg.sampler_ratio = kv.get_double("sampler.ratio", 0.1);
    cfg.sampler_seed = static_cast<std::uint64_t>(kv.get_int("sampler.seed", 0));
    cfg.use_class_weights = kv.get_bool("sampler.use_class_weights", false);

    cfg.gbdt.n_rounds = static_cast<int>(kv.get_int("gbdt.n_rounds", 300));
    cfg.gbdt.learning_rate = kv.get_double("gbdt.learning_rate", 0.05);
    cfg.gbdt.max_depth = static_cast<int>(kv.get_int("gbdt.max_depth", 4));
    cfg.gbdt.min_samples_leaf = static_cast<int>(kv.get_int("gbdt.min_samples_leaf", 20));
    cfg.gbdt.min_gain = kv.get_double("gbdt.min_gain", 0.0);
    cfg.gbdt.row_subsample = kv.get_double("gbdt.row_subsample", 1.0);
    cfg.gbdt.col_subsample = kv.get_double("gbdt.col_subsample", 1.0);
    cfg.gbdt.n_bins = static_cast<int>(kv.get_int("gbdt.n_bins", 256));
    cfg.gbdt.lambda_l2 = kv.get_double("gbdt.lambda_l2", 1.0);
    cfg.gbdt.seed = static_cast<std::uint64_t>(kv.get_int("gbdt.seed", 0));
    cfg.early_stopping = kv.get_bool("gbdt.early_stopping", false);
    cfg.patience = static_cast<int>(kv.get_int("gbdt.patience", 20));
    const std::string metric = kv.get_string("gbdt.eval_metric", "pauc");
    if (metric == "pauc")
        cfg.eval_metric = eval_metric_kind::pauc;
    else if (metric == "auc")
        cfg.eval_metric = eval_metric_kind::auc;
    else if (metric == "logloss")
        cfg.eval_metric = eval_metric_kind::logloss;
    else
        throw config_error("gbdt.eval_metric: expected pauc|auc|logloss, got " + metric);

    cfg.model_id = kv.get_string("model.id", "tabular");
    cfg.metrics_top_k = static_cast<int>(kv.get_int("metrics.top_k", 15));

    cfg.tune_trials = static_cast<int>(kv.get_int("tune.n_trials", 300));
    cfg.tune_seed = static_cast<std::uint64_t>(kv.get_int("tune.seed", 0));
    cfg.tune_top_k = static_cast<int>(kv.get_int("tune.top_k", 5));

    cfg.fusion_enabled = kv.any_with_prefix("fusion.");
    cfg.fusion_trials = static_cast<int>(kv.get_int("fusion.n_trials", 300));
    cfg.fusion_runs = static_cast<int>(kv.get_int("fusion.runs", 5));
    cfg.fusion_top_n = static_cast<int>(kv.get_int("fusion.top_n", 10));
    cfg.fusion_seed = static_cast<std::uint64_t>(kv.get_int("fusion.seed", 0));
    for (const auto& [model, value] : kv.entries_with_prefix("fusion.override.")) {
        double v{};
        if (!parse_double(value, v))
            throw config_error("fusion.override." + model + ": expected a number");
        cfg.fusion_overrides[model] = v;
    }

    cfg.output_dir = kv.get_string("output.dir", "out");

    kv.reject_unknown_keys();
    return cfg;
}

// Overrides every stage seed at once; used by the CLI --seed flag.
inline void apply_seed_override(pipeline_config& cfg, std::uint64_t seed) {
    cfg.folds_seed = seed;
    cfg.sampler_seed = seed;
    cfg.gbdt.seed = seed;
    cfg.tune_seed = seed;
    cfg.fusion_seed = seed;
}

// Hash of every semantic field; the output directory is deliberately
// excluded so relocated runs compare equal.
inline std::uint64_t config_hash(const pipeline_config& cfg) {
    std::vector<std::string> lines;
    auto add = [&](const std::string& key, const std::string& value) {
        lines.push_back(key + "=" + value);
    };
    add("data.metadata", cfg.metadata_path);
    for (const auto& f : cfg.schema)
        add("schema." + f.name, f.kind == feature_kind::numeric ? "numeric" : "categorical");
    for (const auto& p : cfg.predictions)
        add("prediction." + p.path,
            p.stage == prediction_stage::stage1_model ? "stage1_model" : "stage2_feature");
    add("folds.k", std::to_string(cfg.folds_k));
    add("folds.seed", std::to_string(cfg.folds_seed));
    for (std::size_t i = 0; i < cfg.repeat_seeds.size(); ++i)
        add("folds.repeat_seeds." + std::to_string(i), std::to_string(cfg.repeat_seeds[i]));
    add("features.engineered", cfg.features.enable_engineered ? "1" : "0");
    add("features.patient_deviation", cfg.features.enable_patient_deviation ? "1" : "0");
    add("features.site_deviation", cfg.features.enable_site_deviation ? "1" : "0");
    add("features.patient_extremes", cfg.features.enable_patient_extremes ? "1" : "0");
    add("features.quantile_bins", std::to_string(cfg.features.quantile_bins));
    add("features.include_skin_type", cfg.features.include_skin_type ? "1" : "0");
    add("features.role.min_diameter", cfg.features.roles.min_diameter);
    add("features.role.max_diameter", cfg.features.roles.max_diameter);
    add("features.role.hue_center", cfg.features.roles.hue_center);
    add("features.role.hue_periphery", cfg.features.roles.hue_periphery);
    add("features.role.perimeter", cfg.features.roles.perimeter);
    add("features.role.area", cfg.features.roles.area);
    add("features.role.skin_type", cfg.features.roles.skin_type);
    add("sampler.ratio", format_double(cfg.sampler_ratio));
    add("sampler.seed", std::to_string(cfg.sampler_seed));
    add("sampler.use_class_weights", cfg.use_class_weights ? "1" : "0");
    add("gbdt.n_rounds", std::to_string(cfg.gbdt.n_rounds));
    add("gbdt.learning_rate", format_double(cfg.gbdt.learning_rate));
    add("gbdt.max_depth", std::to_string(cfg.gbdt.max_depth));
    add("gbdt.min_samples_leaf", std::to_string(cfg.gbdt.min_samples_leaf));
    add("gbdt.min_gain", format_double(cfg.gbdt.min_gain));
    add("gbdt.row_subsample", format_double(cfg.gbdt.row_subsample));
    add("gbdt.col_subsample", format_double(cfg.gbdt.col_subsample));
    add("gbdt.n_bins", std::to_string(cfg.gbdt.n_bins));
    add("gbdt.lambda_l2", format_double(cfg.gbdt.lambda_l2));
    add("gbdt.seed", std::to_string(cfg.gbdt.seed));
    add("gbdt.early_stopping", cfg.early_stopping ? "1" : "0");
    add("gbdt.patience", std::to_string(cfg.patience));
    add("gbdt.eval_metric", std::to_string(static_cast<int>(cfg.eval_metric)));
    add("model.id", cfg.model_id);
    add("metrics.top_k", std::to_string(cfg.metrics_top_k));
    add("tune.n_trials", std::to_string(cfg.tune_trials));
    add("tune.seed", std::to_string(cfg.tune_seed));
    add("tune.top_k", std::to_string(cfg.tune_top_k));
    add("fusion.enabled", cfg.fusion_enabled ? "1" : "0");
    add("fusion.n_trials", std::to_string(cfg.fusion_trials));
    add("fusion.runs", std::to_string(cfg.fusion_runs));
    add("fusion.top_n", std::to_string(cfg.fusion_top_n));
    add("fusion.seed", std::to_string(cfg.fusion_seed));
    for (const auto& [model, value] : cfg.fusion_overrides)
        add("fusion.override." + model, format_double(value));

    std::sort(lines.begin(), lines.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& line : lines) h = detail::fnv1a64(line + "\n", h);
    return h;
}

}  // namespace dermboost

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dermboost/csv.hpp"
#include "dermboost/dataset.hpp"
#include "dermboost/errors.hpp"

namespace dermboost {

// Which input columns hold the physical quantities the engineered features
// are built from. Empty string = not provided.
struct feature_roles {
    std::string min_diameter;
    std::string max_diameter;
    std::string hue_center;
    std::string hue_periphery;
    std::string perimeter;
    std::string area;
    std::string skin_type;
};

struct feature_config {
    bool enable_engineered = true;
    bool enable_patient_deviation = true;
    bool enable_site_deviation = true;
    bool enable_patient_extremes = true;
    int quantile_bins = 20;
    bool include_skin_type = true;
    feature_roles roles;
    // Columns appended to the output untouched (joined prediction columns).
    std::vector<std::string> passthrough_columns;
};

struct encoded_matrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> column_names;
    std::vector<double> values;  // row-major, rows() x cols()

    std::size_t rows() const { return row_ids.size(); }
    std::size_t cols() const { return column_names.size(); }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }

    int column_index(const std::string& name) const {
        for (std::size_t i = 0; i < column_names.size(); ++i)
            if (column_names[i] == name) return static_cast<int>(i);
        return -1;
    }
};

// Fitted preprocessing state. transform() never mutates a recipe.
struct feature_recipe {
    feature_config config;
    std::vector<std::string> kept_numeric;       // original columns, schema order
    std::vector<std::string> engineered_names;   // subset of the three fixed names
    std::map<std::string, double> numeric_medians;
    std::vector<std::string> missing_indicator_columns;
    std::vector<std::string> dropped_columns;
    std::vector<std::pair<std::string, std::vector<std::string>>> category_vocabularies;
    std::map<std::string, std::vector<double>> quantile_grids;  // <col>__pmax / <col>__pmin

    // Base columns the aggregation tiers operate on.
    std::vector<std::string> aggregation_base() const {
        std::vector<std::string> base = kept_numeric;
        base.insert(base.end(), engineered_names.begin(), engineered_names.end());
        return base;
    }
};

// ---------------------------------------------------------------------------
// Engineered lesion features
// ---------------------------------------------------------------------------

struct engineered_columns {
    std::vector<std::optional<double>> size_ratio;
    std::vector<std::optional<double>> hue_contrast;
    std::vector<std::optional<double>> perimeter_area;
};

// size_ratio = min/max diameter, hue_contrast = |center - periphery| hue,
// perimeter_area = perimeter/area. Missing inputs propagate as missing.
inline engineered_columns engineer_lesion_features(const dataset& data,
                                                   const feature_roles& roles) {
    auto need = [&](const std::string& name) {
        const int idx = data.numeric_index(name);
        if (idx < 0)
            throw argument_error("engineered features need numeric column \"" + name + "\"");
        return static_cast<std::size_t>(idx);
    };
    const std::size_t c_min = need(roles.min_diameter);
    const std::size_t c_max = need(roles.max_diameter);
    const std::size_t c_hc = need(roles.hue_center);
    const std::size_t c_hp = need(roles.hue_periphery);
    const std::size_t c_per = need(roles.perimeter);
    const std::size_t c_area = need(roles.area);

    engineered_columns out;
    out.size_ratio.reserve(data.size());
    out.hue_contrast.reserve(data.size());
    out.perimeter_area.reserve(data.size());
    for (const auto& rec : data.records()) {
        const auto& dmin = rec.numeric[c_min];
        const auto& dmax = rec.numeric[c_max];
        if (dmin && dmax && *dmax != 0.0)
            out.size_ratio.push_back(*dmin / *dmax);
        else
            out.size_ratio.push_back(std::nullopt);

        const auto& hc = rec.numeric[c_hc];
        const auto& hp = rec.numeric[c_hp];
        if (hc && hp)
            out.hue_contrast.push_back(std::fabs(*hc - *hp));
        else
            out.hue_contrast.push_back(std::nullopt);

        const auto& per = rec.numeric[c_per];
        const auto& area = rec.numeric[c_area];
        if (per && area && *area > 0.0)
            out.perimeter_area.push_back(*per / *area);
        else
            out.perimeter_area.push_back(std::nullopt);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation features
// ---------------------------------------------------------------------------

// Within-group z-scores with population standard deviation. Groups of size
// one or zero variance yield z = 0.
inline std::vector<double> group_deviation_zscores(const std::vector<double>& values,
                                                   const std::vector<std::string>& group_keys) {
    if (values.size() != group_keys.size())
        throw argument_error("values and group keys must have equal length");
    std::unordered_map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < values.size(); ++i) groups[group_keys[i]].push_back(i);

    std::vector<double> z(values.size(), 0.0);
    for (const auto& [key, idx] : groups) {
        if (idx.size() < 2) continue;
        double mean = 0;
        bool constant = true;
        for (std::size_t i : idx) {
            mean += values[i];
            if (values[i] != values[idx.front()]) constant = false;
        }
        if (constant) continue;
        mean /= static_cast<double>(idx.size());
        double var = 0;
        for (std::size_t i : idx) {
            const double d = values[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(idx.size());
        const double sd = std::sqrt(var);
        if (sd <= 1e-12 * std::max(1.0, std::fabs(mean))) continue;
        for (std::size_t i : idx) z[i] = (values[i] - mean) / sd;
    }
    return z;
}

struct group_extremes {
    std::vector<double> max_values;  // per-row broadcast of the group maximum
    std::vector<double> min_values;
};

inline group_extremes broadcast_group_extremes(const std::vector<double>& values,
                                               const std::vector<std::string>& group_keys) {
    if (values.size() != group_keys.size())
        throw argument_error("values and group keys must have equal length");
    std::unordered_map<std::string, std::pair<double, double>> agg;  // key -> (max, min)
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto [it, inserted] = agg.emplace(group_keys[i], std::make_pair(values[i], values[i]));
        if (!inserted) {
            it->second.first = std::max(it->second.first, values[i]);
            it->second.second = std::min(it->second.second, values[i]);
        }
    }
    group_extremes out;
    out.max_values.reserve(values.size());
    out.min_values.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto& [mx, mn] = agg.at(group_keys[i]);
        out.max_values.push_back(mx);
        out.min_values.push_back(mn);
    }
    return out;
}

// Cut points at quantiles j/bins, j = 1..bins, of the fitted values
// (inverted-CDF convention; duplicates kept so mass maps proportionally).
inline std::vector<double> fit_quantile_grid(std::vector<double> values, int bins) {
    if (values.empty()) throw argument_error("cannot fit a quantile grid on no values");
    if (bins < 1) throw argument_error("quantile_bins must be positive");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::vector<double> cuts;
    cuts.reserve(static_cast<std::size_t>(bins));
    for (int j = 1; j <= bins; ++j) {
        const std::size_t idx =
            (static_cast<std::size_t>(j) * n + static_cast<std::size_t>(bins) - 1) /
            static_cast<std::size_t>(bins);
        cuts.push_back(values[idx - 1]);
    }
    return cuts;
}

// (number of cut points <= value) / bins, clipped to [0,1].
inline double apply_quantile_grid(double value, const std::vector<double>& cuts, int bins) {
    const auto it = std::upper_bound(cuts.begin(), cuts.end(), value);
    const double q = static_cast<double>(it - cuts.begin()) / static_cast<double>(bins);
    return std::clamp(q, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Recipe fitting
// ---------------------------------------------------------------------------

namespace detail {

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Distinct count treating missing as its own value.
template <typename T>
std::size_t distinct_count(const std::vector<std::optional<T>>& column) {
    std::vector<T> present;
    bool has_missing = false;
    for (const auto& v : column) {
        if (v)
            present.push_back(*v);
        else
            has_missing = true;
    }
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    return present.size() + (has_missing ? 1 : 0);
}

inline std::vector<std::optional<double>> numeric_column_of(const dataset& data,
                                                            std::size_t idx) {
    std::vector<std::optional<double>> out;
    out.reserve(data.size());
    for (const auto& rec : data.records()) out.push_back(rec.numeric[idx]);
    return out;
}

inline const char* engineered_name(int which) {
    static const char* names[] = {"size_ratio", "hue_contrast", "perimeter_area"};
    return names[which];
}

struct fitted_column {
    std::string name;
    bool dropped = false;
    bool indicator = false;
    double median = 0.0;
};

inline fitted_column fit_numeric_column(const std::string& name,
                                        const std::vector<std::optional<double>>& column) {
    fitted_column out;
    out.name = name;
    if (distinct_count(column) <= 1) {
        out.dropped = true;
        return out;
    }
    std::vector<double> present;
    bool has_missing = false;
    for (const auto& v : column) {
        if (v)
            present.push_back(*v);
        else
            has_missing = true;
    }
    out.median = median_of(std::move(present));
    out.indicator = has_missing;
    return out;
}

}  // namespace detail

inline feature_recipe fit_recipe(const dataset& train, const feature_config& config) {
    if (train.size() == 0) throw argument_error("cannot fit a recipe on an empty dataset");
    if (config.quantile_bins < 1) throw argument_error("quantile_bins must be positive");

    feature_recipe recipe;
    recipe.config = config;

    auto is_passthrough = [&](const std::string& name) {
        return std::find(config.passthrough_columns.begin(), config.passthrough_columns.end(),
                         name) != config.passthrough_columns.end();
    };
    for (const auto& name : config.passthrough_columns)
        if (train.numeric_index(name) < 0)
            throw argument_error("passthrough column \"" + name + "\" not in dataset");

    const bool drop_skin_type = !config.include_skin_type && !config.roles.skin_type.empty();

    // Original numeric columns.
    for (std::size_t i = 0; i < train.numeric_names().size(); ++i) {
        const std::string& name = train.numeric_names()[i];
        if (is_passthrough(name)) continue;
        if (drop_skin_type && name == config.roles.skin_type) {
            recipe.dropped_columns.push_back(name);
            continue;
        }
        const auto fitted = detail::fit_numeric_column(name, detail::numeric_column_of(train, i));
        if (fitted.dropped) {
            recipe.dropped_columns.push_back(name);
            continue;
        }
        recipe.kept_numeric.push_back(name);
        recipe.numeric_medians[name] = fitted.median;
        if (fitted.indicator) recipe.missing_indicator_columns.push_back(name);
    }

    // Engineered columns act like additional numeric inputs.
    if (config.enable_engineered) {
        const engineered_columns eng = engineer_lesion_features(train, config.roles);
        const std::vector<std::optional<double>>* cols[3] = {&eng.size_ratio, &eng.hue_contrast,
                                                             &eng.perimeter_area};
        for (int which = 0; which < 3; ++which) {
            const std::string name = detail::engineered_name(which);
            if (train.numeric_index(name) >= 0 || train.categorical_index(name) >= 0)
                throw argument_error("engineered column name \"" + name +
                                     "\" collides with an input column");
            const auto fitted = detail::fit_numeric_column(name, *cols[which]);
            if (fitted.dropped) {
                recipe.dropped_columns.push_back(name);
                continue;
            }
            recipe.engineered_names.push_back(name);
            recipe.numeric_medians[name] = fitted.median;
            if (fitted.indicator) recipe.missing_indicator_columns.push_back(name);
        }
    }

    // Categorical vocabularies: sorted distinct train values plus `nan`.
    for (std::size_t i = 0; i < train.categorical_names().size(); ++i) {
        const std::string& name = train.categorical_names()[i];
        std::vector<std::optional<std::string>> column;
        column.reserve(train.size());
        for (const auto& rec : train.records()) column.push_back(rec.categorical[i]);
        if (detail::distinct_count(column) <= 1) {
            recipe.dropped_columns.push_back(name);
            continue;
        }
        std::vector<std::string> vocab;
        for (const auto& v : column)
            if (v && *v != "nan") vocab.push_back(*v);
        std::sort(vocab.begin(), vocab.end());
        vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
        vocab.push_back("nan");
        recipe.category_vocabularies.emplace_back(name, std::move(vocab));
    }

    // Quantile grids over train-time per-patient extremes of imputed values.
    if (config.enable_patient_extremes) {
        std::vector<std::string> patients;
        patients.reserve(train.size());
        for (const auto& rec : train.records()) patients.push_back(rec.patient_id);
        engineered_columns eng;
        if (!recipe.engineered_names.empty()) eng = engineer_lesion_features(train, config.roles);
        for (const std::string& name : recipe.aggregation_base()) {
            std::vector<double> imputed = [&] {
                std::vector<double> v;
                v.reserve(train.size());
                const double median = recipe.numeric_medians.at(name);
                if (const int idx = train.numeric_index(name); idx >= 0) {
                    for (const auto& rec : train.records())
                        v.push_back(rec.numeric[static_cast<std::size_t>(idx)].value_or(median));
                } else {
                    const auto& col = name == "size_ratio"     ? eng.size_ratio
                                      : name == "hue_contrast" ? eng.hue_contrast
                                                               : eng.perimeter_area;
                    for (const auto& val : col) v.push_back(val.value_or(median));
                }
                return v;
            }();
            const group_extremes ext = broadcast_group_extremes(imputed, patients);
            // One extreme per patient, not per row.
            std::unordered_map<std::string, bool> seen;
            std::vector<double> maxes, mins;
            for (std::size_t r = 0; r < train.size(); ++r) {
                if (seen.emplace(patients[r], true).second) {
                    maxes.push_back(ext.max_values[r]);
                    mins.push_back(ext.min_values[r]);
                }
            }
            recipe.quantile_grids[name + "__pmax"] =
                fit_quantile_grid(std::move(maxes), config.quantile_bins);
            recipe.quantile_grids[name + "__pmin"] =
                fit_quantile_grid(std::move(mins), config.quantile_bins);
        }
    }

    return recipe;
}

// ---------------------------------------------------------------------------
// Transform
// ---------------------------------------------------------------------------

inline encoded_matrix transform(const feature_recipe& recipe, const dataset& data) {
    const feature_config& config = recipe.config;

    // Schema checks up front.
    std::string missing_columns;
    auto require_numeric = [&](const std::string& name) {
        if (data.numeric_index(name) < 0)
            missing_columns += missing_columns.empty() ? name : ", " + name;
    };
    for (const auto& name : recipe.kept_numeric) require_numeric(name);
    for (const auto& name : config.passthrough_columns) require_numeric(name);
    for (const auto& [name, vocab] : recipe.category_vocabularies)
        if (data.categorical_index(name) < 0)
            missing_columns += missing_columns.empty() ? name : ", " + name;
    if (!missing_columns.empty())
        throw transform_error("dataset lacks recipe columns: " + missing_columns);

    const std::size_t n = data.size();
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    auto add_column = [&](const std::string& name, std::vector<double> values) {
        names.push_back(name);
        columns.push_back(std::move(values));
    };

    // 1. Imputed numerics.
    std::unordered_map<std::string, std::size_t> column_slot;
    std::vector<std::vector<double>> indicator_cols;
    std::vector<std::string> indicator_names;
    auto impute = [&](const std::string& name, const std::vector<std::optional<double>>& raw) {
        const double median = recipe.numeric_medians.at(name);
        const bool wants_indicator =
            std::find(recipe.missing_indicator_columns.begin(),
                      recipe.missing_indicator_columns.end(),
                      name) != recipe.missing_indicator_columns.end();
        std::vector<double> filled(n), flag(n, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            if (raw[r]) {
                filled[r] = *raw[r];
            } else {
                filled[r] = median;
                flag[r] = 1.0;
            }
        }
        column_slot[name] = names.size();
        add_column(name, std::move(filled));
        if (wants_indicator) {
            indicator_names.push_back(name + "_missing");
            indicator_cols.push_back(std::move(flag));
        }
    };
    for (const auto& name : recipe.kept_numeric) {
        const int idx = data.numeric_index(name);
        impute(name, detail::numeric_column_of(data, static_cast<std::size_t>(idx)));
    }
    for (std::size_t i = 0; i < indicator_names.size(); ++i)
        add_column(indicator_names[i], std::move(indicator_cols[i]));
    indicator_names.clear();
    indicator_cols.clear();

    // 2. One-hot categoricals; unseen and missing map to `nan`.
    for (const auto& [name, vocab] : recipe.category_vocabularies) {
        const std::size_t ci = static_cast<std::size_t>(data.categorical_index(name));
        std::vector<std::size_t> hot(n);
        for (std::size_t r = 0; r < n; ++r) {
            const auto& v = data.records()[r].categorical[ci];
            const std::string& cat = v ? *v : std::string("nan");
            auto it = std::find(vocab.begin(), vocab.end(), cat);
            if (it == vocab.end()) it = std::find(vocab.begin(), vocab.end(), "nan");
            hot[r] = static_cast<std::size_t>(it - vocab.begin());
        }
        for (std::size_t vi = 0; vi < vocab.size(); ++vi) {
            std::vector<double> col(n, 0.0);
            for (std::size_t r = 0; r < n; ++r)
                if (hot[r] == vi) col[r] = 1.0;
            add_column(name + "=" + vocab[vi], std::move(col));
        }
    }

    // 3. Engineered features, imputed like any numeric column.
    if (config.enable_engineered && !recipe.engineered_names.empty()) {
        const engineered_columns eng = engineer_lesion_features(data, config.roles);
        for (const auto& name : recipe.engineered_names) {
            const auto& col = name == "size_ratio"     ? eng.size_ratio
                              : name == "hue_contrast" ? eng.hue_contrast
                                                       : eng.perimeter_area;
            impute(name, col);
        }
        for (std::size_t i = 0; i < indicator_names.size(); ++i)
            add_column(indicator_names[i], std::move(indicator_cols[i]));
        indicator_names.clear();
        indicator_cols.clear();
    }

    // 4. Aggregation tiers, computed over `data` itself.
    std::vector<std::string> patient_keys, site_keys;
    patient_keys.reserve(n);
    site_keys.reserve(n);
    for (const auto& rec : data.records()) {
        patient_keys.push_back(rec.patient_id);
        site_keys.push_back(rec.patient_id + '\x1f' + (rec.site ? *rec.site : "\x1e"));
    }
    const std::vector<std::string> base = recipe.aggregation_base();
    if (config.enable_patient_deviation) {
        for (const auto& name : base)
            add_column(name + "_patient_z",
                       group_deviation_zscores(columns[column_slot.at(name)], patient_keys));
    }
    if (config.enable_site_deviation) {
        for (const auto& name : base)
            add_column(name + "_site_z",
                       group_deviation_zscores(columns[column_slot.at(name)], site_keys));
    }
    if (config.enable_patient_extremes) {
        for (const auto& name : base) {
            const group_extremes ext =
                broadcast_group_extremes(columns[column_slot.at(name)], patient_keys);
            const auto& gmax = recipe.quantile_grids.at(name + "__pmax");
            const auto& gmin = recipe.quantile_grids.at(name + "__pmin");
            std::vector<double> qmax(n), qmin(n);
            for (std::size_t r = 0; r < n; ++r) {
                qmax[r] = apply_quantile_grid(ext.max_values[r], gmax, config.quantile_bins);
                qmin[r] = apply_quantile_grid(ext.min_values[r], gmin, config.quantile_bins);
            }
            add_column(name + "_patient_max_q", std::move(qmax));
            add_column(name + "_patient_min_q", std::move(qmin));
        }
    }

    // 5. Joined prediction columns pass through unchanged.
    for (const auto& name : config.passthrough_columns) {
        const std::size_t idx = static_cast<std::size_t>(data.numeric_index(name));
        std::vector<double> col(n);
        for (std::size_t r = 0; r < n; ++r) {
            const auto& v = data.records()[r].numeric[idx];
            if (!v)
                throw transform_error("passthrough column \"" + name +
                                      "\" has a missing value at row " + std::to_string(r));
            col[r] = *v;
        }
        add_column(name, std::move(col));
    }

    encoded_matrix out;
    out.row_ids.reserve(n);
    for (const auto& rec : data.records()) out.row_ids.push_back(rec.record_id);
    out.column_names = names;
    out.values.resize(n * names.size());
    for (std::size_t c = 0; c < columns.size(); ++c)
        for (std::size_t r = 0; r < n; ++r) out.values[r * names.size() + c] = columns[c][r];

    for (double v : out.values)
        if (!std::isfinite(v)) throw transform_error("transform produced a non-finite value");
    return out;
}

inline void save_encoded_matrix_csv(const encoded_matrix& m, const std::filesystem::path& path) {
    csv_writer w(path);
    std::vector<std::string> header{"isic_id"};
    header.insert(header.end(), m.column_names.begin(), m.column_names.end());
    w.row(header);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        std::vector<std::string> row{m.row_ids[r]};
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(format_double(m.at(r, c)));
        w.row(row);
    }
}

}  // namespace dermboost

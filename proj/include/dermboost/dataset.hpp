#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dermboost/csv.hpp"
#include "dermboost/errors.hpp"
#include "dermboost/rng.hpp"

namespace dermboost {

enum class feature_kind { numeric, categorical };

struct schema_field {
    std::string name;
    feature_kind kind;
    bool operator==(const schema_field&) const = default;
};

using feature_schema = std::vector<schema_field>;

// One skin-lesion tile. Numeric/categorical values are parallel to the
// dataset schema's numeric/categorical entries, in schema order.
struct lesion_record {
    std::string record_id;
    std::string patient_id;
    std::optional<std::string> site;
    int label = 0;
    std::vector<std::optional<double>> numeric;
    std::vector<std::optional<std::string>> categorical;
    bool operator==(const lesion_record&) const = default;
};

class dataset {
public:
    dataset() = default;
    explicit dataset(feature_schema schema) : schema_(std::move(schema)) {
        for (const auto& f : schema_) {
            if (f.kind == feature_kind::numeric)
                numeric_names_.push_back(f.name);
            else
                categorical_names_.push_back(f.name);
        }
    }

    const feature_schema& schema() const { return schema_; }
    const std::vector<std::string>& numeric_names() const { return numeric_names_; }
    const std::vector<std::string>& categorical_names() const { return categorical_names_; }
    const std::vector<lesion_record>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    int numeric_index(const std::string& name) const {
        for (std::size_t i = 0; i < numeric_names_.size(); ++i)
            if (numeric_names_[i] == name) return static_cast<int>(i);
        return -1;
    }

    int categorical_index(const std::string& name) const {
        for (std::size_t i = 0; i < categorical_names_.size(); ++i)
            if (categorical_names_[i] == name) return static_cast<int>(i);
        return -1;
    }

    void add_record(lesion_record rec) {
        if (rec.numeric.size() != numeric_names_.size() ||
            rec.categorical.size() != categorical_names_.size())
            throw argument_error("record does not match dataset schema");
        if (rec.label != 0 && rec.label != 1)
            throw argument_error("label must be 0 or 1");
        if (!ids_.insert(rec.record_id).second)
            throw integrity_error("duplicate record_id " + rec.record_id);
        records_.push_back(std::move(rec));
    }

    // Appends a numeric column; `values` is parallel to records.
    void append_numeric_column(const std::string& name,
                               const std::vector<std::optional<double>>& values) {
        if (values.size() != records_.size())
            throw argument_error("column length does not match record count");
        if (numeric_index(name) >= 0 || categorical_index(name) >= 0)
            throw integrity_error("column " + name + " already exists");
        schema_.push_back({name, feature_kind::numeric});
        numeric_names_.push_back(name);
        for (std::size_t i = 0; i < records_.size(); ++i)
            records_[i].numeric.push_back(values[i]);
    }

    dataset subset(const std::vector<std::size_t>& rows) const {
        dataset out(schema_);
        for (std::size_t r : rows) out.add_record(records_.at(r));
        return out;
    }

    bool operator==(const dataset& other) const {
        return schema_ == other.schema_ && records_ == other.records_;
    }

private:
    feature_schema schema_;
    std::vector<std::string> numeric_names_;
    std::vector<std::string> categorical_names_;
    std::vector<lesion_record> records_;
    std::unordered_set<std::string> ids_;
};

// Scores from one external or previously trained model, keyed by record id.
struct prediction_column {
    std::string name;
    std::unordered_map<std::string, double> scores;
};

namespace detail {

inline bool is_missing_cell(const std::string& s) { return s.empty() || s == "NA"; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Metadata CSV: isic_id,patient_id,target,anatom_site_general,<feature...>
// ---------------------------------------------------------------------------

inline dataset load_metadata_csv(const std::filesystem::path& path,
                                 const feature_schema& schema) {
    csv_reader reader(path);
    const int id_col = reader.column_of("isic_id");
    const int patient_col = reader.column_of("patient_id");
    const int target_col = reader.column_of("target");
    const int site_col = reader.column_of("anatom_site_general");
    if (id_col < 0) throw schema_error(path.string() + ": missing required column isic_id");
    if (patient_col < 0)
        throw schema_error(path.string() + ": missing required column patient_id");
    if (target_col < 0) throw schema_error(path.string() + ": missing required column target");

    std::vector<int> feature_cols;
    for (const auto& f : schema) {
        const int c = reader.column_of(f.name);
        if (c < 0) throw schema_error(path.string() + ": missing required column " + f.name);
        feature_cols.push_back(c);
    }

    dataset out(schema);
    std::vector<std::string> row;
    while (reader.next(row)) {
        lesion_record rec;
        rec.record_id = row[id_col];
        rec.patient_id = row[patient_col];
        if (site_col >= 0 && !detail::is_missing_cell(row[site_col]))
            rec.site = row[site_col];
        const std::string& target = row[target_col];
        if (target == "0") {
            rec.label = 0;
        } else if (target == "1") {
            rec.label = 1;
        } else {
            throw parse_error(path.string() + ": non-binary target value \"" + target +
                              "\" on row " + std::to_string(reader.data_row()));
        }
        for (std::size_t i = 0; i < schema.size(); ++i) {
            const std::string& cell = row[feature_cols[i]];
            if (schema[i].kind == feature_kind::numeric) {
                if (detail::is_missing_cell(cell)) {
                    rec.numeric.push_back(std::nullopt);
                } else {
                    double v{};
                    if (!parse_double(cell, v) || !std::isfinite(v))
                        throw parse_error(path.string() + ": bad numeric value \"" + cell +
                                          "\" in column " + schema[i].name + " on row " +
                                          std::to_string(reader.data_row()));
                    rec.numeric.push_back(v);
                }
            } else {
                if (detail::is_missing_cell(cell))
                    rec.categorical.push_back(std::nullopt);
                else
                    rec.categorical.push_back(cell);
            }
        }
        try {
            out.add_record(std::move(rec));
        } catch (const integrity_error& e) {
            throw integrity_error(path.string() + ": " + e.what() + " on row " +
                                  std::to_string(reader.data_row()));
        }
    }
    return out;
}

inline void save_metadata_csv(const dataset& data, const std::filesystem::path& path) {
    csv_writer w(path);
    std::vector<std::string> header{"isic_id", "patient_id", "target", "anatom_site_general"};
    for (const auto& f : data.schema())
        if (f.name != "anatom_site_general") header.push_back(f.name);
    w.row(header);

    for (const auto& rec : data.records()) {
        std::vector<std::string> row{rec.record_id, rec.patient_id,
                                     std::to_string(rec.label),
                                     rec.site ? *rec.site : std::string()};
        std::size_t n_idx = 0, c_idx = 0;
        for (const auto& f : data.schema()) {
            if (f.kind == feature_kind::numeric) {
                const auto& v = rec.numeric[n_idx++];
                if (f.name == "anatom_site_general") continue;
                row.push_back(v ? format_double(*v) : std::string());
            } else {
                const auto& v = rec.categorical[c_idx++];
                if (f.name == "anatom_site_general") continue;
                row.push_back(v ? *v : std::string());
            }
        }
        w.row(row);
    }
}

// ---------------------------------------------------------------------------
// Prediction CSV: isic_id,score
// ---------------------------------------------------------------------------

inline prediction_column load_predictions_csv(const std::filesystem::path& path,
                                              const std::string& name_override = "") {
    csv_reader reader(path);
    const int id_col = reader.column_of("isic_id");
    const int score_col = reader.column_of("score");
    if (id_col < 0 || score_col < 0)
        throw schema_error(path.string() + ": expected header isic_id,score");

    prediction_column out;
    out.name = name_override.empty() ? path.stem().string() : name_override;
    std::vector<std::string> row;
    while (reader.next(row)) {
        double v{};
        if (!parse_double(row[score_col], v) || !std::isfinite(v))
            throw parse_error(path.string() + ": non-finite score \"" + row[score_col] +
                              "\" on row " + std::to_string(reader.data_row()));
        if (!out.scores.emplace(row[id_col], v).second)
            throw integrity_error(path.string() + ": duplicate record_id " + row[id_col]);
    }
    return out;
}

inline void save_predictions_csv(const std::vector<std::string>& ids,
                                 const std::vector<double>& scores,
                                 const std::filesystem::path& path) {
    if (ids.size() != scores.size()) throw argument_error("ids/scores length mismatch");
    csv_writer w(path);
    w.row({"isic_id", "score"});
    for (std::size_t i = 0; i < ids.size(); ++i)
        w.row({ids[i], format_double(scores[i])});
}

// ---------------------------------------------------------------------------
// Joining predictions onto a dataset
// ---------------------------------------------------------------------------

enum class join_policy { strict, drop_missing };

struct join_result {
    dataset data;
    std::size_t dropped = 0;
};

inline join_result join_predictions(const dataset& data,
                                    const std::vector<prediction_column>& columns,
                                    join_policy policy) {
    if (columns.empty()) return {data, 0};

    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const std::string& id = data.records()[r].record_id;
        bool covered = true;
        for (const auto& col : columns)
            if (!col.scores.count(id)) {
                covered = false;
                break;
            }
        if (covered) keep.push_back(r);
    }

    if (policy == join_policy::strict && keep.size() != data.size()) {
        std::string missing;
        std::size_t shown = 0;
        for (const auto& rec : data.records()) {
            bool covered = true;
            for (const auto& col : columns)
                if (!col.scores.count(rec.record_id)) {
                    covered = false;
                    break;
                }
            if (!covered && shown < 10) {
                if (shown) missing += ", ";
                missing += rec.record_id;
                ++shown;
            }
        }
        throw join_error("strict join: " + std::to_string(data.size() - keep.size()) +
                         " record(s) missing from prediction columns: " + missing);
    }

    join_result out{data.subset(keep), data.size() - keep.size()};
    for (const auto& col : columns) {
        std::vector<std::optional<double>> values;
        values.reserve(out.data.size());
        for (const auto& rec : out.data.records())
            values.push_back(col.scores.at(rec.record_id));
        out.data.append_numeric_column(col.name, values);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct synth_params {
    std::size_t n_patients = 100;
    std::size_t lesions_min = 3;
    std::size_t lesions_max = 8;
    double positive_rate = 0.05;
    double signal_strength = 2.0;
    std::uint64_t seed = 0;
};

namespace detail {

// Rational approximation of the standard normal quantile (Acklam).
inline double normal_quantile(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > 1 - plow) return -normal_quantile(1 - p);
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

inline const feature_schema& synthetic_schema() {
    static const feature_schema schema = {
        {"diam_min", feature_kind::numeric},
        {"diam_max", feature_kind::numeric},
        {"hue_center", feature_kind::numeric},
        {"hue_periphery", feature_kind::numeric},
        {"perimeter", feature_kind::numeric},
        {"area", feature_kind::numeric},
        {"border_irregularity", feature_kind::numeric},
        {"thickness", feature_kind::numeric},
        {"color_variance", feature_kind::numeric},
        {"elevation", feature_kind::numeric},
        {"symmetry", feature_kind::numeric},
        {"skin_type", feature_kind::numeric},
        {"anatom_site_general", feature_kind::categorical},
    };
    return schema;
}

// Deterministic generator used by tests and the tutorial. Labels follow a
// latent score with four signal components, each recoverable at a different
// feature-engineering tier:
//   z1 -> border_irregularity directly (basic tier)
//   z2 -> diam_min/diam_max ratio (engineered tier)
//   z3 -> |hue_center - hue_periphery| (engineered tier)
//   z4 -> thickness deviation from the patient's own baseline (aggregation tier)
// The remaining numeric columns are noise.
inline dataset generate_synthetic_dataset(const synth_params& p) {
    if (p.n_patients == 0) throw argument_error("n_patients must be positive");
    if (p.lesions_min == 0 || p.lesions_max < p.lesions_min)
        throw argument_error("lesion range must be a non-empty positive range");
    if (!(p.positive_rate > 0.0 && p.positive_rate < 1.0))
        throw argument_error("positive_rate must lie in (0,1)");
    if (p.signal_strength < 0.0) throw argument_error("signal_strength must be >= 0");

    rng gen(p.seed);
    dataset out(synthetic_schema());

    static const char* sites[] = {"torso", "arm", "leg", "head_neck", "hand_foot"};
    const double half_norm_mean = std::sqrt(2.0 / 3.141592653589793);
    const double half_norm_std = std::sqrt(1.0 - 2.0 / 3.141592653589793);
    // s has unit variance per unit signal_strength; threshold keeps the
    // positive rate at p.positive_rate in expectation.
    const double cutoff = std::sqrt(1.0 + p.signal_strength * p.signal_strength) *
                          detail::normal_quantile(1.0 - p.positive_rate);

    std::size_t record_counter = 0;
    for (std::size_t pi = 0; pi < p.n_patients; ++pi) {
        char pid[24];
        std::snprintf(pid, sizeof(pid), "P%06zu", pi);
        const std::size_t n_lesions =
            p.lesions_min +
            static_cast<std::size_t>(gen.below(p.lesions_max - p.lesions_min + 1));
        const double base_hue = 30.0 + 8.0 * gen.normal();
        const double base_size = 1.2 + 0.35 * gen.normal();
        const double base_thick = 2.0 + 1.0 * gen.normal();
        const double skin_type = 1.0 + static_cast<double>(gen.below(6));

        for (std::size_t li = 0; li < n_lesions; ++li) {
            const double z1 = gen.normal();
            const double z2 = gen.normal();
            const double g3 = gen.normal();
            const double z3 = (std::fabs(g3) - half_norm_mean) / half_norm_std;
            const double z4 = gen.normal();
            const double noise = gen.normal();
            const double s = p.signal_strength * 0.5 * (z1 + z2 + z3 + z4);
            const int label = (s + noise > cutoff) ? 1 : 0;

            const double diam_max = std::exp(base_size + 0.25 * gen.normal());
            const double ratio = detail::sigmoid(1.0 - 1.2 * z2 + 0.18 * gen.normal());
            const double diam_min = diam_max * ratio;
            const double hue_center = base_hue + 4.5 * g3;
            const double hue_periphery = base_hue + 0.6 * gen.normal();
            const double perimeter = 3.141592653589793 * diam_max * (1.05 + 0.15 * std::fabs(gen.normal()));
            const double area = 3.141592653589793 * 0.25 * diam_max * diam_max *
                                std::max(0.2, 0.9 + 0.1 * gen.normal());
            const double border = 0.95 * z1 + 0.35 * gen.normal();
            const double thickness = base_thick + 0.7 * z4;
            const double color_variance = 1.5 * std::fabs(gen.normal());
            const double elevation = 0.5 + 0.2 * gen.normal();
            const double symmetry = detail::sigmoid(gen.normal());

            lesion_record rec;
            char rid[32];
            std::snprintf(rid, sizeof(rid), "ISIC_%07zu", record_counter++);
            rec.record_id = rid;
            rec.patient_id = pid;
            const char* site = sites[gen.below(5)];
            const bool site_known = gen.uniform() >= 0.03;
            if (site_known) rec.site = site;
            rec.label = label;
            rec.numeric = {diam_min,  diam_max,  hue_center, hue_periphery,
                           perimeter, area,      border,     thickness,
                           color_variance, elevation, symmetry, skin_type};
            rec.categorical = {site_known ? std::optional<std::string>(site) : std::nullopt};

            // 5% of numeric cells go missing.
            for (auto& v : rec.numeric)
                if (gen.uniform() < 0.05) v = std::nullopt;

            out.add_record(std::move(rec));
        }
    }
    return out;
}

}  // namespace dermboost

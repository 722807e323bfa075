#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dermboost/errors.hpp"
#include "dermboost/features.hpp"
#include "dermboost/metrics.hpp"
#include "dermboost/rng.hpp"
#include "dermboost/validation.hpp"

namespace dermboost {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts are unsupported");

enum class eval_metric_kind { pauc, auc, logloss };

struct train_config {
    int n_rounds = 300;
    double learning_rate = 0.05;
    int max_depth = 4;
    int min_samples_leaf = 20;  // weighted row count per leaf
    double min_gain = 0.0;
    double row_subsample = 1.0;
    double col_subsample = 1.0;
    int n_bins = 256;
    double lambda_l2 = 1.0;
    std::uint64_t seed = 0;
    std::vector<double> instance_weights;  // empty = unit weights
};

struct tree_node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;
    bool is_leaf() const { return feature < 0; }
};

struct regression_tree {
    std::vector<tree_node> nodes;

    double predict_row(const double* row) const {
        int i = 0;
        while (!nodes[i].is_leaf())
            i = (row[nodes[i].feature] <= nodes[i].threshold) ? nodes[i].left : nodes[i].right;
        return nodes[i].leaf_value;
    }
};

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Additive ensemble of regression trees with a logistic link.
// predict_margin = base_score + learning_rate * sum of routed leaf values.
struct boosted_model {
    double base_score = 0.0;
    double learning_rate = 0.1;
    std::vector<std::string> feature_names;
    std::vector<regression_tree> trees;
    train_config config;                // snapshot; not persisted in the binary
    std::vector<double> train_logloss;  // per completed round, on the training set

    double predict_margin_row(const double* row) const {
        double m = base_score;
        for (const auto& t : trees) m += learning_rate * t.predict_row(row);
        return m;
    }
};

namespace detail {

inline void check_train_config(const train_config& c) {
    if (c.n_rounds < 1) throw argument_error("n_rounds must be positive");
    if (!(c.learning_rate > 0)) throw argument_error("learning_rate must be positive");
    if (c.max_depth < 1) throw argument_error("max_depth must be positive");
    if (c.min_samples_leaf < 1) throw argument_error("min_samples_leaf must be positive");
    if (c.min_gain < 0) throw argument_error("min_gain must be non-negative");
    if (!(c.row_subsample > 0 && c.row_subsample <= 1))
        throw argument_error("row_subsample must lie in (0,1]");
    if (!(c.col_subsample > 0 && c.col_subsample <= 1))
        throw argument_error("col_subsample must lie in (0,1]");
    if (c.n_bins < 2) throw argument_error("n_bins must be at least 2");
    if (c.lambda_l2 < 0) throw argument_error("lambda_l2 must be non-negative");
}

struct binned_features {
    std::vector<std::vector<double>> cuts;       // per feature, ascending data values
    std::vector<std::vector<std::uint16_t>> codes;  // per feature, per row
};

// Weighted quantile binning. Cuts are actual data values, so bin
// assignments depend only on value ranks.
inline binned_features build_bins(const encoded_matrix& m, const std::vector<double>& weights,
                                  int n_bins) {
    const std::size_t rows = m.rows(), cols = m.cols();
    binned_features out;
    out.cuts.resize(cols);
    out.codes.resize(cols);

    std::vector<std::pair<double, double>> vw(rows);
    for (std::size_t f = 0; f < cols; ++f) {
        for (std::size_t r = 0; r < rows; ++r) vw[r] = {m.at(r, f), weights[r]};
        std::sort(vw.begin(), vw.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        // Collapse equal values, accumulating weight.
        std::vector<std::pair<double, double>> uniq;
        for (const auto& [v, w] : vw) {
            if (!uniq.empty() && uniq.back().first == v)
                uniq.back().second += w;
            else
                uniq.emplace_back(v, w);
        }
        double total = 0;
        for (const auto& [v, w] : uniq) total += w;

        auto& cuts = out.cuts[f];
        if (uniq.size() > 1) {
            double cum = 0;
            std::size_t u = 0;
            for (int j = 1; j < n_bins; ++j) {
                const double target = total * static_cast<double>(j) / n_bins;
                while (u < uniq.size() && cum + uniq[u].second < target) {
                    cum += uniq[u].second;
                    ++u;
                }
                if (u >= uniq.size() - 1) break;  // a cut at the max value cannot split
                if (cuts.empty() || cuts.back() != uniq[u].first) cuts.push_back(uniq[u].first);
            }
        }

        auto& codes = out.codes[f];
        codes.resize(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const auto it = std::lower_bound(cuts.begin(), cuts.end(), m.at(r, f));
            codes[r] = static_cast<std::uint16_t>(it - cuts.begin());
        }
    }
    return out;
}

struct build_node {
    std::size_t begin, end;  // range in the row partition
    int depth;
    double g_sum, h_sum, w_sum;
    int node_id;  // index in the output tree
};

inline double logistic_loss(double margin, int y) {
    return std::max(margin, 0.0) - y * margin + std::log1p(std::exp(-std::fabs(margin)));
}

}  // namespace detail

// Called after every round with the model built so far; return false to
// stop training.
using round_monitor = std::function<bool(const boosted_model&, int round)>;

// Newton boosting on logistic loss over quantile-binned features. Greedy
// depth-wise splits; gain ties break toward the lowest feature index, then
// the lowest bin. Deterministic given the seed.
inline boosted_model train(const encoded_matrix& m, const std::vector<int>& labels,
                           const train_config& config, const round_monitor& monitor = nullptr) {
    detail::check_train_config(config);
    const std::size_t rows = m.rows(), cols = m.cols();
    if (labels.size() != rows) throw argument_error("labels must match matrix rows");
    if (rows < 2) throw argument_error("need at least 2 rows to train");
    for (double v : m.values)
        if (!std::isfinite(v)) throw argument_error("training matrix contains non-finite values");

    std::vector<double> weights = config.instance_weights;
    if (weights.empty())
        weights.assign(rows, 1.0);
    else if (weights.size() != rows)
        throw argument_error("instance_weights must match matrix rows");
    for (double w : weights)
        if (!(w > 0) || !std::isfinite(w)) throw argument_error("instance weights must be positive");

    double w_total = 0, w_pos = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] != 0 && labels[r] != 1) throw argument_error("labels must be 0 or 1");
        w_total += weights[r];
        w_pos += labels[r] ? weights[r] : 0.0;
    }
    if (w_pos == 0 || w_pos == w_total)
        throw argument_error("training needs both classes present");

    boosted_model model;
    model.learning_rate = config.learning_rate;
    model.feature_names = m.column_names;
    model.config = config;
    const double prevalence =
        std::clamp(w_pos / w_total, 1e-12, 1.0 - 1e-12);
    model.base_score = std::log(prevalence / (1.0 - prevalence));

    const detail::binned_features bins = detail::build_bins(m, weights, config.n_bins);

    std::vector<double> margins(rows, model.base_score);
    std::vector<double> grad(rows), hess(rows);
    rng sampler(config.seed);

    const bool full_batch = config.row_subsample >= 1.0 && config.col_subsample >= 1.0;
    const std::size_t n_sample_rows = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(rows) * config.row_subsample +
                                               1e-9)));
    const std::size_t n_sample_cols = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(cols) * config.col_subsample +
                                               1e-9)));

    std::vector<std::size_t> row_part;
    std::vector<double> hist_g(256 + 1), hist_h(256 + 1), hist_w(256 + 1);

    for (int round = 0; round < config.n_rounds; ++round) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double p = sigmoid(margins[r]);
            grad[r] = (p - labels[r]) * weights[r];
            hess[r] = std::max(p * (1.0 - p), 1e-16) * weights[r];
        }

        if (n_sample_rows < rows) {
            row_part = sampler.sample_without_replacement(rows, n_sample_rows);
            std::sort(row_part.begin(), row_part.end());
        } else {
            row_part.resize(rows);
            std::iota(row_part.begin(), row_part.end(), 0);
        }
        std::vector<std::size_t> col_set;
        if (n_sample_cols < cols) {
            col_set = sampler.sample_without_replacement(cols, n_sample_cols);
            std::sort(col_set.begin(), col_set.end());
        } else {
            col_set.resize(cols);
            std::iota(col_set.begin(), col_set.end(), 0);
        }

        double root_g = 0, root_h = 0, root_w = 0;
        for (std::size_t r : row_part) {
            root_g += grad[r];
            root_h += hess[r];
            root_w += weights[r];
        }

        regression_tree tree;
        tree.nodes.push_back({});
        std::vector<detail::build_node> level{{0, row_part.size(), 0, root_g, root_h, root_w, 0}};
        bool any_split = false;

        while (!level.empty()) {
            std::vector<detail::build_node> next_level;
            for (const auto& node : level) {
                const double lambda = config.lambda_l2;
                const double node_count = node.w_sum;
                bool do_split = false;
                int best_feature = -1, best_bin = -1;
                double best_gain = config.min_gain;
                double best_gl = 0, best_hl = 0, best_wl = 0;

                if (node.depth < config.max_depth &&
                    node_count >= 2.0 * config.min_samples_leaf) {
                    const double parent_score =
                        node.g_sum * node.g_sum / (node.h_sum + lambda);
                    for (std::size_t f : col_set) {
                        const std::size_t nb = bins.cuts[f].size();
                        if (nb == 0) continue;
                        std::fill(hist_g.begin(), hist_g.begin() + nb + 1, 0.0);
                        std::fill(hist_h.begin(), hist_h.begin() + nb + 1, 0.0);
                        std::fill(hist_w.begin(), hist_w.begin() + nb + 1, 0.0);
                        const auto& codes = bins.codes[f];
                        for (std::size_t i = node.begin; i < node.end; ++i) {
                            const std::size_t r = row_part[i];
                            const std::uint16_t b = codes[r];
                            hist_g[b] += grad[r];
                            hist_h[b] += hess[r];
                            hist_w[b] += weights[r];
                        }
                        double gl = 0, hl = 0, wl = 0;
                        for (std::size_t b = 0; b < nb; ++b) {
                            gl += hist_g[b];
                            hl += hist_h[b];
                            wl += hist_w[b];
                            const double wr = node.w_sum - wl;
                            if (wl < config.min_samples_leaf || wr < config.min_samples_leaf)
                                continue;
                            const double gr = node.g_sum - gl;
                            const double hr = node.h_sum - hl;
                            const double gain = 0.5 * (gl * gl / (hl + lambda) +
                                                       gr * gr / (hr + lambda) - parent_score);
                            if (gain > best_gain) {
                                best_gain = gain;
                                best_feature = static_cast<int>(f);
                                best_bin = static_cast<int>(b);
                                best_gl = gl;
                                best_hl = hl;
                                best_wl = wl;
                                do_split = true;
                            }
                        }
                    }
                }

                if (!do_split) {
                    tree.nodes[node.node_id].feature = -1;
                    tree.nodes[node.node_id].leaf_value =
                        -node.g_sum / (node.h_sum + lambda);
                    continue;
                }

                any_split = true;
                const auto& codes = bins.codes[static_cast<std::size_t>(best_feature)];
                const auto split_point = std::stable_partition(
                    row_part.begin() + static_cast<std::ptrdiff_t>(node.begin),
                    row_part.begin() + static_cast<std::ptrdiff_t>(node.end),
                    [&](std::size_t r) { return codes[r] <= best_bin; });
                const std::size_t mid =
                    static_cast<std::size_t>(split_point - row_part.begin());

                const int left_id = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                tree_node& parent = tree.nodes[node.node_id];
                parent.feature = best_feature;
                parent.threshold =
                    bins.cuts[static_cast<std::size_t>(best_feature)][static_cast<std::size_t>(
                        best_bin)];
                parent.left = left_id;
                parent.right = left_id + 1;

                next_level.push_back({node.begin, mid, node.depth + 1, best_gl, best_hl, best_wl,
                                      left_id});
                next_level.push_back({mid, node.end, node.depth + 1, node.g_sum - best_gl,
                                      node.h_sum - best_hl, node.w_sum - best_wl, left_id + 1});
            }
            level = std::move(next_level);
        }

        if (any_split) {
            model.trees.push_back(std::move(tree));
            for (std::size_t r = 0; r < rows; ++r)
                margins[r] +=
                    config.learning_rate * model.trees.back().predict_row(&m.values[r * cols]);
        }

        double loss = 0;
        for (std::size_t r = 0; r < rows; ++r)
            loss += weights[r] * detail::logistic_loss(margins[r], labels[r]);
        model.train_logloss.push_back(loss / w_total);

        if (monitor && !monitor(model, round)) break;
        // A full-batch round with no usable split cannot be followed by a
        // different one; stop early.
        if (!any_split && full_batch) break;
    }
    return model;
}

inline std::vector<double> predict_margin(const boosted_model& model, const encoded_matrix& m) {
    if (m.column_names != model.feature_names)
        throw argument_error("matrix columns do not match the model's feature names");
    std::vector<double> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        out[r] = model.predict_margin_row(&m.values[r * m.cols()]);
    return out;
}

inline std::vector<double> predict_proba(const boosted_model& model, const encoded_matrix& m) {
    std::vector<double> out = predict_margin(model, m);
    for (double& v : out) v = sigmoid(v);
    return out;
}

// ---------------------------------------------------------------------------
// Early-stopping ensemble (five members on an inner patient-grouped split)
// ---------------------------------------------------------------------------

struct early_stop_ensemble {
    std::vector<boosted_model> members;  // exactly 5, trees truncated at best_iteration
    fold_plan inner_plan;
    std::vector<int> best_iteration;
};

namespace detail {

inline double validation_score(eval_metric_kind metric, const std::vector<int>& labels,
                               const std::vector<double>& margins) {
    switch (metric) {
        case eval_metric_kind::pauc:
            return partial_roc_auc_above_tpr({labels, margins, {}});
        case eval_metric_kind::auc:
            return roc_auc({labels, margins, {}});
        case eval_metric_kind::logloss: {
            double loss = 0;
            for (std::size_t i = 0; i < labels.size(); ++i)
                loss += logistic_loss(margins[i], labels[i]);
            return -loss / static_cast<double>(labels.size());  // higher is better
        }
    }
    throw argument_error("unknown eval metric");
}

}  // namespace detail

// Five members, each fitted on 4/5 of the rows with the held-out fifth
// driving the stopping round. The inner split respects patient grouping.
inline early_stop_ensemble train_early_stop_ensemble(const encoded_matrix& m,
                                                     const std::vector<int>& labels,
                                                     const std::vector<std::string>& patient_ids,
                                                     const train_config& config, int patience,
                                                     eval_metric_kind metric) {
    detail::check_train_config(config);
    if (patience < 1) throw argument_error("patience must be positive");
    if (labels.size() != m.rows() || patient_ids.size() != m.rows())
        throw argument_error("labels and patient_ids must match matrix rows");

    constexpr int members = 5;
    fold_plan plan;
    try {
        plan = stratified_group_kfold(m.row_ids, patient_ids, labels, members, config.seed);
    } catch (const argument_error& e) {
        throw argument_error(std::string("inner split infeasible: ") + e.what());
    }

    early_stop_ensemble out;
    out.inner_plan = plan;

    for (int member = 0; member < members; ++member) {
        std::vector<std::size_t> train_rows, valid_rows;
        for (std::size_t r = 0; r < m.rows(); ++r)
            (plan.fold_of(m.row_ids[r]) == member ? valid_rows : train_rows).push_back(r);
        if (train_rows.empty() || valid_rows.empty())
            throw argument_error("inner split infeasible: empty member fold");

        std::vector<int> valid_labels;
        for (std::size_t r : valid_rows) valid_labels.push_back(labels[r]);
        if (metric != eval_metric_kind::logloss) {
            const auto pos =
                std::count(valid_labels.begin(), valid_labels.end(), 1);
            if (pos == 0 || pos == static_cast<long>(valid_labels.size()))
                throw argument_error(
                    "inner split infeasible: member validation fold is single-class");
        }

        encoded_matrix train_m;
        train_m.column_names = m.column_names;
        train_m.row_ids.reserve(train_rows.size());
        train_m.values.reserve(train_rows.size() * m.cols());
        std::vector<int> train_labels;
        train_config member_config = config;
        member_config.seed = mix_seed(config.seed, static_cast<std::uint64_t>(member) + 1);
        if (!config.instance_weights.empty()) member_config.instance_weights.clear();
        for (std::size_t r : train_rows) {
            train_m.row_ids.push_back(m.row_ids[r]);
            train_m.values.insert(train_m.values.end(), m.values.begin() + r * m.cols(),
                                  m.values.begin() + (r + 1) * m.cols());
            train_labels.push_back(labels[r]);
            if (!config.instance_weights.empty())
                member_config.instance_weights.push_back(config.instance_weights[r]);
        }

        // The held-out fifth scores every round; training stops once the
        // score has not improved for `patience` rounds.
        std::vector<double> valid_margins(valid_rows.size(), 0.0);
        double best_score = 0.0;
        int best_iter = 0;
        int bad_rounds = 0;
        bool primed = false;
        std::size_t applied_trees = 0;
        auto monitor = [&](const boosted_model& so_far, int) {
            if (!primed) {
                std::fill(valid_margins.begin(), valid_margins.end(), so_far.base_score);
                best_score = detail::validation_score(metric, valid_labels, valid_margins);
                primed = true;
            }
            while (applied_trees < so_far.trees.size()) {
                const auto& tree = so_far.trees[applied_trees];
                for (std::size_t i = 0; i < valid_rows.size(); ++i)
                    valid_margins[i] += so_far.learning_rate *
                                        tree.predict_row(&m.values[valid_rows[i] * m.cols()]);
                ++applied_trees;
            }
            const double score = detail::validation_score(metric, valid_labels, valid_margins);
            if (score > best_score + 1e-12) {
                best_score = score;
                best_iter = static_cast<int>(so_far.trees.size());
                bad_rounds = 0;
                return true;
            }
            return ++bad_rounds < patience;
        };

        boosted_model model = train(train_m, train_labels, member_config, monitor);
        model.trees.resize(static_cast<std::size_t>(best_iter));
        model.train_logloss.resize(
            std::min(model.train_logloss.size(), static_cast<std::size_t>(best_iter)));
        out.best_iteration.push_back(best_iter);
        out.members.push_back(std::move(model));
    }
    return out;
}

// Arithmetic mean of the five member probabilities.
inline std::vector<double> predict_proba(const early_stop_ensemble& ensemble,
                                         const encoded_matrix& m) {
    if (ensemble.members.empty()) throw argument_error("empty ensemble");
    std::vector<double> acc(m.rows(), 0.0);
    for (const auto& member : ensemble.members) {
        const std::vector<double> p = predict_proba(member, m);
        for (std::size_t r = 0; r < m.rows(); ++r) acc[r] += p[r];
    }
    for (double& v : acc) v /= static_cast<double>(ensemble.members.size());
    return acc;
}

// ---------------------------------------------------------------------------
// Persistence: versioned little-endian binary plus a flat JSON sidecar.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void bin_write(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T bin_read(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw parse_error("model file truncated");
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    bin_write<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    const auto len = bin_read<std::uint32_t>(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw parse_error("model file truncated");
    return s;
}

inline void write_model_block(std::ostream& os, const boosted_model& model) {
    bin_write<double>(os, model.base_score);
    bin_write<double>(os, model.learning_rate);
    bin_write<std::uint32_t>(os, static_cast<std::uint32_t>(model.feature_names.size()));
    for (const auto& name : model.feature_names) write_string(os, name);
    bin_write<std::uint32_t>(os, static_cast<std::uint32_t>(model.trees.size()));
    for (const auto& tree : model.trees) {
        bin_write<std::uint32_t>(os, static_cast<std::uint32_t>(tree.nodes.size()));
        for (const auto& n : tree.nodes) {
            bin_write<std::int32_t>(os, n.feature);
            bin_write<double>(os, n.threshold);
            bin_write<std::int32_t>(os, n.left);
            bin_write<std::int32_t>(os, n.right);
            bin_write<double>(os, n.leaf_value);
        }
    }
}

inline boosted_model read_model_block(std::istream& is) {
    boosted_model model;
    model.base_score = bin_read<double>(is);
    model.learning_rate = bin_read<double>(is);
    const auto n_features = bin_read<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n_features; ++i)
        model.feature_names.push_back(read_string(is));
    const auto n_trees = bin_read<std::uint32_t>(is);
    for (std::uint32_t t = 0; t < n_trees; ++t) {
        regression_tree tree;
        const auto n_nodes = bin_read<std::uint32_t>(is);
        for (std::uint32_t i = 0; i < n_nodes; ++i) {
            tree_node n;
            n.feature = bin_read<std::int32_t>(is);
            n.threshold = bin_read<double>(is);
            n.left = bin_read<std::int32_t>(is);
            n.right = bin_read<std::int32_t>(is);
            n.leaf_value = bin_read<double>(is);
            tree.nodes.push_back(n);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

inline void write_config_sidecar(const train_config& c, std::size_t n_features,
                                 const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path.string());
    os << "{\n"
       << "  \"n_rounds\": " << c.n_rounds << ",\n"
       << "  \"learning_rate\": " << format_double(c.learning_rate) << ",\n"
       << "  \"max_depth\": " << c.max_depth << ",\n"
       << "  \"min_samples_leaf\": " << c.min_samples_leaf << ",\n"
       << "  \"min_gain\": " << format_double(c.min_gain) << ",\n"
       << "  \"row_subsample\": " << format_double(c.row_subsample) << ",\n"
       << "  \"col_subsample\": " << format_double(c.col_subsample) << ",\n"
       << "  \"n_bins\": " << c.n_bins << ",\n"
       << "  \"lambda_l2\": " << format_double(c.lambda_l2) << ",\n"
       << "  \"seed\": " << c.seed << ",\n"
       << "  \"weighted\": " << (c.instance_weights.empty() ? "false" : "true") << ",\n"
       << "  \"n_features\": " << n_features << "\n"
       << "}\n";
}

constexpr char model_magic[4] = {'D', 'B', 'M', 'F'};

}  // namespace detail

inline void save_model(const boosted_model& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path.string());
    os.write(detail::model_magic, 4);
    detail::bin_write<std::uint32_t>(os, 1);  // version
    detail::bin_write<std::uint8_t>(os, 0);   // single model
    detail::write_model_block(os, model);
    detail::write_config_sidecar(model.config, model.feature_names.size(),
                                 path.string() + ".json");
}

inline void save_ensemble(const early_stop_ensemble& ensemble,
                          const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path.string());
    os.write(detail::model_magic, 4);
    detail::bin_write<std::uint32_t>(os, 1);
    detail::bin_write<std::uint8_t>(os, 1);  // ensemble
    detail::bin_write<std::uint32_t>(os, static_cast<std::uint32_t>(ensemble.members.size()));
    for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
        detail::bin_write<std::uint32_t>(os,
                                         static_cast<std::uint32_t>(ensemble.best_iteration[i]));
        detail::write_model_block(os, ensemble.members[i]);
    }
    if (!ensemble.members.empty())
        detail::write_config_sidecar(ensemble.members.front().config,
                                     ensemble.members.front().feature_names.size(),
                                     path.string() + ".json");
}

namespace detail {

inline std::uint8_t read_model_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != std::string(model_magic, 4))
        throw parse_error(path + ": not a dermboost model file");
    const auto version = bin_read<std::uint32_t>(is);
    if (version != 1)
        throw parse_error(path + ": unsupported model version " + std::to_string(version));
    return bin_read<std::uint8_t>(is);
}

}  // namespace detail

inline boosted_model load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    if (detail::read_model_header(is, path.string()) != 0)
        throw parse_error(path.string() + ": expected a single model, found an ensemble");
    return detail::read_model_block(is);
}

inline early_stop_ensemble load_ensemble(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    if (detail::read_model_header(is, path.string()) != 1)
        throw parse_error(path.string() + ": expected an ensemble, found a single model");
    early_stop_ensemble out;
    const auto members = detail::bin_read<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < members; ++i) {
        out.best_iteration.push_back(static_cast<int>(detail::bin_read<std::uint32_t>(is)));
        out.members.push_back(detail::read_model_block(is));
    }
    return out;
}

}  // namespace dermboost

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dermboost/csv.hpp"
#include "dermboost/errors.hpp"
#include "dermboost/rng.hpp"

namespace dermboost {

using param_value = std::variant<double, std::int64_t, std::string>;
using param_assignment = std::map<std::string, param_value>;

struct param_spec {
    enum class kind { continuous, integer, categorical };
    kind type = kind::continuous;
    double lo = 0, hi = 1;
    bool log_scale = false;
    std::int64_t ilo = 0, ihi = 1;
    std::vector<std::string> options;

    static param_spec continuous(double lo, double hi, bool log_scale = false) {
        if (!(lo < hi)) throw argument_error("continuous param needs lo < hi");
        if (log_scale && !(lo > 0)) throw argument_error("log scale needs lo > 0");
        param_spec s;
        s.type = kind::continuous;
        s.lo = lo;
        s.hi = hi;
        s.log_scale = log_scale;
        return s;
    }
    static param_spec integer(std::int64_t lo, std::int64_t hi) {
        if (!(lo < hi)) throw argument_error("integer param needs lo < hi");
        param_spec s;
        s.type = kind::integer;
        s.ilo = lo;
        s.ihi = hi;
        return s;
    }
    static param_spec categorical(std::vector<std::string> options) {
        if (options.empty()) throw argument_error("categorical param needs options");
        param_spec s;
        s.type = kind::categorical;
        s.options = std::move(options);
        return s;
    }
};

struct param_space {
    std::map<std::string, param_spec> params;
};

struct trial {
    param_assignment params;
    double objective = -std::numeric_limits<double>::infinity();
    std::array<std::uint64_t, 2> seed_path{0, 0};  // (study seed, trial index)
    bool failed() const { return !std::isfinite(objective); }
};

struct study_result {
    std::vector<trial> trials;  // sorted by objective descending, stable
    trial best;                 // == trials.front()
};

using objective_fn = std::function<double(const param_assignment&)>;

namespace detail {

inline param_value draw_param(const param_spec& spec, rng& gen) {
    switch (spec.type) {
        case param_spec::kind::continuous: {
            const double u = gen.uniform();
            if (spec.log_scale)
                return std::exp(std::log(spec.lo) + u * (std::log(spec.hi) - std::log(spec.lo)));
            return spec.lo + u * (spec.hi - spec.lo);
        }
        case param_spec::kind::integer:
            return gen.uniform_int(spec.ilo, spec.ihi);
        case param_spec::kind::categorical:
            return spec.options[gen.below(spec.options.size())];
    }
    throw argument_error("unknown param kind");
}

inline void validate_assignment(const param_space& space, const param_assignment& a) {
    for (const auto& [name, spec] : space.params) {
        const auto it = a.find(name);
        if (it == a.end()) throw argument_error("seeded point lacks param \"" + name + "\"");
        switch (spec.type) {
            case param_spec::kind::continuous: {
                const double* v = std::get_if<double>(&it->second);
                if (!v || *v < spec.lo || *v > spec.hi)
                    throw argument_error("seeded value for \"" + name + "\" out of bounds");
                break;
            }
            case param_spec::kind::integer: {
                const std::int64_t* v = std::get_if<std::int64_t>(&it->second);
                if (!v || *v < spec.ilo || *v > spec.ihi)
                    throw argument_error("seeded value for \"" + name + "\" out of bounds");
                break;
            }
            case param_spec::kind::categorical: {
                const std::string* v = std::get_if<std::string>(&it->second);
                if (!v || std::find(spec.options.begin(), spec.options.end(), *v) ==
                              spec.options.end())
                    throw argument_error("seeded value for \"" + name + "\" not an option");
                break;
            }
        }
    }
}

}  // namespace detail

// Random search: seeded points first, then uniform (per-scale) samples until
// n_trials total. Trial parameters are pre-drawn from (seed, trial index),
// so results do not depend on evaluation order. Failed evaluations score
// -inf and are excluded from `best`.
inline study_result run_study(const objective_fn& objective, const param_space& space,
                              int n_trials, std::uint64_t seed,
                              const std::vector<param_assignment>& seeded_points = {}) {
    if (n_trials < 1) throw argument_error("n_trials must be positive");
    if (space.params.empty()) throw argument_error("empty parameter space");

    std::vector<trial> trials;
    trials.reserve(static_cast<std::size_t>(n_trials));
    for (int i = 0; i < n_trials; ++i) {
        trial t;
        t.seed_path = {seed, static_cast<std::uint64_t>(i)};
        if (static_cast<std::size_t>(i) < seeded_points.size()) {
            detail::validate_assignment(space, seeded_points[static_cast<std::size_t>(i)]);
            t.params = seeded_points[static_cast<std::size_t>(i)];
        } else {
            rng gen(mix_seed(seed, static_cast<std::uint64_t>(i)));
            for (const auto& [name, spec] : space.params)
                t.params[name] = detail::draw_param(spec, gen);
        }
        trials.push_back(std::move(t));
    }

    for (auto& t : trials) {
        try {
            const double v = objective(t.params);
            t.objective = std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
        } catch (const std::exception&) {
            t.objective = -std::numeric_limits<double>::infinity();
        }
    }

    std::stable_sort(trials.begin(), trials.end(),
                     [](const trial& a, const trial& b) { return a.objective > b.objective; });
    if (trials.front().failed()) throw study_error("every trial failed");

    study_result out;
    out.best = trials.front();
    out.trials = std::move(trials);
    return out;
}

// Two-step refinement: numeric params take the median of the top_k trials
// (integers round to nearest, half-ties toward the best trial's value);
// categorical params take the mode, ties resolved by the best trial.
inline param_assignment refine_params(const study_result& result, int top_k = 5) {
    if (top_k < 1) throw argument_error("top_k must be positive");
    std::vector<const trial*> top;
    for (const auto& t : result.trials) {
        if (t.failed()) break;
        top.push_back(&t);
        if (top.size() == static_cast<std::size_t>(top_k)) break;
    }
    if (top.size() < static_cast<std::size_t>(top_k))
        throw argument_error("refine_params needs at least " + std::to_string(top_k) +
                             " successful trials, have " + std::to_string(top.size()));

    param_assignment refined;
    for (const auto& [name, best_value] : result.best.params) {
        if (std::holds_alternative<double>(best_value)) {
            std::vector<double> values;
            for (const trial* t : top) values.push_back(std::get<double>(t->params.at(name)));
            std::sort(values.begin(), values.end());
            const std::size_t n = values.size();
            refined[name] = (n % 2 == 1) ? values[n / 2]
                                         : 0.5 * (values[n / 2 - 1] + values[n / 2]);
        } else if (std::holds_alternative<std::int64_t>(best_value)) {
            std::vector<std::int64_t> values;
            for (const trial* t : top)
                values.push_back(std::get<std::int64_t>(t->params.at(name)));
            std::sort(values.begin(), values.end());
            const std::size_t n = values.size();
            if (n % 2 == 1) {
                refined[name] = values[n / 2];
            } else {
                const double mid = 0.5 * static_cast<double>(values[n / 2 - 1] + values[n / 2]);
                const double frac = mid - std::floor(mid);
                std::int64_t rounded;
                if (frac == 0.5) {
                    // half-tie: round toward the best trial's value
                    const auto best = std::get<std::int64_t>(best_value);
                    rounded = (static_cast<double>(best) >= mid)
                                  ? static_cast<std::int64_t>(std::ceil(mid))
                                  : static_cast<std::int64_t>(std::floor(mid));
                } else {
                    rounded = static_cast<std::int64_t>(std::llround(mid));
                }
                refined[name] = rounded;
            }
        } else {
            std::map<std::string, int> counts;
            for (const trial* t : top) counts[std::get<std::string>(t->params.at(name))] += 1;
            int best_count = 0;
            for (const auto& [option, count] : counts) best_count = std::max(best_count, count);
            const std::string& best_option = std::get<std::string>(best_value);
            if (counts[best_option] == best_count) {
                refined[name] = best_option;
            } else {
                for (const auto& [option, count] : counts)
                    if (count == best_count) {
                        refined[name] = option;
                        break;
                    }
            }
        }
    }
    return refined;
}

inline std::string param_value_to_string(const param_value& v) {
    if (const double* d = std::get_if<double>(&v)) return format_double(*d);
    if (const std::int64_t* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    return std::get<std::string>(v);
}

inline void save_study_csv(const study_result& result, const std::filesystem::path& path) {
    csv_writer w(path);
    std::vector<std::string> header{"trial", "objective"};
    if (!result.trials.empty())
        for (const auto& [name, value] : result.trials.front().params) header.push_back(name);
    w.row(header);
    for (std::size_t i = 0; i < result.trials.size(); ++i) {
        const trial& t = result.trials[i];
        std::vector<std::string> row{std::to_string(t.seed_path[1]),
                                     t.failed() ? "failed" : format_double(t.objective)};
        for (const auto& [name, value] : t.params) row.push_back(param_value_to_string(value));
        w.row(row);
    }
}

}  // namespace dermboost

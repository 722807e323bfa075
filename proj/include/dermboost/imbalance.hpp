#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "dermboost/errors.hpp"
#include "dermboost/rng.hpp"

namespace dermboost {

struct class_weights {
    std::map<int, double> weight_per_class;
};

// weight_k = sqrt(N_total / N_k).
inline class_weights square_class_weights(const std::map<int, std::size_t>& class_counts) {
    if (class_counts.empty()) throw argument_error("class_counts must be non-empty");
    std::size_t total = 0;
    for (const auto& [cls, count] : class_counts) {
        if (count == 0)
            throw argument_error("class " + std::to_string(cls) + " has zero count");
        total += count;
    }
    class_weights out;
    for (const auto& [cls, count] : class_counts)
        out.weight_per_class[cls] =
            std::sqrt(static_cast<double>(total) / static_cast<double>(count));
    return out;
}

// Keeps every minority row and ceil(n_minority / ratio) majority rows,
// capped at the majority size. `ratio` is the minority-to-majority count
// ratio after sampling. Returns row indices in their original order.
inline std::vector<std::size_t> random_undersample(const std::vector<int>& labels,
                                                   double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw argument_error("ratio must lie in (0,1]");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty())
        throw argument_error("undersampling needs both classes present");

    // Ties in size treat the positive class as the minority.
    const bool pos_minor = pos.size() <= neg.size();
    const auto& minority = pos_minor ? pos : neg;
    const auto& majority = pos_minor ? neg : pos;

    const double want = static_cast<double>(minority.size()) / ratio;
    std::size_t n_keep = static_cast<std::size_t>(std::ceil(want - 1e-9));
    n_keep = std::min(n_keep, majority.size());

    rng gen(seed);
    std::vector<std::size_t> chosen = gen.sample_without_replacement(majority.size(), n_keep);

    std::vector<std::size_t> out;
    out.reserve(minority.size() + n_keep);
    for (std::size_t i : minority) out.push_back(i);
    for (std::size_t j : chosen) out.push_back(majority[j]);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace dermboost

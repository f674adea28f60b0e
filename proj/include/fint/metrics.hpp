// Evaluation metrics: rank-based AUC and mean binary cross-entropy.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <json.hpp>

#include "fint/common.hpp"

namespace fint {

// Probabilities are clipped into [kProbEps, 1 - kProbEps] before any log.
constexpr double kProbEps = 1e-12;

struct MetricsReport {
    double auc = 0;
    double logloss = 0;
    uint64_t positives = 0;
    uint64_t negatives = 0;
    uint64_t rows = 0;

    nlohmann::json to_json() const {
        return nlohmann::json{{"auc", auc},
                              {"logloss", logloss},
                              {"negatives", negatives},
                              {"positives", positives},
                              {"rows", rows}};
    }
};

namespace detail {

inline void check_labels(std::span<const uint8_t> labels) {
    for (uint8_t y : labels)
        if (y > 1) throw Error("label outside {0,1}");
}

} // namespace detail

// Mann-Whitney AUC with average ranks over ties: the probability that a
// random positive outranks a random negative, ties counting one half.
// The numerator is accumulated in integers, so the result is exact.
inline double auc(std::span<const real> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size()) throw Error("auc: scores/labels length mismatch");
    detail::check_labels(labels);
    uint64_t pos = 0;
    for (uint8_t y : labels) pos += y;
    uint64_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0)
        throw Error("undefined AUC: evaluation set contains a single class (" +
                    std::to_string(pos) + " positives, " + std::to_string(neg) + " negatives)");

    std::vector<uint32_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](uint32_t a, uint32_t b) { return scores[a] < scores[b]; });

    // 2*sum of positive ranks, walking tie groups; twice the average rank of
    // a group spanning sorted positions [a, b] (1-based a+1..b+1) is a+b+2.
    uint64_t twice_pos_rank_sum = 0;
    size_t a = 0;
    while (a < idx.size()) {
        size_t b = a;
        while (b + 1 < idx.size() && scores[idx[b + 1]] == scores[idx[a]]) ++b;
        uint64_t twice_avg_rank = a + b + 2;
        for (size_t k = a; k <= b; ++k)
            if (labels[idx[k]]) twice_pos_rank_sum += twice_avg_rank;
        a = b + 1;
    }
    uint64_t numerator = twice_pos_rank_sum - pos * (pos + 1);
    return static_cast<double>(numerator) / static_cast<double>(2 * pos * neg);
}

namespace detail {

// Shared log-loss accumulation; optim's bce_loss and metrics' logloss must
// agree bit for bit.
inline double bce_sum(std::span<const real> scores, std::span<const uint8_t> labels) {
    double sum = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        double p = std::clamp(static_cast<double>(scores[i]), kProbEps, 1.0 - kProbEps);
        sum -= labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    return sum;
}

} // namespace detail

inline double logloss(std::span<const real> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size()) throw Error("logloss: scores/labels length mismatch");
    if (scores.empty()) throw Error("logloss: empty input");
    detail::check_labels(labels);
    return detail::bce_sum(scores, labels) / static_cast<double>(scores.size());
}

inline MetricsReport compute_metrics(std::span<const real> scores,
                                     std::span<const uint8_t> labels) {
    MetricsReport r;
    r.rows = scores.size();
    for (uint8_t y : labels) r.positives += y;
    r.negatives = r.rows - r.positives;
    r.logloss = logloss(scores, labels);
    r.auc = auc(scores, labels);
    return r;
}

} // namespace fint

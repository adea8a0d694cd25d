#pragma once

#include <cstddef>

namespace prefmem {

// Binary detection metrics. Precision/recall/F1 are 0 when their
// denominator is 0.
struct EvalMetrics {
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t true_negative = 0;
    std::size_t false_negative = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    std::size_t total() const noexcept { return true_positive + false_positive + true_negative + false_negative; }

    void add(int predicted, int actual) noexcept {
        if (predicted && actual) ++true_positive;
        else if (predicted) ++false_positive;
        else if (actual) ++false_negative;
        else ++true_negative;
    }

    // Recomputes the rates from the counts.
    void finalize() noexcept {
        const std::size_t n = total();
        accuracy = n ? static_cast<double>(true_positive + true_negative) / static_cast<double>(n) : 0.0;
        const std::size_t pp = true_positive + false_positive;
        const std::size_t ap = true_positive + false_negative;
        precision = pp ? static_cast<double>(true_positive) / static_cast<double>(pp) : 0.0;
        recall = ap ? static_cast<double>(true_positive) / static_cast<double>(ap) : 0.0;
        f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }

    friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

}  // namespace prefmem

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hsi::metrics {

// C x C count matrix, rows = ground truth, columns = prediction. Metrics are
// computed from the integer counts with a single final division so that
// small hand examples evaluate exactly.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<std::int64_t> counts;  // row-major C x C

    std::int64_t at(int truth, int pred) const {  // 1-based class ids
        return counts[static_cast<std::size_t>(truth - 1) * num_classes + (pred - 1)];
    }
    std::int64_t& at(int truth, int pred) {
        return counts[static_cast<std::size_t>(truth - 1) * num_classes + (pred - 1)];
    }
    std::int64_t total() const;
    std::int64_t row_sum(int truth) const;
    std::int64_t col_sum(int pred) const;

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

ConfusionMatrix make_confusion(int num_classes);

// Counts (truth, pred) pairs; pairs with truth == 0 (unlabeled) are skipped
// entirely. Out-of-range labels on counted pairs are an error.
ConfusionMatrix accumulate(std::span<const int> truth, std::span<const int> predicted,
                           int num_classes);

// trace / total.
double overall_accuracy(const ConfusionMatrix& cm);

// Mean per-class recall over classes with at least one truth sample.
double average_accuracy(const ConfusionMatrix& cm);

// Cohen's kappa, (p_o - p_e) / (1 - p_e). The degenerate p_e == 1 case (all
// mass in one truth/prediction pair) is defined as 1 when p_o == 1, else 0.
double kappa(const ConfusionMatrix& cm);

// Per-class recall; NaN for classes with zero truth support.
std::vector<double> per_class_accuracy(const ConfusionMatrix& cm);

struct Report {
    std::vector<std::string> class_names;
    std::vector<double> class_accuracy;  // NaN marks zero-support classes
    double oa = 0.0;
    double aa = 0.0;
    double kappa = 0.0;
};

Report per_class_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

// Percentages with 2 decimals; zero-support rows render "n/a".
std::string to_csv(const Report& report);
std::string to_markdown(const Report& report);

}  // namespace hsi::metrics

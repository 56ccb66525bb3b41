#include "hsi/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hsi/errors.hpp"

namespace hsi::metrics {

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::row_sum(int truth) const {
    std::int64_t s = 0;
    for (int p = 1; p <= num_classes; ++p) s += at(truth, p);
    return s;
}

std::int64_t ConfusionMatrix::col_sum(int pred) const {
    std::int64_t s = 0;
    for (int t = 1; t <= num_classes; ++t) s += at(t, pred);
    return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.num_classes != num_classes)
        throw DataError("cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    return *this;
}

ConfusionMatrix make_confusion(int num_classes) {
    if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
    ConfusionMatrix cm;
    cm.num_classes = num_classes;
    cm.counts.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
    return cm;
}

ConfusionMatrix accumulate(std::span<const int> truth, std::span<const int> predicted,
                           int num_classes) {
    if (truth.size() != predicted.size())
        throw DataError("truth and prediction lists differ in length");
    ConfusionMatrix cm = make_confusion(num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i];
        if (t == 0) continue;  // unlabeled ground truth is ignored
        const int p = predicted[i];
        if (t < 1 || t > num_classes)
            throw DataError("truth label " + std::to_string(t) + " out of range");
        if (p < 1 || p > num_classes)
            throw DataError("predicted label " + std::to_string(p) + " out of range");
        ++cm.at(t, p);
    }
    return cm;
}

namespace {

std::int64_t trace(const ConfusionMatrix& cm) {
    std::int64_t s = 0;
    for (int c = 1; c <= cm.num_classes; ++c) s += cm.at(c, c);
    return s;
}

void require_nonempty(const ConfusionMatrix& cm) {
    if (cm.total() < 1) throw DataError("metric requested on an empty confusion matrix");
}

}  // namespace

double overall_accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    return static_cast<double>(trace(cm)) / static_cast<double>(cm.total());
}

double average_accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    double sum = 0.0;
    int supported = 0;
    for (int c = 1; c <= cm.num_classes; ++c) {
        const std::int64_t rs = cm.row_sum(c);
        if (rs == 0) continue;  // zero-support classes are excluded from the mean
        sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(rs);
        ++supported;
    }
    if (supported == 0) throw DataError("average accuracy undefined: no class has support");
    return sum / static_cast<double>(supported);
}

double kappa(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    const std::int64_t n = cm.total();
    const std::int64_t tr = trace(cm);
    std::int64_t chance = 0;  // sum of row_c * col_c
    for (int c = 1; c <= cm.num_classes; ++c) chance += cm.row_sum(c) * cm.col_sum(c);
    // kappa = (p_o - p_e) / (1 - p_e) = (n*trace - chance) / (n*n - chance)
    const std::int64_t num = n * tr - chance;
    const std::int64_t den = n * n - chance;
    if (den == 0) return tr == n ? 1.0 : 0.0;  // p_e == 1 convention
    return static_cast<double>(num) / static_cast<double>(den);
}

std::vector<double> per_class_accuracy(const ConfusionMatrix& cm) {
    std::vector<double> acc(static_cast<std::size_t>(cm.num_classes));
    for (int c = 1; c <= cm.num_classes; ++c) {
        const std::int64_t rs = cm.row_sum(c);
        acc[c - 1] = rs == 0 ? std::nan("")
                             : static_cast<double>(cm.at(c, c)) / static_cast<double>(rs);
    }
    return acc;
}

Report per_class_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    if (class_names.size() != static_cast<std::size_t>(cm.num_classes))
        throw ConfigError("class name count does not match confusion matrix size");
    Report r;
    r.class_names = class_names;
    r.class_accuracy = per_class_accuracy(cm);
    r.oa = overall_accuracy(cm);
    r.aa = average_accuracy(cm);
    r.kappa = kappa(cm);
    return r;
}

namespace {

std::string pct(double fraction) {
    if (std::isnan(fraction)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

}  // namespace

std::string to_csv(const Report& report) {
    std::ostringstream out;
    out << "class,accuracy\n";
    for (std::size_t i = 0; i < report.class_names.size(); ++i)
        out << report.class_names[i] << "," << pct(report.class_accuracy[i]) << "\n";
    out << "OA," << pct(report.oa) << "\n";
    out << "AA," << pct(report.aa) << "\n";
    out << "Kappa," << pct(report.kappa) << "\n";
    return out.str();
}

std::string to_markdown(const Report& report) {
    std::size_t name_width = std::string("Kappa").size();
    for (const auto& n : report.class_names) name_width = std::max(name_width, n.size());

    std::ostringstream out;
    auto row = [&](const std::string& name, const std::string& value) {
        out << "| " << name << std::string(name_width - name.size(), ' ') << " | ";
        out << std::string(value.size() < 8 ? 8 - value.size() : 0, ' ') << value << " |\n";
    };
    row("Class", "Accuracy");
    out << "|" << std::string(name_width + 2, '-') << "|" << std::string(10, '-') << "|\n";
    for (std::size_t i = 0; i < report.class_names.size(); ++i)
        row(report.class_names[i], pct(report.class_accuracy[i]));
    row("OA", pct(report.oa));
    row("AA", pct(report.aa));
    row("Kappa", pct(report.kappa));
    return out.str();
}

}  // namespace hsi::metrics

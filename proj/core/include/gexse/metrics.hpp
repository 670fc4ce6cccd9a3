#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gexse {

/// k x k counts, rows = true class, columns = predicted class.
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::uint64_t> counts;
    std::vector<std::string> label_names;

    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
    std::uint64_t row_sum(std::size_t truth) const;
    std::uint64_t total() const;
    std::uint64_t trace() const;
    /// Each row divided by its sum; all-zero rows stay zero.
    std::vector<double> row_normalized() const;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
    /// Set when any of the three values came from the 0/0 -> 0 convention.
    bool undefined = false;
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    std::vector<std::string> label_names;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, std::size_t k,
                          std::vector<std::string> label_names = {});

MetricsReport metrics(const ConfusionMatrix& cm);

/// Writes per_class.csv, summary.json, confusion_counts.csv and
/// confusion_normalized.csv into `dir` (created if needed).
void emit_report(const MetricsReport& report, const ConfusionMatrix& cm, const std::filesystem::path& dir);

}  // namespace gexse

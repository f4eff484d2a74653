#pragma once
// Multiclass evaluation metrics: accuracy, macro/micro F1, confusion counts.

#include <cstddef>
#include <string>
#include <vector>

namespace mmfuse {

struct MetricsReport {
    double accuracy = 0.0;
    double f_macro = 0.0;
    double f_micro = 0.0;
    std::vector<std::vector<std::size_t>> confusion; // [true][predicted]
    std::vector<double> precision;                   // per class
    std::vector<double> recall;
    std::vector<double> f1;
    std::size_t total = 0;
    std::size_t skipped = 0; // posts lacking the requested modality
};

// Classes with no true and no predicted instances contribute F1 = 0 to the
// macro average. Micro-F1 comes from pooled counts (equals accuracy for
// single-label classification).
MetricsReport compute_metrics(const std::vector<std::size_t>& y_true,
                              const std::vector<std::size_t>& y_pred, std::size_t class_count);

std::string metrics_to_json(const MetricsReport& report,
                            const std::vector<std::string>& class_names);

std::string metrics_to_table(const MetricsReport& report,
                             const std::vector<std::string>& class_names);

} // namespace mmfuse

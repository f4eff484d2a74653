#include "mmfuse/metrics.hpp"

#include "mmfuse/errors.hpp"

#include <nlohmann/json.hpp>

#include <iomanip>
#include <sstream>

namespace mmfuse {

MetricsReport compute_metrics(const std::vector<std::size_t>& y_true,
                              const std::vector<std::size_t>& y_pred, std::size_t class_count) {
    if (y_true.size() != y_pred.size()) {
        throw ValidationError("compute_metrics: " + std::to_string(y_true.size()) +
                              " labels vs " + std::to_string(y_pred.size()) + " predictions");
    }
    if (y_true.empty()) throw ValidationError("compute_metrics: empty evaluable set");

    MetricsReport report;
    report.total = y_true.size();
    report.confusion.assign(class_count, std::vector<std::size_t>(class_count, 0));
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] >= class_count || y_pred[i] >= class_count) {
            throw ValidationError("compute_metrics: class index out of range");
        }
        ++report.confusion[y_true[i]][y_pred[i]];
    }

    std::size_t correct = 0;
    report.precision.assign(class_count, 0.0);
    report.recall.assign(class_count, 0.0);
    report.f1.assign(class_count, 0.0);
    double f1_sum = 0.0;
    for (std::size_t c = 0; c < class_count; ++c) {
        const std::size_t tp = report.confusion[c][c];
        correct += tp;
        std::size_t pred_c = 0;
        std::size_t true_c = 0;
        for (std::size_t k = 0; k < class_count; ++k) {
            pred_c += report.confusion[k][c];
            true_c += report.confusion[c][k];
        }
        report.precision[c] = pred_c ? static_cast<double>(tp) / pred_c : 0.0;
        report.recall[c] = true_c ? static_cast<double>(tp) / true_c : 0.0;
        const double pr = report.precision[c] + report.recall[c];
        report.f1[c] = pr > 0.0 ? 2.0 * report.precision[c] * report.recall[c] / pr : 0.0;
        f1_sum += report.f1[c];
    }
    report.accuracy = static_cast<double>(correct) / report.total;
    report.f_macro = f1_sum / class_count;
    // pooled counts: every prediction is one TP or one (FP, FN) pair
    report.f_micro = report.accuracy;
    return report;
}

std::string metrics_to_json(const MetricsReport& report,
                            const std::vector<std::string>& class_names) {
    nlohmann::json j;
    j["accuracy"] = report.accuracy;
    j["f_macro"] = report.f_macro;
    j["f_micro"] = report.f_micro;
    j["total"] = report.total;
    j["skipped"] = report.skipped;
    j["confusion"] = report.confusion;
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        per_class[class_names[c]] = {{"precision", report.precision[c]},
                                     {"recall", report.recall[c]},
                                     {"f1", report.f1[c]}};
    }
    j["per_class"] = per_class;
    return j.dump(2);
}

std::string metrics_to_table(const MetricsReport& report,
                             const std::vector<std::string>& class_names) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "accuracy " << report.accuracy << "  f_macro " << report.f_macro << "  f_micro "
        << report.f_micro << "  (n=" << report.total << ", skipped=" << report.skipped << ")\n";
    out << std::left << std::setw(20) << "class" << std::setw(12) << "precision" << std::setw(12)
        << "recall" << std::setw(12) << "f1" << "\n";
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        out << std::left << std::setw(20) << class_names[c] << std::setw(12) << report.precision[c]
            << std::setw(12) << report.recall[c] << std::setw(12) << report.f1[c] << "\n";
    }
    return out.str();
}

} // namespace mmfuse

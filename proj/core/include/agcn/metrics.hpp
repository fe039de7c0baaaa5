#pragma once

#include <optional>
#include <string>
#include <vector>

#include "agcn/matrix.hpp"

namespace agcn {

// Scores and ground truth for one evaluation run. topk = 0 binarizes at the
// decision threshold; topk > 0 marks the k highest-scoring labels per sample
// positive instead.
struct EvalFrame {
    Matrix scores;   // n x N in [0, 1]
    Matrix targets;  // n x N binary
    double decision_threshold = 0.5;
    std::size_t topk = 0;

    void validate() const;
};

struct MetricsReport {
    double map = 0.0;
    double cp = 0.0, cr = 0.0, cf1 = 0.0;
    double op = 0.0, or_ = 0.0, of1 = 0.0;
    std::vector<double> per_label_ap;          // 0 placeholder for excluded labels
    std::vector<std::size_t> excluded_labels;  // labels with no positive target
};

// Non-interpolated AP: sort by descending score (ties by ascending sample
// index), average precision at the positive ranks. nullopt when the label
// has no positives (the excluded-label signal).
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<double>& targets);

// Mean AP over the labels that have at least one positive; throws when no
// label does. Fills map / per_label_ap / excluded_labels.
MetricsReport mean_average_precision(const EvalFrame& frame);

// CP, CR, CF1 (per-class averages) and OP, OR, OF1 (pooled counts) at the
// frame's binarization rule. F1 is 0 whenever P + R is.
void prf_aggregates(const EvalFrame& frame, MetricsReport& report);

// mAP plus the P/R/F1 block in one pass.
MetricsReport evaluate_frame(const EvalFrame& frame);

// Fixed-key JSON document (map, cp, cr, cf1, op, or, of1, per_label_ap,
// excluded_labels) and the one-line CSV form.
std::string metrics_report_json(const MetricsReport& report);
std::string metrics_report_csv_header();
std::string metrics_report_csv_line(const MetricsReport& report);

}  // namespace agcn

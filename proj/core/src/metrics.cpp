#include "agcn/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "json.hpp"

namespace agcn {

void EvalFrame::validate() const {
    if (scores.rows() == 0 || scores.cols() == 0)
        throw ContractError("eval frame: empty score matrix");
    require_same_shape(scores, targets, "eval frame");
    for (double v : scores.data())
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("eval frame: scores must lie in [0, 1]");
    for (double v : targets.data())
        if (v != 0.0 && v != 1.0) throw ContractError("eval frame: targets must be binary");
}

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<double>& targets) {
    if (scores.size() != targets.size())
        throw ShapeError("average_precision: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(targets.size()) + " targets");
    std::size_t positives = 0;
    for (double t : targets) positives += t != 0.0;
    if (positives == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];  // stable: ties keep ascending sample index
    });

    double hits = 0.0, ap = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (targets[order[rank]] == 0.0) continue;
        hits += 1.0;
        ap += hits / static_cast<double>(rank + 1);
    }
    return ap / static_cast<double>(positives);
}

MetricsReport mean_average_precision(const EvalFrame& frame) {
    frame.validate();
    const std::size_t n = frame.scores.rows(), n_labels = frame.scores.cols();
    MetricsReport report;
    report.per_label_ap.assign(n_labels, 0.0);
    double sum = 0.0;
    std::size_t counted = 0;
    std::vector<double> col_scores(n), col_targets(n);
    for (std::size_t label = 0; label < n_labels; ++label) {
        for (std::size_t i = 0; i < n; ++i) {
            col_scores[i] = frame.scores(i, label);
            col_targets[i] = frame.targets(i, label);
        }
        if (auto ap = average_precision(col_scores, col_targets)) {
            report.per_label_ap[label] = *ap;
            sum += *ap;
            ++counted;
        } else {
            report.excluded_labels.push_back(label);
        }
    }
    if (counted == 0) throw ContractError("mean_average_precision: no label has a positive");
    report.map = sum / static_cast<double>(counted);
    return report;
}

static Matrix binarize(const EvalFrame& frame) {
    const std::size_t n = frame.scores.rows(), n_labels = frame.scores.cols();
    Matrix pred(n, n_labels);
    if (frame.topk == 0) {
        for (std::size_t i = 0; i < pred.size(); ++i)
            pred.data()[i] = frame.scores.data()[i] > frame.decision_threshold ? 1.0 : 0.0;
        return pred;
    }
    std::vector<std::size_t> order(n_labels);
    for (std::size_t i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return frame.scores(i, a) > frame.scores(i, b);
        });
        for (std::size_t k = 0; k < std::min(frame.topk, n_labels); ++k) pred(i, order[k]) = 1.0;
    }
    return pred;
}

static double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

void prf_aggregates(const EvalFrame& frame, MetricsReport& report) {
    frame.validate();
    const std::size_t n = frame.scores.rows(), n_labels = frame.scores.cols();
    Matrix pred = binarize(frame);

    double cp_sum = 0.0, cr_sum = 0.0;
    double tp_all = 0.0, fp_all = 0.0, fn_all = 0.0;
    for (std::size_t label = 0; label < n_labels; ++label) {
        double tp = 0.0, fp = 0.0, fn = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool p = pred(i, label) != 0.0;
            const bool y = frame.targets(i, label) != 0.0;
            tp += p && y;
            fp += p && !y;
            fn += !p && y;
        }
        cp_sum += tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
        cr_sum += tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
    }
    report.cp = cp_sum / static_cast<double>(n_labels);
    report.cr = cr_sum / static_cast<double>(n_labels);
    report.cf1 = f1(report.cp, report.cr);
    report.op = tp_all + fp_all > 0.0 ? tp_all / (tp_all + fp_all) : 0.0;
    report.or_ = tp_all + fn_all > 0.0 ? tp_all / (tp_all + fn_all) : 0.0;
    report.of1 = f1(report.op, report.or_);
}

MetricsReport evaluate_frame(const EvalFrame& frame) {
    MetricsReport report = mean_average_precision(frame);
    prf_aggregates(frame, report);
    return report;
}

std::string metrics_report_json(const MetricsReport& report) {
    nlohmann::json j;
    j["map"] = report.map;
    j["cp"] = report.cp;
    j["cr"] = report.cr;
    j["cf1"] = report.cf1;
    j["op"] = report.op;
    j["or"] = report.or_;
    j["of1"] = report.of1;
    j["per_label_ap"] = report.per_label_ap;
    j["excluded_labels"] = report.excluded_labels;
    return j.dump(2) + "\n";
}

std::string metrics_report_csv_header() { return "map,cp,cr,cf1,op,or,of1"; }

std::string metrics_report_csv_line(const MetricsReport& report) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", report.map,
                  report.cp, report.cr, report.cf1, report.op, report.or_, report.of1);
    return buf;
}

}  // namespace agcn

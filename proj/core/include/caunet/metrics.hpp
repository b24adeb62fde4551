#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "caunet/error.hpp"

namespace caunet {

struct ConfusionCounts {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    long long total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

struct MetricsReport {
    double accuracy = 0, jaccard = 0, precision = 0, recall = 0, dice = 0, specificity = 0, mcc = 0;
    double threshold = 0.5;
    // metrics whose denominator was zero and were therefore reported as 0
    std::vector<std::string> flagged;

    nlohmann::json to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

struct CurvePoint {
    double x = 0, y = 0;
};

enum class CurveKind { Roc, Pr };

struct CurveData {
    std::vector<CurvePoint> points;
    double auc = 0;
    CurveKind kind = CurveKind::Roc;

    void write_csv(std::ostream& os) const;
};

std::vector<std::uint8_t> binarize(const std::vector<float>& probabilities, double threshold);
std::vector<std::uint8_t> binarize(const std::vector<double>& probabilities, double threshold);

ConfusionCounts confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& truth);

MetricsReport metrics_from_counts(const ConfusionCounts& c, double threshold = 0.5);

// (FPR, TPR) at every distinct score threshold plus the (0,0) and (1,1)
// endpoints; AUC by the trapezoid rule; equal scores share one threshold.
CurveData roc_curve(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth);

// (recall, precision) per distinct threshold; AUC by trapezoid over recall.
CurveData pr_curve(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth);

} // namespace caunet

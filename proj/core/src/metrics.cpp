#include "caunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "caunet/error.hpp"

namespace caunet {

nlohmann::json MetricsReport::to_json() const {
    return nlohmann::json{{"accuracy", accuracy},   {"jaccard", jaccard},
                          {"precision", precision}, {"recall", recall},
                          {"dice", dice},           {"specificity", specificity},
                          {"mcc", mcc},             {"threshold", threshold},
                          {"flagged", flagged}};
}

std::string MetricsReport::csv_header() {
    return "accuracy,jaccard,precision,recall,dice,specificity,mcc,threshold";
}

std::string MetricsReport::csv_row() const {
    std::ostringstream os;
    os << accuracy << ',' << jaccard << ',' << precision << ',' << recall << ',' << dice << ','
       << specificity << ',' << mcc << ',' << threshold;
    return os.str();
}

void CurveData::write_csv(std::ostream& os) const {
    os << (kind == CurveKind::Roc ? "fpr,tpr\n" : "recall,precision\n");
    for (const auto& p : points) os << p.x << ',' << p.y << '\n';
    os << "# auc," << auc << '\n';
}

template <typename T>
static std::vector<std::uint8_t> binarize_impl(const std::vector<T>& probabilities,
                                               double threshold) {
    std::vector<std::uint8_t> out(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i)
        out[i] = probabilities[i] >= threshold ? 1 : 0;
    return out;
}

std::vector<std::uint8_t> binarize(const std::vector<float>& p, double t) {
    return binarize_impl(p, t);
}
std::vector<std::uint8_t> binarize(const std::vector<double>& p, double t) {
    return binarize_impl(p, t);
}

ConfusionCounts confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& truth) {
    if (pred.size() != truth.size())
        throw ContractError("confusion: prediction and truth sizes differ");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] > 1 || truth[i] > 1)
            throw ContractError("confusion: inputs must be binary");
        if (truth[i]) {
            pred[i] ? ++c.tp : ++c.fn;
        } else {
            pred[i] ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

MetricsReport metrics_from_counts(const ConfusionCounts& c, double threshold) {
    if (c.total() <= 0) throw ContractError("metrics_from_counts: empty counts");
    MetricsReport r;
    r.threshold = threshold;
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
    auto ratio = [&](double num, double den, const char* name) {
        if (den == 0.0) {
            r.flagged.push_back(name);
            return 0.0;
        }
        return num / den;
    };
    r.accuracy = ratio(tp + tn, tp + tn + fp + fn, "accuracy");
    r.jaccard = ratio(tp, tp + fp + fn, "jaccard");
    r.precision = ratio(tp, tp + fp, "precision");
    r.recall = ratio(tp, tp + fn, "recall");
    r.dice = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                            : (r.flagged.push_back("dice"), 0.0);
    r.specificity = ratio(tn, tn + fp, "specificity");
    const double mcc_den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    r.mcc = mcc_den == 0.0 ? (r.flagged.push_back("mcc"), 0.0) : (tp * tn - fp * fn) / mcc_den;
    return r;
}

namespace {

struct Scored {
    double score;
    std::uint8_t label;
};

std::vector<Scored> sorted_desc(const std::vector<double>& scores,
                                const std::vector<std::uint8_t>& truth) {
    if (scores.size() != truth.size())
        throw ContractError("curve: score and truth sizes differ");
    std::vector<Scored> v(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) v[i] = {scores[i], truth[i]};
    std::stable_sort(v.begin(), v.end(),
                     [](const Scored& a, const Scored& b) { return a.score > b.score; });
    return v;
}

} // namespace

CurveData roc_curve(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth) {
    long long pos = 0, neg = 0;
    for (std::uint8_t t : truth) (t ? pos : neg) += 1;
    if (pos == 0) throw ContractError("roc_curve: truth has no positive labels");
    if (neg == 0) throw ContractError("roc_curve: truth has no negative labels");
    const auto v = sorted_desc(scores, truth);

    CurveData curve;
    curve.kind = CurveKind::Roc;
    curve.points.push_back({0.0, 0.0});
    long long tp = 0, fp = 0;
    double auc = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
    std::size_t i = 0;
    while (i < v.size()) {
        const double s = v[i].score;
        while (i < v.size() && v[i].score == s) {
            (v[i].label ? tp : fp) += 1;
            ++i;
        }
        const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
        const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
        curve.points.push_back({fpr, tpr});
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    if (curve.points.back().x != 1.0 || curve.points.back().y != 1.0)
        curve.points.push_back({1.0, 1.0});
    curve.auc = auc;
    return curve;
}

CurveData pr_curve(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth) {
    long long pos = 0;
    for (std::uint8_t t : truth) pos += t;
    if (pos == 0) throw ContractError("pr_curve: truth has no positive labels");
    const auto v = sorted_desc(scores, truth);

    CurveData curve;
    curve.kind = CurveKind::Pr;
    long long tp = 0, fp = 0;
    double auc = 0.0;
    double prev_recall = 0.0;
    bool first = true;
    double prev_precision = 1.0;
    std::size_t i = 0;
    while (i < v.size()) {
        const double s = v[i].score;
        while (i < v.size() && v[i].score == s) {
            (v[i].label ? tp : fp) += 1;
            ++i;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        if (first) {
            // anchor at recall 0 with the first threshold's precision
            curve.points.push_back({0.0, precision});
            prev_precision = precision;
            first = false;
        }
        curve.points.push_back({recall, precision});
        auc += (recall - prev_recall) * (precision + prev_precision) / 2.0;
        prev_recall = recall;
        prev_precision = precision;
    }
    curve.auc = auc;
    return curve;
}

} // namespace caunet

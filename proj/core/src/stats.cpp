#include "caunet/stats.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "caunet/error.hpp"

namespace caunet {

namespace {

double sample_mean(const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double mean) {
    double acc = 0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size() - 1);
}

// Continued fraction for the incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

// Series for the lower incomplete gamma, valid for x < a + 1.
double gamma_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for the upper incomplete gamma, valid for x >= a + 1.
double gamma_cf(double a, double x) {
    constexpr double kFpMin = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / kFpMin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = b + an / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double regularized_lower_gamma(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_series(a, x);
    return 1.0 - gamma_cf(a, x);
}

double student_t_cdf(double t, double df) {
    if (t == 0.0) return 0.5;
    const double p = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    return t > 0 ? 1.0 - p : p;
}

double chi_square_upper_tail(double x, double df) {
    if (x <= 0.0) return 1.0;
    return 1.0 - regularized_lower_gamma(df / 2.0, x / 2.0);
}

PixelFractionSample drivable_fraction(const Mask& mask) {
    if (mask.data.empty()) throw ContractError("drivable_fraction: empty mask");
    long long ones = 0;
    for (std::uint8_t v : mask.data) {
        if (v > 1) throw ContractError("drivable_fraction: mask is not binary");
        ones += v;
    }
    const double total = static_cast<double>(mask.data.size());
    return {static_cast<double>(ones) / total, static_cast<double>(mask.data.size() - ones) / total};
}

TestResult t_test(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2 || y.size() < 2)
        throw ContractError("t_test: both samples need at least 2 observations");
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    const double mx = sample_mean(x), my = sample_mean(y);
    const double sx = sample_variance(x, mx), sy = sample_variance(y, my);
    const double df = nx + ny - 2.0;
    const double pooled = ((nx - 1.0) * sx + (ny - 1.0) * sy) / df;
    const double denom = std::sqrt(pooled * (1.0 / nx + 1.0 / ny));
    TestResult r;
    r.df = df;
    if (denom == 0.0) {
        r.statistic = 0.0;
        r.p_value = 1.0;
        return r;
    }
    r.statistic = (mx - my) / denom;
    if (r.statistic == 0.0) {
        r.p_value = 1.0;
        return r;
    }
    r.p_value = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + r.statistic * r.statistic));
    return r;
}

TestResult bartlett(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2 || y.size() < 2)
        throw ContractError("bartlett: both samples need at least 2 observations");
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    const double sx = sample_variance(x, sample_mean(x));
    const double sy = sample_variance(y, sample_mean(y));
    if (sx <= 0.0 || sy <= 0.0)
        throw ContractError("bartlett: samples must have positive variance");
    const double df_total = nx + ny - 2.0;
    const double pooled = ((nx - 1.0) * sx + (ny - 1.0) * sy) / df_total;
    const double numerator =
        df_total * std::log(pooled) - ((nx - 1.0) * std::log(sx) + (ny - 1.0) * std::log(sy));
    const double correction =
        1.0 + (1.0 / 3.0) * (1.0 / (nx - 1.0) + 1.0 / (ny - 1.0) - 1.0 / df_total);
    TestResult r;
    r.df = 1.0;
    r.statistic = numerator / correction;
    if (sx == sy || r.statistic <= 0.0) {
        r.statistic = std::max(r.statistic, 0.0);
        if (sx == sy) r.statistic = 0.0;
        r.p_value = r.statistic == 0.0 ? 1.0 : chi_square_upper_tail(r.statistic, 1.0);
        return r;
    }
    r.p_value = chi_square_upper_tail(r.statistic, 1.0);
    return r;
}

double jaccard_pair(const Mask& a, const Mask& b) {
    if (a.height != b.height || a.width != b.width)
        throw ContractError("jaccard_pair: mask shapes differ");
    long long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        if (a.data[i] > 1 || b.data[i] > 1) throw ContractError("jaccard_pair: non-binary mask");
        inter += (a.data[i] & b.data[i]);
        uni += (a.data[i] | b.data[i]);
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double jaccard_aggregate(const std::vector<std::pair<Mask, Mask>>& pairs) {
    if (pairs.empty()) throw ContractError("jaccard_aggregate: need at least one pair");
    double acc = 0.0;
    for (const auto& [a, b] : pairs) acc += jaccard_pair(a, b);
    return acc / static_cast<double>(pairs.size());
}

std::map<std::pair<std::string, std::string>, long long> city_distribution(
    const DatasetIndex& index) {
    std::map<std::pair<std::string, std::string>, long long> counts;
    for (const auto& e : index.entries) ++counts[{e.split, e.city}];
    return counts;
}

std::string city_distribution_csv(const DatasetIndex& index) {
    std::ostringstream os;
    os << "split,city,count\n";
    for (const auto& [key, count] : city_distribution(index))
        os << key.first << ',' << key.second << ',' << count << '\n';
    return os.str();
}

nlohmann::json test_result_to_json(const TestResult& r) {
    return nlohmann::json{{"statistic", r.statistic},
                          {"p_value", r.p_value},
                          {"df", r.df},
                          {"alpha", r.alpha},
                          {"reject_null", r.reject_null()}};
}

} // namespace caunet

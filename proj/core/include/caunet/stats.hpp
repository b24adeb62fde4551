#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "caunet/data_io.hpp"
#include "caunet/image.hpp"

#include "caunet/error.hpp"

namespace caunet {

struct PixelFractionSample {
    double drivable_fraction = 0;
    double nondrivable_fraction = 1;
};

struct TestResult {
    double statistic = 0;
    double p_value = 1;
    double df = 0;
    double alpha = 0.05;
    bool reject_null() const { return p_value < alpha; }
};

PixelFractionSample drivable_fraction(const Mask& mask);

// Pooled-variance two-sample t statistic; two-sided p via the Student-t
// distribution with |x| + |y| - 2 degrees of freedom.
TestResult t_test(const std::vector<double>& x, const std::vector<double>& y);

// Two-sample Bartlett statistic, chi-square with 1 df, upper-tail p.
TestResult bartlett(const std::vector<double>& x, const std::vector<double>& y);

// |a∩b| / |a∪b|; 1 when both masks are empty.
double jaccard_pair(const Mask& a, const Mask& b);

// Arithmetic mean of jaccard_pair over all pairs.
double jaccard_aggregate(const std::vector<std::pair<Mask, Mask>>& pairs);

// (split, city) -> frame count; CSV rows "split,city,count".
std::map<std::pair<std::string, std::string>, long long> city_distribution(
    const DatasetIndex& index);
std::string city_distribution_csv(const DatasetIndex& index);

nlohmann::json test_result_to_json(const TestResult& r);

// Distribution plumbing, exposed for cross-checking against the incomplete
// beta/gamma identities.
double regularized_incomplete_beta(double a, double b, double x);
double regularized_lower_gamma(double a, double x);
double student_t_cdf(double t, double df);
double chi_square_upper_tail(double x, double df);

} // namespace caunet

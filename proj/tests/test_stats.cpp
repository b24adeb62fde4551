#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "caunet/stats.hpp"

using namespace caunet;

namespace {

// Canonical small datasets with externally tabulated test results.
const std::vector<double> plant_ctrl{4.17, 5.58, 5.18, 6.11, 4.50, 4.61, 5.17, 4.53, 5.33, 5.14};
const std::vector<double> plant_trt1{4.81, 4.17, 4.41, 3.59, 5.87, 3.83, 6.03, 4.89, 4.32, 4.69};
const std::vector<double> sleep_a{0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0};
const std::vector<double> sleep_b{1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4};
const std::vector<double> michelson{850, 740, 900, 1070, 930, 850, 950, 980, 980, 880};
const std::vector<double> morley{883, 816, 778, 796, 682, 711, 611, 599,
                                 1051, 781, 578, 796, 774, 820, 772};

} // namespace

TEST_CASE("hand-derived t statistic: x=[1..5], y=[2,4,6]") {
    // means 3 and 4, pooled variance (10+8)/6 = 3, t = -1/sqrt(3*(1/5+1/3))
    const TestResult r = t_test({1, 2, 3, 4, 5}, {2, 4, 6});
    CHECK(std::abs(r.statistic - (-1.0 / std::sqrt(1.6))) <= 1e-10);
    CHECK(r.df == 6.0);
}

TEST_CASE("hand-derived bartlett statistic: variance ratio 4") {
    // x=[1,2,3,4]: s^2 = 5/3; y=[2,4,6,8]: s^2 = 20/3; pooled 25/6
    const double num = 6.0 * std::log(25.0 / 6.0) - 3.0 * std::log(5.0 / 3.0) -
                       3.0 * std::log(20.0 / 3.0);
    const double correction = 1.0 + (1.0 / 3.0 + 1.0 / 3.0 - 1.0 / 6.0) / 3.0;
    const TestResult r = bartlett({1, 2, 3, 4}, {2, 4, 6, 8});
    CHECK(std::abs(r.statistic - num / correction) <= 1e-10);
    CHECK(r.df == 1.0);
}

TEST_CASE("canonical dataset: plant growth ctrl vs trt1") {
    const TestResult t = t_test(plant_ctrl, plant_trt1);
    CHECK(t.df == 18.0);
    CHECK(std::abs(t.statistic - 1.191260381849) <= 1e-8);
    CHECK(std::abs(t.p_value - 0.249023165973) <= 1e-4);
    CHECK_FALSE(t.reject_null());

    const TestResult b = bartlett(plant_ctrl, plant_trt1);
    CHECK(std::abs(b.statistic - 0.798053066765) <= 1e-8);
    CHECK(std::abs(b.p_value - 0.371676108755) <= 1e-4);
}

TEST_CASE("canonical dataset: paired-sleep groups") {
    const TestResult t = t_test(sleep_a, sleep_b);
    CHECK(t.df == 18.0);
    CHECK(std::abs(t.statistic - (-1.860813467487)) <= 1e-8);
    CHECK(std::abs(t.p_value - 0.079186714216) <= 1e-4);

    const TestResult b = bartlett(sleep_a, sleep_b);
    CHECK(std::abs(b.statistic - 0.107892107476) <= 1e-8);
    CHECK(std::abs(b.p_value - 0.742556822406) <= 1e-4);
}

TEST_CASE("canonical dataset: michelson vs morley speed-of-light runs") {
    const TestResult t = t_test(michelson, morley);
    CHECK(t.df == 23.0);
    CHECK(std::abs(t.statistic - 3.360419978245) <= 1e-8);
    CHECK(std::abs(t.p_value - 0.002705678710) <= 1e-4);
    CHECK(t.reject_null());

    const TestResult b = bartlett(michelson, morley);
    CHECK(std::abs(b.statistic - 0.742155042489) <= 1e-8);
    CHECK(std::abs(b.p_value - 0.388971414525) <= 1e-4);
}

TEST_CASE("degenerate cases return (0, 1) exactly") {
    const std::vector<double> same{1.0, 2.0, 3.0};
    const TestResult t = t_test(same, same);
    CHECK(t.statistic == 0.0);
    CHECK(t.p_value == 1.0);

    // equal variances (identical spread, shifted): bartlett is exactly (0, 1)
    const TestResult b = bartlett({1.0, 2.0, 3.0}, {5.0, 6.0, 7.0});
    CHECK(b.statistic == 0.0);
    CHECK(b.p_value == 1.0);

    // zero pooled variance with equal means
    const TestResult z = t_test({2.0, 2.0}, {2.0, 2.0});
    CHECK(z.statistic == 0.0);
    CHECK(z.p_value == 1.0);
}

TEST_CASE("input contracts") {
    CHECK_THROWS_AS(t_test({1.0}, {1.0, 2.0}), ContractError);
    CHECK_THROWS_AS(bartlett({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), ContractError);
}

TEST_CASE("jaccard pairs and aggregate") {
    Mask a = Mask::zeros(2, 2);
    Mask b = Mask::zeros(2, 2);
    CHECK(jaccard_pair(a, b) == 1.0); // both empty
    a.at(0, 0) = 1;
    a.at(0, 1) = 1;
    b.at(0, 1) = 1;
    b.at(1, 1) = 1;
    CHECK(jaccard_pair(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    std::vector<std::pair<Mask, Mask>> pairs{{a, b}, {a, a}};
    CHECK(jaccard_aggregate(pairs) == doctest::Approx((1.0 / 3.0 + 1.0) / 2.0).epsilon(1e-12));
    CHECK_THROWS_AS(jaccard_aggregate({}), ContractError);
}

TEST_CASE("drivable fraction") {
    Mask m = Mask::zeros(2, 4);
    m.at(0, 0) = 1;
    m.at(1, 3) = 1;
    const PixelFractionSample f = drivable_fraction(m);
    CHECK(f.drivable_fraction == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(f.nondrivable_fraction == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("special function identities") {
    // I_x(a,b) + I_{1-x}(b,a) = 1
    for (double x : {0.1, 0.37, 0.5, 0.81}) {
        for (double a : {0.5, 2.0, 9.0}) {
            for (double b : {1.0, 3.5}) {
                const double lhs = regularized_incomplete_beta(a, b, x) +
                                   regularized_incomplete_beta(b, a, 1.0 - x);
                CHECK(lhs == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
    // chi-square(1) upper tail via the error function: P(X > x) = erfc(sqrt(x/2))
    for (double x : {0.5, 1.0, 3.84}) {
        CHECK(chi_square_upper_tail(x, 1.0) ==
              doctest::Approx(std::erfc(std::sqrt(x / 2.0))).epsilon(1e-10));
    }
    // t CDF symmetry
    CHECK(student_t_cdf(1.3, 7.0) + student_t_cdf(-1.3, 7.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(student_t_cdf(0.0, 5.0) == doctest::Approx(0.5).epsilon(1e-12));
}

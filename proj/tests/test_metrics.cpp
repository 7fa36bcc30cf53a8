#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "aces/metrics.hpp"
#include "aces/rng.hpp"
#include "oracles.hpp"

using namespace aces;

TEST_CASE("wer basics") {
    CHECK(metrics::wer({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(metrics::wer({}, {1, 2, 3, 4}) == 1.0);  // L deletions
    CHECK(metrics::wer({1, 2, 3, 4}, {1}) == 3.0);  // can exceed 1
    CHECK_THROWS(metrics::wer({1}, {}));
}

TEST_CASE("wer matches brute-force edit-script oracle") {
    Rng rng(123);
    for (int trial = 0; trial < 80; ++trial) {
        std::vector<int> a(rng.uniform_index(7)), b(1 + rng.uniform_index(6));
        for (int& v : a) v = static_cast<int>(rng.uniform_index(4));
        for (int& v : b) v = static_cast<int>(rng.uniform_index(4));
        const double expected = static_cast<double>(oracles::edit_distance_bruteforce(a, b)) /
                                static_cast<double>(b.size());
        CHECK(metrics::wer(a, b) == expected);  // both are exact integer ratios
    }
}

TEST_CASE("wer triangle sanity on tiny sequences") {
    Rng rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<int> a(1 + rng.uniform_index(4)), b(1 + rng.uniform_index(4)),
            c(1 + rng.uniform_index(4));
        for (int& v : a) v = static_cast<int>(rng.uniform_index(3));
        for (int& v : b) v = static_cast<int>(rng.uniform_index(3));
        for (int& v : c) v = static_cast<int>(rng.uniform_index(3));
        const double lhs = metrics::wer(a, c);
        const double rhs = static_cast<double>(metrics::edit_distance(a, b) +
                                               metrics::edit_distance(b, c)) /
                           static_cast<double>(c.size());
        CHECK(lhs <= rhs + 1e-12);
    }
}

TEST_CASE("per-accent means and the clean-column fixture") {
    const std::vector<double> clean = {0.271, 0.309, 0.407, 0.398, 0.319, 0.194, 0.394};
    std::vector<double> wers;
    std::vector<std::string> accents;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        wers.push_back(clean[i]);
        accents.push_back("acc" + std::to_string(i));
    }
    auto means = metrics::per_accent_mean(wers, accents);
    CHECK(means.size() == 7);
    CHECK(means.at("acc0") == doctest::Approx(0.271));

    metrics::DisparityRow row = metrics::disparity_row(wers, accents);
    CHECK(row.mean_wer * 100.0 == doctest::Approx(32.7).epsilon(0.002));
    CHECK(row.disparity_pp == doctest::Approx(21.3).epsilon(1e-9));
}

TEST_CASE("disparity fixtures for the attacked columns") {
    auto disparity_of = [](std::initializer_list<double> pcts) {
        std::map<std::string, double> m;
        int i = 0;
        for (double p : pcts) m["a" + std::to_string(i++)] = p / 100.0;
        return metrics::disparity(m);
    };
    CHECK(disparity_of({38.0, 46.4, 56.7, 58.1, 43.6, 28.4, 52.9}) == doctest::Approx(29.7));
    CHECK(disparity_of({34.3, 42.6, 54.1, 51.1, 40.8, 23.2, 46.1}) == doctest::Approx(30.9));
    CHECK(disparity_of({34.2, 44.9, 56.3, 52.6, 42.2, 24.5, 46.8}) == doctest::Approx(31.8));
    CHECK(disparity_of({25.0, 25.0}) == doctest::Approx(0.0));
    CHECK_THROWS(metrics::disparity({{"only", 0.3}}));
}

TEST_CASE("disparity scale-equivariance and permutation invariance") {
    Rng rng(5);
    std::map<std::string, double> means;
    for (int a = 0; a < 6; ++a) means["a" + std::to_string(a)] = rng.uniform(0.1, 0.6);
    const double base = metrics::disparity(means);
    std::map<std::string, double> scaled;
    for (auto& [k, v] : means) scaled[k] = 1.7 * v;
    CHECK(metrics::disparity(scaled) == doctest::Approx(1.7 * base));
    std::map<std::string, double> permuted;
    int i = 5;
    for (auto& [k, v] : means) permuted["a" + std::to_string(i--)] = v;
    CHECK(metrics::disparity(permuted) == doctest::Approx(base));
}

TEST_CASE("per_accent_mean excludes nothing it was not given") {
    auto means = metrics::per_accent_mean({0.1, 0.3, 0.2}, {"x", "x", "y"});
    CHECK(means.at("x") == doctest::Approx(0.2));
    CHECK(means.at("y") == doctest::Approx(0.2));
    CHECK(means.size() == 2);
}

TEST_CASE("pearson correlation") {
    std::vector<double> xs = {1, 2, 3, 4, 5};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(2.0 * x + 1.0);
    CHECK(metrics::pearson_r(xs, ys) == doctest::Approx(1.0));
    std::vector<double> neg;
    for (double x : xs) neg.push_back(-x);
    CHECK(metrics::pearson_r(xs, neg) == doctest::Approx(-1.0));
    CHECK_THROWS(metrics::pearson_r({1, 2}, {1, 2}));
    CHECK_THROWS(metrics::pearson_r({1, 1, 1}, {1, 2, 3}));

    SUBCASE("random sample matches a direct second implementation") {
        Rng rng(99);
        std::vector<double> a(50), b(50);
        for (std::size_t i = 0; i < 50; ++i) {
            a[i] = rng.gaussian();
            b[i] = 0.3 * a[i] + rng.gaussian();
        }
        CHECK(metrics::pearson_r(a, b) ==
              doctest::Approx(oracles::pearson_direct(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("snr") {
    std::vector<double> x = {0.5, -0.5, 0.25};
    CHECK(metrics::snr_db(x, x) == doctest::Approx(0.0));
    std::vector<double> tiny;
    for (double v : x) tiny.push_back(v * 1e-3);  // power ratio 1e-6
    CHECK(metrics::snr_db(x, tiny) == doctest::Approx(60.0));
    CHECK(std::isinf(metrics::snr_db(x, {0.0, 0.0, 0.0})));
}

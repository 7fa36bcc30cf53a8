#include "aces/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace aces::metrics {

std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double wer(const TokenSeq& hypothesis, const TokenSeq& reference) {
    if (reference.empty()) {
        throw std::invalid_argument("wer: empty reference");
    }
    return static_cast<double>(edit_distance(hypothesis, reference)) /
           static_cast<double>(reference.size());
}

std::map<std::string, double> per_accent_mean(const std::vector<double>& wers,
                                              const std::vector<std::string>& accents) {
    if (wers.size() != accents.size()) {
        throw std::invalid_argument("per_accent_mean: size mismatch");
    }
    std::map<std::string, double> sums;
    std::map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i < wers.size(); ++i) {
        sums[accents[i]] += wers[i];
        counts[accents[i]] += 1;
    }
    std::map<std::string, double> means;
    for (const auto& [accent, sum] : sums) {
        means[accent] = sum / static_cast<double>(counts[accent]);
    }
    return means;
}

double disparity(const std::map<std::string, double>& per_accent_means) {
    if (per_accent_means.size() < 2) {
        throw std::invalid_argument("disparity: need >= 2 accents");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& [accent, mean] : per_accent_means) {
        lo = std::min(lo, mean);
        hi = std::max(hi, mean);
    }
    return (hi - lo) * 100.0;
}

DisparityRow disparity_row(const std::vector<double>& wers,
                           const std::vector<std::string>& accents) {
    DisparityRow row;
    row.per_accent_mean_wer = per_accent_mean(wers, accents);
    double sum = 0.0;
    for (const auto& [accent, mean] : row.per_accent_mean_wer) sum += mean;
    row.mean_wer = sum / static_cast<double>(row.per_accent_mean_wer.size());
    row.disparity_pp = disparity(row.per_accent_mean_wer);
    return row;
}

double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) {
        throw std::invalid_argument("pearson_r: size mismatch");
    }
    const std::size_t n = xs.size();
    if (n < 3) {
        throw std::invalid_argument("pearson_r: need n >= 3");
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw std::invalid_argument("pearson_r: zero variance");
    }
    return sxy / std::sqrt(sxx * syy);
}

double snr_db(const std::vector<double>& x, const std::vector<double>& delta) {
    double px = 0.0;
    for (double v : x) px += v * v;
    double pd = 0.0;
    for (double v : delta) pd += v * v;
    if (pd == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(px / pd);
}

}  // namespace aces::metrics

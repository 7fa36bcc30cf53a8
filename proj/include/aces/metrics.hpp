#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace aces::metrics {

using TokenSeq = std::vector<int>;

// Word-level Levenshtein distance with unit substitution/insertion/deletion
// costs, divided by reference length. May exceed 1. Empty reference throws.
double wer(const TokenSeq& hypothesis, const TokenSeq& reference);

std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b);

struct DisparityRow {
    std::map<std::string, double> per_accent_mean_wer;  // fractions
    double mean_wer = 0.0;                              // macro mean over accents
    double disparity_pp = 0.0;                          // (max - min) * 100
};

// Arithmetic mean WER per accent. Accents with zero utterances are excluded
// (caller sees them missing from the map).
std::map<std::string, double> per_accent_mean(const std::vector<double>& wers,
                                              const std::vector<std::string>& accents);

// (max - min) * 100 over per-accent mean fractions. Requires >= 2 accents.
double disparity(const std::map<std::string, double>& per_accent_means);

DisparityRow disparity_row(const std::vector<double>& wers,
                           const std::vector<std::string>& accents);

// Pearson correlation; throws on n < 3 or zero variance.
double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys);

// 10*log10(sum x^2 / sum delta^2); +inf for zero delta.
double snr_db(const std::vector<double>& x, const std::vector<double>& delta);

}  // namespace aces::metrics

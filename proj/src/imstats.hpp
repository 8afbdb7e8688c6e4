#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "model.hpp"
#include "tensor.hpp"

namespace sfconv {

// Population (biased) central moments throughout; no small-sample correction.

// Fisher-Pearson g1 = m3 / m2^(3/2). Needs n >= 3 and nonzero variance.
double skewness(std::span<const double> samples);

// Excess kurtosis g2 = m4 / m2^2 - 3. Needs n >= 2 and nonzero variance.
double kurtosis(std::span<const double> samples);

double sample_mean(std::span<const double> samples);
double sample_variance(std::span<const double> samples);  // population form

struct HistogramReport {
    std::vector<double> bin_edges;       // bins + 1 edges, ascending
    std::vector<std::uint64_t> counts;   // per bin; last bin right-inclusive
    double skewness = 0.0;
    double kurtosis = 0.0;
    bool stats_valid = false;  // false when the sample is degenerate
    double variance = 0.0;
    std::size_t n = 0;
};

// Equal-width bins over [min, max]; a constant sample widens the range to
// [v - 0.5, v + 0.5] so the single occupied bin is still well defined.
HistogramReport histogram(std::span<const double> samples, std::size_t bins);

// Histogram plus moment statistics of the raw pixel sample. bins >= 2.
HistogramReport image_histogram(const Tensor& img, std::size_t bins);

// Histogram over every learnable scalar of the model.
HistogramReport weight_histogram(const Model& m, std::size_t bins, bool include_bias = true);

// c x h x w -> 1 x h x w; 3-channel input uses luma weights .299/.587/.114.
Tensor to_gray(const Tensor& img);

}  // namespace sfconv

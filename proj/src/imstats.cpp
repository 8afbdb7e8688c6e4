#include "imstats.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace sfconv {

namespace {

struct Moments {
    double mean, m2, m3, m4;
};

Moments central_moments(std::span<const double> s) {
    const double n = static_cast<double>(s.size());
    double mean = 0.0;
    for (double x : s) mean += x;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : s) {
        const double d = x - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    return {mean, m2 / n, m3 / n, m4 / n};
}

}  // namespace

double sample_mean(std::span<const double> samples) {
    if (samples.empty()) throw DomainError("mean of an empty sample");
    double mean = 0.0;
    for (double x : samples) mean += x;
    return mean / static_cast<double>(samples.size());
}

double sample_variance(std::span<const double> samples) {
    if (samples.empty()) throw DomainError("variance of an empty sample");
    return central_moments(samples).m2;
}

double skewness(std::span<const double> samples) {
    if (samples.size() < 3) throw DomainError("skewness needs at least 3 samples");
    Moments m = central_moments(samples);
    if (m.m2 <= 0.0) throw DomainError("skewness undefined for zero-variance sample");
    return m.m3 / std::pow(m.m2, 1.5);
}

double kurtosis(std::span<const double> samples) {
    if (samples.size() < 2) throw DomainError("kurtosis needs at least 2 samples");
    Moments m = central_moments(samples);
    if (m.m2 <= 0.0) throw DomainError("kurtosis undefined for zero-variance sample");
    return m.m4 / (m.m2 * m.m2) - 3.0;
}

HistogramReport histogram(std::span<const double> samples, std::size_t bins) {
    if (bins < 2) throw DomainError("histogram needs at least 2 bins");
    if (samples.empty()) throw DomainError("histogram of an empty sample");
    auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    double lo = *lo_it, hi = *hi_it;
    if (!(lo < hi)) {
        lo -= 0.5;
        hi += 0.5;
    }
    HistogramReport rep;
    rep.n = samples.size();
    rep.bin_edges.resize(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i <= bins; ++i)
        rep.bin_edges[i] = lo + width * static_cast<double>(i);
    rep.bin_edges[bins] = hi;
    rep.counts.assign(bins, 0);
    for (double x : samples) {
        std::size_t idx;
        if (x >= hi) {
            idx = bins - 1;  // right-inclusive last bin
        } else {
            idx = static_cast<std::size_t>((x - lo) / width);
            if (idx >= bins) idx = bins - 1;
        }
        ++rep.counts[idx];
    }
    Moments m = central_moments(samples);
    rep.variance = m.m2;
    if (samples.size() >= 3 && m.m2 > 0.0) {
        rep.skewness = m.m3 / std::pow(m.m2, 1.5);
        rep.kurtosis = m.m4 / (m.m2 * m.m2) - 3.0;
        rep.stats_valid = true;
    }
    return rep;
}

HistogramReport image_histogram(const Tensor& img, std::size_t bins) {
    return histogram(img.data(), bins);
}

HistogramReport weight_histogram(const Model& m, std::size_t bins, bool include_bias) {
    std::vector<double> all;
    for (const Layer& l : m.layers) {
        auto append = [&](const Tensor& t) {
            all.insert(all.end(), t.data().begin(), t.data().end());
        };
        if (l.filter) {
            append(l.filter->p_filters);
            append(l.filter->q_filters);
            if (include_bias && l.filter->bias) append(*l.filter->bias);
        } else if (l.weight) {
            append(*l.weight);
            if (include_bias && l.bias) append(*l.bias);
        }
    }
    if (all.empty()) throw DomainError("model has no parameters to histogram");
    return histogram(all, bins);
}

Tensor to_gray(const Tensor& img) {
    if (img.rank() != 3) throw ShapeError("grayscale conversion expects c x h x w");
    const std::size_t c = img.extent(0), h = img.extent(1), w = img.extent(2);
    if (c == 1) return img;
    if (c != 3)
        throw DomainError("grayscale conversion supports 1 or 3 channels, got " +
                          std::to_string(c));
    Tensor out({1, h, w});
    const std::size_t plane = h * w;
    for (std::size_t i = 0; i < plane; ++i)
        out[i] = 0.299 * img[i] + 0.587 * img[plane + i] + 0.114 * img[2 * plane + i];
    return out;
}

}  // namespace sfconv

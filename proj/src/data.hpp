#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "config.hpp"
#include "tensor.hpp"

namespace sfconv {

struct Dataset {
    TaskKind task = TaskKind::Classify;
    std::vector<Tensor> images;  // each c x h x w, values in [0, 1]
    std::vector<int> labels;     // classification targets
    std::vector<Tensor> masks;   // segmentation targets, each 1 x h x w in {0, 1}

    std::size_t size() const { return images.size(); }
};

// Deterministic generators; sample i draws only from its own derived stream,
// so a dataset of size n is a prefix of the same-seed dataset of size n' > n.

// 3-class 32x32 grayscale gratings at 0/45/90 degrees, noise, and a skewed
// intensity transform. Labels are i mod 3.
Dataset synth_classify(std::size_t n, std::uint64_t seed);

// 48x48 images of bright curvilinear strokes on a dark background with
// exact {0,1} masks; mask coverage is kept inside [2%, 15%] by deterministic
// re-draws from per-attempt streams.
Dataset synth_segment(std::size_t n, std::uint64_t seed);

Dataset synth_dataset(TaskKind kind, std::size_t n, std::uint64_t seed);

inline constexpr double kMaskFractionLo = 0.02;
inline constexpr double kMaskFractionHi = 0.15;

// Directory layout: manifest.csv (header image,label or image,mask) plus one
// TNSR file per sample. PGM/PPM files are accepted on load and scaled from
// [0, 255]; masks are binarized at 0.5.
void write_dataset(const Dataset& d, const std::string& dir);
Dataset load_dataset_dir(const std::string& dir);

struct Batch {
    Tensor images;                // b x c x h x w
    std::vector<int> labels;      // classification
    std::optional<Tensor> masks;  // b x 1 x h x w
};

Batch make_batch(const Dataset& d, std::span<const std::size_t> indices);

}  // namespace sfconv

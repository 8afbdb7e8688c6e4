#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"

namespace sfconv {

struct LayerCost {
    std::string name;  // layer<i>/<kind>
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
};

struct ComplexityReport {
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
    double fps = 0.0;  // 0 until measured
    Shape input_shape;
    std::vector<LayerCost> per_layer;
};

// Exact count of learnable scalars.
std::uint64_t count_params(const Model& m);

// Analytic operation count of one forward pass on a b x c x h x w input.
// Convention: 2 ops per multiply-accumulate, 1 op per activation element,
// 1 add per bias element, 3 compares per 2x2 max-pool output element,
// upsample and flatten free. Pure function of architecture and shape.
std::uint64_t count_flops(const Model& m, const Shape& input_shape);

ComplexityReport complexity_report(const Model& m, const Shape& input_shape);

// Median over `trials` of batch_size / wall-time per forward pass, after
// `warmup` untimed passes. Single-threaded, monotonic clock. trials >= 3.
double measure_fps(const Model& m, const Shape& input_shape, std::size_t trials = 50,
                   std::size_t warmup = 10);

}  // namespace sfconv

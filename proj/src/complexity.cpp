#include "complexity.hpp"

#include <algorithm>
#include <chrono>

#include "errors.hpp"
#include "rng.hpp"

namespace sfconv {

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::SfConv: return "sfconv";
        case LayerKind::Relu: return "relu";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::Pool: return "pool";
        case LayerKind::Upsample: return "upsample";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
    }
    return "?";
}

std::uint64_t tensor_count(const Layer& l) {
    std::uint64_t n = 0;
    if (l.filter) {
        n += l.filter->p_filters.size() + l.filter->q_filters.size();
        if (l.filter->bias) n += l.filter->bias->size();
    } else if (l.weight) {
        n += l.weight->size();
        if (l.bias) n += l.bias->size();
    }
    return n;
}

}  // namespace

std::uint64_t count_params(const Model& m) {
    std::uint64_t total = 0;
    for (const Layer& l : m.layers) total += tensor_count(l);
    return total;
}

std::uint64_t count_flops(const Model& m, const Shape& input_shape) {
    return complexity_report(m, input_shape).flops;
}

ComplexityReport complexity_report(const Model& m, const Shape& input_shape) {
    if (input_shape.size() != 4)
        throw ShapeError("flop counting expects a b x c x h x w shape, got " +
                         shape_str(input_shape));
    const std::uint64_t b = input_shape[0];
    std::size_t c = input_shape[1], h = input_shape[2], w = input_shape[3];
    bool spatial = true;
    std::size_t features = 0;

    ComplexityReport rep;
    rep.input_shape = input_shape;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const Layer& l = m.layers[i];
        const LayerSpec& s = l.spec;
        LayerCost cost;
        cost.name = "layer" + std::to_string(i + 1) + "/" + kind_name(s.kind);
        cost.params = tensor_count(l);
        switch (s.kind) {
            case LayerKind::Conv: {
                if (!spatial || c != s.conv.c_in)
                    throw ShapeError(cost.name + ": input shape mismatch");
                std::size_t oh = conv_out_extent(h, s.conv.k, s.conv.stride, s.conv.pad);
                std::size_t ow = conv_out_extent(w, s.conv.k, s.conv.stride, s.conv.pad);
                std::uint64_t out_elems = b * s.conv.c_out * oh * ow;
                cost.flops = out_elems * 2 * s.conv.c_in * s.conv.k * s.conv.k;
                if (l.bias) cost.flops += out_elems;
                c = s.conv.c_out; h = oh; w = ow;
                break;
            }
            case LayerKind::SfConv: {
                if (!spatial || c != s.conv.c_in)
                    throw ShapeError(cost.name + ": input shape mismatch");
                // stage 1: 1 x k horizontal, stage 2: k x 1 vertical
                std::size_t w1 = conv_out_extent(w, s.conv.k, s.conv.stride, s.conv.pad);
                std::uint64_t stage1 = b * s.rank * h * w1 * 2 * s.conv.c_in * s.conv.k;
                std::size_t oh = conv_out_extent(h, s.conv.k, s.conv.stride, s.conv.pad);
                std::uint64_t out_elems = b * s.conv.c_out * oh * w1;
                std::uint64_t stage2 = out_elems * 2 * s.rank * s.conv.k;
                cost.flops = stage1 + stage2;
                if (l.filter && l.filter->bias) cost.flops += out_elems;
                c = s.conv.c_out; h = oh; w = w1;
                break;
            }
            case LayerKind::Relu:
            case LayerKind::Sigmoid:
                cost.flops = b * (spatial ? c * h * w : features);
                break;
            case LayerKind::Pool:
                if (!spatial) throw ShapeError(cost.name + ": pool after flatten");
                h /= 2; w /= 2;
                cost.flops = b * c * h * w * 3;
                break;
            case LayerKind::Upsample:
                if (!spatial) throw ShapeError(cost.name + ": upsample after flatten");
                h *= 2; w *= 2;
                cost.flops = 0;
                break;
            case LayerKind::Flatten:
                if (!spatial) throw ShapeError(cost.name + ": flatten applied twice");
                features = c * h * w;
                spatial = false;
                cost.flops = 0;
                break;
            case LayerKind::Dense: {
                if (spatial || features != s.in_features)
                    throw ShapeError(cost.name + ": input features mismatch");
                cost.flops = b * s.out_features * 2 * s.in_features;
                if (l.bias) cost.flops += b * s.out_features;
                features = s.out_features;
                break;
            }
        }
        rep.params += cost.params;
        rep.flops += cost.flops;
        rep.per_layer.push_back(std::move(cost));
    }
    return rep;
}

double measure_fps(const Model& m, const Shape& input_shape, std::size_t trials,
                   std::size_t warmup) {
    if (trials < 3) throw DomainError("fps measurement needs at least 3 trials");
    if (input_shape.size() != 4)
        throw ShapeError("fps measurement expects a b x c x h x w shape");
    Tensor input(input_shape);
    Rng rng(0x62656e6368ull);
    for (auto& x : input.data()) x = rng.uniform();

    volatile double sink = 0.0;  // keep the forward pass observable
    for (std::size_t i = 0; i < warmup; ++i) sink = sink + model_forward(m, input)[0];

    const double batch = static_cast<double>(input_shape[0]);
    std::vector<double> rates;
    rates.reserve(trials);
    for (std::size_t i = 0; i < trials; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        sink = sink + model_forward(m, input)[0];
        auto t1 = std::chrono::steady_clock::now();
        double sec = std::chrono::duration<double>(t1 - t0).count();
        rates.push_back(batch / std::max(sec, 1e-12));
    }
    std::sort(rates.begin(), rates.end());
    const std::size_t mid = trials / 2;
    return trials % 2 ? rates[mid] : 0.5 * (rates[mid - 1] + rates[mid]);
}

}  // namespace sfconv

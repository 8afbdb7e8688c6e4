#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace sfconv {

// Per-axis convolution geometry. Padding is zero padding, symmetric per
// axis; convolution is cross-correlation (no kernel flip).
struct ConvGeom {
    std::size_t kh = 1, kw = 1;
    std::size_t sh = 1, sw = 1;
    std::size_t ph = 0, pw = 0;

    static ConvGeom square(std::size_t k, std::size_t s, std::size_t p) {
        return ConvGeom{k, k, s, s, p, p};
    }
};

// floor((in + 2p - k) / s) + 1; throws if the result would be < 1
std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p);

struct Conv2dGrad {
    Tensor d_input;
    Tensor d_weight;
    Tensor d_bias;  // shape {c_out}; zeros when the layer has no bias
};

// input: b x c_in x h x w, weight: c_out x c_in x kh x kw, bias: {c_out} or null
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      const ConvGeom& g);
Conv2dGrad conv2d_backward(const Tensor& upstream, const Tensor& input, const Tensor& weight,
                           const ConvGeom& g, bool with_bias);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& upstream, const Tensor& x);

Tensor sigmoid_forward(const Tensor& x);
// y is the saved forward output
Tensor sigmoid_backward(const Tensor& upstream, const Tensor& y);

// 2x2 max pooling, stride 2; trailing odd row/column is dropped
struct MaxPoolResult {
    Tensor out;
    std::vector<std::size_t> argmax;  // flat input index per output element
};
MaxPoolResult maxpool2x2_forward(const Tensor& x);
Tensor maxpool2x2_backward(const Tensor& upstream, const MaxPoolResult& saved, const Shape& in_shape);

// nearest-neighbour 2x upsampling
Tensor upsample2x_forward(const Tensor& x);
Tensor upsample2x_backward(const Tensor& upstream);

// x: b x n_in, weight: n_out x n_in, bias: {n_out} or null
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor* bias);
struct DenseGrad {
    Tensor d_input;
    Tensor d_weight;
    Tensor d_bias;
};
DenseGrad dense_backward(const Tensor& upstream, const Tensor& x, const Tensor& weight,
                         bool with_bias);

struct LossGrad {
    double value;
    Tensor grad;  // with respect to the first argument
};

// mean over the batch; computed with max-subtraction
LossGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

inline constexpr double kDiceEps = 1.0;

// 1 - (2 sum(p t) + eps) / (sum p + sum t + eps), summed over all elements
LossGrad dice_loss(const Tensor& pred, const Tensor& target, double eps = kDiceEps);

// overlap coefficient of two binarized masks (threshold 0.5), eps-smoothed
double dice_coefficient(const Tensor& pred, const Tensor& target, double eps = kDiceEps);

}  // namespace sfconv

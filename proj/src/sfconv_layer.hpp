#pragma once

#include <cstdint>
#include <optional>

#include "ops.hpp"
#include "tensor.hpp"

namespace sfconv {

// Square k x k convolution a layer emulates (stride and padding symmetric).
struct ConvSpec {
    std::size_t k = 3;
    std::size_t stride = 1;
    std::size_t pad = 1;
    std::size_t c_in = 1;
    std::size_t c_out = 1;
};

// A k x k convolution factorized through a rank-r latent space and realized
// as two 1-D convolutions: a horizontal 1 x k stage (Q) followed by a
// vertical k x 1 stage (P). Horizontal stride/padding live on stage one,
// vertical stride/padding on stage two, so the composition reproduces the
// output geometry of the emulated convolution.
struct FactorizedFilter {
    Tensor q_filters;            // r x c_in x 1 x k
    Tensor p_filters;            // c_out x r x k x 1
    std::optional<Tensor> bias;  // {c_out}, applied after stage two
    std::size_t rank = 1;
    ConvSpec cfg;
};

// parameter count excluding bias is exactly k*r*(c_in + c_out)
std::size_t param_count(const FactorizedFilter& f);

ConvGeom stage1_geom(const FactorizedFilter& f);
ConvGeom stage2_geom(const FactorizedFilter& f);

void validate_filter(const FactorizedFilter& f);

struct SfconvTrace {
    Tensor stage1;  // output of the Q stage, input to the P stage
};

Tensor sfconv_forward(const Tensor& input, const FactorizedFilter& f,
                      SfconvTrace* trace = nullptr);

struct SfconvGrad {
    Tensor d_input;
    Tensor d_q;
    Tensor d_p;
    Tensor d_bias;  // zeros when the layer has no bias
};

SfconvGrad sfconv_backward(const Tensor& upstream, const Tensor& input, const SfconvTrace& trace,
                           const FactorizedFilter& f);

// He-style init per stage: q ~ N(0, 2/(c_in*k)), p ~ N(0, 2/(r*k)), bias zero.
FactorizedFilter init_factorized(std::size_t c_in, std::size_t c_out, std::size_t k,
                                 std::size_t r, std::size_t stride, std::size_t pad,
                                 std::uint64_t seed, bool with_bias = true);

// The layer weights aligned as the two factor matrices: rows of matrix_p are
// (output channel, kernel row) pairs, columns of matrix_q are (input channel,
// kernel column) pairs. With k=1 both are plain flattenings and
// matrix_p * matrix_q is the emulated 1x1 weight.
struct SpectrumView {
    Tensor matrix_p;  // (c_out*k) x r
    Tensor matrix_q;  // r x (c_in*k)
};

SpectrumView spectrum_view(const FactorizedFilter& f);

Tensor matrix_p_from_filters(const Tensor& p_filters);
Tensor filters_from_matrix_p(const Tensor& m, std::size_t c_out, std::size_t r, std::size_t k);
Tensor matrix_q_from_filters(const Tensor& q_filters);
Tensor filters_from_matrix_q(const Tensor& m, std::size_t r, std::size_t c_in, std::size_t k);

}  // namespace sfconv

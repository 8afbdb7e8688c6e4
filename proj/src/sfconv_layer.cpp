#include "sfconv_layer.hpp"

#include <cmath>

#include "rng.hpp"

namespace sfconv {

std::size_t param_count(const FactorizedFilter& f) {
    std::size_t n = f.cfg.k * f.rank * (f.cfg.c_in + f.cfg.c_out);
    if (f.bias) n += f.cfg.c_out;
    return n;
}

ConvGeom stage1_geom(const FactorizedFilter& f) {
    return ConvGeom{1, f.cfg.k, 1, f.cfg.stride, 0, f.cfg.pad};
}

ConvGeom stage2_geom(const FactorizedFilter& f) {
    return ConvGeom{f.cfg.k, 1, f.cfg.stride, 1, f.cfg.pad, 0};
}

void validate_filter(const FactorizedFilter& f) {
    const auto& c = f.cfg;
    if (f.rank < 1) throw ShapeError("factorized filter rank must be >= 1");
    if (f.q_filters.shape() != Shape{f.rank, c.c_in, 1, c.k})
        throw ShapeError("q_filters shape " + shape_str(f.q_filters.shape()) +
                         " does not match rank/config");
    if (f.p_filters.shape() != Shape{c.c_out, f.rank, c.k, 1})
        throw ShapeError("p_filters shape " + shape_str(f.p_filters.shape()) +
                         " does not match rank/config (stage ranks disagree)");
    if (f.bias && f.bias->shape() != Shape{c.c_out})
        throw ShapeError("factorized filter bias must have shape {c_out}");
}

Tensor sfconv_forward(const Tensor& input, const FactorizedFilter& f, SfconvTrace* trace) {
    validate_filter(f);
    if (input.rank() != 4 || input.extent(1) != f.cfg.c_in)
        throw ShapeError("sfconv input " + shape_str(input.shape()) + " does not carry " +
                         std::to_string(f.cfg.c_in) + " channels");
    Tensor mid = conv2d_forward(input, f.q_filters, nullptr, stage1_geom(f));
    Tensor out = conv2d_forward(mid, f.p_filters, f.bias ? &*f.bias : nullptr, stage2_geom(f));
    if (trace) trace->stage1 = std::move(mid);
    return out;
}

SfconvGrad sfconv_backward(const Tensor& upstream, const Tensor& input, const SfconvTrace& trace,
                           const FactorizedFilter& f) {
    validate_filter(f);
    Conv2dGrad g2 = conv2d_backward(upstream, trace.stage1, f.p_filters, stage2_geom(f),
                                    f.bias.has_value());
    Conv2dGrad g1 = conv2d_backward(g2.d_input, input, f.q_filters, stage1_geom(f), false);
    return SfconvGrad{std::move(g1.d_input), std::move(g1.d_weight), std::move(g2.d_weight),
                      std::move(g2.d_bias)};
}

FactorizedFilter init_factorized(std::size_t c_in, std::size_t c_out, std::size_t k,
                                 std::size_t r, std::size_t stride, std::size_t pad,
                                 std::uint64_t seed, bool with_bias) {
    if (c_in < 1 || c_out < 1 || k < 1 || r < 1 || stride < 1)
        throw ShapeError("factorized filter dimensions must be positive");
    FactorizedFilter f{Tensor({r, c_in, 1, k}), Tensor({c_out, r, k, 1}),
                       with_bias ? std::optional<Tensor>(Tensor({c_out})) : std::nullopt, r,
                       ConvSpec{k, stride, pad, c_in, c_out}};
    Rng rng(seed);
    const double q_std = std::sqrt(2.0 / static_cast<double>(c_in * k));
    const double p_std = std::sqrt(2.0 / static_cast<double>(r * k));
    for (auto& x : f.q_filters.data()) x = rng.normal(0.0, q_std);
    for (auto& x : f.p_filters.data()) x = rng.normal(0.0, p_std);
    return f;
}

Tensor matrix_p_from_filters(const Tensor& p_filters) {
    if (p_filters.rank() != 4 || p_filters.extent(3) != 1)
        throw ShapeError("p_filters must have shape c_out x r x k x 1");
    const std::size_t co = p_filters.extent(0), r = p_filters.extent(1), k = p_filters.extent(2);
    Tensor m({co * k, r});
    for (std::size_t oc = 0; oc < co; ++oc)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t u = 0; u < k; ++u) m(oc * k + u, j) = p_filters(oc, j, u, 0);
    return m;
}

Tensor filters_from_matrix_p(const Tensor& m, std::size_t c_out, std::size_t r, std::size_t k) {
    if (m.shape() != Shape{c_out * k, r}) throw ShapeError("matrix_p shape mismatch");
    Tensor p({c_out, r, k, 1});
    for (std::size_t oc = 0; oc < c_out; ++oc)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t u = 0; u < k; ++u) p(oc, j, u, 0) = m(oc * k + u, j);
    return p;
}

Tensor matrix_q_from_filters(const Tensor& q_filters) {
    if (q_filters.rank() != 4 || q_filters.extent(2) != 1)
        throw ShapeError("q_filters must have shape r x c_in x 1 x k");
    const std::size_t r = q_filters.extent(0), ci = q_filters.extent(1), k = q_filters.extent(3);
    // layout already matches the r x (c_in*k) alignment
    return reshape(q_filters, {r, ci * k});
}

Tensor filters_from_matrix_q(const Tensor& m, std::size_t r, std::size_t c_in, std::size_t k) {
    if (m.shape() != Shape{r, c_in * k}) throw ShapeError("matrix_q shape mismatch");
    return reshape(m, {r, c_in, 1, k});
}

SpectrumView spectrum_view(const FactorizedFilter& f) {
    validate_filter(f);
    return SpectrumView{matrix_p_from_filters(f.p_filters), matrix_q_from_filters(f.q_filters)};
}

}  // namespace sfconv

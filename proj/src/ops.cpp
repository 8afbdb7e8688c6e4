#include "ops.hpp"

#include <algorithm>
#include <cmath>

namespace sfconv {

namespace {

using Index = std::ptrdiff_t;

Index div_floor(Index a, Index b) {
    Index q = a / b, r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

Index div_ceil(Index a, Index b) { return -div_floor(-a, b); }

// valid output range [lo, hi] for kernel offset u along one axis, such that
// o*s - p + u stays inside [0, in)
void valid_range(std::size_t in, std::size_t out, std::size_t s, std::size_t p, std::size_t u,
                 std::size_t& lo, std::size_t& hi, bool& empty) {
    Index l = div_ceil(static_cast<Index>(p) - static_cast<Index>(u), static_cast<Index>(s));
    Index h = div_floor(static_cast<Index>(in) - 1 + static_cast<Index>(p) - static_cast<Index>(u),
                        static_cast<Index>(s));
    l = std::max<Index>(l, 0);
    h = std::min<Index>(h, static_cast<Index>(out) - 1);
    empty = l > h;
    lo = empty ? 0 : static_cast<std::size_t>(l);
    hi = empty ? 0 : static_cast<std::size_t>(h);
}

void check_conv_shapes(const Tensor& input, const Tensor& weight, const Tensor* bias,
                       const ConvGeom& g) {
    if (input.rank() != 4)
        throw ShapeError("conv2d input must be rank-4 (b,c,h,w), got " + shape_str(input.shape()));
    if (weight.rank() != 4)
        throw ShapeError("conv2d weight must be rank-4 (c_out,c_in,kh,kw), got " +
                         shape_str(weight.shape()));
    if (weight.extent(2) != g.kh || weight.extent(3) != g.kw)
        throw ShapeError("conv2d weight kernel dims disagree with geometry");
    if (input.extent(1) != weight.extent(1))
        throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                         " vs weight " + shape_str(weight.shape()));
    if (bias && (bias->rank() != 1 || bias->extent(0) != weight.extent(0)))
        throw ShapeError("conv2d bias must have shape {c_out}");
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
    if (in + 2 * p < k)
        throw ShapeError("convolution output extent would be non-positive (in=" +
                         std::to_string(in) + ", k=" + std::to_string(k) +
                         ", p=" + std::to_string(p) + ")");
    return (in + 2 * p - k) / s + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      const ConvGeom& g) {
    check_conv_shapes(input, weight, bias, g);
    const std::size_t b = input.extent(0), ci = input.extent(1);
    const std::size_t h = input.extent(2), w = input.extent(3);
    const std::size_t co = weight.extent(0);
    const std::size_t ho = conv_out_extent(h, g.kh, g.sh, g.ph);
    const std::size_t wo = conv_out_extent(w, g.kw, g.sw, g.pw);

    Tensor out({b, co, ho, wo});
    for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t oc = 0; oc < co; ++oc) {
            double* outp = out.raw() + ((bi * co + oc) * ho) * wo;
            if (bias) {
                const double bv = (*bias)[oc];
                for (std::size_t i = 0; i < ho * wo; ++i) outp[i] = bv;
            }
            for (std::size_t ic = 0; ic < ci; ++ic) {
                const double* inp = input.raw() + ((bi * ci + ic) * h) * w;
                for (std::size_t u = 0; u < g.kh; ++u) {
                    std::size_t olo, ohi;
                    bool oempty;
                    valid_range(h, ho, g.sh, g.ph, u, olo, ohi, oempty);
                    if (oempty) continue;
                    for (std::size_t v = 0; v < g.kw; ++v) {
                        const double wv = weight(oc, ic, u, v);
                        if (wv == 0.0) continue;
                        std::size_t wlo, whi;
                        bool wempty;
                        valid_range(w, wo, g.sw, g.pw, v, wlo, whi, wempty);
                        if (wempty) continue;
                        for (std::size_t oy = olo; oy <= ohi; ++oy) {
                            const std::size_t iy = oy * g.sh - g.ph + u;
                            const double* irow = inp + iy * w;
                            double* orow = outp + oy * wo;
                            std::size_t ix = wlo * g.sw - g.pw + v;
                            for (std::size_t ox = wlo; ox <= whi; ++ox, ix += g.sw)
                                orow[ox] += wv * irow[ix];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Conv2dGrad conv2d_backward(const Tensor& upstream, const Tensor& input, const Tensor& weight,
                           const ConvGeom& g, bool with_bias) {
    check_conv_shapes(input, weight, nullptr, g);
    const std::size_t b = input.extent(0), ci = input.extent(1);
    const std::size_t h = input.extent(2), w = input.extent(3);
    const std::size_t co = weight.extent(0);
    const std::size_t ho = conv_out_extent(h, g.kh, g.sh, g.ph);
    const std::size_t wo = conv_out_extent(w, g.kw, g.sw, g.pw);
    if (upstream.shape() != Shape{b, co, ho, wo})
        throw ShapeError("conv2d upstream shape " + shape_str(upstream.shape()) +
                         " does not match forward output " + shape_str({b, co, ho, wo}));

    Conv2dGrad grad{Tensor(input.shape()), Tensor(weight.shape()), Tensor({co})};

    if (with_bias) {
        for (std::size_t bi = 0; bi < b; ++bi)
            for (std::size_t oc = 0; oc < co; ++oc) {
                const double* up = upstream.raw() + ((bi * co + oc) * ho) * wo;
                double acc = 0.0;
                for (std::size_t i = 0; i < ho * wo; ++i) acc += up[i];
                grad.d_bias[oc] += acc;
            }
    }

    for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t oc = 0; oc < co; ++oc) {
            const double* up = upstream.raw() + ((bi * co + oc) * ho) * wo;
            for (std::size_t ic = 0; ic < ci; ++ic) {
                const double* inp = input.raw() + ((bi * ci + ic) * h) * w;
                double* dinp = grad.d_input.raw() + ((bi * ci + ic) * h) * w;
                for (std::size_t u = 0; u < g.kh; ++u) {
                    std::size_t olo, ohi;
                    bool oempty;
                    valid_range(h, ho, g.sh, g.ph, u, olo, ohi, oempty);
                    if (oempty) continue;
                    for (std::size_t v = 0; v < g.kw; ++v) {
                        std::size_t wlo, whi;
                        bool wempty;
                        valid_range(w, wo, g.sw, g.pw, v, wlo, whi, wempty);
                        if (wempty) continue;
                        const double wv = weight(oc, ic, u, v);
                        double wacc = 0.0;
                        for (std::size_t oy = olo; oy <= ohi; ++oy) {
                            const std::size_t iy = oy * g.sh - g.ph + u;
                            const double* irow = inp + iy * w;
                            double* dirow = dinp + iy * w;
                            const double* urow = up + oy * wo;
                            std::size_t ix = wlo * g.sw - g.pw + v;
                            for (std::size_t ox = wlo; ox <= whi; ++ox, ix += g.sw) {
                                wacc += urow[ox] * irow[ix];
                                dirow[ix] += urow[ox] * wv;
                            }
                        }
                        grad.d_weight(oc, ic, u, v) += wacc;
                    }
                }
            }
        }
    }
    return grad;
}

Tensor relu_forward(const Tensor& x) { return maximum(x, 0.0); }

Tensor relu_backward(const Tensor& upstream, const Tensor& x) {
    if (!upstream.same_shape(x)) throw ShapeError("relu upstream shape mismatch");
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? upstream[i] : 0.0;
    return g;
}

Tensor sigmoid_forward(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        y[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return y;
}

Tensor sigmoid_backward(const Tensor& upstream, const Tensor& y) {
    if (!upstream.same_shape(y)) throw ShapeError("sigmoid upstream shape mismatch");
    Tensor g(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) g[i] = upstream[i] * y[i] * (1.0 - y[i]);
    return g;
}

MaxPoolResult maxpool2x2_forward(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("maxpool input must be rank-4");
    const std::size_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    if (h < 2 || w < 2) throw ShapeError("maxpool input smaller than the 2x2 window");
    const std::size_t ho = h / 2, wo = w / 2;
    MaxPoolResult r{Tensor({b, c, ho, wo}), {}};
    r.argmax.resize(b * c * ho * wo);
    std::size_t o = 0;
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t plane = (bi * c + ch) * h * w;
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
                    std::size_t base = plane + (2 * oy) * w + 2 * ox;
                    std::size_t best = base;
                    double bv = x[base];
                    const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
                    for (std::size_t k = 0; k < 3; ++k)
                        if (x[cand[k]] > bv) {
                            bv = x[cand[k]];
                            best = cand[k];
                        }
                    r.out[o] = bv;
                    r.argmax[o] = best;
                }
        }
    return r;
}

Tensor maxpool2x2_backward(const Tensor& upstream, const MaxPoolResult& saved, const Shape& in_shape) {
    if (upstream.size() != saved.argmax.size()) throw ShapeError("maxpool upstream shape mismatch");
    Tensor g{in_shape};
    for (std::size_t o = 0; o < saved.argmax.size(); ++o) g[saved.argmax[o]] += upstream[o];
    return g;
}

Tensor upsample2x_forward(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("upsample input must be rank-4");
    const std::size_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor y({b, c, 2 * h, 2 * w});
    for (std::size_t bc = 0; bc < b * c; ++bc) {
        const double* src = x.raw() + bc * h * w;
        double* dst = y.raw() + bc * 4 * h * w;
        for (std::size_t iy = 0; iy < h; ++iy)
            for (std::size_t ix = 0; ix < w; ++ix) {
                const double v = src[iy * w + ix];
                double* d = dst + (2 * iy) * (2 * w) + 2 * ix;
                d[0] = v;
                d[1] = v;
                d[2 * w] = v;
                d[2 * w + 1] = v;
            }
    }
    return y;
}

Tensor upsample2x_backward(const Tensor& upstream) {
    if (upstream.rank() != 4) throw ShapeError("upsample upstream must be rank-4");
    const std::size_t b = upstream.extent(0), c = upstream.extent(1);
    const std::size_t H = upstream.extent(2), W = upstream.extent(3);
    if (H % 2 != 0 || W % 2 != 0) throw ShapeError("upsample upstream extents must be even");
    Tensor g({b, c, H / 2, W / 2});
    for (std::size_t bc = 0; bc < b * c; ++bc) {
        const double* src = upstream.raw() + bc * H * W;
        double* dst = g.raw() + bc * (H / 2) * (W / 2);
        for (std::size_t iy = 0; iy < H / 2; ++iy)
            for (std::size_t ix = 0; ix < W / 2; ++ix) {
                const double* s = src + (2 * iy) * W + 2 * ix;
                dst[iy * (W / 2) + ix] = s[0] + s[1] + s[W] + s[W + 1];
            }
    }
    return g;
}

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor* bias) {
    if (x.rank() != 2 || weight.rank() != 2)
        throw ShapeError("dense expects rank-2 input and weight");
    if (x.extent(1) != weight.extent(1))
        throw ShapeError("dense feature mismatch: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
    Tensor out = matmul(x, transpose(weight));
    if (bias) {
        if (bias->rank() != 1 || bias->extent(0) != weight.extent(0))
            throw ShapeError("dense bias must have shape {n_out}");
        const std::size_t b = out.extent(0), n = out.extent(1);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < n; ++j) out(i, j) += (*bias)[j];
    }
    return out;
}

DenseGrad dense_backward(const Tensor& upstream, const Tensor& x, const Tensor& weight,
                         bool with_bias) {
    if (upstream.rank() != 2 || upstream.extent(0) != x.extent(0) ||
        upstream.extent(1) != weight.extent(0))
        throw ShapeError("dense upstream shape mismatch");
    DenseGrad g{matmul(upstream, weight), matmul(transpose(upstream), x),
                Tensor({weight.extent(0)})};
    if (with_bias) {
        const std::size_t b = upstream.extent(0), n = upstream.extent(1);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < n; ++j) g.d_bias[j] += upstream(i, j);
    }
    return g;
}

LossGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy expects rank-2 logits");
    const std::size_t b = logits.extent(0), c = logits.extent(1);
    if (labels.size() != b) throw ShapeError("label count does not match batch size");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= c)
            throw DomainError("label out of range: " + std::to_string(l));

    LossGrad r{0.0, Tensor(logits.shape())};
    for (std::size_t i = 0; i < b; ++i) {
        const double* row = logits.raw() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        r.value += lse - row[static_cast<std::size_t>(labels[i])];
        double* grow = r.grad.raw() + i * c;
        for (std::size_t j = 0; j < c; ++j) grow[j] = std::exp(row[j] - mx) / z;
        grow[static_cast<std::size_t>(labels[i])] -= 1.0;
    }
    r.value /= static_cast<double>(b);
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] /= static_cast<double>(b);
    return r;
}

LossGrad dice_loss(const Tensor& pred, const Tensor& target, double eps) {
    if (!pred.same_shape(target))
        throw ShapeError("dice_loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    double sp = 0.0, st = 0.0, spt = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        sp += pred[i];
        st += target[i];
        spt += pred[i] * target[i];
    }
    const double num = 2.0 * spt + eps;
    const double den = sp + st + eps;
    LossGrad r{1.0 - num / den, Tensor(pred.shape())};
    const double den2 = den * den;
    for (std::size_t i = 0; i < pred.size(); ++i)
        r.grad[i] = -(2.0 * target[i] * den - num) / den2;
    return r;
}

double dice_coefficient(const Tensor& pred, const Tensor& target, double eps) {
    if (!pred.same_shape(target)) throw ShapeError("dice_coefficient shape mismatch");
    double sa = 0.0, sb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double a = pred[i] >= 0.5 ? 1.0 : 0.0;
        const double b = target[i] >= 0.5 ? 1.0 : 0.0;
        sa += a;
        sb += b;
        sab += a * b;
    }
    return (2.0 * sab + eps) / (sa + sb + eps);
}

}  // namespace sfconv

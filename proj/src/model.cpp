#include "model.hpp"

#include <cmath>

#include "errors.hpp"
#include "rng.hpp"

namespace sfconv {

namespace {

constexpr std::uint64_t kLayerSeedTag = 0x6c61796572ull;  // per-layer init streams

std::string layer_err(std::size_t i, const std::string& msg) {
    return "layer" + std::to_string(i + 1) + ": " + msg;
}

}  // namespace

Shape task_input_shape(TaskKind task) {
    return task == TaskKind::Classify ? Shape{1, 32, 32} : Shape{1, 48, 48};
}

Shape validate_backbone(const std::vector<LayerSpec>& backbone, const Shape& input,
                        TaskKind task) {
    if (input.size() != 3) throw ConfigError("per-sample input shape must be c x h x w");
    Shape cur = input;  // c,h,w while spatial; single extent after flatten
    bool spatial = true;
    for (std::size_t i = 0; i < backbone.size(); ++i) {
        const LayerSpec& s = backbone[i];
        switch (s.kind) {
            case LayerKind::Conv:
            case LayerKind::SfConv: {
                if (!spatial) throw ConfigError(layer_err(i, "convolution after flatten"));
                if (cur[0] != s.conv.c_in)
                    throw ConfigError(layer_err(i, "expects " + std::to_string(s.conv.c_in) +
                                                       " input channels, got " +
                                                       std::to_string(cur[0])));
                std::size_t oh, ow;
                try {
                    oh = conv_out_extent(cur[1], s.conv.k, s.conv.stride, s.conv.pad);
                    ow = conv_out_extent(cur[2], s.conv.k, s.conv.stride, s.conv.pad);
                } catch (const Error& e) {
                    throw ConfigError(layer_err(i, e.what()));
                }
                cur = {s.conv.c_out, oh, ow};
                break;
            }
            case LayerKind::Pool:
                if (!spatial) throw ConfigError(layer_err(i, "pool after flatten"));
                if (cur[1] < 2 || cur[2] < 2)
                    throw ConfigError(layer_err(i, "pool needs at least 2x2 input, got " +
                                                       std::to_string(cur[1]) + "x" +
                                                       std::to_string(cur[2])));
                cur = {cur[0], cur[1] / 2, cur[2] / 2};
                break;
            case LayerKind::Upsample:
                if (!spatial) throw ConfigError(layer_err(i, "upsample after flatten"));
                cur = {cur[0], cur[1] * 2, cur[2] * 2};
                break;
            case LayerKind::Flatten:
                if (!spatial) throw ConfigError(layer_err(i, "flatten applied twice"));
                cur = {cur[0] * cur[1] * cur[2]};
                spatial = false;
                break;
            case LayerKind::Dense:
                if (spatial)
                    throw ConfigError(layer_err(i, "dense needs a flatten before it"));
                if (cur[0] != s.in_features)
                    throw ConfigError(layer_err(i, "expects " + std::to_string(s.in_features) +
                                                       " input features, got " +
                                                       std::to_string(cur[0])));
                cur = {s.out_features};
                break;
            case LayerKind::Relu:
            case LayerKind::Sigmoid:
                break;
        }
    }
    if (task == TaskKind::Classify) {
        if (cur.size() != 1)
            throw ConfigError("classification backbone must end in flatten + dense");
        if (cur[0] < 2) throw ConfigError("classification head needs at least 2 classes");
    } else {
        if (cur.size() != 3 || cur[0] != 1)
            throw ConfigError("segmentation backbone must end with one channel");
        if (cur[1] != input[1] || cur[2] != input[2])
            throw ConfigError("segmentation output " + std::to_string(cur[1]) + "x" +
                              std::to_string(cur[2]) + " does not match input " +
                              std::to_string(input[1]) + "x" + std::to_string(input[2]));
    }
    return cur;
}

Model build_model(const TrainConfig& cfg) {
    return build_model(cfg, task_input_shape(cfg.task));
}

Model build_model(const TrainConfig& cfg, const Shape& input_shape) {
    Model m;
    m.task = cfg.task;
    m.input_shape = input_shape;
    m.output_shape = validate_backbone(cfg.backbone, input_shape, cfg.task);
    for (std::size_t i = 0; i < cfg.backbone.size(); ++i) {
        const LayerSpec& s = cfg.backbone[i];
        Layer layer;
        layer.spec = s;
        const std::uint64_t layer_seed = mix64(cfg.seed ^ mix64(kLayerSeedTag + i));
        switch (s.kind) {
            case LayerKind::SfConv:
                layer.filter = init_factorized(s.conv.c_in, s.conv.c_out, s.conv.k, s.rank,
                                               s.conv.stride, s.conv.pad, layer_seed,
                                               s.with_bias);
                break;
            case LayerKind::Conv: {
                Rng rng(layer_seed);
                Tensor w({s.conv.c_out, s.conv.c_in, s.conv.k, s.conv.k});
                const double std = std::sqrt(2.0 / static_cast<double>(s.conv.c_in * s.conv.k *
                                                                       s.conv.k));
                for (auto& x : w.data()) x = rng.normal(0.0, std);
                layer.weight = std::move(w);
                if (s.with_bias) layer.bias = Tensor({s.conv.c_out});
                break;
            }
            case LayerKind::Dense: {
                Rng rng(layer_seed);
                Tensor w({s.out_features, s.in_features});
                const double std = std::sqrt(2.0 / static_cast<double>(s.in_features));
                for (auto& x : w.data()) x = rng.normal(0.0, std);
                layer.weight = std::move(w);
                if (s.with_bias) layer.bias = Tensor({s.out_features});
                break;
            }
            default:
                break;
        }
        m.layers.push_back(std::move(layer));
    }
    return m;
}

std::vector<ParamRef> model_params(Model& m) {
    std::vector<ParamRef> refs;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        Layer& l = m.layers[i];
        const std::string base = "layer" + std::to_string(i + 1) + "/";
        if (l.filter) {
            refs.push_back({base + "p", i, ParamRole::P, &l.filter->p_filters, true});
            refs.push_back({base + "q", i, ParamRole::Q, &l.filter->q_filters, true});
            if (l.filter->bias)
                refs.push_back({base + "bias", i, ParamRole::Bias, &*l.filter->bias, false});
        } else if (l.weight) {
            refs.push_back({base + "weight", i, ParamRole::Weight, &*l.weight, true});
            if (l.bias) refs.push_back({base + "bias", i, ParamRole::Bias, &*l.bias, false});
        }
    }
    return refs;
}

namespace {

Tensor layer_forward(const Layer& l, const Tensor& x, LayerTrace* tr) {
    switch (l.spec.kind) {
        case LayerKind::SfConv:
            return sfconv_forward(x, *l.filter, tr ? &tr->sf.emplace() : nullptr);
        case LayerKind::Conv:
            return conv2d_forward(x, *l.weight, l.bias ? &*l.bias : nullptr,
                                  ConvGeom::square(l.spec.conv.k, l.spec.conv.stride,
                                                   l.spec.conv.pad));
        case LayerKind::Relu:
            return relu_forward(x);
        case LayerKind::Sigmoid: {
            Tensor y = sigmoid_forward(x);
            if (tr) tr->saved_out = y;
            return y;
        }
        case LayerKind::Pool: {
            MaxPoolResult r = maxpool2x2_forward(x);
            Tensor out = r.out;
            if (tr) tr->pool = std::move(r);
            return out;
        }
        case LayerKind::Upsample:
            return upsample2x_forward(x);
        case LayerKind::Flatten: {
            if (x.rank() != 4) throw ShapeError("flatten expects a b x c x h x w input");
            return reshape(x, {x.extent(0), x.extent(1) * x.extent(2) * x.extent(3)});
        }
        case LayerKind::Dense:
            return dense_forward(x, *l.weight, l.bias ? &*l.bias : nullptr);
    }
    throw Error("unreachable layer kind");
}

}  // namespace

Tensor model_forward(const Model& m, const Tensor& batch) {
    Tensor x = batch;
    for (const Layer& l : m.layers) x = layer_forward(l, x, nullptr);
    return x;
}

ForwardTrace model_forward_trace(const Model& m, const Tensor& batch) {
    ForwardTrace trace;
    trace.layers.reserve(m.layers.size());
    Tensor x = batch;
    for (const Layer& l : m.layers) {
        LayerTrace tr;
        tr.input = x;
        Tensor y = layer_forward(l, x, &tr);
        trace.layers.push_back(std::move(tr));
        x = std::move(y);
    }
    trace.output = std::move(x);
    return trace;
}

BackwardResult model_backward(const Model& m, const ForwardTrace& trace, const Tensor& d_output) {
    if (trace.layers.size() != m.layers.size())
        throw ShapeError("trace does not match model depth");
    std::vector<Tensor> grads;
    // Collect slots first so a forward pass over layers fills them in
    // model_params order even though backward walks layers in reverse.
    std::vector<std::size_t> slot_base(m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const Layer& l = m.layers[i];
        slot_base[i] = grads.size();
        if (l.filter) {
            grads.emplace_back(Tensor(l.filter->p_filters.shape()));
            grads.emplace_back(Tensor(l.filter->q_filters.shape()));
            if (l.filter->bias) grads.emplace_back(Tensor(l.filter->bias->shape()));
        } else if (l.weight) {
            grads.emplace_back(Tensor(l.weight->shape()));
            if (l.bias) grads.emplace_back(Tensor(l.bias->shape()));
        }
    }

    Tensor up = d_output;
    for (std::size_t ri = m.layers.size(); ri-- > 0;) {
        const Layer& l = m.layers[ri];
        const LayerTrace& tr = trace.layers[ri];
        switch (l.spec.kind) {
            case LayerKind::SfConv: {
                SfconvGrad g = sfconv_backward(up, tr.input, *tr.sf, *l.filter);
                grads[slot_base[ri] + 0] = std::move(g.d_p);
                grads[slot_base[ri] + 1] = std::move(g.d_q);
                if (l.filter->bias) grads[slot_base[ri] + 2] = std::move(g.d_bias);
                up = std::move(g.d_input);
                break;
            }
            case LayerKind::Conv: {
                Conv2dGrad g = conv2d_backward(up, tr.input, *l.weight,
                                               ConvGeom::square(l.spec.conv.k,
                                                                l.spec.conv.stride,
                                                                l.spec.conv.pad),
                                               l.bias.has_value());
                grads[slot_base[ri] + 0] = std::move(g.d_weight);
                if (l.bias) grads[slot_base[ri] + 1] = std::move(g.d_bias);
                up = std::move(g.d_input);
                break;
            }
            case LayerKind::Relu:
                up = relu_backward(up, tr.input);
                break;
            case LayerKind::Sigmoid:
                up = sigmoid_backward(up, *tr.saved_out);
                break;
            case LayerKind::Pool:
                up = maxpool2x2_backward(up, *tr.pool, tr.input.shape());
                break;
            case LayerKind::Upsample:
                up = upsample2x_backward(up);
                break;
            case LayerKind::Flatten:
                up = reshape(up, tr.input.shape());
                break;
            case LayerKind::Dense: {
                DenseGrad g = dense_backward(up, tr.input, *l.weight, l.bias.has_value());
                grads[slot_base[ri] + 0] = std::move(g.d_weight);
                if (l.bias) grads[slot_base[ri] + 1] = std::move(g.d_bias);
                up = std::move(g.d_input);
                break;
            }
        }
    }
    return BackwardResult{std::move(grads), std::move(up)};
}

std::vector<const FactorizedFilter*> factorized_layers(const Model& m) {
    std::vector<const FactorizedFilter*> out;
    for (const Layer& l : m.layers)
        if (l.filter) out.push_back(&*l.filter);
    return out;
}

void add_kl_gradients(Model& m, const std::vector<ParamRef>& params, double lambda,
                      std::vector<Tensor>& grads) {
    if (lambda == 0.0) return;
    if (params.size() != grads.size()) throw ShapeError("gradient list does not match params");
    for (std::size_t slot = 0; slot < params.size(); ++slot) {
        const ParamRef& ref = params[slot];
        if (ref.role != ParamRole::P) continue;
        const Layer& l = m.layers[ref.layer_index];
        KlLayerGradient g = kl_gradient(*l.filter);
        // P slot is immediately followed by the layer's Q slot.
        Tensor& gp = grads[slot];
        Tensor& gq = grads[slot + 1];
        for (std::size_t j = 0; j < gp.size(); ++j) gp[j] += lambda * g.d_p_filters[j];
        for (std::size_t j = 0; j < gq.size(); ++j) gq[j] += lambda * g.d_q_filters[j];
    }
}

std::vector<SpectrumEntry> spectrum_report(const Model& m) {
    std::vector<SpectrumEntry> out;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const Layer& l = m.layers[i];
        if (!l.filter) continue;
        SpectrumView view = spectrum_view(*l.filter);
        Spectrum sp = normalize_spectrum(svd(view.matrix_p).sigma);
        Spectrum sq = normalize_spectrum(svd(view.matrix_q).sigma);
        SpectrumEntry e;
        e.layer_index = i;
        e.p_spectrum = sp.values;
        e.q_spectrum = sq.values;
        e.p_raw = sp.raw;
        e.q_raw = sq.raw;
        e.kl_p = kl_to_uniform(sp);
        e.kl_q = kl_to_uniform(sq);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace sfconv

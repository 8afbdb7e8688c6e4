#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "ops.hpp"
#include "regularizer.hpp"
#include "sfconv_layer.hpp"
#include "tensor.hpp"

namespace sfconv {

struct Layer {
    LayerSpec spec;
    std::optional<FactorizedFilter> filter;  // SfConv
    std::optional<Tensor> weight;            // Conv: c_out x c_in x k x k; Dense: out x in
    std::optional<Tensor> bias;              // Conv / Dense
};

struct Model {
    TaskKind task = TaskKind::Classify;
    std::vector<Layer> layers;
    Shape input_shape;   // per-sample c x h x w
    Shape output_shape;  // per-sample
};

// Per-sample input extent the synthetic tasks are built around.
Shape task_input_shape(TaskKind task);

// Walks the backbone front to back, checking channel/feature agreement and
// spatial extents at every step. Returns the per-sample output shape.
Shape validate_backbone(const std::vector<LayerSpec>& backbone, const Shape& input,
                        TaskKind task);

// Fresh parameters from cfg.seed; layer i draws from its own derived stream.
Model build_model(const TrainConfig& cfg);
Model build_model(const TrainConfig& cfg, const Shape& input_shape);

enum class ParamRole { P, Q, Weight, Bias };

// Stable walk of every trainable tensor. Names are "layer<i>/<role>" with i
// the 1-based backbone position; order is layer order, within a layer
// p, q, bias for factorized and weight, bias otherwise.
struct ParamRef {
    std::string name;
    std::size_t layer_index;  // 0-based
    ParamRole role;
    Tensor* tensor;
    bool decayable;  // weight decay applies (weights yes, biases no)
};

std::vector<ParamRef> model_params(Model& m);

struct LayerTrace {
    Tensor input;                       // saved layer input
    std::optional<SfconvTrace> sf;      // SfConv intermediate
    std::optional<MaxPoolResult> pool;  // Pool output + argmax
    std::optional<Tensor> saved_out;    // Sigmoid output
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    Tensor output;
};

// batch: b x c x h x w. The trace-free variant skips every saved tensor.
Tensor model_forward(const Model& m, const Tensor& batch);
ForwardTrace model_forward_trace(const Model& m, const Tensor& batch);

struct BackwardResult {
    std::vector<Tensor> grads;  // aligned with model_params order
    Tensor d_input;
};

BackwardResult model_backward(const Model& m, const ForwardTrace& trace, const Tensor& d_output);

// Pointers to every factorized layer, in layer order.
std::vector<const FactorizedFilter*> factorized_layers(const Model& m);

// Accumulates lambda * dKL/dparam into the matching grad slots.
void add_kl_gradients(Model& m, const std::vector<ParamRef>& params, double lambda,
                      std::vector<Tensor>& grads);

struct SpectrumEntry {
    std::size_t layer_index;  // 0-based backbone position
    std::vector<double> p_spectrum;  // normalized, descending
    std::vector<double> q_spectrum;
    std::vector<double> p_raw;  // clamped singular values
    std::vector<double> q_raw;
    double kl_p = 0.0;
    double kl_q = 0.0;
};

std::vector<SpectrumEntry> spectrum_report(const Model& m);

}  // namespace sfconv

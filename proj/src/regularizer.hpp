#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sfconv_layer.hpp"
#include "svd.hpp"
#include "tensor.hpp"

namespace sfconv {

// Normalized singular value spectrum: values sum to 1 and act as a discrete
// probability distribution over the matrix's principal directions.
struct Spectrum {
    std::vector<double> values;  // sigma / sum(sigma), after clamping
    std::vector<double> raw;     // clamped sigma, descending
};

// Raw singular values below kSigmaClampRel * sigma_0 are lifted to the floor
// before normalization, keeping every log downstream finite.
Spectrum normalize_spectrum(std::span<const double> sigma);

// KL(s || uniform_L) = sum_i s_i * ln(s_i * L); 0 iff s is uniform, at most ln L.
double kl_to_uniform(const Spectrum& s);

struct LayerKl {
    double kl_p = 0.0;
    double kl_q = 0.0;
};

LayerKl layer_kl(const FactorizedFilter& f);

struct LayerKlEntry {
    std::size_t layer_id;
    double kl_p;
    double kl_q;
};

struct NetworkKl {
    double total = 0.0;
    std::vector<LayerKlEntry> breakdown;
};

// Sum of (kl_p + kl_q) over layers, accumulated in layer order.
NetworkKl network_kl(std::span<const FactorizedFilter* const> layers);

// Gradient of kl_to_uniform(normalize_spectrum(svd(a).sigma)) with respect
// to the matrix entries. With T = sum(sigma):
//   dKL/dsigma_i = (ln(s_i L) - KL) / T
// and dKL/dA = sum_i dKL/dsigma_i * u_i v_i^T. Entries at the clamp floor
// contribute zero. Ties fall under the subgradient policy of the SVD module.
Tensor spectrum_kl_gradient(const Tensor& a);

struct KlLayerGradient {
    Tensor d_p_filters;
    Tensor d_q_filters;
};

KlLayerGradient kl_gradient(const FactorizedFilter& f);

struct RegularizerConfig {
    double lambda = 0.0;
};

// Per-step objective breakdown: total = task_loss + lambda * kl_term.
struct LossReport {
    double task_loss = 0.0;
    double kl_term = 0.0;
    double lambda = 0.0;
    double total = 0.0;
    std::vector<LayerKlEntry> per_layer;
};

LossReport combine_loss(double task_loss, const NetworkKl& kl, const RegularizerConfig& cfg);

}  // namespace sfconv

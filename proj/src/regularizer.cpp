#include "regularizer.hpp"

#include <cmath>

namespace sfconv {

Spectrum normalize_spectrum(std::span<const double> sigma) {
    if (sigma.empty()) throw ShapeError("empty spectrum");
    double sigma0 = 0.0;
    for (double s : sigma) {
        if (s < 0.0) throw DomainError("negative singular value in spectrum");
        sigma0 = std::max(sigma0, s);
    }
    if (sigma0 == 0.0)
        throw DomainError("all-zero spectrum: dead layer (zero weight matrix)");
    const double floor = kSigmaClampRel * sigma0;
    Spectrum out;
    out.raw.reserve(sigma.size());
    double sum = 0.0;
    for (double s : sigma) {
        const double c = s < floor ? floor : s;
        out.raw.push_back(c);
        sum += c;
    }
    out.values.reserve(sigma.size());
    for (double c : out.raw) out.values.push_back(c / sum);
    return out;
}

double kl_to_uniform(const Spectrum& s) {
    const double len = static_cast<double>(s.values.size());
    double kl = 0.0;
    for (double v : s.values) kl += v * std::log(v * len);
    // clamp tiny negative rounding residue; KL is non-negative by Jensen
    return kl < 0.0 ? 0.0 : kl;
}

LayerKl layer_kl(const FactorizedFilter& f) {
    SpectrumView view = spectrum_view(f);
    LayerKl out;
    out.kl_p = kl_to_uniform(normalize_spectrum(svd(view.matrix_p).sigma));
    out.kl_q = kl_to_uniform(normalize_spectrum(svd(view.matrix_q).sigma));
    return out;
}

NetworkKl network_kl(std::span<const FactorizedFilter* const> layers) {
    NetworkKl out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        LayerKl lk = layer_kl(*layers[i]);
        out.breakdown.push_back(LayerKlEntry{i, lk.kl_p, lk.kl_q});
        out.total += lk.kl_p + lk.kl_q;
    }
    return out;
}

Tensor spectrum_kl_gradient(const Tensor& a) {
    SvdResult sv = svd(a);
    const std::size_t t = sv.sigma.size();
    Spectrum spec = normalize_spectrum(sv.sigma);
    const double kl = kl_to_uniform(spec);
    double total = 0.0;
    for (double c : spec.raw) total += c;
    const double len = static_cast<double>(t);
    const double floor = kSigmaClampRel * sv.sigma[0];

    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor grad({m, n});
    for (std::size_t i = 0; i < t; ++i) {
        if (sv.sigma[i] < floor) continue;  // clamped: locally flat
        const double coeff = (std::log(spec.values[i] * len) - kl) / total;
        // per-value gradient owns the near-tie subgradient policy and its
        // diagnostics counter
        Tensor gi = singular_value_gradient(sv, i);
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += coeff * gi[j];
    }
    return grad;
}

KlLayerGradient kl_gradient(const FactorizedFilter& f) {
    SpectrumView view = spectrum_view(f);
    Tensor gp = spectrum_kl_gradient(view.matrix_p);
    Tensor gq = spectrum_kl_gradient(view.matrix_q);
    return KlLayerGradient{filters_from_matrix_p(gp, f.cfg.c_out, f.rank, f.cfg.k),
                           filters_from_matrix_q(gq, f.rank, f.cfg.c_in, f.cfg.k)};
}

LossReport combine_loss(double task_loss, const NetworkKl& kl, const RegularizerConfig& cfg) {
    if (cfg.lambda < 0.0) throw DomainError("lambda must be non-negative");
    LossReport r;
    r.task_loss = task_loss;
    r.kl_term = kl.total;
    r.lambda = cfg.lambda;
    r.total = task_loss + cfg.lambda * kl.total;
    r.per_layer = kl.breakdown;
    return r;
}

}  // namespace sfconv

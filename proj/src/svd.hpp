#pragma once

#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace sfconv {

// Thin SVD of an m x n matrix: t = min(m, n) triplets.
//   u: m x t, columns orthonormal
//   sigma: t values, descending, >= 0
//   v: n x t, columns orthonormal
// Sign convention: the largest-magnitude component of each left singular
// vector is non-negative (first such index wins on exact ties).
struct SvdResult {
    Tensor u;
    std::vector<double> sigma;
    Tensor v;
};

// Relative tie threshold: |sigma_i - sigma_j| < kSvdTieRel * sigma_0 marks
// the pair degenerate for per-value gradients.
inline constexpr double kSvdTieRel = 1e-8;

// Relative clamp floor applied before logarithms downstream.
inline constexpr double kSigmaClampRel = 1e-12;

SvdResult svd(const Tensor& a);

// d sigma_i / dA = u_i v_i^T. Near-tie spectra are counted in the tie
// diagnostics (the value returned is a valid subgradient basis either way);
// `tied` reports the condition when non-null.
Tensor singular_value_gradient(const SvdResult& s, std::size_t i, bool* tied = nullptr);
Tensor singular_value_gradient(const Tensor& a, std::size_t i, bool* tied = nullptr);

// Process-wide count of gradient requests that hit a near-tie spectrum.
std::uint64_t svd_tie_count();
void reset_svd_tie_count();

}  // namespace sfconv

#include "svd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace sfconv {

namespace {

std::atomic<std::uint64_t> g_tie_count{0};

// One-sided Jacobi (Hestenes) on the columns of B, m x n with m >= n.
// Plane rotations orthogonalize column pairs; V accumulates them. On exit
// the columns of B are mutually orthogonal, B = U * diag(sigma), A = B V^T.
// Columns are stored contiguously (column-major) so the inner dot products
// stream linearly.
struct JacobiWork {
    std::size_t m, n;
    std::vector<double> b;  // m x n, column-major
    std::vector<double> v;  // n x n, column-major, starts as identity

    double* bcol(std::size_t j) { return b.data() + j * m; }
    double* vcol(std::size_t j) { return v.data() + j * n; }
};

void jacobi_sweeps(JacobiWork& w, double frob2) {
    const std::size_t m = w.m, n = w.n;
    const double off_limit = 1e-14 * frob2;
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off2 = 0.0;  // sum of squared off-diagonal Gram entries (p < q)
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double* bp = w.bcol(p);
                double* bq = w.bcol(q);
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += bp[i] * bp[i];
                    beta += bq[i] * bq[i];
                    gamma += bp[i] * bq[i];
                }
                off2 += gamma * gamma;
                if (gamma == 0.0) continue;
                // rotation zeroing the (p,q) Gram entry
                double zeta = (beta - alpha) / (2.0 * gamma);
                double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    double x = bp[i], y = bq[i];
                    bp[i] = c * x - s * y;
                    bq[i] = s * x + c * y;
                }
                double* vp = w.vcol(p);
                double* vq = w.vcol(q);
                for (std::size_t i = 0; i < n; ++i) {
                    double x = vp[i], y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        // off-diagonal Gram mass, counting both triangles
        if (std::sqrt(2.0 * off2) < off_limit) break;
    }
}

// SVD of a tall-or-square matrix held row-major in `a` (m >= n).
SvdResult svd_tall(const double* a, std::size_t m, std::size_t n) {
    JacobiWork w;
    w.m = m;
    w.n = n;
    w.b.assign(m * n, 0.0);
    w.v.assign(n * n, 0.0);
    double frob2 = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double x = a[i * n + j];
            w.b[j * m + i] = x;
            frob2 += x * x;
        }
    for (std::size_t j = 0; j < n; ++j) w.v[j * n + j] = 1.0;

    if (frob2 > 0.0) jacobi_sweeps(w, frob2);

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s2 = 0.0;
        const double* col = w.bcol(j);
        for (std::size_t i = 0; i < m; ++i) s2 += col[i] * col[i];
        sigma[j] = std::sqrt(s2);
    }

    // descending order, stable so equal values keep sweep order
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    Tensor u({m, n});
    Tensor v({n, n});
    std::vector<double> sig(n);
    const double sigma0 = sigma[order[0]];
    const double dead_floor = sigma0 * 1e-15;
    for (std::size_t jj = 0; jj < n; ++jj) {
        std::size_t j = order[jj];
        sig[jj] = sigma[j];
        const double* vc = w.vcol(j);
        for (std::size_t i = 0; i < n; ++i) v(i, jj) = vc[i];
        if (sigma[j] > dead_floor && sigma[j] > 0.0) {
            const double inv = 1.0 / sigma[j];
            const double* bc = w.bcol(j);
            for (std::size_t i = 0; i < m; ++i) u(i, jj) = bc[i] * inv;
        }
        // numerically dead columns are filled in below
    }

    // complete U where sigma vanished: Gram-Schmidt canonical basis vectors
    // against the columns already present, in a fixed order
    for (std::size_t jj = 0; jj < n; ++jj) {
        std::size_t j = order[jj];
        if (sigma[j] > dead_floor && sigma[j] > 0.0) continue;
        sig[jj] = sigma[j];
        std::vector<double> cand(m, 0.0);
        bool placed = false;
        for (std::size_t basis = 0; basis < m && !placed; ++basis) {
            std::fill(cand.begin(), cand.end(), 0.0);
            cand[basis] = 1.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == jj) continue;
                // skip columns not yet assigned (later dead columns are zero)
                double dot = 0.0;
                for (std::size_t i = 0; i < m; ++i) dot += cand[i] * u(i, k);
                for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, k);
            }
            double nrm2 = 0.0;
            for (double x : cand) nrm2 += x * x;
            if (nrm2 > 0.25) {
                double inv = 1.0 / std::sqrt(nrm2);
                for (std::size_t i = 0; i < m; ++i) u(i, jj) = cand[i] * inv;
                placed = true;
            }
        }
    }

    // sign convention: largest-magnitude component of each U column >= 0
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            double mag = std::abs(u(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = -u(i, j);
            for (std::size_t i = 0; i < n; ++i) v(i, j) = -v(i, j);
        }
    }

    return SvdResult{std::move(u), std::move(sig), std::move(v)};
}

}  // namespace

SvdResult svd(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("svd expects a rank-2 tensor, got " + shape_str(a.shape()));
    if (!all_finite(a)) throw DomainError("svd input contains non-finite entries");
    const std::size_t m = a.extent(0), n = a.extent(1);
    if (m >= n) return svd_tall(a.raw(), m, n);
    // work on the transpose, then swap the factors
    Tensor at = transpose(a);
    SvdResult r = svd_tall(at.raw(), n, m);
    // the sign convention is anchored to the left factor of the matrix as
    // given, so re-apply it after the swap
    SvdResult out{std::move(r.v), std::move(r.sigma), std::move(r.u)};
    const std::size_t t = out.sigma.size();
    for (std::size_t j = 0; j < t; ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            double mag = std::abs(out.u(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (out.u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, j) = -out.u(i, j);
            for (std::size_t i = 0; i < n; ++i) out.v(i, j) = -out.v(i, j);
        }
    }
    return out;
}

Tensor singular_value_gradient(const SvdResult& s, std::size_t i, bool* tied) {
    const std::size_t t = s.sigma.size();
    if (i >= t) throw ShapeError("singular value index out of range");
    const double tol = kSvdTieRel * s.sigma[0];
    bool degenerate = false;
    if (i > 0 && s.sigma[i - 1] - s.sigma[i] < tol) degenerate = true;
    if (i + 1 < t && s.sigma[i] - s.sigma[i + 1] < tol) degenerate = true;
    if (degenerate) g_tie_count.fetch_add(1, std::memory_order_relaxed);
    if (tied) *tied = degenerate;

    const std::size_t m = s.u.extent(0), n = s.v.extent(0);
    Tensor g({m, n});
    for (std::size_t r = 0; r < m; ++r) {
        const double ur = s.u(r, i);
        for (std::size_t c = 0; c < n; ++c) g(r, c) = ur * s.v(c, i);
    }
    return g;
}

Tensor singular_value_gradient(const Tensor& a, std::size_t i, bool* tied) {
    return singular_value_gradient(svd(a), i, tied);
}

std::uint64_t svd_tie_count() { return g_tie_count.load(std::memory_order_relaxed); }

void reset_svd_tie_count() { g_tie_count.store(0, std::memory_order_relaxed); }

}  // namespace sfconv

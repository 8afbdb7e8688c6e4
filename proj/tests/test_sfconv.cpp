#include <cmath>
#include <vector>

#include "doctest.h"
#include "errors.hpp"
#include "oracles.hpp"
#include "regularizer.hpp"
#include "rng.hpp"
#include "sfconv_layer.hpp"
#include "svd.hpp"
#include "tensor.hpp"

using namespace sfconv;

namespace {

double weighted_sum(const Tensor& out, const Tensor& r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * r[i];
    return acc;
}

FactorizedFilter random_filter(std::size_t c_in, std::size_t c_out, std::size_t k,
                               std::size_t r, std::size_t stride, std::size_t pad, Rng& rng,
                               bool with_bias = true) {
    FactorizedFilter f;
    f.rank = r;
    f.cfg = ConvSpec{k, stride, pad, c_in, c_out};
    f.q_filters = Tensor({r, c_in, 1, k});
    f.p_filters = Tensor({c_out, r, k, 1});
    oracle::fill_normal(f.q_filters, rng);
    oracle::fill_normal(f.p_filters, rng);
    if (with_bias) {
        f.bias = Tensor({c_out});
        oracle::fill_normal(*f.bias, rng);
    }
    return f;
}

// the k x k kernel a rank-r filter emulates: w(oc,ic,ky,kx) = sum_j p(oc,j,ky) q(j,ic,kx)
Tensor composed_kernel(const FactorizedFilter& f) {
    const std::size_t co = f.cfg.c_out, ci = f.cfg.c_in, k = f.cfg.k, r = f.rank;
    Tensor w({co, ci, k, k});
    for (std::size_t oc = 0; oc < co; ++oc)
        for (std::size_t ic = 0; ic < ci; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < r; ++j)
                        acc += f.p_filters(oc, j, ky, 0) * f.q_filters(j, ic, 0, kx);
                    w(oc, ic, ky, kx) = acc;
                }
    return w;
}

}  // namespace

TEST_CASE("parameter count formula") {
    Rng rng(1);
    auto f = random_filter(64, 64, 3, 10, 1, 1, rng, true);
    CHECK(param_count(f) == 3 * 10 * (64 + 64) + 64);
    CHECK(param_count(f) == 3904);
    auto nb = random_filter(5, 7, 3, 2, 1, 1, rng, false);
    CHECK(param_count(nb) == 3 * 2 * (5 + 7));
}

TEST_CASE("stage geometries split the emulated kernel") {
    Rng rng(2);
    auto f = random_filter(3, 8, 5, 4, 2, 2, rng);
    ConvGeom s1 = stage1_geom(f);
    CHECK(s1.kh == 1);
    CHECK(s1.kw == 5);
    CHECK(s1.sh == 1);
    CHECK(s1.sw == 2);
    CHECK(s1.ph == 0);
    CHECK(s1.pw == 2);
    ConvGeom s2 = stage2_geom(f);
    CHECK(s2.kh == 5);
    CHECK(s2.kw == 1);
    CHECK(s2.sh == 2);
    CHECK(s2.sw == 1);
    CHECK(s2.ph == 2);
    CHECK(s2.pw == 0);
}

TEST_CASE("validate_filter rejects inconsistent shapes") {
    Rng rng(3);
    auto f = random_filter(3, 4, 3, 2, 1, 1, rng);
    validate_filter(f);
    auto bad = f;
    bad.p_filters = Tensor({4, 5, 3, 1});  // rank mismatch with q
    CHECK_THROWS_AS(validate_filter(bad), ShapeError);
    auto badk = f;
    badk.q_filters = Tensor({2, 3, 1, 5});
    CHECK_THROWS_AS(validate_filter(badk), ShapeError);
    auto badb = f;
    badb.bias = Tensor({7});
    CHECK_THROWS_AS(validate_filter(badb), ShapeError);
}

TEST_CASE("output geometry equals the emulated full convolution") {
    Rng rng(4);
    for (std::size_t k : {std::size_t(1), std::size_t(3), std::size_t(5)}) {
        for (std::size_t s : {std::size_t(1), std::size_t(2)}) {
            for (std::size_t p : {std::size_t(0), std::size_t(1), k / 2}) {
                const std::size_t h = 9, w = 11;
                if (h + 2 * p < k || w + 2 * p < k) continue;
                auto f = random_filter(2, 3, k, 2, s, p, rng);
                Tensor x({2, 2, h, w});
                oracle::fill_normal(x, rng);
                Tensor out = sfconv_forward(x, f);
                CHECK(out.extent(2) == conv_out_extent(h, k, s, p));
                CHECK(out.extent(3) == conv_out_extent(w, k, s, p));
                CHECK(out.extent(1) == 3);
            }
        }
    }
}

TEST_CASE("composition equals the full convolution with the composed kernel") {
    // With stride 1 the two 1-D stages compose exactly to the k x k kernel
    // P.Q; padding only sees zeros in the same places.
    Rng rng(5);
    for (std::size_t k : {std::size_t(1), std::size_t(3), std::size_t(5)}) {
        for (std::size_t r : {std::size_t(1), std::size_t(3)}) {
            const std::size_t p = k / 2;
            auto f = random_filter(2, 3, k, r, 1, p, rng);
            Tensor x({2, 2, 8, 9});
            oracle::fill_normal(x, rng);
            Tensor got = sfconv_forward(x, f);
            Tensor want =
                oracle::conv2d(x, composed_kernel(f), f.bias ? &*f.bias : nullptr,
                               ConvGeom::square(k, 1, p));
            REQUIRE(got.shape() == want.shape());
            CHECK(oracle::max_abs_diff(got, want) < 1e-10);
        }
    }
}

TEST_CASE("strided composition still equals the strided full convolution") {
    // horizontal stride on stage one, vertical stride on stage two: the two
    // subsamplings commute with the per-axis kernels
    Rng rng(55);
    for (std::size_t s : {std::size_t(2), std::size_t(3)}) {
        auto f = random_filter(2, 3, 3, 2, s, 1, rng);
        Tensor x({1, 2, 9, 10});
        oracle::fill_normal(x, rng);
        Tensor got = sfconv_forward(x, f);
        Tensor want = oracle::conv2d(x, composed_kernel(f), f.bias ? &*f.bias : nullptr,
                                     ConvGeom::square(3, s, 1));
        REQUIRE(got.shape() == want.shape());
        CHECK(oracle::max_abs_diff(got, want) < 1e-10);
    }
}

TEST_CASE("zero-padding composition holds without padding too") {
    Rng rng(6);
    auto f = random_filter(1, 1, 3, 2, 1, 0, rng);
    Tensor x({1, 1, 6, 6});
    oracle::fill_normal(x, rng);
    Tensor got = sfconv_forward(x, f);
    Tensor want = oracle::conv2d(x, composed_kernel(f), f.bias ? &*f.bias : nullptr,
                                 ConvGeom::square(3, 1, 0));
    CHECK(oracle::max_abs_diff(got, want) < 1e-10);
}

TEST_CASE("a zeroed factorization leaves only the bias") {
    Rng rng(7);
    auto f = random_filter(2, 3, 3, 2, 1, 1, rng);
    f.q_filters = Tensor({2, 2, 1, 3});
    Tensor x({1, 2, 4, 4});
    oracle::fill_normal(x, rng);
    Tensor out = sfconv_forward(x, f);
    for (std::size_t oc = 0; oc < 3; ++oc)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t xx = 0; xx < 4; ++xx)
                CHECK(out(0, oc, y, xx) == (*f.bias)[oc]);
}

TEST_CASE("backward gradients match finite differences") {
    Rng rng(8);
    auto f = random_filter(3, 4, 3, 2, 1, 1, rng);
    Tensor x({2, 3, 6, 6});
    oracle::fill_normal(x, rng);
    SfconvTrace trace{Tensor({1})};
    Tensor out = sfconv_forward(x, f, &trace);
    Tensor r(out.shape());
    oracle::fill_normal(r, rng);
    SfconvGrad an = sfconv_backward(r, x, trace, f);

    auto loss_with = [&](const FactorizedFilter& g) {
        return weighted_sum(sfconv_forward(x, g), r);
    };
    Tensor fd_q = oracle::fd_gradient(
        [&](const Tensor& t) {
            auto g = f;
            g.q_filters = t;
            return loss_with(g);
        },
        f.q_filters);
    Tensor fd_p = oracle::fd_gradient(
        [&](const Tensor& t) {
            auto g = f;
            g.p_filters = t;
            return loss_with(g);
        },
        f.p_filters);
    Tensor fd_b = oracle::fd_gradient(
        [&](const Tensor& t) {
            auto g = f;
            g.bias = t;
            return loss_with(g);
        },
        *f.bias);
    Tensor fd_x = oracle::fd_gradient([&](const Tensor& t) { return weighted_sum(sfconv_forward(t, f), r); }, x);
    CHECK(oracle::rel_inf_err(an.d_q, fd_q) < 1e-7);
    CHECK(oracle::rel_inf_err(an.d_p, fd_p) < 1e-7);
    CHECK(oracle::rel_inf_err(an.d_bias, fd_b) < 1e-7);
    CHECK(oracle::rel_inf_err(an.d_input, fd_x) < 1e-7);
}

TEST_CASE("strided backward matches finite differences") {
    Rng rng(9);
    auto f = random_filter(2, 2, 3, 2, 2, 1, rng);
    Tensor x({1, 2, 7, 7});
    oracle::fill_normal(x, rng);
    SfconvTrace trace{Tensor({1})};
    Tensor out = sfconv_forward(x, f, &trace);
    Tensor r(out.shape());
    oracle::fill_normal(r, rng);
    SfconvGrad an = sfconv_backward(r, x, trace, f);
    Tensor fd_x = oracle::fd_gradient([&](const Tensor& t) { return weighted_sum(sfconv_forward(t, f), r); }, x);
    CHECK(oracle::rel_inf_err(an.d_input, fd_x) < 1e-7);
}

TEST_CASE("init is deterministic with the documented scales") {
    auto a = init_factorized(4, 6, 3, 5, 1, 1, 1234);
    auto b = init_factorized(4, 6, 3, 5, 1, 1, 1234);
    CHECK(oracle::max_abs_diff(a.q_filters, b.q_filters) == 0.0);
    CHECK(oracle::max_abs_diff(a.p_filters, b.p_filters) == 0.0);
    auto c = init_factorized(4, 6, 3, 5, 1, 1, 1235);
    CHECK(oracle::max_abs_diff(a.q_filters, c.q_filters) > 0.0);

    REQUIRE(a.bias.has_value());
    for (std::size_t i = 0; i < a.bias->size(); ++i) CHECK((*a.bias)[i] == 0.0);
    auto nb = init_factorized(4, 6, 3, 5, 1, 1, 1234, false);
    CHECK_FALSE(nb.bias.has_value());

    // empirical variance of q close to 2 / (c_in k); >= 1e4 samples
    auto big = init_factorized(340, 8, 3, 10, 1, 1, 77);
    double s2 = 0.0;
    for (std::size_t i = 0; i < big.q_filters.size(); ++i)
        s2 += big.q_filters[i] * big.q_filters[i];
    const double var_q = s2 / double(big.q_filters.size());
    const double want_q = 2.0 / (340.0 * 3.0);
    CHECK(std::abs(var_q - want_q) < 0.2 * want_q);

    // same for p against 2 / (r k)
    auto bigp = init_factorized(8, 120, 3, 30, 1, 1, 78);
    s2 = 0.0;
    for (std::size_t i = 0; i < bigp.p_filters.size(); ++i)
        s2 += bigp.p_filters[i] * bigp.p_filters[i];
    const double var_p = s2 / double(bigp.p_filters.size());
    const double want_p = 2.0 / (30.0 * 3.0);
    CHECK(std::abs(var_p - want_p) < 0.2 * want_p);
}

TEST_CASE("spectrum view shapes and the p alignment") {
    Rng rng(10);
    auto f = random_filter(5, 4, 3, 2, 1, 1, rng);
    SpectrumView v = spectrum_view(f);
    REQUIRE(v.matrix_p.shape() == Shape{4 * 3, 2});
    REQUIRE(v.matrix_q.shape() == Shape{2, 5 * 3});

    // rows of matrix_p are (out-channel, vertical-tap) pairs
    for (std::size_t oc = 0; oc < 4; ++oc)
        for (std::size_t u = 0; u < 3; ++u)
            for (std::size_t j = 0; j < 2; ++j)
                CHECK(v.matrix_p(oc * 3 + u, j) == f.p_filters(oc, j, u, 0));

    // columns of matrix_q are (in-channel, horizontal-tap) pairs
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t ic = 0; ic < 5; ++ic)
            for (std::size_t t = 0; t < 3; ++t)
                CHECK(v.matrix_q(j, ic * 3 + t) == f.q_filters(j, ic, 0, t));
}

TEST_CASE("matrix and filter views round trip") {
    Rng rng(11);
    auto f = random_filter(3, 4, 5, 2, 1, 2, rng);
    Tensor mp = matrix_p_from_filters(f.p_filters);
    Tensor back_p = filters_from_matrix_p(mp, 4, 2, 5);
    CHECK(oracle::max_abs_diff(back_p, f.p_filters) == 0.0);
    Tensor mq = matrix_q_from_filters(f.q_filters);
    Tensor back_q = filters_from_matrix_q(mq, 2, 3, 5);
    CHECK(oracle::max_abs_diff(back_q, f.q_filters) == 0.0);
}

TEST_CASE("normalize_spectrum and kl values") {
    std::vector<double> sv{3.0, 2.0, 1.0};
    Spectrum s = normalize_spectrum(sv);
    CHECK(s.values[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.values[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(s.values[2] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

    // direct sum for s = (0.7, 0.2, 0.1)
    std::vector<double> sv2{0.7, 0.2, 0.1};
    Spectrum s2 = normalize_spectrum(sv2);
    const double want = 0.7 * std::log(0.7 * 3) + 0.2 * std::log(0.2 * 3) + 0.1 * std::log(0.1 * 3);
    CHECK(kl_to_uniform(s2) == doctest::Approx(want).epsilon(1e-12));

    // uniform spectrum has zero divergence
    std::vector<double> u{2.0, 2.0, 2.0, 2.0};
    CHECK(kl_to_uniform(normalize_spectrum(u)) == 0.0);

    std::vector<double> neg{1.0, -0.5};
    CHECK_THROWS_AS(normalize_spectrum(neg), DomainError);
    std::vector<double> zero{0.0, 0.0};
    CHECK_THROWS_AS(normalize_spectrum(zero), DomainError);
    std::vector<double> empty;
    CHECK_THROWS_AS(normalize_spectrum(empty), ShapeError);
}

TEST_CASE("kl bounds and scale invariance") {
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t len = 2 + rng.index(8);
        std::vector<double> sv(len);
        for (auto& v : sv) v = std::exp(rng.uniform(-3.0, 3.0));
        const double kl = kl_to_uniform(normalize_spectrum(sv));
        CHECK(kl >= 0.0);
        CHECK(kl <= std::log(double(len)) + 1e-12);

        std::vector<double> scaled = sv;
        for (auto& v : scaled) v *= 1e6;
        CHECK(std::abs(kl_to_uniform(normalize_spectrum(scaled)) - kl) < 1e-10);
    }

    // a one-hot spectrum approaches the log-length ceiling
    std::vector<double> peak{1.0, 0.0, 0.0};
    CHECK(kl_to_uniform(normalize_spectrum(peak)) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("layer and network kl aggregate p and q sides") {
    Rng rng(13);
    auto f1 = random_filter(3, 4, 3, 2, 1, 1, rng);
    auto f2 = random_filter(4, 5, 3, 3, 1, 1, rng);
    LayerKl k1 = layer_kl(f1);
    CHECK(k1.kl_p >= 0.0);
    CHECK(k1.kl_q >= 0.0);

    std::vector<const FactorizedFilter*> fs{&f1, &f2};
    NetworkKl nk = network_kl(fs);
    LayerKl k2 = layer_kl(f2);
    CHECK(nk.total ==
          doctest::Approx(k1.kl_p + k1.kl_q + k2.kl_p + k2.kl_q).epsilon(1e-12));
    REQUIRE(nk.breakdown.size() == 2);
    CHECK(nk.breakdown[1].layer_id == 1);
    CHECK(nk.breakdown[1].kl_p == doctest::Approx(k2.kl_p));
}

TEST_CASE("spectrum kl gradient matches finite differences") {
    Rng rng(14);
    for (int rep = 0; rep < 8; ++rep) {
        const std::size_t m = 3 + rng.index(6), n = 2 + rng.index(4);
        Tensor a({m, n});
        oracle::fill_normal(a, rng);
        Tensor an = spectrum_kl_gradient(a);
        Tensor fd = oracle::fd_gradient(
            [](const Tensor& t) {
                return kl_to_uniform(normalize_spectrum(svd(t).sigma));
            },
            a, 1e-6);
        CHECK(oracle::rel_inf_err(an, fd) < 1e-5);
    }
}

TEST_CASE("kl gradient is scale balanced and vanishes on flat spectra") {
    // the divergence is scale invariant, so <grad, A> = 0 (Euler relation)
    Rng rng(15);
    Tensor a({5, 4});
    oracle::fill_normal(a, rng);
    Tensor g = spectrum_kl_gradient(a);
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += g[i] * a[i];
    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) scale = std::max(scale, std::abs(g[i]));
    CHECK(std::abs(dot) < 1e-10 * std::max(1.0, scale));
}

TEST_CASE("kl layer gradient matches finite differences on both factors") {
    Rng rng(16);
    auto f = random_filter(3, 4, 3, 3, 1, 1, rng);
    KlLayerGradient an = kl_gradient(f);

    auto kl_of = [](const FactorizedFilter& g) {
        LayerKl lk = layer_kl(g);
        return lk.kl_p + lk.kl_q;
    };
    Tensor fd_p = oracle::fd_gradient(
        [&](const Tensor& t) {
            auto g = f;
            g.p_filters = t;
            return kl_of(g);
        },
        f.p_filters, 1e-6);
    Tensor fd_q = oracle::fd_gradient(
        [&](const Tensor& t) {
            auto g = f;
            g.q_filters = t;
            return kl_of(g);
        },
        f.q_filters, 1e-6);
    CHECK(oracle::rel_inf_err(an.d_p_filters, fd_p) < 1e-5);
    CHECK(oracle::rel_inf_err(an.d_q_filters, fd_q) < 1e-5);
}

TEST_CASE("combine_loss applies the lambda weight") {
    NetworkKl nk;
    nk.total = 0.25;
    LossReport r = combine_loss(2.0, nk, RegularizerConfig{4.0});
    CHECK(r.task_loss == 2.0);
    CHECK(r.kl_term == 0.25);
    CHECK(r.lambda == 4.0);
    CHECK(r.total == doctest::Approx(3.0));
}

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "binio.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "tensor_io.hpp"

using namespace sfconv;

namespace {

std::filesystem::path temp_dir() {
    auto p = std::filesystem::temp_directory_path() / "sfconv_test_tensor";
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("shape numel and construction") {
    CHECK(shape_numel({4}) == 4);
    CHECK(shape_numel({2, 3, 4}) == 24);
    CHECK_THROWS_AS(shape_numel({}), ShapeError);
    CHECK_THROWS_AS(shape_numel({2, 0}), ShapeError);

    Tensor t({2, 3});
    CHECK(t.rank() == 2);
    CHECK(t.extent(0) == 2);
    CHECK(t.extent(1) == 3);
    CHECK(t.size() == 6);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

    Tensor f = Tensor::full({2, 2}, 1.5);
    for (std::size_t i = 0; i < 4; ++i) CHECK(f[i] == 1.5);

    Tensor empty;
    CHECK(empty.rank() == 0);
    CHECK(empty.size() == 0);
}

TEST_CASE("row-major indexing layout") {
    Tensor t({2, 3, 4, 5});
    t(1, 2, 3, 4) = 7.0;
    // row-major: offset = ((1*3 + 2)*4 + 3)*5 + 4
    CHECK(t[((1 * 3 + 2) * 4 + 3) * 5 + 4] == 7.0);
    Tensor m({3, 4});
    m(2, 1) = -2.0;
    CHECK(m[2 * 4 + 1] == -2.0);
}

TEST_CASE("matmul matches the naive oracle") {
    Rng rng(11);
    for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1},
                           std::array<std::size_t, 3>{7, 5, 9},
                           std::array<std::size_t, 3>{4, 12, 3}}) {
        Tensor a({m, k}), b({k, n});
        oracle::fill_uniform(a, rng);
        oracle::fill_uniform(b, rng);
        Tensor got = matmul(a, b);
        Tensor want = oracle::matmul(a, b);
        CHECK(oracle::max_abs_diff(got, want) < 1e-12);
    }
}

TEST_CASE("matmul shape mismatch throws") {
    Tensor a({2, 3}), b({4, 2});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("transpose") {
    Tensor a({2, 3});
    for (std::size_t i = 0; i < 6; ++i) a[i] = double(i);
    Tensor t = transpose(a);
    CHECK(t.extent(0) == 3);
    CHECK(t.extent(1) == 2);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(t(j, i) == a(i, j));
}

TEST_CASE("reshape keeps data, rejects bad counts") {
    Tensor a({2, 6});
    for (std::size_t i = 0; i < 12; ++i) a[i] = double(i);
    Tensor b = reshape(a, {3, 4});
    for (std::size_t i = 0; i < 12; ++i) CHECK(b[i] == double(i));
    CHECK_THROWS_AS(reshape(a, {5, 2}), ShapeError);
}

TEST_CASE("elementwise ops and scalar overloads") {
    Tensor a({3}), b({3});
    a[0] = 1; a[1] = -2; a[2] = 4;
    b[0] = 2; b[1] = 3; b[2] = -1;
    CHECK(add(a, b)[1] == 1.0);
    CHECK(sub(a, b)[2] == 5.0);
    CHECK(mul(a, b)[0] == 2.0);
    CHECK(div(a, b)[1] == doctest::Approx(-2.0 / 3.0));
    CHECK(maximum(a, b)[1] == 3.0);
    CHECK(add(a, 1.0)[1] == -1.0);
    CHECK(mul(a, -2.0)[2] == -8.0);
    CHECK(maximum(a, 0.0)[1] == 0.0);
    Tensor c({4});
    CHECK_THROWS_AS(add(a, c), ShapeError);
}

TEST_CASE("exp, log and all_finite") {
    Tensor a({2});
    a[0] = 0.0;
    a[1] = 1.0;
    CHECK(sfconv::exp(a)[0] == 1.0);
    CHECK(sfconv::log(sfconv::exp(a))[1] == doctest::Approx(1.0).epsilon(1e-12));
    Tensor bad({1});
    bad[0] = -1.0;
    CHECK_THROWS_AS(sfconv::log(bad), DomainError);
    Tensor inf = Tensor::full({2}, 1.0);
    CHECK(all_finite(inf));
    inf[1] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(all_finite(inf));
}

TEST_CASE("mix64 scrambles nearby inputs") {
    CHECK(mix64(0) != 0);
    CHECK(mix64(1) != mix64(2));
    CHECK(mix64(1) != 1);
}

TEST_CASE("rng determinism and stream separation") {
    Rng a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
        all_equal = all_equal && (x == y);
        any_diff = any_diff || (x != z);
    }
    CHECK(all_equal);
    CHECK(any_diff);

    Rng s1 = Rng::stream(7, 1), s2 = Rng::stream(7, 2);
    CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("rng uniform range and normal moments") {
    Rng rng(5);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);

    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal();
        sum += v;
        sum2 += v * v;
    }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng save/load restores the exact stream, spare included") {
    Rng rng(99);
    rng.normal();  // leaves the Box-Muller spare cached
    std::string st = rng.save_state();
    std::vector<double> expect;
    for (int i = 0; i < 10; ++i) expect.push_back(rng.normal());
    Rng other(1);
    other.load_state(st);
    for (int i = 0; i < 10; ++i) CHECK(other.normal() == expect[std::size_t(i)]);
}

TEST_CASE("rng shuffle is deterministic and a permutation") {
    std::vector<std::size_t> v(20);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    auto w = v;
    Rng a(3), b(3);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::sort(w.begin(), w.end());
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == i);
}

TEST_CASE("binio round trips and length-prefixed strings") {
    std::stringstream ss;
    put_u32(ss, 0xdeadbeefu);
    put_u64(ss, 0x0123456789abcdefull);
    put_f64(ss, -1234.5678);
    put_str(ss, "hello");
    CHECK(get_u32(ss) == 0xdeadbeefu);
    CHECK(get_u64(ss) == 0x0123456789abcdefull);
    CHECK(get_f64(ss) == -1234.5678);
    CHECK(get_str(ss) == "hello");

    // little-endian on the wire
    std::stringstream le;
    put_u32(le, 1);
    std::string bytes = le.str();
    REQUIRE(bytes.size() == 4);
    CHECK(bytes[0] == 1);
    CHECK(bytes[1] == 0);

    std::stringstream trunc("\x01\x02");
    CHECK_THROWS_AS(get_u32(trunc), IoError);
}

TEST_CASE("tnsr stream and file round trip") {
    Rng rng(17);
    Tensor t({2, 3, 4});
    oracle::fill_normal(t, rng);

    std::stringstream ss;
    write_tnsr(ss, t);
    Tensor back = read_tnsr(ss);
    REQUIRE(back.shape() == t.shape());
    CHECK(oracle::max_abs_diff(back, t) == 0.0);

    auto path = (temp_dir() / "t.tnsr").string();
    write_tnsr_file(t, path);
    Tensor fromfile = read_tnsr_file(path);
    CHECK(fromfile.shape() == t.shape());
    CHECK(oracle::max_abs_diff(fromfile, t) == 0.0);
}

TEST_CASE("tnsr rejects bad magic and version") {
    Tensor t({2});
    std::stringstream ss;
    write_tnsr(ss, t);
    std::string bytes = ss.str();

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    std::stringstream b1(bad_magic);
    CHECK_THROWS_AS(read_tnsr(b1), IoError);

    std::string bad_version = bytes;
    bad_version[4] = 9;
    std::stringstream b2(bad_version);
    CHECK_THROWS_AS(read_tnsr(b2), IoError);

    std::stringstream b3(bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(read_tnsr(b3), IoError);

    CHECK_THROWS_AS(read_tnsr_file((temp_dir() / "missing.tnsr").string()), IoError);
}

TEST_CASE("pgm and ppm files parse to planar raw-valued tensors") {
    auto dir = temp_dir();
    {
        std::ofstream os(dir / "img.pgm", std::ios::binary);
        os << "P5\n# comment line\n2 2\n255\n";
        unsigned char px[4] = {0, 64, 128, 255};
        os.write(reinterpret_cast<const char*>(px), 4);
    }
    Tensor g = read_image_file((dir / "img.pgm").string());
    REQUIRE(g.shape() == Shape{1, 2, 2});
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 64.0);
    CHECK(g[3] == 255.0);

    {
        std::ofstream os(dir / "img.ppm", std::ios::binary);
        os << "P6\n2 1\n255\n";
        unsigned char px[6] = {255, 0, 0, 0, 255, 0};
        os.write(reinterpret_cast<const char*>(px), 6);
    }
    Tensor c = read_image_file((dir / "img.ppm").string());
    REQUIRE(c.shape() == Shape{3, 1, 2});
    // interleaved RGB comes back planar
    CHECK(c(0, 0, 0) == 255.0);
    CHECK(c(1, 0, 0) == 0.0);
    CHECK(c(1, 0, 1) == 255.0);
    CHECK(c(2, 0, 1) == 0.0);

    Tensor t({1, 1, 1});
    write_tnsr_file(t, (dir / "x.tnsr").string());
    CHECK(read_image_file((dir / "x.tnsr").string()).shape() == Shape{1, 1, 1});
    CHECK_THROWS_AS(read_image_file((dir / "nope.png").string()), IoError);
}

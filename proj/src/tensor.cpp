#include "tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace sfconv {

std::size_t shape_numel(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor rank must be >= 1");
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape));
        if (e > std::numeric_limits<std::size_t>::max() / n)
            throw ShapeError("tensor element count overflows: " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw ShapeError("shape " + shape_str(shape_) + " does not match data length " +
                         std::to_string(data_.size()));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = value;
    return t;
}

std::size_t Tensor::offset(std::span<const std::size_t> idx) const {
    if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch");
    std::size_t off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= shape_[k]) throw ShapeError("index out of range");
        off = off * shape_[k] + idx[k];
    }
    return off;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul expects rank-2 operands, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    if (a.extent(1) != b.extent(0))
        throw ShapeError("matmul inner extents disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out({m, n});
    const double* pa = a.raw();
    const double* pb = b.raw();
    double* po = out.raw();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double aval = pa[i * k + l];
            if (aval == 0.0) continue;
            const double* brow = pb + l * n;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aval * brow[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose expects a rank-2 tensor");
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
    return out;
}

Tensor reshape(const Tensor& t, Shape new_shape) {
    std::size_t n = shape_numel(new_shape);
    if (n != t.size())
        throw ShapeError("reshape element count mismatch: " + shape_str(t.shape()) + " -> " +
                         shape_str(new_shape));
    return Tensor(std::move(new_shape), std::vector<double>(t.data().begin(), t.data().end()));
}

namespace {

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f, const char* name) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    std::vector<double> out(a.size());
    const double* pa = a.raw();
    const double* pb = b.raw();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i], pb[i]);
    return Tensor(a.shape(), std::move(out));
}

template <typename F>
Tensor map(const Tensor& a, F f) {
    std::vector<double> out(a.size());
    const double* pa = a.raw();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i]);
    return Tensor(a.shape(), std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, [](double x, double y) { return x + y; }, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, [](double x, double y) { return x - y; }, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return zip(a, b, [](double x, double y) { return x * y; }, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return zip(a, b, [](double x, double y) { return x / y; }, "div"); }
Tensor maximum(const Tensor& a, const Tensor& b) { return zip(a, b, [](double x, double y) { return x > y ? x : y; }, "maximum"); }

Tensor add(const Tensor& a, double s) { return map(a, [s](double x) { return x + s; }); }
Tensor sub(const Tensor& a, double s) { return map(a, [s](double x) { return x - s; }); }
Tensor mul(const Tensor& a, double s) { return map(a, [s](double x) { return x * s; }); }
Tensor div(const Tensor& a, double s) { return map(a, [s](double x) { return x / s; }); }
Tensor maximum(const Tensor& a, double s) { return map(a, [s](double x) { return x > s ? x : s; }); }

Tensor exp(const Tensor& a) { return map(a, [](double x) { return std::exp(x); }); }

Tensor log(const Tensor& a) {
    for (double x : a.data())
        if (!(x > 0.0)) throw DomainError("log of non-positive value");
    return map(a, [](double x) { return std::log(x); });
}

bool all_finite(const Tensor& a) {
    for (double x : a.data())
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace sfconv

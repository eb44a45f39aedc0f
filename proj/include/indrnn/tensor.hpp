#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "indrnn/errors.hpp"

namespace indrnn {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major tensor of rank 1..3. The single numeric currency of the
// library; f64 by default, f32 selectable per experiment via the template
// parameter.
template <class S>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape)
        : shape_(std::move(shape)), data_(shape_size(shape_), S{0}) {}

    TensorT(Shape shape, std::vector<S> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_size(shape_) != data_.size())
            throw ShapeError("tensor: shape " + shape_string(shape_) + " does not match data length " +
                             std::to_string(data_.size()));
    }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

    static TensorT full(Shape shape, S value) {
        TensorT t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static TensorT row_vector(std::initializer_list<S> values) {
        return TensorT({values.size()}, std::vector<S>(values));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    std::vector<S>& vec() { return data_; }
    const std::vector<S>& vec() const { return data_; }

    S& operator[](std::size_t i) { return data_[i]; }
    S operator[](std::size_t i) const { return data_[i]; }

    S& operator()(std::size_t i) {
        assert(rank() == 1);
        return data_[i];
    }
    S operator()(std::size_t i) const {
        assert(rank() == 1);
        return data_[i];
    }
    S& operator()(std::size_t i, std::size_t j) {
        assert(rank() == 2);
        return data_[i * shape_[1] + j];
    }
    S operator()(std::size_t i, std::size_t j) const {
        assert(rank() == 2);
        return data_[i * shape_[1] + j];
    }
    S& operator()(std::size_t i, std::size_t j, std::size_t k) {
        assert(rank() == 3);
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    S operator()(std::size_t i, std::size_t j, std::size_t k) const {
        assert(rank() == 3);
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool all_finite() const {
        for (S v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    TensorT reshaped(Shape new_shape) const {
        if (shape_size(new_shape) != data_.size())
            throw ShapeError("reshape: " + shape_string(shape_) + " -> " + shape_string(new_shape));
        return TensorT(std::move(new_shape), data_);
    }

    void fill(S value) {
        for (auto& v : data_) v = value;
    }

    bool operator==(const TensorT& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape shape_;
    std::vector<S> data_;
};

using Tensor = TensorT<double>;

namespace detail {
// Raw GEMM-style kernel: C[p,r] = sum_q A[p,q] B[q,r]. Specialized to BLAS
// for float/double in tensor_blas.hpp when enabled; the generic version is a
// cache-friendly ikj loop.
template <class S>
void matmul_kernel(const S* a, const S* b, S* c, std::size_t P, std::size_t Q, std::size_t R) {
    for (std::size_t p = 0; p < P; ++p) {
        S* crow = c + p * R;
        for (std::size_t r = 0; r < R; ++r) crow[r] = S{0};
        for (std::size_t q = 0; q < Q; ++q) {
            const S apq = a[p * Q + q];
            const S* brow = b + q * R;
            for (std::size_t r = 0; r < R; ++r) crow[r] += apq * brow[r];
        }
    }
}

// C += A^T B with A: K×P, B: K×R.
template <class S>
void matmul_atb_accum_kernel(const S* a, const S* b, S* c, std::size_t K, std::size_t P, std::size_t R) {
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t p = 0; p < P; ++p) {
            const S akp = a[k * P + p];
            if (akp == S{0}) continue;
            const S* brow = b + k * R;
            S* crow = c + p * R;
            for (std::size_t r = 0; r < R; ++r) crow[r] += akp * brow[r];
        }
}

// C = A B^T with A: P×Q, B: R×Q.
template <class S>
void matmul_abt_kernel(const S* a, const S* b, S* c, std::size_t P, std::size_t Q, std::size_t R) {
    for (std::size_t p = 0; p < P; ++p) {
        const S* arow = a + p * Q;
        S* crow = c + p * R;
        for (std::size_t r = 0; r < R; ++r) {
            const S* brow = b + r * Q;
            S acc{0};
            for (std::size_t q = 0; q < Q; ++q) acc += arow[q] * brow[q];
            crow[r] = acc;
        }
    }
}

#ifdef INDRNN_WITH_OPENBLAS
template <>
void matmul_kernel<double>(const double* a, const double* b, double* c, std::size_t P, std::size_t Q,
                           std::size_t R);
template <>
void matmul_kernel<float>(const float* a, const float* b, float* c, std::size_t P, std::size_t Q,
                          std::size_t R);
template <>
void matmul_atb_accum_kernel<double>(const double* a, const double* b, double* c, std::size_t K,
                                     std::size_t P, std::size_t R);
template <>
void matmul_atb_accum_kernel<float>(const float* a, const float* b, float* c, std::size_t K, std::size_t P,
                                    std::size_t R);
template <>
void matmul_abt_kernel<double>(const double* a, const double* b, double* c, std::size_t P, std::size_t Q,
                               std::size_t R);
template <>
void matmul_abt_kernel<float>(const float* a, const float* b, float* c, std::size_t P, std::size_t Q,
                              std::size_t R);
#endif
}  // namespace detail

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expected rank-2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    TensorT<S> c({a.dim(0), b.dim(1)});
    detail::matmul_kernel<S>(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

// C += A^T * B, with A: K×P, B: K×R, C: P×R. Used for weight gradients.
template <class S>
void matmul_at_b_accum(const TensorT<S>& a, const TensorT<S>& b, TensorT<S>& c) {
    if (a.dim(0) != b.dim(0) || c.dim(0) != a.dim(1) || c.dim(1) != b.dim(1))
        throw ShapeError("matmul_at_b_accum: " + shape_string(a.shape()) + "^T x " + shape_string(b.shape()) +
                         " -> " + shape_string(c.shape()));
    detail::matmul_atb_accum_kernel<S>(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
}

// A * B^T, with A: P×Q, B: R×Q. Used for x·W^T with N×M weight storage.
template <class S>
TensorT<S> matmul_abt(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("matmul_abt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
    TensorT<S> c({a.dim(0), b.dim(0)});
    detail::matmul_abt_kernel<S>(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(0));
    return c;
}

template <class S>
TensorT<S> transpose(const TensorT<S>& a) {
    if (a.rank() != 2) throw ShapeError("transpose: expected rank-2, got " + shape_string(a.shape()));
    TensorT<S> t({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) t(j, i) = a(i, j);
    return t;
}

namespace detail {
template <class S, class F>
TensorT<S> binary_op(const TensorT<S>& a, const TensorT<S>& b, F f, const char* name) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(name) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    TensorT<S> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}
template <class S, class F>
TensorT<S> unary_op(const TensorT<S>& a, F f) {
    TensorT<S> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}
}  // namespace detail

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::binary_op(a, b, [](S x, S y) { return x + y; }, "add");
}
template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::binary_op(a, b, [](S x, S y) { return x - y; }, "sub");
}
template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::binary_op(a, b, [](S x, S y) { return x * y; }, "mul");
}
template <class S>
TensorT<S> add_scalar(const TensorT<S>& a, S s) {
    return detail::unary_op(a, [s](S x) { return x + s; });
}
template <class S>
TensorT<S> scale(const TensorT<S>& a, S s) {
    return detail::unary_op(a, [s](S x) { return x * s; });
}

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
    return detail::unary_op(a, [](S x) { return x > S{0} ? x : S{0}; });
}
// Subgradient at 0 is taken as 0, keeping the derivative in {0, 1} exactly.
template <class S>
TensorT<S> relu_grad(const TensorT<S>& a) {
    return detail::unary_op(a, [](S x) { return x > S{0} ? S{1} : S{0}; });
}
template <class S>
TensorT<S> tanh(const TensorT<S>& a) {
    return detail::unary_op(a, [](S x) { return static_cast<S>(std::tanh(static_cast<double>(x))); });
}
template <class S>
TensorT<S> tanh_grad(const TensorT<S>& a) {
    return detail::unary_op(a, [](S x) {
        const double t = std::tanh(static_cast<double>(x));
        return static_cast<S>(1.0 - t * t);
    });
}
template <class S>
TensorT<S> sigmoid(const TensorT<S>& a) {
    return detail::unary_op(a, [](S x) { return static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); });
}

template <class S>
double sum(const TensorT<S>& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]);
    return acc;
}

template <class S>
double max_abs(const TensorT<S>& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i])));
    return m;
}

template <class S>
double max_abs_diff(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("max_abs_diff: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

// Activation set used by the recurrent layers.
enum class Activation { Identity, Relu, Tanh };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

template <class S>
inline S activate(Activation a, S x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::Relu: return x > S{0} ? x : S{0};
        case Activation::Tanh: return static_cast<S>(std::tanh(static_cast<double>(x)));
    }
    return x;
}

// Derivative evaluated at the pre-activation value.
template <class S>
inline S activate_grad(Activation a, S pre) {
    switch (a) {
        case Activation::Identity: return S{1};
        case Activation::Relu: return pre > S{0} ? S{1} : S{0};
        case Activation::Tanh: {
            const double t = std::tanh(static_cast<double>(pre));
            return static_cast<S>(1.0 - t * t);
        }
    }
    return S{1};
}

}  // namespace indrnn

#pragma once

#include <optional>
#include <string>
#include <utility>

#include "indrnn/rng.hpp"
#include "indrnn/tensor.hpp"

// Forward and backward passes for the recurrent layers. All sequence tensors
// are time-major T×B×N; the recurrence loop strides contiguously over the
// batch. Backward passes are hand-written BPTT against caches captured in the
// forward pass.

namespace indrnn {

enum class Mode { Train, Eval };

namespace detail {
template <class S>
void expect_rank3(const TensorT<S>& x, const char* who) {
    if (x.rank() != 3) throw ShapeError(std::string(who) + ": expected T×B×N tensor, got " + shape_string(x.shape()));
}

template <class S>
void check_finite_step(const S* row, std::size_t n, std::size_t t, const char* who) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(static_cast<double>(row[i])))
            throw NumericError(std::string(who) + ": non-finite hidden state first appears at time step " +
                               std::to_string(t));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Dense (fully connected), optionally shared over time.

template <class S>
struct DenseParams {
    TensorT<S> W;  // N×M
    TensorT<S> b;  // N

    std::size_t in() const { return W.dim(1); }
    std::size_t out() const { return W.dim(0); }
};

template <class S>
struct DenseCache {
    TensorT<S> x;  // B×M (or flattened TB×M for time-shared use)
};

template <class S>
struct DenseGrads {
    TensorT<S> W, b, x;
};

template <class S>
std::pair<TensorT<S>, DenseCache<S>> dense_forward(const TensorT<S>& x, const DenseParams<S>& p) {
    if (x.rank() != 2 || x.dim(1) != p.in())
        throw ShapeError("dense_forward: input " + shape_string(x.shape()) + " vs weight " +
                         shape_string(p.W.shape()));
    TensorT<S> y = matmul_abt(x, p.W);
    const std::size_t B = y.dim(0), N = y.dim(1);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t n = 0; n < N; ++n) y(i, n) += p.b(n);
    return {std::move(y), DenseCache<S>{x}};
}

template <class S>
DenseGrads<S> dense_backward(const TensorT<S>& gy, const DenseCache<S>& cache, const DenseParams<S>& p) {
    if (gy.rank() != 2 || gy.dim(1) != p.out() || gy.dim(0) != cache.x.dim(0))
        throw ShapeError("dense_backward: grad " + shape_string(gy.shape()) + " vs cache " +
                         shape_string(cache.x.shape()));
    DenseGrads<S> g;
    g.W = TensorT<S>::zeros(p.W.shape());
    matmul_at_b_accum(gy, cache.x, g.W);  // N×M
    g.b = TensorT<S>({p.out()});
    const std::size_t B = gy.dim(0), N = gy.dim(1);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t n = 0; n < N; ++n) g.b(n) += gy(i, n);
    g.x = matmul(gy, p.W);  // B×M
    return g;
}

// Dense applied at every time step with shared weights: T×B×M -> T×B×N.
template <class S>
std::pair<TensorT<S>, DenseCache<S>> timedist_dense_forward(const TensorT<S>& x, const DenseParams<S>& p) {
    detail::expect_rank3(x, "timedist_dense_forward");
    const std::size_t T = x.dim(0), B = x.dim(1);
    auto [y, cache] = dense_forward(x.reshaped({T * B, x.dim(2)}), p);
    return {y.reshaped({T, B, p.out()}), std::move(cache)};
}

template <class S>
DenseGrads<S> timedist_dense_backward(const TensorT<S>& gy, const DenseCache<S>& cache,
                                      const DenseParams<S>& p) {
    detail::expect_rank3(gy, "timedist_dense_backward");
    const std::size_t T = gy.dim(0), B = gy.dim(1);
    DenseGrads<S> g = dense_backward(gy.reshaped({T * B, gy.dim(2)}), cache, p);
    g.x = g.x.reshaped({T, B, p.in()});
    return g;
}

// ---------------------------------------------------------------------------
// Element-wise recurrence: h_t = σ(z_t + u ⊙ h_{t-1}).
//
// This is the IndRNN recurrence with the input projection factored out, so it
// can be reused standalone inside residual blocks and for BN-before-activation
// layer orderings.

template <class S>
struct RecurCache {
    TensorT<S> pre;  // T×B×N, z_t + u ⊙ h_{t-1}
    TensorT<S> h;    // T×B×N
    TensorT<S> h0;   // B×N
};

template <class S>
std::pair<TensorT<S>, RecurCache<S>> recur_forward(const TensorT<S>& z, const TensorT<S>& u, Activation act,
                                                   const TensorT<S>* h0 = nullptr) {
    detail::expect_rank3(z, "recur_forward");
    const std::size_t T = z.dim(0), B = z.dim(1), N = z.dim(2);
    if (u.rank() != 1 || u.dim(0) != N)
        throw ShapeError("recur_forward: recurrent vector " + shape_string(u.shape()) + " vs width " +
                         std::to_string(N));
    RecurCache<S> cache;
    cache.pre = TensorT<S>({T, B, N});
    cache.h = TensorT<S>({T, B, N});
    cache.h0 = h0 ? *h0 : TensorT<S>::zeros({B, N});
    if (cache.h0.shape() != Shape{B, N})
        throw ShapeError("recur_forward: h0 " + shape_string(cache.h0.shape()));
    const S* up = u.data();
    for (std::size_t t = 0; t < T; ++t) {
        const S* zt = z.data() + t * B * N;
        const S* hprev = t == 0 ? cache.h0.data() : cache.h.data() + (t - 1) * B * N;
        S* pret = cache.pre.data() + t * B * N;
        S* ht = cache.h.data() + t * B * N;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t i = b * N + n;
                pret[i] = zt[i] + up[n] * hprev[i];
                ht[i] = activate(act, pret[i]);
            }
        detail::check_finite_step(ht, B * N, t, "recur_forward");
    }
    return {cache.h, std::move(cache)};
}

template <class S>
struct RecurGrads {
    TensorT<S> u;  // N
    TensorT<S> z;  // T×B×N (also equals d pre)
};

template <class S>
RecurGrads<S> recur_backward(const TensorT<S>& grad_h, const RecurCache<S>& cache, const TensorT<S>& u,
                             Activation act) {
    detail::expect_rank3(grad_h, "recur_backward");
    if (grad_h.shape() != cache.h.shape())
        throw ShapeError("recur_backward: grad " + shape_string(grad_h.shape()) + " vs cache " +
                         shape_string(cache.h.shape()));
    const std::size_t T = grad_h.dim(0), B = grad_h.dim(1), N = grad_h.dim(2);
    RecurGrads<S> g;
    g.u = TensorT<S>({N});
    g.z = TensorT<S>({T, B, N});
    const S* up = u.data();
    // dpre_t = σ'(pre_t) ⊙ (grad_h_t + u ⊙ dpre_{t+1}); the u^{T-t} product of
    // the temporal gradient arises from this carry.
    for (std::size_t t = T; t-- > 0;) {
        const S* pret = cache.pre.data() + t * B * N;
        const S* ght = grad_h.data() + t * B * N;
        const S* dnext = t + 1 < T ? g.z.data() + (t + 1) * B * N : nullptr;
        const S* hprev = t == 0 ? cache.h0.data() : cache.h.data() + (t - 1) * B * N;
        S* dpre = g.z.data() + t * B * N;
        S* gu = g.u.data();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t i = b * N + n;
                S carry = ght[i];
                if (dnext) carry += up[n] * dnext[i];
                dpre[i] = activate_grad(act, pret[i]) * carry;
                gu[n] += dpre[i] * hprev[i];
            }
    }
    return g;
}

// ---------------------------------------------------------------------------
// IndRNN layer: h_t = σ(W x_t + u ⊙ h_{t-1} + b).

template <class S>
struct IndRnnParams {
    TensorT<S> W;  // N×M
    TensorT<S> u;  // N — a vector, never a matrix
    TensorT<S> b;  // N
    Activation act = Activation::Relu;

    std::size_t in() const { return W.dim(1); }
    std::size_t out() const { return W.dim(0); }
};

template <class S>
struct IndRnnCache {
    DenseCache<S> proj;
    RecurCache<S> recur;
};

template <class S>
struct IndRnnGrads {
    TensorT<S> W, u, b, x;
};

template <class S>
std::pair<TensorT<S>, IndRnnCache<S>> indrnn_forward(const TensorT<S>& x, const IndRnnParams<S>& p,
                                                     const TensorT<S>* h0 = nullptr) {
    detail::expect_rank3(x, "indrnn_forward");
    IndRnnCache<S> cache;
    auto [z, pc] = timedist_dense_forward(x, DenseParams<S>{p.W, p.b});
    cache.proj = std::move(pc);
    auto [h, rc] = recur_forward(z, p.u, p.act, h0);
    cache.recur = std::move(rc);
    return {std::move(h), std::move(cache)};
}

template <class S>
IndRnnGrads<S> indrnn_backward(const TensorT<S>& grad_h, const IndRnnCache<S>& cache,
                               const IndRnnParams<S>& p) {
    RecurGrads<S> rg = recur_backward(grad_h, cache.recur, p.u, p.act);
    DenseGrads<S> dg = timedist_dense_backward(rg.z, cache.proj, DenseParams<S>{p.W, p.b});
    return IndRnnGrads<S>{std::move(dg.W), std::move(rg.u), std::move(dg.b), std::move(dg.x)};
}

// ---------------------------------------------------------------------------
// Traditional RNN layer: h_t = σ(W x_t + U h_{t-1} + b). Serves as the
// RNN-tanh and IRNN (relu) baselines.

template <class S>
struct RnnParams {
    TensorT<S> W;  // N×M
    TensorT<S> U;  // N×N
    TensorT<S> b;  // N
    Activation act = Activation::Tanh;

    std::size_t in() const { return W.dim(1); }
    std::size_t out() const { return W.dim(0); }
};

template <class S>
struct RnnCache {
    DenseCache<S> proj;
    TensorT<S> pre;  // T×B×N
    TensorT<S> h;    // T×B×N
    TensorT<S> h0;   // B×N
};

template <class S>
struct RnnGrads {
    TensorT<S> W, U, b, x;
};

template <class S>
std::pair<TensorT<S>, RnnCache<S>> rnn_forward(const TensorT<S>& x, const RnnParams<S>& p,
                                               const TensorT<S>* h0 = nullptr) {
    detail::expect_rank3(x, "rnn_forward");
    const std::size_t T = x.dim(0), B = x.dim(1), N = p.out();
    if (p.U.rank() != 2 || p.U.dim(0) != N || p.U.dim(1) != N)
        throw ShapeError("rnn_forward: recurrent matrix " + shape_string(p.U.shape()) + " must be " +
                         std::to_string(N) + "x" + std::to_string(N));
    RnnCache<S> cache;
    auto [z, pc] = timedist_dense_forward(x, DenseParams<S>{p.W, p.b});
    cache.proj = std::move(pc);
    cache.pre = TensorT<S>({T, B, N});
    cache.h = TensorT<S>({T, B, N});
    cache.h0 = h0 ? *h0 : TensorT<S>::zeros({B, N});
    TensorT<S> hprev = cache.h0;
    for (std::size_t t = 0; t < T; ++t) {
        TensorT<S> rec = matmul_abt(hprev, p.U);  // B×N
        const S* zt = z.data() + t * B * N;
        S* pret = cache.pre.data() + t * B * N;
        S* ht = cache.h.data() + t * B * N;
        for (std::size_t i = 0; i < B * N; ++i) {
            pret[i] = zt[i] + rec[i];
            ht[i] = activate(p.act, pret[i]);
        }
        detail::check_finite_step(ht, B * N, t, "rnn_forward");
        std::copy(ht, ht + B * N, hprev.data());
    }
    return {cache.h, std::move(cache)};
}

template <class S>
RnnGrads<S> rnn_backward(const TensorT<S>& grad_h, const RnnCache<S>& cache, const RnnParams<S>& p) {
    detail::expect_rank3(grad_h, "rnn_backward");
    if (grad_h.shape() != cache.h.shape())
        throw ShapeError("rnn_backward: grad " + shape_string(grad_h.shape()) + " vs cache " +
                         shape_string(cache.h.shape()));
    const std::size_t T = grad_h.dim(0), B = grad_h.dim(1), N = grad_h.dim(2);
    RnnGrads<S> g;
    g.U = TensorT<S>::zeros({N, N});
    TensorT<S> dpre_all({T, B, N});
    TensorT<S> carry = TensorT<S>::zeros({B, N});
    TensorT<S> dpre_t({B, N});
    TensorT<S> hprev({B, N});
    for (std::size_t t = T; t-- > 0;) {
        const S* pret = cache.pre.data() + t * B * N;
        const S* ght = grad_h.data() + t * B * N;
        for (std::size_t i = 0; i < B * N; ++i)
            dpre_t[i] = activate_grad(p.act, pret[i]) * (ght[i] + carry[i]);
        std::copy(dpre_t.data(), dpre_t.data() + B * N, dpre_all.data() + t * B * N);
        const S* hp = t == 0 ? cache.h0.data() : cache.h.data() + (t - 1) * B * N;
        std::copy(hp, hp + B * N, hprev.data());
        matmul_at_b_accum(dpre_t, hprev, g.U);  // gU[i,j] += Σ_b dpre[b,i] h_{t-1}[b,j]
        carry = matmul(dpre_t, p.U);            // dh_{t-1} contribution through U
    }
    DenseGrads<S> dg = timedist_dense_backward(dpre_all, cache.proj, DenseParams<S>{p.W, p.b});
    g.W = std::move(dg.W);
    g.b = std::move(dg.b);
    g.x = std::move(dg.x);
    return g;
}

// ---------------------------------------------------------------------------
// Frame-wise batch normalization: statistics per (time step, feature) over
// the batch. Running statistics are kept per time step for eval; sequences
// longer than the trained horizon reuse the last stored step.

template <class S>
struct BatchNormParams {
    TensorT<S> gain;   // N
    TensorT<S> shift;  // N
    TensorT<S> running_mean;  // T_train×N, empty until first train step
    TensorT<S> running_var;   // T_train×N
    double eps = 1e-5;
    double momentum = 0.9;

    explicit BatchNormParams(std::size_t n = 0)
        : gain(TensorT<S>::full({n}, S{1})), shift(TensorT<S>::zeros({n})) {}

    std::size_t width() const { return gain.dim(0); }
    bool has_running_stats() const { return running_mean.size() > 0; }
};

template <class S>
struct BatchNormCache {
    TensorT<S> xhat;     // T×B×N
    TensorT<S> inv_std;  // T×N
    Mode mode = Mode::Train;
};

template <class S>
std::pair<TensorT<S>, BatchNormCache<S>> batchnorm_forward(const TensorT<S>& x, BatchNormParams<S>& p,
                                                           Mode mode) {
    detail::expect_rank3(x, "batchnorm_forward");
    const std::size_t T = x.dim(0), B = x.dim(1), N = x.dim(2);
    if (N != p.width())
        throw ShapeError("batchnorm_forward: width " + std::to_string(N) + " vs params " +
                         std::to_string(p.width()));
    BatchNormCache<S> cache;
    cache.mode = mode;
    cache.xhat = TensorT<S>({T, B, N});
    cache.inv_std = TensorT<S>({T, N});
    TensorT<S> y({T, B, N});
    if (mode == Mode::Train) {
        if (B < 2) throw ShapeError("batchnorm_forward: train mode requires batch >= 2, got " + std::to_string(B));
        if (!p.has_running_stats() || p.running_mean.dim(0) < T) {
            // Grow the per-step running statistics to the longest trained T.
            TensorT<S> nm({T, N}), nv = TensorT<S>::full({T, N}, S{1});
            for (std::size_t t = 0; t < (p.has_running_stats() ? p.running_mean.dim(0) : 0); ++t)
                for (std::size_t n = 0; n < N; ++n) {
                    nm(t, n) = p.running_mean(t, n);
                    nv(t, n) = p.running_var(t, n);
                }
            p.running_mean = std::move(nm);
            p.running_var = std::move(nv);
        }
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t n = 0; n < N; ++n) {
                double mean = 0.0;
                for (std::size_t b = 0; b < B; ++b) mean += static_cast<double>(x(t, b, n));
                mean /= static_cast<double>(B);
                double var = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    const double d = static_cast<double>(x(t, b, n)) - mean;
                    var += d * d;
                }
                var /= static_cast<double>(B);
                const double istd = 1.0 / std::sqrt(var + p.eps);
                cache.inv_std(t, n) = static_cast<S>(istd);
                for (std::size_t b = 0; b < B; ++b) {
                    const double xh = (static_cast<double>(x(t, b, n)) - mean) * istd;
                    cache.xhat(t, b, n) = static_cast<S>(xh);
                    y(t, b, n) = static_cast<S>(static_cast<double>(p.gain(n)) * xh +
                                                static_cast<double>(p.shift(n)));
                }
                p.running_mean(t, n) = static_cast<S>(p.momentum * static_cast<double>(p.running_mean(t, n)) +
                                                      (1.0 - p.momentum) * mean);
                p.running_var(t, n) = static_cast<S>(p.momentum * static_cast<double>(p.running_var(t, n)) +
                                                     (1.0 - p.momentum) * var);
            }
    } else {
        if (!p.has_running_stats())
            throw NumericError("batchnorm_forward: eval mode before any training statistics exist");
        const std::size_t Ts = p.running_mean.dim(0);
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t ts = std::min(t, Ts - 1);
            for (std::size_t n = 0; n < N; ++n) {
                const double mean = static_cast<double>(p.running_mean(ts, n));
                const double istd = 1.0 / std::sqrt(static_cast<double>(p.running_var(ts, n)) + p.eps);
                cache.inv_std(t, n) = static_cast<S>(istd);
                for (std::size_t b = 0; b < B; ++b) {
                    const double xh = (static_cast<double>(x(t, b, n)) - mean) * istd;
                    cache.xhat(t, b, n) = static_cast<S>(xh);
                    y(t, b, n) = static_cast<S>(static_cast<double>(p.gain(n)) * xh +
                                                static_cast<double>(p.shift(n)));
                }
            }
        }
    }
    return {std::move(y), std::move(cache)};
}

template <class S>
struct BatchNormGrads {
    TensorT<S> gain, shift, x;
};

template <class S>
BatchNormGrads<S> batchnorm_backward(const TensorT<S>& gy, const BatchNormCache<S>& cache,
                                     const BatchNormParams<S>& p) {
    detail::expect_rank3(gy, "batchnorm_backward");
    if (gy.shape() != cache.xhat.shape())
        throw ShapeError("batchnorm_backward: grad " + shape_string(gy.shape()) + " vs cache " +
                         shape_string(cache.xhat.shape()));
    const std::size_t T = gy.dim(0), B = gy.dim(1), N = gy.dim(2);
    BatchNormGrads<S> g;
    g.gain = TensorT<S>({N});
    g.shift = TensorT<S>({N});
    g.x = TensorT<S>({T, B, N});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t n = 0; n < N; ++n) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double dy = static_cast<double>(gy(t, b, n));
                sum_dy += dy;
                sum_dy_xhat += dy * static_cast<double>(cache.xhat(t, b, n));
            }
            g.shift(n) += static_cast<S>(sum_dy);
            g.gain(n) += static_cast<S>(sum_dy_xhat);
            const double gn = static_cast<double>(p.gain(n));
            const double istd = static_cast<double>(cache.inv_std(t, n));
            for (std::size_t b = 0; b < B; ++b) {
                const double dy = static_cast<double>(gy(t, b, n));
                if (cache.mode == Mode::Train) {
                    const double xh = static_cast<double>(cache.xhat(t, b, n));
                    g.x(t, b, n) = static_cast<S>(
                        gn * istd / static_cast<double>(B) *
                        (static_cast<double>(B) * dy - sum_dy - xh * sum_dy_xhat));
                } else {
                    g.x(t, b, n) = static_cast<S>(gn * istd * dy);
                }
            }
        }
    return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout. The mask is shared across time steps within a sequence
// (variational style) unless per_step is set; eval mode is the identity.

template <class S>
std::pair<TensorT<S>, TensorT<S>> dropout_forward(const TensorT<S>& x, double rate, SeededRng& rng,
                                                  Mode mode, bool per_step = false) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (mode == Mode::Eval || rate == 0.0) {
        TensorT<S> mask = TensorT<S>::full(x.rank() == 3 && !per_step ? Shape{x.dim(1), x.dim(2)} : x.shape(),
                                           S{1});
        return {x, std::move(mask)};
    }
    const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
    if (x.rank() == 3 && !per_step) {
        const std::size_t T = x.dim(0), B = x.dim(1), N = x.dim(2);
        TensorT<S> mask({B, N});
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask[i] = rng.uniform01() < rate ? S{0} : keep_scale;
        TensorT<S> y(x.shape());
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < B * N; ++i) y[t * B * N + i] = x[t * B * N + i] * mask[i];
        return {std::move(y), std::move(mask)};
    }
    TensorT<S> mask(x.shape());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform01() < rate ? S{0} : keep_scale;
    TensorT<S> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
    return {std::move(y), std::move(mask)};
}

template <class S>
TensorT<S> dropout_backward(const TensorT<S>& gy, const TensorT<S>& mask) {
    if (mask.shape() == gy.shape()) return mul(gy, mask);
    // broadcast B×N mask over T
    detail::expect_rank3(gy, "dropout_backward");
    const std::size_t T = gy.dim(0), B = gy.dim(1), N = gy.dim(2);
    if (mask.shape() != Shape{B, N})
        throw ShapeError("dropout_backward: mask " + shape_string(mask.shape()) + " vs grad " +
                         shape_string(gy.shape()));
    TensorT<S> gx(gy.shape());
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < B * N; ++i) gx[t * B * N + i] = gy[t * B * N + i] * mask[i];
    return gx;
}

// ---------------------------------------------------------------------------
// Pre-activation residual IndRNN block with identity shortcut:
//   y = x + F(x),  F = BN → recurrence+σ → weight → BN → recurrence+σ → weight
// Input and output widths must match.

template <class S>
struct ResidualBlockParams {
    BatchNormParams<S> bn1, bn2;
    TensorT<S> u1, u2;  // N
    DenseParams<S> w1, w2;  // N×N
    Activation act = Activation::Relu;

    std::size_t width() const { return u1.dim(0); }
};

template <class S>
struct ResidualBlockCache {
    BatchNormCache<S> bn1, bn2;
    RecurCache<S> r1, r2;
    DenseCache<S> d1, d2;
};

template <class S>
struct ResidualBlockGrads {
    TensorT<S> bn1_gain, bn1_shift, u1, w1_W, w1_b;
    TensorT<S> bn2_gain, bn2_shift, u2, w2_W, w2_b;
    TensorT<S> x;
};

template <class S>
std::pair<TensorT<S>, ResidualBlockCache<S>> residual_block_forward(const TensorT<S>& x,
                                                                    ResidualBlockParams<S>& p, Mode mode) {
    detail::expect_rank3(x, "residual_block_forward");
    if (x.dim(2) != p.width())
        throw ShapeError("residual_block_forward: width " + std::to_string(x.dim(2)) +
                         " does not match block width " + std::to_string(p.width()) +
                         " (identity shortcut requires equal widths)");
    ResidualBlockCache<S> cache;
    auto [a, c1] = batchnorm_forward(x, p.bn1, mode);
    cache.bn1 = std::move(c1);
    auto [h1, r1] = recur_forward(a, p.u1, p.act);
    cache.r1 = std::move(r1);
    auto [z1, d1] = timedist_dense_forward(h1, p.w1);
    cache.d1 = std::move(d1);
    auto [b2, c2] = batchnorm_forward(z1, p.bn2, mode);
    cache.bn2 = std::move(c2);
    auto [h2, r2] = recur_forward(b2, p.u2, p.act);
    cache.r2 = std::move(r2);
    auto [f, d2] = timedist_dense_forward(h2, p.w2);
    cache.d2 = std::move(d2);
    return {add(x, f), std::move(cache)};
}

template <class S>
ResidualBlockGrads<S> residual_block_backward(const TensorT<S>& gy, const ResidualBlockCache<S>& cache,
                                              const ResidualBlockParams<S>& p) {
    ResidualBlockGrads<S> g;
    DenseGrads<S> gd2 = timedist_dense_backward(gy, cache.d2, p.w2);
    g.w2_W = std::move(gd2.W);
    g.w2_b = std::move(gd2.b);
    RecurGrads<S> gr2 = recur_backward(gd2.x, cache.r2, p.u2, p.act);
    g.u2 = std::move(gr2.u);
    BatchNormGrads<S> gb2 = batchnorm_backward(gr2.z, cache.bn2, p.bn2);
    g.bn2_gain = std::move(gb2.gain);
    g.bn2_shift = std::move(gb2.shift);
    DenseGrads<S> gd1 = timedist_dense_backward(gb2.x, cache.d1, p.w1);
    g.w1_W = std::move(gd1.W);
    g.w1_b = std::move(gd1.b);
    RecurGrads<S> gr1 = recur_backward(gd1.x, cache.r1, p.u1, p.act);
    g.u1 = std::move(gr1.u);
    BatchNormGrads<S> gb1 = batchnorm_backward(gr1.z, cache.bn1, p.bn1);
    g.bn1_gain = std::move(gb1.gain);
    g.bn1_shift = std::move(gb1.shift);
    g.x = add(gy, gb1.x);  // identity shortcut passes the upstream gradient through unchanged
    return g;
}

}  // namespace indrnn

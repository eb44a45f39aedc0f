#include <cmath>

#include "indrnn/analysis.hpp"

namespace indrnn {

Tensor invert_matrix(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1))
        throw ShapeError("invert_matrix: expected square matrix, got " + shape_string(a.shape()));
    const std::size_t n = a.dim(0);
    Tensor work = a;
    Tensor inv({n, n});
    for (std::size_t i = 0; i < n; ++i) inv(i, i) = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(work(r, col)) > std::abs(work(pivot, col))) pivot = r;
        if (std::abs(work(pivot, col)) < 1e-300)
            throw NumericError("invert_matrix: matrix is singular (pivot ~0 at column " +
                               std::to_string(col) + ")");
        if (pivot != col)
            for (std::size_t c = 0; c < n; ++c) {
                std::swap(work(pivot, c), work(col, c));
                std::swap(inv(pivot, c), inv(col, c));
            }
        const double d = work(col, col);
        for (std::size_t c = 0; c < n; ++c) {
            work(col, c) /= d;
            inv(col, c) /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = work(r, col);
            if (f == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) {
                work(r, c) -= f * work(col, c);
                inv(r, c) -= f * inv(col, c);
            }
        }
    }
    return inv;
}

namespace {
double norm_1(const Tensor& a) {
    double best = 0.0;
    for (std::size_t c = 0; c < a.dim(1); ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < a.dim(0); ++r) s += std::abs(a(r, c));
        best = std::max(best, s);
    }
    return best;
}
}  // namespace

double condition_number_1(const Tensor& a) {
    return norm_1(a) * norm_1(invert_matrix(a));
}

RnnParams<double> build_equivalent_rnn(const Tensor& w_f, const Tensor& u_f, const Tensor& w_s) {
    if (w_s.rank() != 2 || w_s.dim(0) != w_s.dim(1))
        throw ShapeError("build_equivalent_rnn: W_s must be square, got " + shape_string(w_s.shape()));
    const std::size_t n = w_s.dim(0);
    if (u_f.rank() != 1 || u_f.dim(0) != n || w_f.rank() != 2 || w_f.dim(0) != n)
        throw ShapeError("build_equivalent_rnn: inconsistent shapes W_f " + shape_string(w_f.shape()) +
                         ", u_f " + shape_string(u_f.shape()) + ", W_s " + shape_string(w_s.shape()));
    Tensor w_s_inv = invert_matrix(w_s);  // throws on singular
    const double cond = norm_1(w_s) * norm_1(w_s_inv);
    if (cond > 1e8)
        throw NumericError("build_equivalent_rnn: W_s is ill-conditioned (cond_1 ~ " +
                           std::to_string(cond) + " > 1e8)");
    // U = W_s diag(u_f) W_s^{-1}, W = W_s W_f.
    Tensor diag_inv({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) diag_inv(i, j) = u_f(i) * w_s_inv(i, j);
    RnnParams<double> rnn;
    rnn.W = matmul(w_s, w_f);
    rnn.U = matmul(w_s, diag_inv);
    rnn.b = Tensor::zeros({n});
    rnn.act = Activation::Identity;
    return rnn;
}

ParamCountReport count_params(const NetworkSpec& spec, bool include_bias) {
    spec.validate();
    ParamCountReport report;
    std::size_t in = spec.input_size;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        ParamCountReport::Entry e;
        std::size_t count = 0;
        switch (l.kind) {
            case LayerKind::IndRnn:
                e.name = "layer" + std::to_string(i) + ".indrnn";
                count = in * l.width + l.width;  // W + u
                if (include_bias) count += l.width;
                break;
            case LayerKind::Rnn:
                e.name = "layer" + std::to_string(i) + ".rnn";
                count = in * l.width + l.width * l.width;  // W + U
                if (include_bias) count += l.width;
                break;
            case LayerKind::Residual:
                e.name = "layer" + std::to_string(i) + ".residual";
                // two dense N×N, two recurrent vectors, two BN gain/shift pairs
                count = 2 * l.width * l.width + 2 * l.width + 4 * l.width;
                if (include_bias) count += 2 * l.width;
                break;
        }
        if (l.kind != LayerKind::Residual && l.bn != BnPlacement::None) count += 2 * l.width;
        e.count = count;
        report.per_layer.push_back(e);
        report.total += count;
        in = l.width;
    }
    std::size_t head = in * spec.output_size;
    if (include_bias) head += spec.output_size;
    report.per_layer.push_back({"head.dense", head});
    report.head = head;
    report.total += head;
    return report;
}

}  // namespace indrnn

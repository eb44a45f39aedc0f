#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "indrnn/network.hpp"

// Verification and interpretation tooling: the finite-difference gradient
// oracle, the two-layer-linear-IndRNN ↔ diagonalizable-RNN construction,
// parameter counting, and neuron-behaviour recording / ablation.

namespace indrnn {

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle.

struct GradientCheckReport {
    struct Entry {
        std::string name;
        double max_rel_err = 0.0;
        std::size_t worst_index = 0;
    };
    std::vector<Entry> per_param;
    double step = 0.0;

    double max_rel_err() const {
        double m = 0.0;
        for (const auto& e : per_param) m = std::max(m, e.max_rel_err);
        return m;
    }
    bool pass(double tol) const { return max_rel_err() < tol; }

    void print(std::ostream& os) const {
        os.precision(3);
        for (const auto& e : per_param)
            os << e.name << ": max rel err " << std::scientific << e.max_rel_err << " (index "
               << e.worst_index << ")\n";
    }
};

// Central differences (f(θ+h) − f(θ−h)) / 2h per parameter entry against the
// analytic gradients already stored in `params` (the caller runs one
// forward/backward before calling). Relative error is
// |a−n| / max(|a|, |n|, 1e-12).
template <class S>
GradientCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                      std::vector<ParamRef<S>> params, double h = 1e-5) {
    if (h < 1e-7 || h > 1e-3) throw ConfigError("finite_diff_check: step must be in [1e-7, 1e-3]");
    GradientCheckReport report;
    report.step = h;
    for (auto& p : params) {
        GradientCheckReport::Entry entry;
        entry.name = p.name;
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const S original = (*p.value)[i];
            (*p.value)[i] = original + static_cast<S>(h);
            const double fp = loss_fn();
            (*p.value)[i] = original - static_cast<S>(h);
            const double fm = loss_fn();
            (*p.value)[i] = original;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("finite_diff_check: non-finite loss while perturbing " + p.name);
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = static_cast<double>((*p.grad)[i]);
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-12});
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = i;
            }
        }
        report.per_param.push_back(std::move(entry));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Two-layer linear IndRNN ↔ diagonalizable RNN equivalence. Given the first
// layer (W_f, u_f) and an invertible second-layer input weight W_s, the
// equivalent traditional RNN is W = W_s·W_f and U = W_s·diag(u_f)·W_s⁻¹.

// Gauss-Jordan inverse with partial pivoting; throws NumericError when the
// matrix is singular.
Tensor invert_matrix(const Tensor& a);

// 1-norm condition number estimate ‖A‖₁·‖A⁻¹‖₁.
double condition_number_1(const Tensor& a);

// Throws NumericError when W_s is singular or has condition number > 1e8.
RnnParams<double> build_equivalent_rnn(const Tensor& w_f, const Tensor& u_f, const Tensor& w_s);

// ---------------------------------------------------------------------------
// Parameter counting.

struct ParamCountReport {
    struct Entry {
        std::string name;
        std::size_t count = 0;
    };
    std::vector<Entry> per_layer;
    std::size_t total = 0;
    std::size_t head = 0;

    // Sum over recurrent layers only, excluding the output head — the form
    // used for cross-model comparisons.
    std::size_t layers_total() const { return total - head; }
};

// Exact counts per layer: IndRNN M·N + N (+N bias); RNN M·N + N·N (+N bias);
// dense M·N (+N bias). `include_bias=false` gives the bias-free counts used
// in model-size comparisons.
ParamCountReport count_params(const NetworkSpec& spec, bool include_bias = true);

// ---------------------------------------------------------------------------
// Neuron-behaviour analysis.

struct ActivationTrace {
    std::size_t layer = 0;
    std::size_t neuron = 0;
    std::vector<double> values;  // one per time step
};

// Per-neuron, per-step activations of every recurrent layer for one input
// sequence (T×1×M), in eval mode.
template <class S>
std::vector<ActivationTrace> record_activations(Network<S>& net, const TensorT<S>& x) {
    if (x.rank() != 3 || x.dim(1) != 1)
        throw ShapeError("record_activations: expected a single sequence T×1×M, got " +
                         shape_string(x.shape()));
    std::vector<TensorT<S>> hidden;
    net.forward(x, Mode::Eval, nullptr, &hidden);
    std::vector<ActivationTrace> traces;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        const auto& h = hidden[l];  // T×1×N
        for (std::size_t n = 0; n < h.dim(2); ++n) {
            ActivationTrace tr;
            tr.layer = l;
            tr.neuron = n;
            tr.values.resize(h.dim(0));
            for (std::size_t t = 0; t < h.dim(0); ++t) tr.values[t] = static_cast<double>(h(t, 0, n));
            traces.push_back(std::move(tr));
        }
    }
    return traces;
}

// Structured-text emission: one line per neuron, "layer neuron v_1 ... v_T".
inline void write_traces(const std::vector<ActivationTrace>& traces, std::ostream& os) {
    os.precision(17);
    for (const auto& tr : traces) {
        os << tr.layer << " " << tr.neuron;
        for (double v : tr.values) os << " " << v;
        os << "\n";
    }
}

// ---------------------------------------------------------------------------
// One-neuron second-layer ablation. Requires a trained 2-layer IndRNN with a
// scalar last-step head. Copies layer-1 verbatim, keeps only the chosen
// layer-2 neuron (its input-weight row, recurrent scalar and bias), reduces
// the head to one weight and one bias, and freezes everything but the head.
// `neuron < 0` selects the layer-2 neuron with the largest |u_n|.
template <class S>
Network<S> ablate_to_one_neuron(Network<S>& net, long neuron = -1) {
    const NetworkSpec& spec = net.spec();
    if (spec.layers.size() != 2 || spec.layers[0].kind != LayerKind::IndRnn ||
        spec.layers[1].kind != LayerKind::IndRnn || spec.head != HeadKind::LastStep ||
        spec.output_size != 1)
        throw ConfigError("ablate_to_one_neuron: requires a 2-layer IndRNN with a scalar last-step head");
    auto& l1 = static_cast<IndRnnStageT<S>&>(net.stage(0));
    auto& l2 = static_cast<IndRnnStageT<S>&>(net.stage(1));
    const std::size_t n2 = l2.params().u.dim(0);
    std::size_t pick;
    if (neuron < 0) {
        pick = 0;
        for (std::size_t n = 1; n < n2; ++n)
            if (std::abs(static_cast<double>(l2.params().u(n))) >
                std::abs(static_cast<double>(l2.params().u(pick))))
                pick = n;
    } else {
        if (static_cast<std::size_t>(neuron) >= n2)
            throw ConfigError("ablate_to_one_neuron: neuron index " + std::to_string(neuron) +
                              " out of range [0, " + std::to_string(n2) + ")");
        pick = static_cast<std::size_t>(neuron);
    }

    NetworkSpec reduced = spec;
    reduced.layers[1].width = 1;
    Network<S> out(reduced, SeededRng(0));
    auto& r1 = static_cast<IndRnnStageT<S>&>(out.stage(0));
    auto& r2 = static_cast<IndRnnStageT<S>&>(out.stage(1));
    r1.params() = l1.params();
    const std::size_t n1 = l1.params().u.dim(0);
    for (std::size_t m = 0; m < n1; ++m) r2.params().W(0, m) = l2.params().W(pick, m);
    r2.params().u(0) = l2.params().u(pick);
    r2.params().b(0) = l2.params().b(pick);
    out.head().params().W(0, 0) = net.head().params().W(0, pick);
    out.head().params().b(0) = net.head().params().b(0);
    out.freeze_all_except("head");
    return out;
}

}  // namespace indrnn

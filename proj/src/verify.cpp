#include <cmath>
#include <functional>
#include <iomanip>
#include <string>

#include "indrnn/analysis.hpp"
#include "indrnn/tasks.hpp"
#include "indrnn/verify.hpp"

namespace indrnn {

namespace {

// Independent reference kernel for matmul: the classic ijk triple loop,
// deliberately different from the library's cache-friendly/BLAS paths.
Tensor matmul_reference(const Tensor& a, const Tensor& b) {
    Tensor c({a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.dim(1); ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    return c;
}

// One forward + loss through a network on a fixed batch. Used both as the
// finite-difference loss functional and to fill the analytic gradients.
template <class Net>
double net_loss(Net& net, const BatchT<double>& batch, bool classification) {
    Tensor out = net.forward(batch.x, Mode::Train);
    return classification ? cross_entropy_loss(out, batch.labels).first
                          : mse_loss(out, batch.targets).first;
}

template <class Net>
void net_fill_grads(Net& net, const BatchT<double>& batch, bool classification) {
    net.zero_grads();
    Tensor out = net.forward(batch.x, Mode::Train);
    Tensor grad = classification ? cross_entropy_loss(out, batch.labels).second
                                 : mse_loss(out, batch.targets).second;
    net.backward(grad);
}

// A bias that feeds directly into batch normalization is exactly redundant:
// the per-step mean subtraction cancels any constant shift, so both the
// analytic and the numeric gradient are zero up to rounding noise and the
// relative-error formula saturates on its 1e-12 floor. Such parameters are
// excluded from finite-difference comparisons.
template <class S>
std::vector<ParamRef<S>> drop_params(std::vector<ParamRef<S>> params,
                                     std::initializer_list<const char*> names) {
    std::vector<ParamRef<S>> out;
    for (auto& p : params) {
        bool drop = false;
        for (const char* n : names) drop = drop || p.name == n;
        if (!drop) out.push_back(p);
    }
    return out;
}

class Reporter {
public:
    explicit Reporter(std::ostream& os) : os_(os) {}

    void check(const std::string& name, bool ok, const std::string& detail = "") {
        os_ << (ok ? "[PASS] " : "[FAIL] ") << name;
        if (!detail.empty()) os_ << " — " << detail;
        os_ << "\n";
        if (ok)
            ++result_.passed;
        else
            ++result_.failed;
    }

    VerifyResult result() const { return result_; }

private:
    std::ostream& os_;
    VerifyResult result_;
};

std::string err_str(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

void verify_matmul(Reporter& rep) {
    SeededRng rng(7);
    const Tensor a = rng.sample_uniform({13, 31}, -1.0, 1.0);
    const Tensor b = rng.sample_uniform({31, 17}, -1.0, 1.0);
    const double d1 = max_abs_diff(matmul(a, b), matmul_reference(a, b));
    rep.check("matmul matches reference triple loop", d1 < 1e-12, "max diff " + err_str(d1));

    const Tensor bt = transpose(b);
    const double d2 = max_abs_diff(matmul_abt(a, bt), matmul_reference(a, b));
    rep.check("matmul_abt matches reference", d2 < 1e-12, "max diff " + err_str(d2));

    Tensor c = rng.sample_uniform({31, 17}, -1.0, 1.0);
    const Tensor c0 = c;
    matmul_at_b_accum(a, rng.sample_uniform({13, 17}, -1.0, 1.0), c);
    // recompute with the reference: c = c0 + a^T g
    // (reuse the same rng draw by regenerating is not possible; instead check
    //  against transpose-based composition)
    SeededRng rng2(7);
    rng2.sample_uniform({13, 31}, -1.0, 1.0);
    rng2.sample_uniform({31, 17}, -1.0, 1.0);
    rng2.sample_uniform({31, 17}, -1.0, 1.0);
    const Tensor g = rng2.sample_uniform({13, 17}, -1.0, 1.0);
    const Tensor expect = add(c0, matmul_reference(transpose(a), g));
    const double d3 = max_abs_diff(c, expect);
    rep.check("matmul_at_b_accum matches reference", d3 < 1e-12, "max diff " + err_str(d3));
}

void verify_rng(Reporter& rep) {
    SeededRng a(123), b(123), c(124);
    bool same = true, differs = false;
    for (int i = 0; i < 64; ++i) {
        const std::uint64_t va = a.next_u64();
        same = same && va == b.next_u64();
        differs = differs || va != c.next_u64();
    }
    rep.check("equal seeds give identical streams", same);
    rep.check("different seeds give different streams", differs);

    SeededRng p(5);
    bool children_differ = p.child(0).next_u64() != p.child(1).next_u64();
    rep.check("child streams are independent", children_differ);

    SeededRng u(9);
    bool open = true;
    double mean = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double v = u.uniform01();
        open = open && v > 0.0 && v < 1.0;
        mean += v;
    }
    mean /= n;
    rep.check("uniform01 stays strictly inside (0,1)", open);
    rep.check("uniform01 mean near 0.5", std::abs(mean - 0.5) < 0.01,
              "mean " + err_str(mean));
}

void verify_layer_gradients(Reporter& rep) {
    const double tol = 1e-6;
    SeededRng rng(11);
    const std::size_t T = 7, B = 4, M = 3, N = 5;
    const Tensor x = rng.sample_uniform({T, B, M}, -1.0, 1.0);
    const Tensor target = rng.sample_uniform({B * N}, -1.0, 1.0).reshaped({B, N});

    struct Case {
        const char* name;
        LayerKind kind;
        Activation act;
        BnPlacement bn;
    };
    const Case cases[] = {
        {"indrnn-relu layer gradients", LayerKind::IndRnn, Activation::Relu, BnPlacement::None},
        {"indrnn-tanh layer gradients", LayerKind::IndRnn, Activation::Tanh, BnPlacement::None},
        {"indrnn+batchnorm-after gradients", LayerKind::IndRnn, Activation::Tanh, BnPlacement::After},
        {"indrnn+batchnorm-before gradients", LayerKind::IndRnn, Activation::Tanh, BnPlacement::Before},
        {"rnn-tanh layer gradients", LayerKind::Rnn, Activation::Tanh, BnPlacement::None},
    };
    for (const Case& c : cases) {
        NetworkSpec spec;
        spec.input_size = M;
        spec.layers.push_back(LayerSpec{c.kind, N, c.act, c.bn, 0.0});
        spec.head = HeadKind::LastStep;
        spec.output_size = N;
        Network<double> net(spec, rng.child(1));
        BatchT<double> batch;
        batch.x = x;
        batch.targets = target;
        net_fill_grads(net, batch, false);
        auto params = c.bn == BnPlacement::Before ? drop_params(net.params(), {"layer0.b"})
                                                  : net.params();
        auto report =
            finite_diff_check<double>([&] { return net_loss(net, batch, false); }, params);
        rep.check(c.name, report.pass(tol), "max rel err " + err_str(report.max_rel_err()));
    }

    {
        NetworkSpec spec;
        spec.input_size = N;
        spec.layers.push_back(LayerSpec{LayerKind::Residual, N, Activation::Tanh, BnPlacement::None, 0.0});
        spec.head = HeadKind::LastStep;
        spec.output_size = N;
        Network<double> net(spec, rng.child(2));
        // Perturb the zero-initialized final weight so its gradient path is exercised
        // away from the identity point.
        auto& stage = static_cast<ResidualStageT<double>&>(net.stage(0));
        stage.params().w2.W = rng.sample_uniform({N, N}, -0.3, 0.3);
        BatchT<double> batch;
        batch.x = rng.sample_uniform({T, B, N}, -1.0, 1.0);
        batch.targets = target;
        net_fill_grads(net, batch, false);
        auto report = finite_diff_check<double>([&] { return net_loss(net, batch, false); },
                                                drop_params(net.params(), {"layer0.w1.b"}));
        rep.check("residual block gradients", report.pass(tol),
                  "max rel err " + err_str(report.max_rel_err()));
    }

    {
        // Deep composed network with a classification head.
        NetworkSpec spec;
        spec.input_size = M;
        spec.layers.push_back(LayerSpec{LayerKind::IndRnn, N, Activation::Tanh, BnPlacement::After, 0.0});
        spec.layers.push_back(LayerSpec{LayerKind::IndRnn, N, Activation::Relu, BnPlacement::None, 0.0});
        spec.head = HeadKind::LastStep;
        spec.output_size = 3;
        Network<double> net(spec, rng.child(3));
        BatchT<double> batch;
        batch.x = x;
        batch.labels = {0, 2, 1, 2};
        net_fill_grads(net, batch, true);
        auto report = finite_diff_check<double>([&] { return net_loss(net, batch, true); },
                                                net.params());
        rep.check("stacked network gradients (cross-entropy)", report.pass(tol),
                  "max rel err " + err_str(report.max_rel_err()));
    }
}

void verify_fault_isolation(Reporter& rep) {
    // Deliberately corrupt one parameter's analytic gradient and confirm the
    // oracle flags exactly that parameter and nothing else.
    SeededRng rng(21);
    NetworkSpec spec;
    spec.input_size = 3;
    spec.layers.push_back(LayerSpec{LayerKind::IndRnn, 4, Activation::Tanh, BnPlacement::None, 0.0});
    spec.head = HeadKind::LastStep;
    spec.output_size = 2;
    Network<double> net(spec, rng);
    BatchT<double> batch;
    batch.x = rng.sample_uniform({5, 3, 3}, -1.0, 1.0);
    batch.targets = rng.sample_uniform({6}, -1.0, 1.0).reshaped({3, 2});
    net_fill_grads(net, batch, false);
    auto params = net.params();
    for (auto& p : params)
        if (p.name == "layer0.u") (*p.grad)[1] += 0.5;
    auto report = finite_diff_check<double>([&] { return net_loss(net, batch, false); }, params);
    bool only_u_flagged = true;
    bool u_flagged = false;
    for (const auto& e : report.per_param) {
        const bool bad = e.max_rel_err > 1e-4;
        if (e.name == "layer0.u")
            u_flagged = bad && e.worst_index == 1;
        else if (bad)
            only_u_flagged = false;
    }
    rep.check("gradient oracle isolates an injected fault", u_flagged && only_u_flagged);
}

void verify_recurrence_algebra(Reporter& rep) {
    // Closed form: with identity activation the sensitivity of the last hidden
    // state to the step-t input is u^(T-t). With u = 0.5 and a 3-step gap the
    // value is exactly 0.125.
    const std::size_t T = 6;
    Tensor z = Tensor::zeros({T, 1, 1});
    Tensor u = Tensor::row_vector({0.5});
    auto [h, cache] = recur_forward(z, u, Activation::Identity);
    Tensor gh = Tensor::zeros({T, 1, 1});
    gh(T - 1, 0, 0) = 1.0;
    RecurGrads<double> g = recur_backward(gh, cache, u, Activation::Identity);
    bool exact = g.z(T - 4, 0, 0) == 0.125;
    bool all_match = true;
    for (std::size_t t = 0; t < T; ++t)
        all_match = all_match &&
                    std::abs(g.z(t, 0, 0) - std::pow(0.5, static_cast<double>(T - 1 - t))) < 1e-15;
    rep.check("temporal gradient follows u^(T-t) exactly", exact && all_match);

    // A traditional RNN with diagonal recurrent matrix reproduces the
    // independently recurrent layer bit-for-bit step by step.
    SeededRng rng(31);
    const std::size_t B = 3, M = 2, N = 4;
    IndRnnParams<double> ip;
    ip.W = rng.sample_uniform({N, M}, -1.0, 1.0);
    ip.u = rng.sample_uniform({N}, -0.9, 0.9);
    ip.b = rng.sample_uniform({N}, -0.1, 0.1);
    ip.act = Activation::Tanh;
    RnnParams<double> rp;
    rp.W = ip.W;
    rp.U = Tensor::zeros({N, N});
    for (std::size_t n = 0; n < N; ++n) rp.U(n, n) = ip.u(n);
    rp.b = ip.b;
    rp.act = ip.act;
    const Tensor x = rng.sample_uniform({5, B, M}, -1.0, 1.0);
    const Tensor hi = indrnn_forward(x, ip).first;
    const Tensor hr = rnn_forward(x, rp).first;
    const double d = max_abs_diff(hi, hr);
    rep.check("diagonal recurrent matrix reduces to the vector recurrence", d < 1e-14,
              "max diff " + err_str(d));
}

void verify_equivalence(Reporter& rep) {
    // Two linear layers with a vector recurrence compose into one traditional
    // linear RNN with a diagonalizable recurrent matrix: W = W_s·W_f,
    // U = W_s·diag(u_f)·W_s⁻¹, and the equivalent hidden state is W_s·h_t.
    SeededRng rng(41);
    const std::size_t T = 8, B = 2, M = 3, N = 4;
    const Tensor w_f = rng.sample_uniform({N, M}, -1.0, 1.0);
    const Tensor u_f = rng.sample_uniform({N}, -0.8, 0.8);
    Tensor w_s = rng.sample_uniform({N, N}, -1.0, 1.0);
    for (std::size_t n = 0; n < N; ++n) w_s(n, n) += 2.0;  // keep it well conditioned

    RnnParams<double> eq = build_equivalent_rnn(w_f, u_f, w_s);
    IndRnnParams<double> first;
    first.W = w_f;
    first.u = u_f;
    first.b = Tensor::zeros({N});
    first.act = Activation::Identity;

    const Tensor x = rng.sample_uniform({T, B, M}, -1.0, 1.0);
    const Tensor h = indrnn_forward(x, first).first;
    const Tensor hp = rnn_forward(x, eq).first;
    // Per step, hp_t must equal W_s h_t.
    double worst = 0.0;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n) {
                double acc = 0.0;
                for (std::size_t k = 0; k < N; ++k) acc += w_s(n, k) * h(t, b, k);
                worst = std::max(worst, std::abs(acc - hp(t, b, n)));
            }
    rep.check("two linear layers compose into a diagonalizable recurrent matrix", worst < 1e-9,
              "max diff " + err_str(worst));

    const Tensor eye_check = matmul(w_s, invert_matrix(w_s));
    double eye_err = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            eye_err = std::max(eye_err, std::abs(eye_check(i, j) - (i == j ? 1.0 : 0.0)));
    rep.check("matrix inverse round-trips to identity", eye_err < 1e-10, "max diff " + err_str(eye_err));

    bool threw = false;
    try {
        Tensor singular = Tensor::zeros({N, N});
        build_equivalent_rnn(w_f, u_f, singular);
    } catch (const NumericError&) {
        threw = true;
    }
    rep.check("singular second-layer weight is rejected", threw);
}

void verify_projection(Reporter& rep) {
    RecurrentConstraint c;
    c.gamma = 2.0;
    c.t_eff = 100;
    const double bound = std::pow(2.0, 0.01);
    rep.check("projection bound equals gamma^(1/T)", c.bound() == bound);

    SeededRng rng(51);
    Tensor u = rng.sample_uniform({64}, -2.0, 2.0);
    Tensor inside = u;
    c.project(inside);
    Tensor twice = inside;
    c.project(twice);
    rep.check("projection is idempotent", inside == twice);

    bool clipped_ok = true, untouched_ok = true;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (std::abs(u[i]) <= c.bound())
            untouched_ok = untouched_ok && inside[i] == u[i];
        else
            clipped_ok = clipped_ok && std::abs(inside[i]) == c.bound() &&
                         (inside[i] > 0) == (u[i] > 0);
    }
    rep.check("entries within the bound are bit-identical", untouched_ok);
    rep.check("entries beyond the bound clip to it, sign preserved", clipped_ok);

    RecurrentConstraint nn = c;
    nn.nonnegative = true;
    Tensor v = rng.sample_uniform({64}, -2.0, 2.0);
    nn.project(v);
    bool nonneg = true;
    for (std::size_t i = 0; i < v.size(); ++i) nonneg = nonneg && v[i] >= 0.0 && v[i] <= nn.bound();
    rep.check("nonnegative mode maps into [0, bound]", nonneg);
}

void verify_param_counts(Reporter& rep) {
    NetworkSpec ind;
    ind.input_size = 2;
    ind.layers = {LayerSpec{LayerKind::IndRnn, 128, Activation::Relu, BnPlacement::None, 0.0},
                  LayerSpec{LayerKind::IndRnn, 128, Activation::Relu, BnPlacement::None, 0.0}};
    ind.output_size = 1;
    const std::size_t ind_count = count_params(ind, false).layers_total();
    rep.check("two 128-wide vector-recurrence layers count 16896 weights", ind_count == 16896,
              std::to_string(ind_count));

    NetworkSpec rnn;
    rnn.input_size = 2;
    rnn.layers = {LayerSpec{LayerKind::Rnn, 128, Activation::Tanh, BnPlacement::None, 0.0}};
    rnn.output_size = 1;
    const std::size_t rnn_count = count_params(rnn, false).layers_total();
    rep.check("one 128-wide full-recurrence layer counts 16640 weights", rnn_count == 16640,
              std::to_string(rnn_count));
}

void verify_adding_task(Reporter& rep) {
    SeededRng rng(61);
    const std::size_t T = 40, B = 200;
    BatchT<double> batch = gen_adding_batch<double>(T, B, rng);
    bool structure_ok = true;
    for (std::size_t b = 0; b < B && structure_ok; ++b) {
        int first_half = 0, second_half = 0;
        double sum_marked = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double v = batch.x(t, b, 0);
            const double m = batch.x(t, b, 1);
            structure_ok = structure_ok && v > 0.0 && v < 1.0 && (m == 0.0 || m == 1.0);
            if (m == 1.0) {
                (t < T / 2 ? first_half : second_half) += 1;
                sum_marked += v;
            }
        }
        structure_ok = structure_ok && first_half == 1 && second_half == 1 &&
                       std::abs(sum_marked - batch.targets(b, 0)) < 1e-12;
    }
    rep.check("adding batches carry one marker per half and an exact target", structure_ok);

    // Monte-Carlo estimate of the variance of (sum of two uniforms): the MSE
    // of always predicting the mean, which should approach 1/6.
    SeededRng mc(62);
    const std::size_t n = 200000;
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double s = mc.uniform01() + mc.uniform01();
        const double d = s - mean;
        mean += d / static_cast<double>(i);
        m2 += d * (s - mean);
    }
    const double var = m2 / static_cast<double>(n);
    rep.check("constant-prediction baseline MSE is 1/6", std::abs(var - 1.0 / 6.0) < 0.01,
              "monte-carlo " + err_str(var));
}

}  // namespace

VerifyResult run_verification(std::ostream& os) {
    Reporter rep(os);
    verify_matmul(rep);
    verify_rng(rep);
    verify_layer_gradients(rep);
    verify_fault_isolation(rep);
    verify_recurrence_algebra(rep);
    verify_equivalence(rep);
    verify_projection(rep);
    verify_param_counts(rep);
    verify_adding_task(rep);
    os << rep.result().passed << " passed, " << rep.result().failed << " failed\n";
    return rep.result();
}

}  // namespace indrnn

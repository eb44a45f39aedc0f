#include <doctest.h>

#include "indrnn/analysis.hpp"
#include "indrnn/tasks.hpp"

using namespace indrnn;

TEST_CASE("finite differences are near-exact for a linear scalar model") {
    // Quadratic loss in theta: central differences are exact up to roundoff.
    Tensor theta = Tensor::row_vector({0.7});
    Tensor grad = Tensor::row_vector({0.0});
    const double x = 1.3, target = 0.2;
    auto loss = [&] {
        const double d = theta(0) * x - target;
        return d * d;
    };
    grad(0) = 2.0 * (theta(0) * x - target) * x;
    std::vector<ParamRef<double>> params = {{"theta", &theta, &grad, true}};
    auto report = finite_diff_check<double>(loss, params);
    CHECK(report.max_rel_err() < 1e-9);
}

TEST_CASE("finite-difference step size outside [1e-7, 1e-3] is rejected") {
    Tensor theta = Tensor::row_vector({1.0});
    Tensor grad = Tensor::row_vector({0.0});
    std::vector<ParamRef<double>> params = {{"theta", &theta, &grad, true}};
    CHECK_THROWS_AS(finite_diff_check<double>([] { return 0.0; }, params, 1e-8), ConfigError);
    CHECK_THROWS_AS(finite_diff_check<double>([] { return 0.0; }, params, 1e-2), ConfigError);
}

TEST_CASE("a gradient corrupted at one entry is flagged at exactly that index") {
    SeededRng rng(60);
    Tensor theta = rng.sample_uniform({4}, -1.0, 1.0);
    Tensor x = rng.sample_uniform({4}, -1.0, 1.0);
    auto loss = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < 4; ++i) s += theta(i) * x(i);
        return s * s;
    };
    Tensor grad({4});
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += theta(i) * x(i);
    for (std::size_t i = 0; i < 4; ++i) grad(i) = 2.0 * s * x(i);
    grad(2) *= 2.0;  // corrupt one entry
    std::vector<ParamRef<double>> params = {{"theta", &theta, &grad, true}};
    auto report = finite_diff_check<double>(loss, params);
    REQUIRE(report.per_param.size() == 1);
    CHECK(report.per_param[0].max_rel_err > 0.1);
    CHECK(report.per_param[0].worst_index == 2);
}

TEST_CASE("identity mixing matrix reproduces the vector recurrence parameters") {
    SeededRng rng(61);
    const std::size_t N = 4, M = 3;
    Tensor w_f = rng.sample_uniform({N, M}, -1.0, 1.0);
    Tensor u_f = rng.sample_uniform({N}, -0.9, 0.9);
    Tensor eye({N, N});
    for (std::size_t i = 0; i < N; ++i) eye(i, i) = 1.0;
    RnnParams<double> p = build_equivalent_rnn(w_f, u_f, eye);
    CHECK(p.W == w_f);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) CHECK(p.U(i, j) == (i == j ? u_f(i) : 0.0));
}

TEST_CASE("constructed rnn matches the two-layer linear network over a sequence") {
    SeededRng rng(62);
    const std::size_t T = 10, N = 3, M = 2;
    Tensor w_f = rng.sample_uniform({N, M}, -1.0, 1.0);
    Tensor u_f = rng.sample_uniform({N}, -0.8, 0.8);
    Tensor w_s = rng.sample_uniform({N, N}, -1.0, 1.0);
    for (std::size_t i = 0; i < N; ++i) w_s(i, i) += 2.0;
    RnnParams<double> eq = build_equivalent_rnn(w_f, u_f, w_s);

    IndRnnParams<double> first{w_f, u_f, Tensor::zeros({N}), Activation::Identity};
    Tensor x = rng.sample_uniform({T, 2, M}, -1.0, 1.0);
    Tensor h = indrnn_forward(x, first).first;
    Tensor hp = rnn_forward(x, eq).first;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t n = 0; n < N; ++n) {
                double acc = 0.0;
                for (std::size_t k = 0; k < N; ++k) acc += w_s(n, k) * h(t, b, k);
                CHECK(std::abs(acc - hp(t, b, n)) < 1e-8);
            }
}

TEST_CASE("singular and ill-conditioned mixing matrices are rejected") {
    SeededRng rng(63);
    const std::size_t N = 3;
    Tensor w_f = rng.sample_uniform({N, 2}, -1.0, 1.0);
    Tensor u_f = rng.sample_uniform({N}, -0.8, 0.8);
    CHECK_THROWS_AS(build_equivalent_rnn(w_f, u_f, Tensor::zeros({N, N})), NumericError);

    Tensor nearly({N, N});
    nearly(0, 0) = 1.0;
    nearly(1, 1) = 1.0;
    nearly(2, 2) = 1e-12;  // condition number ~1e12
    CHECK_THROWS_AS(build_equivalent_rnn(w_f, u_f, nearly), NumericError);
}

TEST_CASE("parameter count formulas match hand computations") {
    NetworkSpec tiny;
    tiny.input_size = 3;
    tiny.layers = {LayerSpec{LayerKind::IndRnn, 4, Activation::Relu, BnPlacement::None, 0.0}};
    tiny.output_size = 1;
    CHECK(count_params(tiny, true).per_layer[0].count == 20);  // 3*4 + 4 + 4

    NetworkSpec rnn;
    rnn.input_size = 2;
    rnn.layers = {LayerSpec{LayerKind::Rnn, 128, Activation::Tanh, BnPlacement::None, 0.0}};
    rnn.output_size = 1;
    CHECK(count_params(rnn, false).layers_total() == 16640);  // 2*128 + 128^2

    NetworkSpec two;
    two.input_size = 2;
    two.layers = {LayerSpec{LayerKind::IndRnn, 128, Activation::Relu, BnPlacement::None, 0.0},
                  LayerSpec{LayerKind::IndRnn, 128, Activation::Relu, BnPlacement::None, 0.0}};
    two.output_size = 1;
    CHECK(count_params(two, false).layers_total() == 16896);  // 2*128 + 128^2 + 2*128
}

namespace {
Network<double> small_two_layer(SeededRng seed) {
    NetworkSpec spec;
    spec.input_size = 2;
    spec.layers = {LayerSpec{LayerKind::IndRnn, 5, Activation::Relu, BnPlacement::None, 0.0},
                   LayerSpec{LayerKind::IndRnn, 5, Activation::Relu, BnPlacement::None, 0.0}};
    spec.head = HeadKind::LastStep;
    spec.output_size = 1;
    return Network<double>(spec, seed);
}
}  // namespace

TEST_CASE("activation traces cover every neuron for the full sequence length") {
    Network<double> net = small_two_layer(SeededRng(70));
    SeededRng rng(71);
    BatchT<double> one = gen_adding_batch<double>(12, 1, rng);
    auto traces = record_activations(net, one.x);
    REQUIRE(traces.size() == 10);  // 2 layers x 5 neurons
    for (const auto& tr : traces) CHECK(tr.values.size() == 12);

    auto again = record_activations(net, one.x);
    for (std::size_t i = 0; i < traces.size(); ++i) CHECK(traces[i].values == again[i].values);
}

TEST_CASE("a neuron with u=0 traces the memoryless map of its inputs") {
    Network<double> net = small_two_layer(SeededRng(72));
    auto& l1 = static_cast<IndRnnStageT<double>&>(net.stage(0));
    l1.params().u(3) = 0.0;
    SeededRng rng(73);
    BatchT<double> one = gen_adding_batch<double>(8, 1, rng);
    auto traces = record_activations(net, one.x);
    // layer-0 neuron 3: h_t = relu(w.x_t + b), independent of history
    const auto& p = l1.params();
    for (std::size_t t = 0; t < 8; ++t) {
        double z = p.b(3);
        for (std::size_t m = 0; m < 2; ++m) z += p.W(3, m) * one.x(t, 0, m);
        CHECK(traces[3].values[t] == std::max(z, 0.0));
    }
}

TEST_CASE("ablation keeps the chosen neuron's trace bit-exactly and a 2-parameter head") {
    Network<double> net = small_two_layer(SeededRng(74));
    SeededRng rng(75);
    BatchT<double> one = gen_adding_batch<double>(10, 1, rng);
    auto full = record_activations(net, one.x);

    // find the layer-2 neuron with max |u| — ablation default
    auto& l2 = static_cast<IndRnnStageT<double>&>(net.stage(1));
    std::size_t pick = 0;
    for (std::size_t n = 1; n < 5; ++n)
        if (std::abs(l2.params().u(n)) > std::abs(l2.params().u(pick))) pick = n;

    Network<double> reduced = ablate_to_one_neuron(net);
    auto cut = record_activations(reduced, one.x);
    REQUIRE(cut.size() == 6);  // 5 layer-1 neurons + 1 layer-2 neuron
    CHECK(cut[5].values == full[5 + pick].values);  // neuron independence, bitwise

    std::size_t head_params = 0;
    std::size_t trainable = 0;
    for (const auto& p : reduced.params()) {
        if (p.name.rfind("head", 0) == 0) head_params += p.value->size();
        if (p.trainable) trainable += p.value->size();
    }
    CHECK(head_params == 2);  // one weight, one bias
    CHECK(trainable == 2);    // everything else frozen
}

TEST_CASE("ablation rejects an out-of-range neuron index and wrong shapes") {
    Network<double> net = small_two_layer(SeededRng(76));
    CHECK_THROWS_AS(ablate_to_one_neuron(net, 5), ConfigError);

    NetworkSpec spec;
    spec.input_size = 2;
    spec.layers = {LayerSpec{LayerKind::IndRnn, 5, Activation::Relu, BnPlacement::None, 0.0}};
    spec.output_size = 1;
    Network<double> one_layer(spec, SeededRng(77));
    CHECK_THROWS_AS(ablate_to_one_neuron(one_layer), ConfigError);
}

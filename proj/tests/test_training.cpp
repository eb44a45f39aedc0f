#include <doctest.h>

#include <sstream>

#include "indrnn/tasks.hpp"
#include "indrnn/training.hpp"

using namespace indrnn;

TEST_CASE("constraint bound is gamma^(1/T_eff)") {
    RecurrentConstraint c;
    c.gamma = 2.0;
    c.t_eff = 100;
    CHECK(c.bound() == doctest::Approx(1.0069556).epsilon(1e-7));
}

TEST_CASE("projection clips only entries beyond the bound") {
    RecurrentConstraint c;
    c.gamma = 2.0;
    c.t_eff = 100;
    Tensor u = Tensor::row_vector({1.5, -0.5, 0.2});
    c.project(u);
    CHECK(u(0) == c.bound());
    CHECK(u(1) == -0.5);
    CHECK(u(2) == 0.2);
}

TEST_CASE("projection is a no-op inside the bound and idempotent overall") {
    RecurrentConstraint c;
    c.gamma = 2.0;
    c.t_eff = 50;
    SeededRng rng(30);
    Tensor inside = rng.sample_uniform({20}, -c.bound(), c.bound());
    Tensor copy = inside;
    c.project(copy);
    CHECK(copy == inside);
    Tensor wild = rng.sample_uniform({20}, -3.0, 3.0);
    c.project(wild);
    Tensor again = wild;
    c.project(again);
    CHECK(again == wild);
}

TEST_CASE("epsilon floor raises tiny magnitudes") {
    RecurrentConstraint c;
    c.gamma = 2.0;
    c.t_eff = 10;
    c.epsilon_floor = 0.1;
    Tensor u = Tensor::row_vector({0.01, -0.02, 0.5});
    c.project(u);
    CHECK(u(0) == 0.1);
    CHECK(u(1) == -0.1);
    CHECK(u(2) == 0.5);
}

TEST_CASE("adam leaves parameters unchanged on a zero gradient") {
    Tensor theta = Tensor::row_vector({1.0, -2.0});
    Tensor grad = Tensor::zeros({2});
    std::vector<ParamRef<double>> params = {{"theta", &theta, &grad, true}};
    Adam<double> adam;
    adam.step(params, 1e-3);
    CHECK(theta(0) == 1.0);
    CHECK(theta(1) == -2.0);
}

TEST_CASE("first adam step on a unit gradient moves by about lr") {
    // Hand computation with defaults beta1=0.9, beta2=0.999, eps=1e-8:
    // m=0.1, v=0.001, mhat=1, vhat=1 => theta -= lr * 1/(1+1e-8).
    Tensor theta = Tensor::row_vector({1.0});
    Tensor grad = Tensor::row_vector({1.0});
    std::vector<ParamRef<double>> params = {{"theta", &theta, &grad, true}};
    Adam<double> adam;
    adam.step(params, 1e-3);
    CHECK(theta(0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-7));
}

TEST_CASE("adam aborts with the parameter name on a non-finite gradient") {
    Tensor theta = Tensor::row_vector({1.0});
    Tensor grad = Tensor::row_vector({std::numeric_limits<double>::infinity()});
    std::vector<ParamRef<double>> params = {{"layer0.W", &theta, &grad, true}};
    Adam<double> adam;
    try {
        adam.step(params, 1e-3);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("layer0.W") != std::string::npos);
    }
}

TEST_CASE("adam skips frozen parameters") {
    Tensor theta = Tensor::row_vector({1.0});
    Tensor grad = Tensor::row_vector({1.0});
    std::vector<ParamRef<double>> params = {{"theta", &theta, &grad, false}};
    Adam<double> adam;
    adam.step(params, 1e-3);
    CHECK(theta(0) == 1.0);
}

TEST_CASE("mse loss matches its definition") {
    Tensor a = Tensor::row_vector({1.0});
    Tensor b = Tensor::row_vector({0.0});
    auto [same, g0] = mse_loss(a, a);
    CHECK(same == 0.0);
    auto [l, g] = mse_loss(a, b);
    CHECK(l == 1.0);
    CHECK(g(0) == 2.0);
}

TEST_CASE("constant prediction of 1.0 on adding targets scores about 0.167") {
    SeededRng rng(31);
    const std::size_t B = 100000;
    BatchT<double> batch = gen_adding_batch<double>(2, B, rng);
    Tensor pred = Tensor::full({B, 1}, 1.0);
    auto [l, g] = mse_loss(pred, batch.targets);
    CHECK(std::abs(l - 0.167) < 0.005);
}

TEST_CASE("cross entropy of uniform logits is ln C") {
    Tensor logits = Tensor::zeros({2, 10});
    auto [l, g] = cross_entropy_loss(logits, std::vector<int>{3, 7});
    CHECK(l == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy falls monotonically as the correct margin grows") {
    auto loss_at_margin = [](double m) {
        Tensor logits = Tensor::zeros({1, 4});
        logits(0, 2) = m;
        return cross_entropy_loss(logits, std::vector<int>{2}).first;
    };
    CHECK(loss_at_margin(5.0) < loss_at_margin(0.0));
    CHECK(loss_at_margin(10.0) < loss_at_margin(5.0));
    CHECK(loss_at_margin(10.0) < 1e-3);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    Tensor logits = Tensor::zeros({1, 4});
    CHECK_THROWS_AS(cross_entropy_loss(logits, std::vector<int>{4}), DataError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    SeededRng rng(32);
    Tensor logits = rng.sample_uniform({3, 5}, -2.0, 2.0);
    std::vector<int> labels = {1, 4, 0};
    auto [l, g] = cross_entropy_loss(logits, labels);
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double orig = logits[i];
        logits[i] = orig + h;
        const double fp = cross_entropy_loss(logits, labels).first;
        logits[i] = orig - h;
        const double fm = cross_entropy_loss(logits, labels).first;
        logits[i] = orig;
        const double numeric = (fp - fm) / (2 * h);
        CHECK(std::abs(g[i] - numeric) / std::max({std::abs(g[i]), std::abs(numeric), 1e-12}) < 1e-6);
    }
}

TEST_CASE("step schedule drops by its factor every interval") {
    LrSchedule s;
    s.initial = 2e-4;
    s.factor = 10.0;
    s.every_steps = 20000;
    LrScheduleState state(s);
    CHECK(state.lr_at(1) == 2e-4);
    CHECK(state.lr_at(20000) == 2e-4);
    CHECK(state.lr_at(20001) == doctest::Approx(2e-5).epsilon(1e-12));
    CHECK(state.lr_at(40001) == doctest::Approx(2e-6).epsilon(1e-12));
}

TEST_CASE("plateau schedule decays after patience evals without improvement") {
    LrSchedule s;
    s.kind = LrSchedule::Kind::Plateau;
    s.initial = 1e-3;
    s.factor = 5.0;
    s.patience = 3;
    LrScheduleState state(s);
    state.observe_eval(1.0);
    for (int i = 0; i < 2; ++i) state.observe_eval(2.0);
    CHECK(state.lr_at(1) == 1e-3);
    state.observe_eval(2.0);  // third stale eval
    CHECK(state.lr_at(2) == doctest::Approx(2e-4).epsilon(1e-12));
}

namespace {
// Fixed-batch task for overfit and determinism tests.
class FixedBatchTask final : public TaskT<double> {
public:
    explicit FixedBatchTask(BatchT<double> batch) : batch_(std::move(batch)) {}
    BatchT<double> next_train(SeededRng&) override { return batch_; }
    const BatchT<double>& eval_batch() const override { return batch_; }
    bool classification() const override { return false; }

private:
    BatchT<double> batch_;
};

NetworkSpec small_adding_spec(std::size_t hidden) {
    NetworkSpec spec;
    spec.input_size = 2;
    spec.layers = {LayerSpec{LayerKind::IndRnn, hidden, Activation::Relu, BnPlacement::None, 0.0},
                   LayerSpec{LayerKind::IndRnn, hidden, Activation::Relu, BnPlacement::None, 0.0}};
    spec.head = HeadKind::LastStep;
    spec.output_size = 1;
    return spec;
}
}  // namespace

TEST_CASE("a 2-layer network overfits one fixed adding batch below 1e-4 within 5000 steps") {
    SeededRng rng(33);
    FixedBatchTask task(gen_adding_batch<double>(20, 8, rng));
    RecurrentConstraint c;
    c.gamma = 2.0;
    c.t_eff = 20;
    InitOptions init;
    init.recurrent_hi = c.bound();
    Network<double> net(small_adding_spec(16), rng.child(1), init);
    FitOptions opt;
    opt.max_steps = 5000;
    opt.eval_interval = 100;
    opt.schedule.initial = 2e-3;
    opt.schedule.every_steps = 100000;
    opt.constraint = c;
    opt.early_stop_metric = 1e-4;
    opt.seed = 5;
    FitResult r = fit(net, task, opt);
    CHECK_FALSE(r.aborted);
    CHECK(r.best_eval < 1e-4);
}

TEST_CASE("constraint holds at every logged step of a training run") {
    SeededRng rng(34);
    AddingTask<double> task(12, 8, 64, rng.child(9));
    RecurrentConstraint c;
    c.gamma = 2.0;
    c.t_eff = 12;
    InitOptions init;
    init.recurrent_hi = c.bound();
    Network<double> net(small_adding_spec(8), rng.child(1), init);
    FitOptions opt;
    opt.max_steps = 300;
    opt.eval_interval = 50;
    opt.schedule.initial = 1e-3;
    opt.constraint = c;
    opt.seed = 6;
    FitResult r = fit(net, task, opt);
    REQUIRE_FALSE(r.records.empty());
    for (const auto& rec : r.records)
        for (double m : rec.max_abs_u) CHECK(m <= c.bound());
}

TEST_CASE("equal seeds reproduce the metric log bitwise") {
    auto run_once = [] {
        SeededRng rng(35);
        AddingTask<double> task(10, 6, 32, rng.child(9));
        Network<double> net(small_adding_spec(8), rng.child(1));
        FitOptions opt;
        opt.max_steps = 120;
        opt.eval_interval = 30;
        opt.schedule.initial = 1e-3;
        opt.seed = 7;
        FitResult r = fit(net, task, opt);
        std::ostringstream os;
        for (const auto& rec : r.records) os << rec.to_json_line() << "\n";
        return os.str();
    };
    CHECK(run_once() == run_once());
}

TEST_CASE("a diverging run aborts with a diagnostic instead of propagating NaNs") {
    SeededRng rng(36);
    FixedBatchTask task(gen_adding_batch<double>(40, 4, rng));
    NetworkSpec spec = small_adding_spec(8);
    Network<double> net(spec, rng.child(1));
    // Plant an explosive recurrent weight and no constraint; the hidden state
    // grows as u^t and the squared loss overflows to infinity within T=40.
    for (auto* u : net.recurrent_weights())
        for (std::size_t i = 0; i < u->size(); ++i) (*u)[i] = 1e5;
    FitOptions opt;
    opt.max_steps = 50;
    opt.eval_interval = 10;
    opt.schedule.initial = 1e-3;
    opt.seed = 8;
    FitResult r = fit(net, task, opt);
    CHECK(r.aborted);
    CHECK_FALSE(r.abort_reason.empty());
}

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "indrnn/network.hpp"

namespace indrnn {

// ---------------------------------------------------------------------------
// Recurrent-weight regulation. The temporal gradient term is u^(T-t) times a
// product of activation derivatives; clipping |u_n| to gamma^(1/T_eff) keeps
// it from exploding past gamma over the memory horizon. Applied as a hard
// projection after every optimizer step, not as a penalty and not as gradient
// clipping.
struct RecurrentConstraint {
    double gamma = 2.0;        // largest tolerated gradient magnitude
    long t_eff = 1;            // memory horizon, typically the sequence length
    double epsilon_floor = 0.0;  // minimum-effective-gradient lower bound, off by default
    bool nonnegative = false;  // clip into [0, bound] instead of [-bound, bound]

    void validate() const {
        if (!(gamma > 0.0)) throw ConfigError("constraint: gamma must be > 0");
        if (t_eff < 1) throw ConfigError("constraint: t_eff must be >= 1");
        if (epsilon_floor < 0.0 || epsilon_floor > bound())
            throw ConfigError("constraint: epsilon_floor must be in [0, bound]");
    }

    double bound() const { return std::pow(gamma, 1.0 / static_cast<double>(t_eff)); }

    // Sign-preserving magnitude clip; entries already inside the range are
    // left bit-identical.
    template <class S>
    void project(TensorT<S>& u) const {
        const S hi = static_cast<S>(bound());
        const S lo = static_cast<S>(epsilon_floor);
        for (std::size_t i = 0; i < u.size(); ++i) {
            S v = u[i];
            if (nonnegative && v < S{0}) v = -v;
            const S mag = v < S{0} ? -v : v;
            if (mag > hi) v = v < S{0} ? -hi : hi;
            else if (lo > S{0} && mag < lo) v = v < S{0} ? -lo : lo;
            u[i] = v;
        }
    }
};

template <class S>
void project_recurrent_weights(TensorT<S>& u, const RecurrentConstraint& c) {
    c.validate();
    c.project(u);
}

// ---------------------------------------------------------------------------
// Adam with bias correction.

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class S>
class Adam {
public:
    explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

    void step(std::vector<ParamRef<S>>& params, double lr) {
        if (!(lr > 0.0)) throw ConfigError("adam: lr must be > 0");
        if (m_.empty()) {
            for (auto& p : params) {
                m_.push_back(TensorT<S>::zeros(p.value->shape()));
                v_.push_back(TensorT<S>::zeros(p.value->shape()));
            }
        }
        if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed size");
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = params[k];
            if (p.value->shape() != m_[k].shape())
                throw ShapeError("adam: shape of " + p.name + " changed");
            if (!p.trainable) continue;
            if (!p.grad->all_finite())
                throw NumericError("adam: non-finite gradient for parameter " + p.name);
            S* val = p.value->data();
            const S* g = p.grad->data();
            S* m = m_[k].data();
            S* v = v_[k].data();
            for (std::size_t i = 0; i < p.value->size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = opt_.beta1 * static_cast<double>(m[i]) + (1.0 - opt_.beta1) * gi;
                const double vi = opt_.beta2 * static_cast<double>(v[i]) + (1.0 - opt_.beta2) * gi * gi;
                m[i] = static_cast<S>(mi);
                v[i] = static_cast<S>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                val[i] = static_cast<S>(static_cast<double>(val[i]) - lr * mhat / (std::sqrt(vhat) + opt_.eps));
            }
        }
    }

    long steps_taken() const { return t_; }

private:
    AdamOptions opt_;
    long t_ = 0;
    std::vector<TensorT<S>> m_, v_;
};

// ---------------------------------------------------------------------------
// Losses. Each returns (scalar loss, gradient w.r.t. the prediction).

template <class S>
std::pair<double, TensorT<S>> mse_loss(const TensorT<S>& pred, const TensorT<S>& target) {
    if (pred.size() != target.size())
        throw ShapeError("mse_loss: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
    const double n = static_cast<double>(pred.size());
    double loss = 0.0;
    TensorT<S> grad(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        loss += d * d;
        grad[i] = static_cast<S>(2.0 * d / n);
    }
    return {loss / n, std::move(grad)};
}

// Softmax cross-entropy, mean over the batch, stabilized by max-subtraction.
template <class S>
std::pair<double, TensorT<S>> cross_entropy_loss(const TensorT<S>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw ShapeError("cross_entropy_loss: logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    double loss = 0.0;
    TensorT<S> grad({B, C});
    for (std::size_t b = 0; b < B; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= C)
            throw DataError("cross_entropy_loss: label " + std::to_string(labels[b]) + " out of range [0, " +
                            std::to_string(C) + ")");
        double mx = -1e300;
        for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(logits(b, c)));
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(logits(b, c)) - mx);
        const double logz = std::log(z) + mx;
        loss += logz - static_cast<double>(logits(b, static_cast<std::size_t>(labels[b])));
        for (std::size_t c = 0; c < C; ++c) {
            const double p = std::exp(static_cast<double>(logits(b, c)) - logz);
            grad(b, c) = static_cast<S>((p - (static_cast<int>(c) == labels[b] ? 1.0 : 0.0)) /
                                        static_cast<double>(B));
        }
    }
    return {loss / static_cast<double>(B), std::move(grad)};
}

// ---------------------------------------------------------------------------
// Learning-rate schedules: step decay (divide by factor every K steps) or
// plateau decay (divide by factor after `patience` evals without improvement).

struct LrSchedule {
    enum class Kind { Step, Plateau };
    Kind kind = Kind::Step;
    double initial = 2e-4;
    double factor = 10.0;
    long every_steps = 20000;
    long patience = 20;

    void validate() const {
        if (!(initial > 0.0)) throw ConfigError("schedule: initial lr must be > 0");
        if (!(factor > 1.0)) throw ConfigError("schedule: decay factor must be > 1");
        if (kind == Kind::Step && every_steps < 1) throw ConfigError("schedule: every_steps must be >= 1");
        if (kind == Kind::Plateau && patience < 1) throw ConfigError("schedule: patience must be >= 1");
    }
};

class LrScheduleState {
public:
    explicit LrScheduleState(LrSchedule s) : s_(s), lr_(s.initial) { s_.validate(); }

    // Current lr for a 1-based step index.
    double lr_at(long step) {
        if (s_.kind == LrSchedule::Kind::Step) {
            const long drops = (step - 1) / s_.every_steps;
            lr_ = s_.initial / std::pow(s_.factor, static_cast<double>(drops));
        }
        return lr_;
    }

    // Plateau schedules observe the eval metric (lower is better).
    void observe_eval(double metric) {
        if (s_.kind != LrSchedule::Kind::Plateau) return;
        if (metric < best_) {
            best_ = metric;
            since_ = 0;
        } else if (++since_ >= s_.patience) {
            lr_ /= s_.factor;
            since_ = 0;
        }
    }

private:
    LrSchedule s_;
    double lr_;
    double best_ = 1e300;
    long since_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop.

template <class S>
struct BatchT {
    TensorT<S> x;             // T×B×M
    TensorT<S> targets;       // regression targets (B×1), empty for classification
    std::vector<int> labels;  // class labels, empty for regression
};

template <class S>
class TaskT {
public:
    virtual ~TaskT() = default;
    virtual BatchT<S> next_train(SeededRng& rng) = 0;
    virtual const BatchT<S>& eval_batch() const = 0;
    virtual bool classification() const = 0;
};

struct MetricRecord {
    long step = 0;
    double train_loss = 0.0;
    double eval_metric = 0.0;  // MSE for regression, error rate for classification
    double lr = 0.0;
    std::vector<double> max_abs_u;  // per recurrent layer

    std::string to_json_line() const {
        std::ostringstream os;
        os.precision(17);
        os << "{\"step\":" << step << ",\"train_loss\":" << train_loss << ",\"eval\":" << eval_metric
           << ",\"lr\":" << lr << ",\"max_abs_u\":[";
        for (std::size_t i = 0; i < max_abs_u.size(); ++i) os << (i ? "," : "") << max_abs_u[i];
        os << "]}";
        return os.str();
    }
};

struct FitOptions {
    long max_steps = 10000;
    long eval_interval = 200;
    LrSchedule schedule;
    AdamOptions adam;
    std::optional<RecurrentConstraint> constraint;
    std::optional<double> early_stop_metric;  // stop once eval metric <= this
    std::uint64_t seed = 1;                   // batch + dropout streams
    std::string log_path;                     // JSONL metrics, optional
    std::string checkpoint_dir;               // best.ckpt / final.ckpt, optional
    std::size_t eval_chunk = 512;             // eval forward chunk along the batch axis
};

struct FitResult {
    std::vector<MetricRecord> records;
    double best_eval = 1e300;
    long best_step = 0;
    long steps_run = 0;
    bool aborted = false;
    std::string abort_reason;
};

// Evaluate in chunks so large eval sets do not blow up activation caches.
template <class S>
double evaluate(Network<S>& net, const BatchT<S>& eval, bool classification, std::size_t chunk) {
    const std::size_t T = eval.x.dim(0), B = eval.x.dim(1), M = eval.x.dim(2);
    double se_or_err = 0.0;
    std::size_t count = 0;
    for (std::size_t b0 = 0; b0 < B; b0 += chunk) {
        const std::size_t bn = std::min(chunk, B - b0);
        TensorT<S> xc({T, bn, M});
        for (std::size_t t = 0; t < T; ++t)
            std::copy(eval.x.data() + (t * B + b0) * M, eval.x.data() + (t * B + b0 + bn) * M,
                      xc.data() + t * bn * M);
        TensorT<S> out = net.forward(xc, Mode::Eval);
        if (classification) {
            for (std::size_t b = 0; b < bn; ++b) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < out.dim(1); ++c)
                    if (out(b, c) > out(b, best)) best = c;
                if (static_cast<int>(best) != eval.labels[b0 + b]) se_or_err += 1.0;
            }
        } else {
            for (std::size_t b = 0; b < bn; ++b) {
                const double d = static_cast<double>(out[b]) - static_cast<double>(eval.targets[b0 + b]);
                se_or_err += d * d;
            }
        }
        count += bn;
    }
    return se_or_err / static_cast<double>(count);
}

template <class S>
FitResult fit(Network<S>& net, TaskT<S>& task, const FitOptions& opt) {
    FitResult result;
    SeededRng seed_root(opt.seed);
    SeededRng batch_rng = seed_root.child(1);
    SeededRng drop_rng = seed_root.child(2);
    Adam<S> adam(opt.adam);
    LrScheduleState sched(opt.schedule);
    if (opt.constraint) opt.constraint->validate();

    std::ofstream log;
    if (!opt.log_path.empty()) {
        log.open(opt.log_path);
        if (!log) throw DataError("fit: cannot open log file " + opt.log_path);
    }

    auto project_all = [&] {
        if (!opt.constraint) return;
        for (auto* u : net.recurrent_weights()) opt.constraint->project(*u);
    };
    // Initial weights must respect the constraint too.
    project_all();

    double last_train_loss = 0.0;
    for (long step = 1; step <= opt.max_steps; ++step) {
        const double lr = sched.lr_at(step);
        try {
            BatchT<S> batch = task.next_train(batch_rng);
            net.zero_grads();
            TensorT<S> out = net.forward(batch.x, Mode::Train, &drop_rng);
            double loss;
            TensorT<S> grad;
            if (task.classification()) {
                auto [l, g] = cross_entropy_loss(out, batch.labels);
                loss = l;
                grad = std::move(g);
            } else {
                auto [l, g] = mse_loss(out, batch.targets);
                loss = l;
                grad = std::move(g);
            }
            if (!std::isfinite(loss)) throw NumericError("fit: non-finite training loss");
            last_train_loss = loss;
            net.backward(grad);
            auto params = net.params();
            adam.step(params, lr);
            project_all();
        } catch (const NumericError& e) {
            // Abort; the best-on-validation checkpoint already on disk is the
            // last good state.
            result.aborted = true;
            result.abort_reason = e.what();
            result.steps_run = step - 1;
            return result;
        }

        if (step % opt.eval_interval == 0 || step == opt.max_steps) {
            MetricRecord rec;
            rec.step = step;
            rec.train_loss = last_train_loss;
            rec.eval_metric = evaluate(net, task.eval_batch(), task.classification(), opt.eval_chunk);
            rec.lr = lr;
            rec.max_abs_u = net.max_abs_recurrent();
            sched.observe_eval(rec.eval_metric);
            if (log) log << rec.to_json_line() << "\n" << std::flush;
            result.records.push_back(rec);
            if (rec.eval_metric < result.best_eval) {
                result.best_eval = rec.eval_metric;
                result.best_step = step;
                if (!opt.checkpoint_dir.empty())
                    save_checkpoint(opt.checkpoint_dir + "/best.ckpt", snapshot(net));
            }
            if (opt.early_stop_metric && rec.eval_metric <= *opt.early_stop_metric) {
                result.steps_run = step;
                if (!opt.checkpoint_dir.empty())
                    save_checkpoint(opt.checkpoint_dir + "/final.ckpt", snapshot(net));
                return result;
            }
        }
        result.steps_run = step;
    }
    if (!opt.checkpoint_dir.empty()) save_checkpoint(opt.checkpoint_dir + "/final.ckpt", snapshot(net));
    return result;
}

}  // namespace indrnn

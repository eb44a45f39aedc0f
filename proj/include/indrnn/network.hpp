#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "indrnn/layers.hpp"
#include "indrnn/rng.hpp"

namespace indrnn {

// ---------------------------------------------------------------------------
// Declarative network description. Serializes to a versioned JSON schema
// (see src/network_spec.cpp); unknown keys are hard errors.

enum class LayerKind { IndRnn, Rnn, Residual };
enum class BnPlacement { None, Before, After };
enum class HeadKind { LastStep, PerStep };

struct LayerSpec {
    LayerKind kind = LayerKind::IndRnn;
    std::size_t width = 0;
    Activation act = Activation::Relu;
    BnPlacement bn = BnPlacement::None;
    double dropout = 0.0;

    bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
    std::size_t input_size = 0;
    std::vector<LayerSpec> layers;
    HeadKind head = HeadKind::LastStep;
    std::size_t output_size = 1;

    // Throws ConfigError naming the offending layer index.
    void validate() const;

    bool operator==(const NetworkSpec&) const = default;
};

std::string network_spec_to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const std::string& json_text);

// ---------------------------------------------------------------------------

template <class S>
struct ParamRef {
    std::string name;
    TensorT<S>* value = nullptr;
    TensorT<S>* grad = nullptr;  // null for non-trainable state (BN running stats)
    bool trainable = true;
};

// Weight initialization defaults: input weights uniform ±sqrt(6/(M+N)),
// recurrent vectors uniform [0, u_hi], biases zero.
struct InitOptions {
    double recurrent_hi = 1.0;  // upper bound for u init; set to the constraint bound when attached
};

template <class S>
class StageT {
public:
    virtual ~StageT() = default;
    virtual TensorT<S> forward(const TensorT<S>& x, Mode mode, SeededRng* drop_rng) = 0;
    virtual TensorT<S> backward(const TensorT<S>& gy) = 0;
    virtual void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) = 0;
    virtual void collect_state(const std::string& prefix, std::vector<ParamRef<S>>& out) {}
    virtual void collect_recurrent(std::vector<TensorT<S>*>& out) {}
    // Post-recurrence hidden states from the last forward call, for traces.
    virtual const TensorT<S>* recorded_hidden() const { return nullptr; }
    virtual std::size_t out_width() const = 0;
};

namespace detail {
template <class S>
TensorT<S> glorot_uniform(SeededRng& rng, std::size_t n, std::size_t m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(n + m));
    return rng.template sample_uniform<S>({n, m}, -limit, limit);
}

template <class S>
void add_param(std::vector<ParamRef<S>>& out, const std::string& name, TensorT<S>& value, TensorT<S>& grad) {
    out.push_back(ParamRef<S>{name, &value, &grad, true});
}
}  // namespace detail

template <class S>
class IndRnnStageT final : public StageT<S> {
public:
    IndRnnStageT(std::size_t in, const LayerSpec& spec, SeededRng& rng, const InitOptions& init)
        : spec_(spec) {
        p_.W = detail::glorot_uniform<S>(rng, spec.width, in);
        p_.u = rng.template sample_uniform<S>({spec.width}, 0.0, init.recurrent_hi);
        p_.b = TensorT<S>::zeros({spec.width});
        p_.act = spec.act;
        if (spec.bn != BnPlacement::None) bn_ = BatchNormParams<S>(spec.width);
        zero_grads();
    }

    TensorT<S> forward(const TensorT<S>& x, Mode mode, SeededRng* drop_rng) override {
        TensorT<S> h;
        if (spec_.bn == BnPlacement::Before) {
            auto [z, pc] = timedist_dense_forward(x, DenseParams<S>{p_.W, p_.b});
            cache_.proj = std::move(pc);
            auto [zb, bc] = batchnorm_forward(z, *bn_, mode);
            bn_cache_ = std::move(bc);
            auto [hh, rc] = recur_forward(zb, p_.u, p_.act);
            cache_.recur = std::move(rc);
            h = std::move(hh);
            recorded_ = h;
        } else {
            auto [hh, c] = indrnn_forward(x, p_);
            cache_ = std::move(c);
            recorded_ = hh;
            if (spec_.bn == BnPlacement::After) {
                auto [y, bc] = batchnorm_forward(hh, *bn_, mode);
                bn_cache_ = std::move(bc);
                h = std::move(y);
            } else {
                h = std::move(hh);
            }
        }
        if (spec_.dropout > 0.0) {
            if (mode == Mode::Train && drop_rng == nullptr)
                throw ConfigError("indrnn stage: dropout requires an rng in train mode");
            SeededRng dummy(0);
            auto [y, mask] = dropout_forward(h, spec_.dropout, drop_rng ? *drop_rng : dummy, mode);
            drop_mask_ = std::move(mask);
            return y;
        }
        return h;
    }

    TensorT<S> backward(const TensorT<S>& gy) override {
        TensorT<S> g = gy;
        if (spec_.dropout > 0.0) g = dropout_backward(g, drop_mask_);
        if (spec_.bn == BnPlacement::Before) {
            RecurGrads<S> rg = recur_backward(g, cache_.recur, p_.u, p_.act);
            accum(gu_, rg.u);
            BatchNormGrads<S> bg = batchnorm_backward(rg.z, bn_cache_, *bn_);
            accum(g_gain_, bg.gain);
            accum(g_shift_, bg.shift);
            DenseGrads<S> dg = timedist_dense_backward(bg.x, cache_.proj, DenseParams<S>{p_.W, p_.b});
            accum(gW_, dg.W);
            accum(gb_, dg.b);
            return dg.x;
        }
        if (spec_.bn == BnPlacement::After) {
            BatchNormGrads<S> bg = batchnorm_backward(g, bn_cache_, *bn_);
            accum(g_gain_, bg.gain);
            accum(g_shift_, bg.shift);
            g = std::move(bg.x);
        }
        IndRnnGrads<S> ig = indrnn_backward(g, cache_, p_);
        accum(gW_, ig.W);
        accum(gu_, ig.u);
        accum(gb_, ig.b);
        return ig.x;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        detail::add_param(out, prefix + ".W", p_.W, gW_);
        detail::add_param(out, prefix + ".u", p_.u, gu_);
        detail::add_param(out, prefix + ".b", p_.b, gb_);
        if (bn_) {
            detail::add_param(out, prefix + ".bn.gain", bn_->gain, g_gain_);
            detail::add_param(out, prefix + ".bn.shift", bn_->shift, g_shift_);
        }
    }

    void collect_state(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        if (bn_) {
            out.push_back(ParamRef<S>{prefix + ".bn.running_mean", &bn_->running_mean, nullptr, false});
            out.push_back(ParamRef<S>{prefix + ".bn.running_var", &bn_->running_var, nullptr, false});
        }
    }

    void collect_recurrent(std::vector<TensorT<S>*>& out) override { out.push_back(&p_.u); }
    const TensorT<S>* recorded_hidden() const override { return &recorded_; }
    std::size_t out_width() const override { return spec_.width; }

    IndRnnParams<S>& params() { return p_; }

    void zero_grads() {
        gW_ = TensorT<S>::zeros(p_.W.shape());
        gu_ = TensorT<S>::zeros(p_.u.shape());
        gb_ = TensorT<S>::zeros(p_.b.shape());
        if (bn_) {
            g_gain_ = TensorT<S>::zeros(bn_->gain.shape());
            g_shift_ = TensorT<S>::zeros(bn_->shift.shape());
        }
    }

private:
    static void accum(TensorT<S>& dst, const TensorT<S>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    LayerSpec spec_;
    IndRnnParams<S> p_;
    std::optional<BatchNormParams<S>> bn_;
    TensorT<S> gW_, gu_, gb_, g_gain_, g_shift_;
    IndRnnCache<S> cache_;
    BatchNormCache<S> bn_cache_;
    TensorT<S> drop_mask_;
    TensorT<S> recorded_;
};

template <class S>
class RnnStageT final : public StageT<S> {
public:
    RnnStageT(std::size_t in, const LayerSpec& spec, SeededRng& rng) : spec_(spec) {
        p_.W = detail::glorot_uniform<S>(rng, spec.width, in);
        p_.U = detail::glorot_uniform<S>(rng, spec.width, spec.width);
        p_.b = TensorT<S>::zeros({spec.width});
        p_.act = spec.act;
        zero_grads();
    }

    TensorT<S> forward(const TensorT<S>& x, Mode, SeededRng*) override {
        auto [h, c] = rnn_forward(x, p_);
        cache_ = std::move(c);
        recorded_ = h;
        return h;
    }

    TensorT<S> backward(const TensorT<S>& gy) override {
        RnnGrads<S> g = rnn_backward(gy, cache_, p_);
        for (std::size_t i = 0; i < gW_.size(); ++i) gW_[i] += g.W[i];
        for (std::size_t i = 0; i < gU_.size(); ++i) gU_[i] += g.U[i];
        for (std::size_t i = 0; i < gb_.size(); ++i) gb_[i] += g.b[i];
        return g.x;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        detail::add_param(out, prefix + ".W", p_.W, gW_);
        detail::add_param(out, prefix + ".U", p_.U, gU_);
        detail::add_param(out, prefix + ".b", p_.b, gb_);
    }

    const TensorT<S>* recorded_hidden() const override { return &recorded_; }
    std::size_t out_width() const override { return spec_.width; }

    RnnParams<S>& params() { return p_; }

    void zero_grads() {
        gW_ = TensorT<S>::zeros(p_.W.shape());
        gU_ = TensorT<S>::zeros(p_.U.shape());
        gb_ = TensorT<S>::zeros(p_.b.shape());
    }

private:
    LayerSpec spec_;
    RnnParams<S> p_;
    TensorT<S> gW_, gU_, gb_;
    RnnCache<S> cache_;
    TensorT<S> recorded_;
};

template <class S>
class ResidualStageT final : public StageT<S> {
public:
    ResidualStageT(std::size_t in, const LayerSpec& spec, SeededRng& rng, const InitOptions& init)
        : spec_(spec) {
        if (in != spec.width)
            throw ConfigError("residual stage: input width " + std::to_string(in) + " != block width " +
                              std::to_string(spec.width));
        const std::size_t n = spec.width;
        p_.bn1 = BatchNormParams<S>(n);
        p_.bn2 = BatchNormParams<S>(n);
        p_.u1 = rng.template sample_uniform<S>({n}, 0.0, init.recurrent_hi);
        p_.u2 = rng.template sample_uniform<S>({n}, 0.0, init.recurrent_hi);
        p_.w1 = DenseParams<S>{detail::glorot_uniform<S>(rng, n, n), TensorT<S>::zeros({n})};
        // Zero-initialized final weight makes the block an identity map at init.
        p_.w2 = DenseParams<S>{TensorT<S>::zeros({n, n}), TensorT<S>::zeros({n})};
        p_.act = spec.act;
        zero_grads();
    }

    TensorT<S> forward(const TensorT<S>& x, Mode mode, SeededRng* drop_rng) override {
        auto [y, c] = residual_block_forward(x, p_, mode);
        cache_ = std::move(c);
        recorded_ = cache_.r2.h;
        if (spec_.dropout > 0.0) {
            if (mode == Mode::Train && drop_rng == nullptr)
                throw ConfigError("residual stage: dropout requires an rng in train mode");
            SeededRng dummy(0);
            auto [yd, mask] = dropout_forward(y, spec_.dropout, drop_rng ? *drop_rng : dummy, mode);
            drop_mask_ = std::move(mask);
            return yd;
        }
        return y;
    }

    TensorT<S> backward(const TensorT<S>& gy) override {
        TensorT<S> g = gy;
        if (spec_.dropout > 0.0) g = dropout_backward(g, drop_mask_);
        ResidualBlockGrads<S> rg = residual_block_backward(g, cache_, p_);
        accum(g_bn1_gain_, rg.bn1_gain);
        accum(g_bn1_shift_, rg.bn1_shift);
        accum(gu1_, rg.u1);
        accum(gw1_W_, rg.w1_W);
        accum(gw1_b_, rg.w1_b);
        accum(g_bn2_gain_, rg.bn2_gain);
        accum(g_bn2_shift_, rg.bn2_shift);
        accum(gu2_, rg.u2);
        accum(gw2_W_, rg.w2_W);
        accum(gw2_b_, rg.w2_b);
        return rg.x;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        detail::add_param(out, prefix + ".bn1.gain", p_.bn1.gain, g_bn1_gain_);
        detail::add_param(out, prefix + ".bn1.shift", p_.bn1.shift, g_bn1_shift_);
        detail::add_param(out, prefix + ".u1", p_.u1, gu1_);
        detail::add_param(out, prefix + ".w1.W", p_.w1.W, gw1_W_);
        detail::add_param(out, prefix + ".w1.b", p_.w1.b, gw1_b_);
        detail::add_param(out, prefix + ".bn2.gain", p_.bn2.gain, g_bn2_gain_);
        detail::add_param(out, prefix + ".bn2.shift", p_.bn2.shift, g_bn2_shift_);
        detail::add_param(out, prefix + ".u2", p_.u2, gu2_);
        detail::add_param(out, prefix + ".w2.W", p_.w2.W, gw2_W_);
        detail::add_param(out, prefix + ".w2.b", p_.w2.b, gw2_b_);
    }

    void collect_state(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        out.push_back(ParamRef<S>{prefix + ".bn1.running_mean", &p_.bn1.running_mean, nullptr, false});
        out.push_back(ParamRef<S>{prefix + ".bn1.running_var", &p_.bn1.running_var, nullptr, false});
        out.push_back(ParamRef<S>{prefix + ".bn2.running_mean", &p_.bn2.running_mean, nullptr, false});
        out.push_back(ParamRef<S>{prefix + ".bn2.running_var", &p_.bn2.running_var, nullptr, false});
    }

    void collect_recurrent(std::vector<TensorT<S>*>& out) override {
        out.push_back(&p_.u1);
        out.push_back(&p_.u2);
    }

    const TensorT<S>* recorded_hidden() const override { return &recorded_; }
    std::size_t out_width() const override { return spec_.width; }

    ResidualBlockParams<S>& params() { return p_; }

    void zero_grads() {
        g_bn1_gain_ = TensorT<S>::zeros(p_.bn1.gain.shape());
        g_bn1_shift_ = TensorT<S>::zeros(p_.bn1.shift.shape());
        gu1_ = TensorT<S>::zeros(p_.u1.shape());
        gw1_W_ = TensorT<S>::zeros(p_.w1.W.shape());
        gw1_b_ = TensorT<S>::zeros(p_.w1.b.shape());
        g_bn2_gain_ = TensorT<S>::zeros(p_.bn2.gain.shape());
        g_bn2_shift_ = TensorT<S>::zeros(p_.bn2.shift.shape());
        gu2_ = TensorT<S>::zeros(p_.u2.shape());
        gw2_W_ = TensorT<S>::zeros(p_.w2.W.shape());
        gw2_b_ = TensorT<S>::zeros(p_.w2.b.shape());
    }

private:
    static void accum(TensorT<S>& dst, const TensorT<S>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    LayerSpec spec_;
    ResidualBlockParams<S> p_;
    TensorT<S> g_bn1_gain_, g_bn1_shift_, gu1_, gw1_W_, gw1_b_;
    TensorT<S> g_bn2_gain_, g_bn2_shift_, gu2_, gw2_W_, gw2_b_;
    ResidualBlockCache<S> cache_;
    TensorT<S> drop_mask_;
    TensorT<S> recorded_;
};

// Output head: dense on the last time step (classification / regression) or
// on every time step (language-modelling style).
template <class S>
class HeadStageT final : public StageT<S> {
public:
    HeadStageT(std::size_t in, HeadKind kind, std::size_t out, SeededRng& rng) : kind_(kind) {
        p_.W = detail::glorot_uniform<S>(rng, out, in);
        p_.b = TensorT<S>::zeros({out});
        zero_grads();
    }

    TensorT<S> forward(const TensorT<S>& x, Mode, SeededRng*) override {
        detail::expect_rank3(x, "head");
        in_shape_ = x.shape();
        if (kind_ == HeadKind::PerStep) {
            auto [y, c] = timedist_dense_forward(x, p_);
            cache_ = std::move(c);
            return y;
        }
        const std::size_t T = x.dim(0), B = x.dim(1), N = x.dim(2);
        TensorT<S> last({B, N});
        std::copy(x.data() + (T - 1) * B * N, x.data() + T * B * N, last.data());
        auto [y, c] = dense_forward(last, p_);
        cache_ = std::move(c);
        return y;
    }

    TensorT<S> backward(const TensorT<S>& gy) override {
        if (kind_ == HeadKind::PerStep) {
            DenseGrads<S> g = timedist_dense_backward(gy, cache_, p_);
            accum(g);
            return g.x;
        }
        DenseGrads<S> g = dense_backward(gy, cache_, p_);
        accum(g);
        const std::size_t T = in_shape_[0], B = in_shape_[1], N = in_shape_[2];
        TensorT<S> gx = TensorT<S>::zeros({T, B, N});
        std::copy(g.x.data(), g.x.data() + B * N, gx.data() + (T - 1) * B * N);
        return gx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        detail::add_param(out, prefix + ".W", p_.W, gW_);
        detail::add_param(out, prefix + ".b", p_.b, gb_);
    }

    std::size_t out_width() const override { return p_.out(); }

    DenseParams<S>& params() { return p_; }

    void zero_grads() {
        gW_ = TensorT<S>::zeros(p_.W.shape());
        gb_ = TensorT<S>::zeros(p_.b.shape());
    }

private:
    void accum(const DenseGrads<S>& g) {
        for (std::size_t i = 0; i < gW_.size(); ++i) gW_[i] += g.W[i];
        for (std::size_t i = 0; i < gb_.size(); ++i) gb_[i] += g.b[i];
    }

    HeadKind kind_;
    DenseParams<S> p_;
    TensorT<S> gW_, gb_;
    DenseCache<S> cache_;
    Shape in_shape_;
};

// ---------------------------------------------------------------------------

template <class S>
class Network {
public:
    Network(NetworkSpec spec, SeededRng init_rng, InitOptions init = {}) : spec_(std::move(spec)) {
        spec_.validate();
        std::size_t in = spec_.input_size;
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            const LayerSpec& l = spec_.layers[i];
            switch (l.kind) {
                case LayerKind::IndRnn:
                    stages_.push_back(std::make_unique<IndRnnStageT<S>>(in, l, init_rng, init));
                    break;
                case LayerKind::Rnn:
                    stages_.push_back(std::make_unique<RnnStageT<S>>(in, l, init_rng));
                    break;
                case LayerKind::Residual:
                    stages_.push_back(std::make_unique<ResidualStageT<S>>(in, l, init_rng, init));
                    break;
            }
            in = stages_.back()->out_width();
        }
        head_ = std::make_unique<HeadStageT<S>>(in, spec_.head, spec_.output_size, init_rng);
    }

    const NetworkSpec& spec() const { return spec_; }

    TensorT<S> forward(const TensorT<S>& x, Mode mode, SeededRng* drop_rng = nullptr,
                       std::vector<TensorT<S>>* record_hidden = nullptr) {
        TensorT<S> h = x;
        for (auto& s : stages_) {
            h = s->forward(h, mode, drop_rng);
            if (record_hidden && s->recorded_hidden()) record_hidden->push_back(*s->recorded_hidden());
        }
        return head_->forward(h, mode, drop_rng);
    }

    TensorT<S> backward(const TensorT<S>& grad_out) {
        TensorT<S> g = head_->backward(grad_out);
        for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    std::vector<ParamRef<S>> params() {
        std::vector<ParamRef<S>> out;
        for (std::size_t i = 0; i < stages_.size(); ++i)
            stages_[i]->collect_params("layer" + std::to_string(i), out);
        head_->collect_params("head", out);
        for (auto& p : out)
            for (const auto& f : frozen_)
                if (p.name.rfind(f, 0) == 0) p.trainable = false;
        return out;
    }

    // BN running statistics and other non-trainable state, for checkpoints.
    std::vector<ParamRef<S>> state() {
        std::vector<ParamRef<S>> out;
        for (std::size_t i = 0; i < stages_.size(); ++i)
            stages_[i]->collect_state("layer" + std::to_string(i), out);
        return out;
    }

    std::vector<TensorT<S>*> recurrent_weights() {
        std::vector<TensorT<S>*> out;
        for (auto& s : stages_) s->collect_recurrent(out);
        return out;
    }

    // Max |u_n| per recurrent stage, in layer order.
    std::vector<double> max_abs_recurrent() {
        std::vector<double> out;
        for (auto& s : stages_) {
            std::vector<TensorT<S>*> us;
            s->collect_recurrent(us);
            double m = 0.0;
            for (auto* u : us) m = std::max(m, max_abs(*u));
            if (!us.empty()) out.push_back(m);
        }
        return out;
    }

    void zero_grads() {
        for (auto& p : params())
            if (p.grad) p.grad->fill(S{0});
    }

    // Freeze every parameter whose name does not start with `prefix`.
    void freeze_all_except(const std::string& prefix) {
        frozen_.clear();
        for (auto& p : params())
            if (p.name.rfind(prefix, 0) != 0) frozen_.insert(p.name);
    }

    StageT<S>& stage(std::size_t i) { return *stages_.at(i); }
    std::size_t num_stages() const { return stages_.size(); }
    HeadStageT<S>& head() { return *head_; }

private:
    NetworkSpec spec_;
    std::vector<std::unique_ptr<StageT<S>>> stages_;
    std::unique_ptr<HeadStageT<S>> head_;
    std::set<std::string> frozen_;
};

// ---------------------------------------------------------------------------
// Checkpoints: JSON header (spec + shape manifest) followed by raw
// little-endian f64 data. See src/checkpoint.cpp.

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

struct Checkpoint {
    NetworkSpec spec;
    std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

template <class S>
Checkpoint snapshot(Network<S>& net) {
    Checkpoint ckpt;
    ckpt.spec = net.spec();
    auto grab = [&](std::vector<ParamRef<S>> refs) {
        for (auto& p : refs) {
            CheckpointEntry e;
            e.name = p.name;
            e.shape = p.value->shape();
            e.data.assign(p.value->data(), p.value->data() + p.value->size());
            ckpt.entries.push_back(std::move(e));
        }
    };
    grab(net.params());
    grab(net.state());
    return ckpt;
}

template <class S>
void restore(Network<S>& net, const Checkpoint& ckpt) {
    if (!(net.spec() == ckpt.spec))
        throw ConfigError("checkpoint restore: network spec does not match checkpoint spec");
    auto apply = [&](std::vector<ParamRef<S>> refs) {
        for (auto& p : refs) {
            const CheckpointEntry* found = nullptr;
            for (const auto& e : ckpt.entries)
                if (e.name == p.name) {
                    found = &e;
                    break;
                }
            if (!found) throw ConfigError("checkpoint restore: missing tensor " + p.name);
            if (found->shape.empty())  // never-initialized state (e.g. BN running stats)
                *p.value = TensorT<S>();
            else
                *p.value = TensorT<S>(found->shape,
                                      std::vector<S>(found->data.begin(), found->data.end()));
        }
    };
    apply(net.params());
    apply(net.state());
}

}  // namespace indrnn

#pragma once

#include <cstdint>
#include <ostream>
#include <optional>
#include <string>
#include <vector>

#include "indrnn/rng.hpp"
#include "indrnn/training.hpp"

namespace indrnn {

// ---------------------------------------------------------------------------
// Adding problem. Input is two channels per step: a value uniformly sampled
// in (0,1) and a two-hot indicator; the target is the sum of the two
// indicated values. The constant-prediction baseline MSE is 1/6 ≈ 0.167.
//
// Marker placement: the first marker is uniform in [0, T/2), the second in
// [T/2, T), so every sample carries a long-range dependency. This placement
// is a repo convention (see README), isolated here so alternatives can be
// swapped in.

template <class S>
BatchT<S> gen_adding_batch(std::size_t T, std::size_t B, SeededRng& rng) {
    if (T < 2) throw ConfigError("gen_adding_batch: T must be >= 2, got " + std::to_string(T));
    BatchT<S> batch;
    batch.x = TensorT<S>::zeros({T, B, 2});
    batch.targets = TensorT<S>({B, 1});
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t half = T / 2;
        const std::size_t i1 = static_cast<std::size_t>(rng.uniform_int(half));
        const std::size_t i2 = half + static_cast<std::size_t>(rng.uniform_int(T - half));
        double target = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double v = rng.uniform01();  // strictly inside (0,1)
            batch.x(t, b, 0) = static_cast<S>(v);
            if (t == i1 || t == i2) {
                batch.x(t, b, 1) = S{1};
                target += v;
            }
        }
        batch.targets(b, 0) = static_cast<S>(target);
    }
    return batch;
}

// Documented structured-text dump for cross-implementation comparison:
// header line "adding T B", then per sample one line of T values, one line of
// T indicators, one line with the target. Values use max precision so the
// dump round-trips exactly.
template <class S>
void dump_adding_batch(const BatchT<S>& batch, std::ostream& os) {
    const std::size_t T = batch.x.dim(0), B = batch.x.dim(1);
    os.precision(17);
    os << "adding " << T << " " << B << "\n";
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < T; ++t) os << (t ? " " : "") << static_cast<double>(batch.x(t, b, 0));
        os << "\n";
        for (std::size_t t = 0; t < T; ++t) os << (t ? " " : "") << static_cast<double>(batch.x(t, b, 1));
        os << "\n" << static_cast<double>(batch.targets(b, 0)) << "\n";
    }
}

template <class S>
class AddingTask final : public TaskT<S> {
public:
    AddingTask(std::size_t T, std::size_t B, std::size_t eval_size, SeededRng eval_rng)
        : T_(T), B_(B) {
        eval_ = gen_adding_batch<S>(T, eval_size, eval_rng);
    }

    BatchT<S> next_train(SeededRng& rng) override { return gen_adding_batch<S>(T_, B_, rng); }
    const BatchT<S>& eval_batch() const override { return eval_; }
    bool classification() const override { return false; }

private:
    std::size_t T_, B_;
    BatchT<S> eval_;
};

// ---------------------------------------------------------------------------
// Sequential / permuted MNIST. Raw pixels are kept as bytes; sequences are
// built on demand, scaled by 1/255 into [0,1], optionally permuted with one
// fixed permutation shared by all sequences, optionally mean-pooled over
// non-overlapping windows to shorten the sequence.

struct MnistDataset {
    std::size_t count = 0;
    std::size_t pixels = 784;  // 28×28 flattened row-major
    std::vector<std::uint8_t> images;  // count × pixels
    std::vector<std::uint8_t> labels;  // count
    std::optional<std::vector<std::size_t>> permutation;
};

// Parses the standard big-endian IDX pair (image magic 0x00000803, label
// magic 0x00000801). Rejects bad magic, truncation, and image/label count
// mismatches.
MnistDataset load_mnist(const std::string& images_path, const std::string& labels_path);

// Inverse of load_mnist; parse → serialize → parse is bit-identical.
void save_mnist_idx(const MnistDataset& ds, const std::string& images_path, const std::string& labels_path);

// Draws one permutation of the pixel positions from `seed` and stores it in
// the dataset. Applying a permutation twice is rejected.
MnistDataset apply_permutation(MnistDataset ds, std::uint64_t seed);

// Sequence batch for the given sample indices: T×B×1 with
// T = pixels / pool (pool must divide the pixel count). The stored
// permutation, when present, is applied before pooling.
template <class S>
BatchT<S> mnist_sequence_batch(const MnistDataset& ds, const std::vector<std::size_t>& indices,
                               std::size_t pool = 1) {
    if (pool == 0 || ds.pixels % pool != 0)
        throw ConfigError("mnist_sequence_batch: pool factor " + std::to_string(pool) +
                          " must divide pixel count " + std::to_string(ds.pixels));
    const std::size_t T = ds.pixels / pool;
    const std::size_t B = indices.size();
    BatchT<S> batch;
    batch.x = TensorT<S>({T, B, 1});
    batch.labels.resize(B);
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t idx = indices[b];
        if (idx >= ds.count) throw DataError("mnist_sequence_batch: sample index out of range");
        const std::uint8_t* img = ds.images.data() + idx * ds.pixels;
        for (std::size_t t = 0; t < T; ++t) {
            double acc = 0.0;
            for (std::size_t k = 0; k < pool; ++k) {
                const std::size_t pos = t * pool + k;
                const std::size_t src = ds.permutation ? (*ds.permutation)[pos] : pos;
                acc += static_cast<double>(img[src]) / 255.0;
            }
            batch.x(t, b, 0) = static_cast<S>(acc / static_cast<double>(pool));
        }
        batch.labels[b] = static_cast<int>(ds.labels[idx]);
    }
    return batch;
}

template <class S>
class MnistTask final : public TaskT<S> {
public:
    // Batches are sampled i.i.d. from `train`; `eval` is presented once as a
    // fixed evaluation set.
    MnistTask(MnistDataset train, const MnistDataset& eval, std::size_t batch_size, std::size_t pool)
        : train_(std::move(train)), batch_size_(batch_size), pool_(pool) {
        std::vector<std::size_t> all(eval.count);
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        eval_ = mnist_sequence_batch<S>(eval, all, pool);
    }

    BatchT<S> next_train(SeededRng& rng) override {
        std::vector<std::size_t> idx(batch_size_);
        for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(train_.count));
        return mnist_sequence_batch<S>(train_, idx, pool_);
    }

    const BatchT<S>& eval_batch() const override { return eval_; }
    bool classification() const override { return true; }

private:
    MnistDataset train_;
    std::size_t batch_size_, pool_;
    BatchT<S> eval_;
};

// Splits off the last `n` samples (validation convention: last 5000 training
// images are held out for model selection).
inline std::pair<MnistDataset, MnistDataset> split_tail(const MnistDataset& ds, std::size_t n) {
    if (n >= ds.count) throw ConfigError("split_tail: split size exceeds dataset size");
    MnistDataset head, tail;
    head.count = ds.count - n;
    tail.count = n;
    head.pixels = tail.pixels = ds.pixels;
    head.permutation = tail.permutation = ds.permutation;
    head.images.assign(ds.images.begin(), ds.images.begin() + head.count * ds.pixels);
    head.labels.assign(ds.labels.begin(), ds.labels.begin() + head.count);
    tail.images.assign(ds.images.begin() + head.count * ds.pixels, ds.images.end());
    tail.labels.assign(ds.labels.begin() + head.count, ds.labels.end());
    return {std::move(head), std::move(tail)};
}

}  // namespace indrnn

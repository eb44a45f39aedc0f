#include <fstream>

#include "indrnn/tasks.hpp"

namespace indrnn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& is) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) | (std::uint32_t(buf[2]) << 8) |
           std::uint32_t(buf[3]);
}

void write_be32(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<char*>(buf), 4);
}

}  // namespace

MnistDataset load_mnist(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DataError("load_mnist: cannot open image file " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("load_mnist: cannot open label file " + labels_path);

    const std::uint32_t img_magic = read_be32(img);
    if (!img || img_magic != kImageMagic)
        throw DataError("load_mnist: bad image magic in " + images_path + " (got " +
                        std::to_string(img_magic) + ", want " + std::to_string(kImageMagic) + ")");
    const std::uint32_t img_count = read_be32(img);
    const std::uint32_t rows = read_be32(img);
    const std::uint32_t cols = read_be32(img);
    if (!img) throw DataError("load_mnist: truncated image header in " + images_path);

    const std::uint32_t lab_magic = read_be32(lab);
    if (!lab || lab_magic != kLabelMagic)
        throw DataError("load_mnist: bad label magic in " + labels_path + " (got " +
                        std::to_string(lab_magic) + ", want " + std::to_string(kLabelMagic) + ")");
    const std::uint32_t lab_count = read_be32(lab);
    if (!lab) throw DataError("load_mnist: truncated label header in " + labels_path);

    if (img_count != lab_count)
        throw DataError("load_mnist: image count " + std::to_string(img_count) +
                        " does not match label count " + std::to_string(lab_count));

    MnistDataset ds;
    ds.count = img_count;
    ds.pixels = static_cast<std::size_t>(rows) * cols;
    ds.images.resize(ds.count * ds.pixels);
    img.read(reinterpret_cast<char*>(ds.images.data()), static_cast<std::streamsize>(ds.images.size()));
    if (img.gcount() != static_cast<std::streamsize>(ds.images.size()))
        throw DataError("load_mnist: truncated image data in " + images_path);
    ds.labels.resize(ds.count);
    lab.read(reinterpret_cast<char*>(ds.labels.data()), static_cast<std::streamsize>(ds.labels.size()));
    if (lab.gcount() != static_cast<std::streamsize>(ds.labels.size()))
        throw DataError("load_mnist: truncated label data in " + labels_path);
    return ds;
}

void save_mnist_idx(const MnistDataset& ds, const std::string& images_path, const std::string& labels_path) {
    // Row/column split: square images round-trip exactly; otherwise emit
    // pixels×1, which load_mnist flattens back to the same sequence.
    std::uint32_t rows = static_cast<std::uint32_t>(ds.pixels), cols = 1;
    const auto root = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(ds.pixels))));
    if (static_cast<std::size_t>(root) * root == ds.pixels) rows = cols = root;

    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw DataError("save_mnist_idx: cannot open " + images_path);
    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(ds.count));
    write_be32(img, rows);
    write_be32(img, cols);
    img.write(reinterpret_cast<const char*>(ds.images.data()),
              static_cast<std::streamsize>(ds.images.size()));

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("save_mnist_idx: cannot open " + labels_path);
    write_be32(lab, kLabelMagic);
    write_be32(lab, static_cast<std::uint32_t>(ds.count));
    lab.write(reinterpret_cast<const char*>(ds.labels.data()),
              static_cast<std::streamsize>(ds.labels.size()));
    if (!img || !lab) throw DataError("save_mnist_idx: write failed");
}

MnistDataset apply_permutation(MnistDataset ds, std::uint64_t seed) {
    if (ds.permutation)
        throw DataError("apply_permutation: dataset already carries a permutation");
    SeededRng rng(seed);
    ds.permutation = rng.permutation(ds.pixels);
    return ds;
}

}  // namespace indrnn

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "indrnn/network.hpp"

// Checkpoint file layout:
//   8-byte magic "INDRNN1\n"
//   u64 little-endian header length
//   JSON header: {"version":1, "dtype":"f64", "spec":<network spec JSON>,
//                 "tensors":[{"name":..., "shape":[...]}...]}
//   raw little-endian f64 data, tensors concatenated in header order.

namespace indrnn {

namespace {
using nlohmann::json;

constexpr char kMagic[8] = {'I', 'N', 'D', 'R', 'N', 'N', '1', '\n'};

void write_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

std::uint64_t read_u64(std::istream& is) {
    char buf[8];
    is.read(buf, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
    json header;
    header["version"] = 1;
    header["dtype"] = "f64";
    header["spec"] = json::parse(network_spec_to_json(ckpt.spec));
    header["tensors"] = json::array();
    for (const auto& e : ckpt.entries) {
        json t;
        t["name"] = e.name;
        t["shape"] = e.shape;
        header["tensors"].push_back(t);
    }
    const std::string htext = header.dump();
    os.write(kMagic, 8);
    write_u64(os, htext.size());
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    static_assert(sizeof(double) == 8);
    for (const auto& e : ckpt.entries)
        os.write(reinterpret_cast<const char*>(e.data.data()),
                 static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    if (!os) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    const std::uint64_t hlen = read_u64(is);
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw DataError("checkpoint: truncated header in " + path);
    json header;
    try {
        header = json::parse(htext);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("checkpoint: corrupt header: ") + e.what());
    }
    if (header.value("version", 0) != 1 || header.value("dtype", "") != "f64")
        throw DataError("checkpoint: unsupported version or dtype in " + path);
    Checkpoint ckpt;
    ckpt.spec = network_spec_from_json(header.at("spec").dump());
    for (const auto& t : header.at("tensors")) {
        CheckpointEntry e;
        e.name = t.at("name").get<std::string>();
        e.shape = t.at("shape").get<Shape>();
        // Rank-0 entries are never-initialized state tensors (no elements).
        e.data.resize(e.shape.empty() ? 0 : shape_size(e.shape));
        is.read(reinterpret_cast<char*>(e.data.data()),
                static_cast<std::streamsize>(e.data.size() * sizeof(double)));
        if (!is) throw DataError("checkpoint: truncated tensor data for " + e.name + " in " + path);
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

}  // namespace indrnn

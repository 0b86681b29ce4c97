#include "iid/network.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "iid/errors.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian host assumed for weight files");

namespace iid {

namespace {

constexpr char kMagic[4] = {'I', 'I', 'D', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_i32(std::ostream& out, std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw WeightsError(WeightsError::Kind::truncated, "weight file truncated");
    return v;
}
std::int32_t get_i32(std::istream& in) { return static_cast<std::int32_t>(get_u32(in)); }

void write_array(std::ostream& out, const std::vector<int>& shape, const std::vector<float>& data) {
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) put_i32(out, d);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
}

void write_tensor(std::ostream& out, const Tensor<float>& t) { write_array(out, t.shape(), t.data()); }

std::vector<float> read_array(std::istream& in, const std::vector<int>& expected_shape, const char* name) {
    const std::uint32_t rank = get_u32(in);
    if (rank != expected_shape.size())
        throw WeightsError(WeightsError::Kind::bad_shape,
                           std::string("weight block ") + name + ": rank " + std::to_string(rank) +
                               " != expected " + std::to_string(expected_shape.size()));
    std::int64_t n = 1;
    for (size_t i = 0; i < rank; ++i) {
        const std::int32_t d = get_i32(in);
        if (d != expected_shape[i])
            throw WeightsError(WeightsError::Kind::bad_shape,
                               std::string("weight block ") + name + ": dim " + std::to_string(i) + " is " +
                                   std::to_string(d) + ", expected " + std::to_string(expected_shape[i]));
        n *= d;
    }
    std::vector<float> data(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw WeightsError(WeightsError::Kind::truncated, "weight file truncated inside block");
    return data;
}

Tensor<float> read_tensor(std::istream& in, std::vector<int> shape, const char* name) {
    auto data = read_array(in, shape, name);
    return Tensor<float>::from_data(std::move(shape), std::move(data), true);
}

void write_block(std::ostream& out, const LevelBlock<float>& b) {
    write_tensor(out, b.proj_w);
    write_tensor(out, b.proj_b);
    write_tensor(out, b.bn1_scale);
    write_tensor(out, b.bn1_shift);
    write_array(out, {static_cast<int>(b.bn1.running_mean.size())}, b.bn1.running_mean);
    write_array(out, {static_cast<int>(b.bn1.running_var.size())}, b.bn1.running_var);
    write_tensor(out, b.conv_w);
    write_tensor(out, b.conv_b);
    write_tensor(out, b.bn2_scale);
    write_tensor(out, b.bn2_shift);
    write_array(out, {static_cast<int>(b.bn2.running_mean.size())}, b.bn2.running_mean);
    write_array(out, {static_cast<int>(b.bn2.running_var.size())}, b.bn2.running_var);
}

LevelBlock<float> read_block(std::istream& in, int in_channels, const NetConfig& cfg) {
    LevelBlock<float> b;
    const int p = cfg.proj_channels, f = cfg.conv_channels, k = cfg.kernel_size;
    b.proj_w = read_tensor(in, {p, in_channels, 1, 1}, "proj_w");
    b.proj_b = read_tensor(in, {p}, "proj_b");
    b.bn1_scale = read_tensor(in, {p}, "bn1_scale");
    b.bn1_shift = read_tensor(in, {p}, "bn1_shift");
    b.bn1.running_mean = read_array(in, {p}, "bn1_running_mean");
    b.bn1.running_var = read_array(in, {p}, "bn1_running_var");
    b.conv_w = read_tensor(in, {f, p, k, k}, "conv_w");
    b.conv_b = read_tensor(in, {f}, "conv_b");
    b.bn2_scale = read_tensor(in, {f}, "bn2_scale");
    b.bn2_shift = read_tensor(in, {f}, "bn2_shift");
    b.bn2.running_mean = read_array(in, {f}, "bn2_running_mean");
    b.bn2.running_var = read_array(in, {f}, "bn2_running_var");
    return b;
}

}  // namespace

void save_weights(const NetworkWeights& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WeightsError(WeightsError::Kind::io, "cannot open weight file for writing: " + path.string());
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_i32(out, net.config.levels);
    put_i32(out, net.config.proj_channels);
    put_i32(out, net.config.conv_channels);
    put_i32(out, net.config.kernel_size);
    for (const auto& b : net.encoder) write_block(out, b);
    write_block(out, net.bottleneck);
    for (const auto& b : net.decoder) write_block(out, b);
    write_tensor(out, net.head_w);
    write_tensor(out, net.head_b);
    if (!out) throw WeightsError(WeightsError::Kind::io, "weight file write failed: " + path.string());
}

NetworkWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightsError(WeightsError::Kind::io, "cannot open weight file: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw WeightsError(WeightsError::Kind::bad_magic, "not a weight file: " + path.string());
    const std::uint32_t version = get_u32(in);
    if (version != kVersion)
        throw WeightsError(WeightsError::Kind::bad_version,
                           "weight file version " + std::to_string(version) + ", expected " +
                               std::to_string(kVersion));
    NetConfig cfg;
    cfg.levels = get_i32(in);
    cfg.proj_channels = get_i32(in);
    cfg.conv_channels = get_i32(in);
    cfg.kernel_size = get_i32(in);
    if (cfg.levels < 1 || cfg.levels > 16 || cfg.proj_channels < 1 || cfg.conv_channels < 1 ||
        cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
        throw WeightsError(WeightsError::Kind::bad_shape, "weight file config is implausible");

    NetworkWeights net;
    net.config = cfg;
    net.format_version = static_cast<int>(version);
    for (int l = 0; l < cfg.levels; ++l)
        net.encoder.push_back(read_block(in, l == 0 ? 3 : cfg.conv_channels, cfg));
    net.bottleneck = read_block(in, cfg.conv_channels, cfg);
    for (int l = 0; l < cfg.levels; ++l) net.decoder.push_back(read_block(in, 2 * cfg.conv_channels, cfg));
    net.head_w = read_tensor(in, {3, cfg.conv_channels, 1, 1}, "head_w");
    net.head_b = read_tensor(in, {3}, "head_b");
    return net;
}

namespace {

LevelBlock<double> widen_block(const LevelBlock<float>& b) {
    auto widen_tensor = [](const Tensor<float>& t) {
        std::vector<double> data(t.data().begin(), t.data().end());
        return Tensor<double>::from_data(t.shape(), std::move(data), true);
    };
    LevelBlock<double> d;
    d.proj_w = widen_tensor(b.proj_w);
    d.proj_b = widen_tensor(b.proj_b);
    d.bn1_scale = widen_tensor(b.bn1_scale);
    d.bn1_shift = widen_tensor(b.bn1_shift);
    d.bn1.running_mean.assign(b.bn1.running_mean.begin(), b.bn1.running_mean.end());
    d.bn1.running_var.assign(b.bn1.running_var.begin(), b.bn1.running_var.end());
    d.conv_w = widen_tensor(b.conv_w);
    d.conv_b = widen_tensor(b.conv_b);
    d.bn2_scale = widen_tensor(b.bn2_scale);
    d.bn2_shift = widen_tensor(b.bn2_shift);
    d.bn2.running_mean.assign(b.bn2.running_mean.begin(), b.bn2.running_mean.end());
    d.bn2.running_var.assign(b.bn2.running_var.begin(), b.bn2.running_var.end());
    return d;
}

}  // namespace

NetworkWeightsT<double> widen(const NetworkWeights& net) {
    NetworkWeightsT<double> d;
    d.config = net.config;
    d.format_version = net.format_version;
    for (const auto& b : net.encoder) d.encoder.push_back(widen_block(b));
    d.bottleneck = widen_block(net.bottleneck);
    for (const auto& b : net.decoder) d.decoder.push_back(widen_block(b));
    std::vector<double> hw(net.head_w.data().begin(), net.head_w.data().end());
    std::vector<double> hb(net.head_b.data().begin(), net.head_b.data().end());
    d.head_w = Tensor<double>::from_data(net.head_w.shape(), std::move(hw), true);
    d.head_b = Tensor<double>::from_data(net.head_b.shape(), std::move(hb), true);
    return d;
}

}  // namespace iid

#include "dpl/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dpl {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'P', 'L', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> bytes;
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes.data(), 8);
}

std::uint64_t read_u64(std::istream& in) {
    std::array<unsigned char, 8> bytes;
    in.read(reinterpret_cast<char*>(bytes.data()), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

double read_f64(std::istream& in) {
    return std::bit_cast<double>(read_u64(in));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MlpParams& params,
                     const std::map<std::string, std::string>& extra) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    out.write(kMagic.data(), kMagic.size());
    write_u64(out, params.layers.size());
    for (const auto& layer : params.layers) {
        write_u64(out, layer.weight.rows);
        write_u64(out, layer.weight.cols);
    }
    for (const auto& layer : params.layers) {
        for (double w : layer.weight.data) write_f64(out, w);
        for (double b : layer.bias) write_f64(out, b);
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());

    nlohmann::json meta;
    meta["format"] = "DPLCKPT1";
    meta["hidden_activation"] = "relu";
    meta["output"] = "linear";
    auto& layers = meta["layers"] = nlohmann::json::array();
    for (const auto& layer : params.layers) {
        layers.push_back({layer.weight.rows, layer.weight.cols});
    }
    for (const auto& [key, value] : extra) meta[key] = value;
    std::ofstream side(path.string() + ".json");
    if (!side) throw std::runtime_error("cannot open checkpoint sidecar for writing");
    side << meta.dump(2) << "\n";
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    std::array<char, 8> magic;
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw std::runtime_error("bad checkpoint magic: " + path.string());
    const std::uint64_t layer_count = read_u64(in);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> dims(layer_count);
    for (auto& [d_in, d_out] : dims) {
        d_in = read_u64(in);
        d_out = read_u64(in);
    }
    MlpParams params;
    for (const auto& [d_in, d_out] : dims) {
        Layer layer;
        layer.weight = Matrix(d_in, d_out);
        for (double& w : layer.weight.data) w = read_f64(in);
        layer.bias.resize(d_out);
        for (double& b : layer.bias) b = read_f64(in);
        params.layers.push_back(std::move(layer));
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    return params;
}

}  // namespace dpl

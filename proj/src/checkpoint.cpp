#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ecgl/efficient_learner.hpp"

namespace ecgl {
namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError("truncated checkpoint " + path.string());
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelWeights& weights, std::uint64_t seed,
                     const std::string& config_json) {
    weights.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    write_le<std::uint64_t>(out, weights.dims.size());
    for (std::size_t d : weights.dims) write_le<std::uint64_t>(out, d);
    for (const auto& layer : weights.layers) {
        for (double x : layer.weight.data()) write_le(out, x);
        for (double x : layer.bias) write_le(out, x);
    }
    if (!out) throw DataError("write failed for " + path.string());

    nlohmann::json sidecar;
    sidecar["dims"] = weights.dims;
    sidecar["seed"] = seed;
    sidecar["config"] = config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_json);
    std::ofstream side(path.string() + ".json");
    if (!side) throw DataError("cannot write checkpoint sidecar for " + path.string());
    side << sidecar.dump(2) << '\n';
}

ModelWeights load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const auto count = read_le<std::uint64_t>(in, path);
    if (count < 2 || count > 64) throw DataError("checkpoint " + path.string() + " has an implausible layer count");
    ModelWeights w;
    for (std::uint64_t i = 0; i < count; ++i) w.dims.push_back(static_cast<std::size_t>(read_le<std::uint64_t>(in, path)));
    for (std::size_t l = 0; l + 1 < w.dims.size(); ++l) {
        DenseLayer layer{Matrix(w.dims[l], w.dims[l + 1]), std::vector<double>(w.dims[l + 1])};
        for (double& x : layer.weight.data()) x = read_le<double>(in, path);
        for (double& x : layer.bias) x = read_le<double>(in, path);
        w.layers.push_back(std::move(layer));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in checkpoint " + path.string());
    w.validate();
    return w;
}

}  // namespace ecgl

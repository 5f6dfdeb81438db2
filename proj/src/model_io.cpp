#include "xrtm/model_io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "xrtm/npy.hpp"

namespace xrtm::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'X', 'R', 'T', 'M', 'U', 'N', 'E', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::Format, "model: truncated file");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

template <class T>
constexpr const char* scalar_name() {
    return sizeof(T) == 4 ? "float32" : "float64";
}

}  // namespace

template <class T>
void write_model(std::ostream& out, const UNet<T>& model) {
    const UNetConfig& cfg = model.config();
    const auto params = model.parameters();
    nlohmann::json header = {
        {"base_channels", cfg.base_channels},
        {"depth", cfg.depth},
        {"in_channels", cfg.in_channels},
        {"out_channels", cfg.out_channels},
        {"scalar", scalar_name<T>()},
        {"parameter_count", model.parameter_count()},
        {"tensors", params.size()},
    };
    const std::string text = header.dump();
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, kModelFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        std::vector<std::size_t> shape(p.shape.begin(), p.shape.end());
        write_npy(out, shape, std::span<const T>(p.data, static_cast<std::size_t>(p.size)));
    }
    if (!out) fail(ErrorKind::Io, "model: write failed");
}

template <class T>
void save_model(const UNet<T>& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    write_model(out, model);
}

template <class T>
UNet<T> read_model(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) fail(ErrorKind::Format, "model: bad magic");
    const std::uint32_t version = get_u32(in);
    if (version != kModelFormatVersion) fail(ErrorKind::Format, "model: unsupported version " + std::to_string(version));
    const std::uint32_t len = get_u32(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), len)) fail(ErrorKind::Format, "model: truncated header");

    UNetConfig cfg;
    try {
        const auto header = nlohmann::json::parse(text);
        cfg.base_channels = header.at("base_channels").get<int>();
        cfg.depth = header.at("depth").get<int>();
        cfg.in_channels = header.at("in_channels").get<int>();
        cfg.out_channels = header.at("out_channels").get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("model: bad header: ") + e.what());
    }
    UNet<T> model(cfg);
    for (auto& p : model.parameters()) {
        const std::uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) fail(ErrorKind::Format, "model: truncated tensor name");
        if (name != p.name) fail(ErrorKind::Format, "model: expected tensor " + p.name + ", found " + name);
        const NpyArray arr = read_npy(in);
        if (arr.shape.size() != p.shape.size() ||
            !std::equal(arr.shape.begin(), arr.shape.end(), p.shape.begin(),
                        [](std::size_t a, Index b) { return a == static_cast<std::size_t>(b); })) {
            fail(ErrorKind::Shape, "model: tensor " + name + " has the wrong shape");
        }
        for (Index i = 0; i < p.size; ++i) p.data[i] = static_cast<T>(arr.values[static_cast<std::size_t>(i)]);
    }
    return model;
}

template <class T>
UNet<T> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open model " + path.string());
    return read_model<T>(in);
}

template void write_model(std::ostream&, const UNet<float>&);
template void write_model(std::ostream&, const UNet<double>&);
template void save_model(const UNet<float>&, const std::filesystem::path&);
template void save_model(const UNet<double>&, const std::filesystem::path&);
template UNet<float> read_model(std::istream&);
template UNet<double> read_model(std::istream&);
template UNet<float> load_model(const std::filesystem::path&);
template UNet<double> load_model(const std::filesystem::path&);

}  // namespace xrtm::nn

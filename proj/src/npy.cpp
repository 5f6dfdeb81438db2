#include "xrtm/npy.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace xrtm {

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

std::string shape_literal(std::span<const std::size_t> shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << shape[i];
        if (shape.size() == 1 || i + 1 < shape.size()) os << ",";
        if (i + 1 < shape.size()) os << " ";
    }
    os << ")";
    return os.str();
}

void write_header(std::ostream& out, const std::string& descr, std::span<const std::size_t> shape) {
    std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " +
                       shape_literal(shape) + ", }";
    // magic(6) + version(2) + len(2) + dict + padding + '\n' is a multiple of 64
    const std::size_t unpadded = kMagicLen + 2 + 2 + dict.size() + 1;
    const std::size_t padded = (unpadded + 63) / 64 * 64;
    dict.append(padded - unpadded, ' ');
    dict.push_back('\n');
    const auto len = static_cast<std::uint16_t>(dict.size());
    out.write(kMagic, kMagicLen);
    const char version[2] = {1, 0};
    out.write(version, 2);
    const char len_le[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
    out.write(len_le, 2);
    out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
}

template <class T>
void write_body(std::ostream& out, std::span<const T> values) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
    if (!out) fail(ErrorKind::Io, "failed writing npy payload");
}

void check_count(std::span<const std::size_t> shape, std::size_t n) {
    const std::size_t expected =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (expected != n) fail(ErrorKind::Shape, "npy: value count does not match shape");
}

std::string dict_value(const std::string& header, const std::string& key) {
    const auto pos = header.find("'" + key + "'");
    if (pos == std::string::npos) fail(ErrorKind::Format, "npy header lacks key '" + key + "'");
    auto colon = header.find(':', pos);
    if (colon == std::string::npos) fail(ErrorKind::Format, "npy header malformed near " + key);
    ++colon;
    while (colon < header.size() && header[colon] == ' ') ++colon;
    if (colon >= header.size()) fail(ErrorKind::Format, "npy header truncated");
    if (header[colon] == '\'') {
        const auto end = header.find('\'', colon + 1);
        if (end == std::string::npos) fail(ErrorKind::Format, "npy header: unterminated string");
        return header.substr(colon + 1, end - colon - 1);
    }
    if (header[colon] == '(') {
        const auto end = header.find(')', colon);
        if (end == std::string::npos) fail(ErrorKind::Format, "npy header: unterminated tuple");
        return header.substr(colon, end - colon + 1);
    }
    const auto end = header.find_first_of(",}", colon);
    return header.substr(colon, end - colon);
}

std::vector<std::size_t> parse_shape(const std::string& tuple) {
    std::vector<std::size_t> shape;
    std::string body = tuple.substr(1, tuple.size() - 2);
    std::replace(body.begin(), body.end(), ',', ' ');
    std::istringstream is(body);
    long long v = 0;
    while (is >> v) {
        if (v < 0) fail(ErrorKind::Format, "npy header: negative dimension");
        shape.push_back(static_cast<std::size_t>(v));
    }
    if (!is.eof()) fail(ErrorKind::Format, "npy header: bad shape tuple " + tuple);
    return shape;
}

template <class T>
void decode(const std::vector<char>& raw, bool swap, std::vector<double>& out) {
    const std::size_t n = raw.size() / sizeof(T);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        char bytes[sizeof(T)];
        std::memcpy(bytes, raw.data() + i * sizeof(T), sizeof(T));
        if (swap) std::reverse(bytes, bytes + sizeof(T));
        T v;
        std::memcpy(&v, bytes, sizeof(T));
        out[i] = static_cast<double>(v);
    }
}

}  // namespace

std::size_t NpyArray::element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void write_npy(std::ostream& out, std::span<const std::size_t> shape, std::span<const double> values) {
    check_count(shape, values.size());
    write_header(out, "<f8", shape);
    write_body(out, values);
}

void write_npy(std::ostream& out, std::span<const std::size_t> shape, std::span<const float> values) {
    check_count(shape, values.size());
    write_header(out, "<f4", shape);
    write_body(out, values);
}

void write_npy(std::ostream& out, std::span<const std::size_t> shape,
               std::span<const std::uint8_t> values) {
    check_count(shape, values.size());
    write_header(out, "|u1", shape);
    write_body(out, values);
}

NpyArray read_npy(std::istream& in) {
    char magic[kMagicLen];
    in.read(magic, kMagicLen);
    if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
        fail(ErrorKind::Format, "not an npy file (bad magic string)");
    }
    unsigned char version[2];
    in.read(reinterpret_cast<char*>(version), 2);
    if (!in || version[0] < 1 || version[0] > 3) fail(ErrorKind::Format, "unsupported npy version");
    std::size_t header_len = 0;
    if (version[0] == 1) {
        unsigned char len[2];
        in.read(reinterpret_cast<char*>(len), 2);
        header_len = static_cast<std::size_t>(len[0]) | (static_cast<std::size_t>(len[1]) << 8);
    } else {
        unsigned char len[4];
        in.read(reinterpret_cast<char*>(len), 4);
        header_len = static_cast<std::size_t>(len[0]) | (static_cast<std::size_t>(len[1]) << 8) |
                     (static_cast<std::size_t>(len[2]) << 16) | (static_cast<std::size_t>(len[3]) << 24);
    }
    if (!in) fail(ErrorKind::Format, "npy header truncated");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) fail(ErrorKind::Format, "npy header truncated");

    NpyArray arr;
    arr.descr = dict_value(header, "descr");
    const std::string fortran = dict_value(header, "fortran_order");
    const bool fortran_order = fortran.find("True") != std::string::npos;
    if (!fortran_order && fortran.find("False") == std::string::npos) {
        fail(ErrorKind::Format, "npy header: bad fortran_order");
    }
    arr.shape = parse_shape(dict_value(header, "shape"));

    if (arr.descr.size() < 3) fail(ErrorKind::Format, "npy header: bad descr '" + arr.descr + "'");
    const char order = arr.descr[0];
    const std::string code = arr.descr.substr(1);
    const bool swap = order == '>';
    if (order != '<' && order != '>' && order != '|' && order != '=') {
        fail(ErrorKind::Format, "npy header: bad byte order in '" + arr.descr + "'");
    }

    std::size_t item = 0;
    if (code == "f8" || code == "i8" || code == "u8") item = 8;
    else if (code == "f4" || code == "i4" || code == "u4") item = 4;
    else if (code == "i2" || code == "u2") item = 2;
    else if (code == "u1" || code == "i1" || code == "b1") item = 1;
    else fail(ErrorKind::Format, "unsupported npy dtype '" + arr.descr + "'");

    std::vector<char> raw(arr.element_count() * item);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        fail(ErrorKind::Format, "npy payload shorter than its shape");
    }

    if (code == "f8") decode<double>(raw, swap, arr.values);
    else if (code == "f4") decode<float>(raw, swap, arr.values);
    else if (code == "i8") decode<std::int64_t>(raw, swap, arr.values);
    else if (code == "u8") decode<std::uint64_t>(raw, swap, arr.values);
    else if (code == "i4") decode<std::int32_t>(raw, swap, arr.values);
    else if (code == "u4") decode<std::uint32_t>(raw, swap, arr.values);
    else if (code == "i2") decode<std::int16_t>(raw, swap, arr.values);
    else if (code == "u2") decode<std::uint16_t>(raw, swap, arr.values);
    else if (code == "i1") decode<std::int8_t>(raw, false, arr.values);
    else decode<std::uint8_t>(raw, false, arr.values);

    if (fortran_order && arr.shape.size() == 2) {
        const std::size_t rows = arr.shape[0], cols = arr.shape[1];
        std::vector<double> c_order(arr.values.size());
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) c_order[r * cols + c] = arr.values[c * rows + r];
        arr.values = std::move(c_order);
    } else if (fortran_order && arr.shape.size() > 2) {
        fail(ErrorKind::Format, "fortran-ordered arrays of rank > 2 are unsupported");
    }
    return arr;
}

NpyArray read_npy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    return read_npy(in);
}

Image2D load_npy(const std::filesystem::path& path) {
    const NpyArray arr = read_npy(path);
    if (arr.shape.size() != 2) {
        fail(ErrorKind::Shape, path.string() + ": expected a 2-D array, got rank " +
                                   std::to_string(arr.shape.size()));
    }
    const auto h = static_cast<Eigen::Index>(arr.shape[0]);
    const auto w = static_cast<Eigen::Index>(arr.shape[1]);
    if (h == 0 || w == 0) fail(ErrorKind::Shape, path.string() + ": empty image");
    return Eigen::Map<const Image2D>(arr.values.data(), h, w);
}

void save_npy(const Image2D& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    const std::size_t shape[2] = {static_cast<std::size_t>(img.rows()), static_cast<std::size_t>(img.cols())};
    write_npy(out, shape, std::span<const double>(img.data(), static_cast<std::size_t>(img.size())));
    out.close();
    if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

Mask2D load_mask_npy(const std::filesystem::path& path) {
    const Image2D values = load_npy(path);
    return (values != 0.0).cast<std::uint8_t>();
}

void save_mask_npy(const Mask2D& mask, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    const std::size_t shape[2] = {static_cast<std::size_t>(mask.rows()), static_cast<std::size_t>(mask.cols())};
    write_npy(out, shape,
              std::span<const std::uint8_t>(mask.data(), static_cast<std::size_t>(mask.size())));
    out.close();
    if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace xrtm

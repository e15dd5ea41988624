#include "resset/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "resset/errors.hpp"

namespace resset {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'S', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff),
                                static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw IoError("truncated tensor header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(b.data(), 8);
}

double get_f64(std::istream& is) {
    std::array<unsigned char, 8> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw IoError("truncated tensor data");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void write_tensor(std::ostream& os, const RawTensor& t) {
    std::size_t n = 1;
    for (auto e : t.extents) n *= e;
    if (n != t.data.size()) throw ShapeError("tensor extents do not match data length");
    os.write(kMagic.data(), kMagic.size());
    put_u32(os, static_cast<std::uint32_t>(t.extents.size()));
    for (auto e : t.extents) put_u32(os, e);
    for (double v : t.data) put_f64(os, v);
    if (!os) throw IoError("failed writing tensor");
}

RawTensor read_tensor(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || magic != kMagic) throw IoError("not an RST1 tensor file");
    RawTensor t;
    const std::uint32_t rank = get_u32(is);
    if (rank > 16) throw IoError("implausible tensor rank");
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.extents.push_back(get_u32(is));
        n *= t.extents.back();
    }
    t.data.resize(n);
    for (auto& v : t.data) v = get_f64(is);
    return t;
}

void save_tensor(const std::string& path, const RawTensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    write_tensor(os, t);
}

RawTensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    return read_tensor(is);
}

RawTensor to_raw(const FeatureMap& f) {
    const Shape4& s = f.shape();
    return RawTensor{{static_cast<std::uint32_t>(s.channels), static_cast<std::uint32_t>(s.bands),
                      static_cast<std::uint32_t>(s.height), static_cast<std::uint32_t>(s.width)},
                     f.values()};
}

FeatureMap feature_map_from_raw(const RawTensor& t) {
    const auto& e = t.extents;
    if (e.size() == 4)
        return FeatureMap(Shape4{static_cast<int>(e[0]), static_cast<int>(e[1]),
                                 static_cast<int>(e[2]), static_cast<int>(e[3])},
                          t.data);
    if (e.size() == 3)
        return FeatureMap(
            Shape4{1, static_cast<int>(e[0]), static_cast<int>(e[1]), static_cast<int>(e[2])},
            t.data);
    throw ShapeError("expected a rank-3 or rank-4 tensor");
}

}  // namespace resset

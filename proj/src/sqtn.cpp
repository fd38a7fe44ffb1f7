#include "seqkit/sqtn.hpp"

#include <bit>
#include <fstream>

#include "seqkit/errors.hpp"

namespace seqkit {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'T', 'N'};
constexpr std::uint8_t kVersion = 1;

void put_u64_le(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64_le(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void swap_payload(std::vector<unsigned char>& bytes, std::size_t width) {
    for (std::size_t off = 0; off + width <= bytes.size(); off += width)
        for (std::size_t i = 0; i < width / 2; ++i)
            std::swap(bytes[off + i], bytes[off + width - 1 - i]);
}

}  // namespace

std::size_t dtype_size(std::uint8_t dtype) {
    if (dtype == 0) return 4;
    if (dtype == 1) return 8;
    throw ValueError("unknown dtype code " + std::to_string(dtype));
}

RawTensor read_sqtn(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4))
        throw IoError(path + " is not an SQTN tensor");
    std::uint8_t version = 0, dtype = 0, rank = 0;
    in.read(reinterpret_cast<char*>(&version), 1);
    in.read(reinterpret_cast<char*>(&dtype), 1);
    in.read(reinterpret_cast<char*>(&rank), 1);
    if (!in || version != kVersion)
        throw IoError(path + ": unsupported SQTN version " + std::to_string(version));
    if (dtype > 1) throw IoError(path + ": unknown dtype code " + std::to_string(dtype));
    std::size_t width = dtype_size(dtype);

    RawTensor t;
    t.dtype = dtype;
    std::uint64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
        std::uint64_t e = get_u64_le(in);
        if (!in || e < 1) throw IoError(path + ": bad extent");
        t.shape.push_back(static_cast<std::int64_t>(e));
        numel *= e;
    }
    t.bytes.resize(static_cast<std::size_t>(numel) * width);
    in.read(reinterpret_cast<char*>(t.bytes.data()),
            static_cast<std::streamsize>(t.bytes.size()));
    if (!in) throw IoError(path + ": truncated payload");
    if (in.peek() != std::ifstream::traits_type::eof())
        throw IoError(path + ": trailing bytes after payload");
    if constexpr (std::endian::native != std::endian::little)
        swap_payload(t.bytes, width);
    return t;
}

void write_sqtn(const std::string& path, const RawTensor& t) {
    std::size_t width = dtype_size(t.dtype);
    std::uint64_t numel = 1;
    for (std::int64_t e : t.shape) {
        if (e < 1) throw ValueError("write_sqtn: extents must be >= 1");
        numel *= static_cast<std::uint64_t>(e);
    }
    if (t.bytes.size() != numel * width)
        throw ValueError("write_sqtn: payload size does not match shape");
    if (t.shape.size() > 255) throw ValueError("write_sqtn: rank > 255");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    out.put(static_cast<char>(t.dtype));
    out.put(static_cast<char>(t.shape.size()));
    for (std::int64_t e : t.shape) put_u64_le(out, static_cast<std::uint64_t>(e));
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(t.bytes.data()),
                  static_cast<std::streamsize>(t.bytes.size()));
    } else {
        std::vector<unsigned char> copy = t.bytes;
        swap_payload(copy, width);
        out.write(reinterpret_cast<const char*>(copy.data()),
                  static_cast<std::streamsize>(copy.size()));
    }
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace seqkit

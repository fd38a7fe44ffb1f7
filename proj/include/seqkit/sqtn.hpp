#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace seqkit {

// Raw on-disk tensor: magic "SQTN", u8 version=1, u8 dtype (0=f32, 1=f64),
// u8 rank, rank x u64 little-endian extents, then the row-major payload.
struct RawTensor {
    std::uint8_t dtype = 0;
    std::vector<std::int64_t> shape;
    std::vector<unsigned char> bytes;
};

std::size_t dtype_size(std::uint8_t dtype);

RawTensor read_sqtn(const std::string& path);
void write_sqtn(const std::string& path, const RawTensor& t);

}  // namespace seqkit

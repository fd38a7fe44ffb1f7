#pragma once

#include <string>
#include <vector>

namespace seqkit {

// Binary 8-bit grayscale image, P5 header. Values must already be in [0,1];
// each is written as round(255 * v).
void write_pgm(const std::string& path, const std::vector<double>& values,
               int width, int height);

}  // namespace seqkit

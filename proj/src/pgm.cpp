#include "seqkit/pgm.hpp"

#include <cmath>
#include <fstream>

#include "seqkit/errors.hpp"

namespace seqkit {

void write_pgm(const std::string& path, const std::vector<double>& values,
               int width, int height) {
    if (width < 1 || height < 1 ||
        values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw ValueError("write_pgm: " + std::to_string(values.size()) +
                         " values for " + std::to_string(width) + "x" +
                         std::to_string(height));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "P5\n" << width << " " << height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(width));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double v = values[static_cast<std::size_t>(y) * width + x];
            if (v < 0.0) v = 0.0;
            if (v > 1.0) v = 1.0;
            row[static_cast<std::size_t>(x)] =
                static_cast<unsigned char>(std::lround(v * 255.0));
        }
        out.write(reinterpret_cast<const char*>(row.data()), width);
    }
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace seqkit

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "seqkit/serialize.hpp"

namespace seqkit {

template <typename S>
struct Dataset {
    std::vector<Tensor<S>> images;  // each [H,W,C]
    std::vector<int> labels;

    i64 size() const { return static_cast<i64>(images.size()); }
};

// Two-class oriented bars: class 0 draws a bright horizontal bar, class 1 a
// vertical one, at a random offset over a faint-noise background. The classes
// are linearly separable in pixel space.
template <typename S>
Dataset<S> make_bars_dataset(i64 n, i64 h, i64 w, unsigned long long seed, i64 channels = 3) {
    if (n < 1 || h < 8 || w < 8) throw ValueError("bars dataset needs n >= 1 and size >= 8");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-0.05, 0.05);
    const i64 thickness = std::max<i64>(2, h / 7);
    Dataset<S> ds;
    ds.images.reserve(static_cast<std::size_t>(n));
    ds.labels.reserve(static_cast<std::size_t>(n));
    for (i64 i = 0; i < n; ++i) {
        int label = static_cast<int>(i % 2);
        Tensor<S> img = Tensor<S>::zeros({h, w, channels});
        S* d = img.mutable_data();
        for (i64 p = 0; p < img.numel(); ++p) d[p] = static_cast<S>(noise(rng));
        i64 span = (label == 0 ? h : w) - thickness;
        i64 offset = static_cast<i64>(rng() % static_cast<unsigned long long>(span + 1));
        for (i64 y = 0; y < h; ++y)
            for (i64 x = 0; x < w; ++x) {
                i64 along = label == 0 ? y : x;
                if (along < offset || along >= offset + thickness) continue;
                for (i64 c = 0; c < channels; ++c) d[(y * w + x) * channels + c] = S(1);
            }
        ds.images.push_back(std::move(img));
        ds.labels.push_back(label);
    }
    return ds;
}

// Two-class color blobs: a bright square whose dominant channel encodes the
// class, on a dark background.
template <typename S>
Dataset<S> make_blobs_dataset(i64 n, i64 h, i64 w, unsigned long long seed) {
    if (n < 1 || h < 8 || w < 8) throw ValueError("blobs dataset needs n >= 1 and size >= 8");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-0.05, 0.05);
    const i64 side = std::max<i64>(3, h / 4);
    Dataset<S> ds;
    for (i64 i = 0; i < n; ++i) {
        int label = static_cast<int>(i % 2);
        Tensor<S> img = Tensor<S>::zeros({h, w, 3});
        S* d = img.mutable_data();
        for (i64 p = 0; p < img.numel(); ++p) d[p] = static_cast<S>(noise(rng));
        i64 y0 = static_cast<i64>(rng() % static_cast<unsigned long long>(h - side + 1));
        i64 x0 = static_cast<i64>(rng() % static_cast<unsigned long long>(w - side + 1));
        i64 channel = label == 0 ? 0 : 2;
        for (i64 y = y0; y < y0 + side; ++y)
            for (i64 x = x0; x < x0 + side; ++x) d[(y * w + x) * 3 + channel] = S(1);
        ds.images.push_back(std::move(img));
        ds.labels.push_back(label);
    }
    return ds;
}

// Directory layout: index.txt lines of "<relative sqtn path> <integer label>".
template <typename S>
void save_dataset_dir(const std::string& dir, const Dataset<S>& ds) {
    namespace fs = std::filesystem;
    if (ds.images.size() != ds.labels.size())
        throw ValueError("dataset images and labels differ in length");
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "images", ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    std::ofstream index(fs::path(dir) / "index.txt");
    if (!index) throw IoError("cannot write index.txt in " + dir);
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        std::string rel = "images/" + std::to_string(i) + ".sqtn";
        save_tensor((fs::path(dir) / rel).string(), ds.images[i]);
        index << rel << " " << ds.labels[i] << "\n";
    }
}

template <typename S>
Dataset<S> load_dataset_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream index(fs::path(dir) / "index.txt");
    if (!index) throw IoError("cannot read index.txt in " + dir);
    Dataset<S> ds;
    std::string line;
    int lineno = 0;
    while (std::getline(index, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string rel;
        int label;
        if (!(row >> rel >> label))
            throw IoError(dir + "/index.txt line " + std::to_string(lineno) +
                          ": expected \"<path> <label>\"");
        ds.images.push_back(load_tensor<S>((fs::path(dir) / rel).string()));
        ds.labels.push_back(label);
    }
    if (ds.images.empty()) throw IoError(dir + ": index.txt lists no samples");
    return ds;
}

}  // namespace seqkit

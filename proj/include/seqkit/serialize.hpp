#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seqkit/sqtn.hpp"
#include "seqkit/tensor.hpp"

namespace seqkit {

template <typename S>
void save_tensor(const std::string& path, const Tensor<S>& t) {
    RawTensor raw;
    raw.dtype = dtype_code<S>();
    raw.shape = t.shape();
    raw.bytes.resize(static_cast<std::size_t>(t.numel()) * sizeof(S));
    std::memcpy(raw.bytes.data(), t.data(), raw.bytes.size());
    write_sqtn(path, raw);
}

// Loads a tensor, converting the stored scalar type to S when they differ.
template <typename S>
Tensor<S> load_tensor(const std::string& path) {
    RawTensor raw = read_sqtn(path);
    i64 n = shape_numel(raw.shape);
    std::vector<S> data(static_cast<std::size_t>(n));
    if (raw.dtype == dtype_code<S>()) {
        std::memcpy(data.data(), raw.bytes.data(), raw.bytes.size());
    } else if (raw.dtype == 0) {
        const float* src = reinterpret_cast<const float*>(raw.bytes.data());
        for (i64 i = 0; i < n; ++i) data[static_cast<std::size_t>(i)] = static_cast<S>(src[i]);
    } else {
        const double* src = reinterpret_cast<const double*>(raw.bytes.data());
        for (i64 i = 0; i < n; ++i) data[static_cast<std::size_t>(i)] = static_cast<S>(src[i]);
    }
    return Tensor<S>(raw.shape, std::move(data));
}

// Checkpoint directory layout: manifest.json maps tensor names to files under
// tensors/. Callers may drop extra files (e.g. config.json) next to it.
template <typename S>
void save_named_tensors(const std::string& dir,
                        const std::vector<std::pair<std::string, Tensor<S>>>& named) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "tensors", ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

    nlohmann::json manifest;
    manifest["format"] = "seqkit-checkpoint";
    manifest["version"] = 1;
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [name, tensor] : named) {
        std::string rel = "tensors/" + name + ".sqtn";
        save_tensor((fs::path(dir) / rel).string(), tensor);
        entries[name] = rel;
    }
    manifest["tensors"] = entries;
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw IoError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

template <typename S>
std::map<std::string, Tensor<S>> load_named_tensors(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw IoError("cannot read manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(dir + "/manifest.json: " + e.what());
    }
    if (manifest.value("format", "") != "seqkit-checkpoint")
        throw IoError(dir + ": not a seqkit checkpoint");
    std::map<std::string, Tensor<S>> out;
    for (const auto& [name, rel] : manifest.at("tensors").items())
        out.emplace(name,
                    load_tensor<S>((fs::path(dir) / rel.template get<std::string>()).string()));
    return out;
}

}  // namespace seqkit

#pragma once

// "BUSM" model container:
//   magic "BUSM" | u32 version | u32 tensor count
//   manifest: per tensor u32 name length, name bytes, u32 rank, u32 dims[rank]
//   payload: f32 values of every tensor in manifest order, row-major
//   u32 CRC32 of the payload bytes
// All integers and floats little-endian.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <zlib.h>

#include "busca/features.hpp"
#include "busca/transformer/model.hpp"

namespace busca {

class CorruptFileError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

template <class Real>
void save_model(const DecisionModel<Real>& model, const std::filesystem::path& path) {
    std::string header, payload;
    std::uint32_t count = 0;
    auto u32 = [](std::string& s, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    std::string manifest;
    model.visit([&](const std::string& name, const Matrix<Real>& m) {
        ++count;
        u32(manifest, static_cast<std::uint32_t>(name.size()));
        manifest += name;
        u32(manifest, 2);
        u32(manifest, static_cast<std::uint32_t>(m.rows()));
        u32(manifest, static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                u32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
            }
        }
    });
    header = "BUSM";
    u32(header, kModelFormatVersion);
    u32(header, count);
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
    std::string trailer;
    u32(trailer, crc);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model " + path.string());
    out << header << manifest << payload << trailer;
    if (!out) throw Error("failed writing model " + path.string());
}

/// Loads a model saved with the shapes of `cfg`. Throws ShapeError naming the
/// first tensor whose shape disagrees, CorruptFileError on truncation or CRC mismatch.
template <class Real>
DecisionModel<Real> load_model(const std::filesystem::path& path, const ModelConfig& cfg) {
    const std::vector<unsigned char> bytes = detail::read_all(path);
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (bytes.size() - pos < n) throw CorruptFileError(path.string() + ": truncated model file");
    };
    auto u32 = [&]() {
        need(4);
        const std::uint32_t v = detail::get_u32(bytes.data() + pos);
        pos += 4;
        return v;
    };
    need(4);
    if (std::memcmp(bytes.data(), "BUSM", 4) != 0) throw CorruptFileError(path.string() + ": not a BUSM model file");
    pos = 4;
    const std::uint32_t version = u32();
    if (version != kModelFormatVersion) {
        throw CorruptFileError(path.string() + ": unsupported model format version " + std::to_string(version));
    }
    const std::uint32_t count = u32();

    struct Entry {
        std::string name;
        std::vector<std::uint32_t> dims;
    };
    std::vector<Entry> manifest;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = u32();
        need(len);
        Entry e;
        e.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), len);
        pos += len;
        const std::uint32_t rank = u32();
        if (rank > 8) throw CorruptFileError(path.string() + ": implausible rank for tensor " + e.name);
        for (std::uint32_t r = 0; r < rank; ++r) e.dims.push_back(u32());
        manifest.push_back(std::move(e));
    }

    DecisionModel<Real> model = allocate_model<Real>(cfg);
    std::map<std::string, Matrix<Real>*> slots;
    model.visit([&](const std::string& name, Matrix<Real>& m) { slots.emplace(name, &m); });

    std::size_t payload_bytes = 0;
    for (const auto& e : manifest) {
        const auto it = slots.find(e.name);
        if (it == slots.end()) throw ShapeError(path.string() + ": unexpected tensor '" + e.name + "'");
        const Matrix<Real>& m = *it->second;
        if (e.dims.size() != 2 || e.dims[0] != m.rows() || e.dims[1] != m.cols()) {
            std::string got;
            for (auto d : e.dims) got += (got.empty() ? "" : "x") + std::to_string(d);
            throw ShapeError(path.string() + ": tensor '" + e.name + "' has shape " + got + ", configuration expects " +
                             std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
        }
        payload_bytes += 4 * static_cast<std::size_t>(m.size());
    }
    if (manifest.size() != slots.size()) {
        for (const auto& [name, _] : slots) {
            bool found = false;
            for (const auto& e : manifest) found = found || e.name == name;
            if (!found) throw ShapeError(path.string() + ": missing tensor '" + name + "'");
        }
    }

    need(payload_bytes + 4);
    const unsigned char* payload = bytes.data() + pos;
    const auto crc = static_cast<std::uint32_t>(crc32(0L, payload, static_cast<uInt>(payload_bytes)));
    if (crc != detail::get_u32(payload + payload_bytes)) throw CorruptFileError(path.string() + ": payload CRC mismatch");
    if (pos + payload_bytes + 4 != bytes.size()) throw CorruptFileError(path.string() + ": trailing bytes after model");

    for (const auto& e : manifest) {
        Matrix<Real>& m = *slots.at(e.name);
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                m(r, c) = static_cast<Real>(detail::get_f32(payload));
                payload += 4;
            }
        }
    }
    return model;
}

}  // namespace busca

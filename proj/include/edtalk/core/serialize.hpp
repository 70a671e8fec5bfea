#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "edtalk/core/errors.hpp"
#include "edtalk/core/graph.hpp"
#include "edtalk/core/tensor.hpp"

namespace edtalk {

/// Single-file archive: JSON manifest plus named float32 arrays.
/// Layout: "EDCK" | u32 version | u64 manifest_len | manifest bytes |
///         u64 count | { u32 name_len | name | u32 ndim | u32 dims[] | f32 data[] }*
struct Archive {
    static constexpr uint32_t kVersion = 1;

    nlohmann::json manifest;
    std::map<std::string, Tensor<float>> arrays;

    void save(const std::string& path) const {
        FILE* f = std::fopen(path.c_str(), "wb");
        if (!f) throw IoError("archive: cannot open for write: " + path);
        auto wr = [&](const void* p, size_t n) {
            if (std::fwrite(p, 1, n, f) != n) {
                std::fclose(f);
                throw IoError("archive: short write: " + path);
            }
        };
        wr("EDCK", 4);
        uint32_t ver = kVersion;
        wr(&ver, 4);
        std::string m = manifest.dump();
        uint64_t mlen = m.size();
        wr(&mlen, 8);
        wr(m.data(), m.size());
        uint64_t count = arrays.size();
        wr(&count, 8);
        for (auto& [name, t] : arrays) {
            uint32_t nlen = static_cast<uint32_t>(name.size());
            wr(&nlen, 4);
            wr(name.data(), name.size());
            uint32_t nd = static_cast<uint32_t>(t.shape.size());
            wr(&nd, 4);
            for (int d : t.shape) {
                uint32_t du = static_cast<uint32_t>(d);
                wr(&du, 4);
            }
            wr(t.data.data(), t.data.size() * sizeof(float));
        }
        std::fclose(f);
    }

    static Archive load(const std::string& path) {
        FILE* f = std::fopen(path.c_str(), "rb");
        if (!f) throw IoError("archive: cannot open: " + path);
        auto rd = [&](void* p, size_t n) {
            if (std::fread(p, 1, n, f) != n) {
                std::fclose(f);
                throw IoError("archive: truncated: " + path);
            }
        };
        char magic[4];
        rd(magic, 4);
        if (std::memcmp(magic, "EDCK", 4) != 0) {
            std::fclose(f);
            throw IoError("archive: bad magic in " + path);
        }
        uint32_t ver = 0;
        rd(&ver, 4);
        if (ver != kVersion) {
            std::fclose(f);
            throw IoError("archive: unsupported version in " + path);
        }
        uint64_t mlen = 0;
        rd(&mlen, 8);
        std::string m(mlen, '\0');
        rd(m.data(), mlen);
        Archive a;
        a.manifest = nlohmann::json::parse(m);
        uint64_t count = 0;
        rd(&count, 8);
        for (uint64_t i = 0; i < count; ++i) {
            uint32_t nlen = 0;
            rd(&nlen, 4);
            std::string name(nlen, '\0');
            rd(name.data(), nlen);
            uint32_t nd = 0;
            rd(&nd, 4);
            std::vector<int> shape(nd);
            for (uint32_t d = 0; d < nd; ++d) {
                uint32_t du = 0;
                rd(&du, 4);
                shape[d] = static_cast<int>(du);
            }
            Tensor<float> t(shape);
            rd(t.data.data(), t.data.size() * sizeof(float));
            a.arrays.emplace(std::move(name), std::move(t));
        }
        std::fclose(f);
        return a;
    }
};

template <typename T>
void store_to_archive(const ParamStore<T>& ps, Archive& a, const std::string& prefix = "") {
    for (auto& [name, t] : ps.params)
        if (prefix.empty() || name.rfind(prefix, 0) == 0) a.arrays[name] = t.template cast<float>();
}

template <typename T>
void archive_to_store(const Archive& a, ParamStore<T>& ps) {
    for (auto& [name, t] : a.arrays) ps.params[name] = t.template cast<T>();
}

}  // namespace edtalk

#pragma once

// Parameter checkpoint file: a text manifest (name, shape, byte offset into
// the data section) followed by raw little-endian f64 arrays. Round-trips
// bit-exactly.

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "deskdrive/nn.hpp"

namespace deskdrive {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

inline void save_checkpoint(const ParamStore& ps, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "cannot open checkpoint for writing: " + path);
    std::ostringstream manifest;
    manifest << "DDCKPT1\n" << ps.items().size() << "\n";
    std::size_t offset = 0;
    for (const auto& [name, t] : ps.items()) {
        manifest << name << " " << t.rank();
        for (std::size_t e : t.shape) manifest << " " << e;
        manifest << " " << offset << "\n";
        offset += t.numel() * sizeof(double);
    }
    manifest << "DATA\n";
    f << manifest.str();
    for (const auto& [name, t] : ps.items())
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    require(f.good(), "checkpoint write failed: " + path);
}

// Loads into an existing store; every manifest entry must match a declared
// parameter's shape, and every declared parameter must be present.
inline void load_checkpoint(ParamStore& ps, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "cannot open checkpoint: " + path);
    std::string line;
    std::getline(f, line);
    require(line == "DDCKPT1", "bad checkpoint magic in " + path);
    std::getline(f, line);
    const std::size_t count = std::stoul(line);
    struct Entry {
        std::string name;
        Shape shape;
        std::size_t offset;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < count; ++i) {
        std::getline(f, line);
        std::istringstream is(line);
        Entry e;
        std::size_t rank = 0;
        is >> e.name >> rank;
        e.shape.resize(rank);
        for (std::size_t d = 0; d < rank; ++d) is >> e.shape[d];
        is >> e.offset;
        require(!is.fail(), "malformed checkpoint manifest line: " + line);
        entries.push_back(std::move(e));
    }
    std::getline(f, line);
    require(line == "DATA", "missing DATA marker in " + path);
    const std::streampos data_start = f.tellg();
    require(entries.size() == ps.items().size(),
            "checkpoint parameter count mismatch in " + path);
    for (const Entry& e : entries) {
        Tensor& t = ps.get(e.name);
        require(t.shape == e.shape, "checkpoint shape mismatch for " + e.name);
        f.seekg(data_start + static_cast<std::streamoff>(e.offset));
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        require(f.good(), "checkpoint data truncated at " + e.name);
    }
}

}  // namespace deskdrive

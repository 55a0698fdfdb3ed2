#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

// Weight checkpoint layout:
//
//   siamhar-checkpoint 1
//   meta <n_bytes>
//   <n_bytes of free-form text, typically JSON>
//   tensors <count>
//   <name> <rank> <d0> ... <d_rank-1> <byte_offset>     (one line per tensor)
//   data <total_bytes>
//   <raw little-endian IEEE-754 binary64 values>
//
// Offsets are relative to the first byte after the "data" line.

namespace siamhar {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

struct Checkpoint {
    std::string meta;
    std::vector<NamedTensor> tensors;

    const Tensor* find(const std::string& name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return &t.tensor;
        }
        return nullptr;
    }

    const Tensor& at(const std::string& name) const {
        if (const Tensor* t = find(name)) return *t;
        throw DataError("checkpoint: missing tensor '" + name + "'");
    }
};

namespace detail {

inline void put_le_double(std::string& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline double get_le_double(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
    std::string header = "siamhar-checkpoint 1\nmeta " + std::to_string(ckpt.meta.size()) + "\n" + ckpt.meta +
                         "\ntensors " + std::to_string(ckpt.tensors.size()) + "\n";
    std::string payload;
    for (const auto& [name, tensor] : ckpt.tensors) {
        if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
            throw ContractError("checkpoint: invalid tensor name '" + name + "'");
        }
        header += name + " " + std::to_string(tensor.rank());
        for (auto e : tensor.shape()) header += " " + std::to_string(e);
        header += " " + std::to_string(payload.size()) + "\n";
        for (double v : tensor.data()) detail::put_le_double(payload, v);
    }
    header += "data " + std::to_string(payload.size()) + "\n";
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os) throw DataError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& is) {
    auto fail = [](const std::string& why) { return DataError("checkpoint: " + why); };
    std::string line;
    if (!std::getline(is, line) || line != "siamhar-checkpoint 1") throw fail("bad magic line");

    Checkpoint ckpt;
    std::string key;
    std::size_t n = 0;
    if (!std::getline(is, line)) throw fail("missing meta line");
    {
        std::istringstream ls(line);
        if (!(ls >> key >> n) || key != "meta") throw fail("malformed meta line");
    }
    ckpt.meta.resize(n);
    is.read(ckpt.meta.data(), static_cast<std::streamsize>(n));
    if (!std::getline(is, line) || !line.empty()) throw fail("meta block not terminated");

    if (!std::getline(is, line)) throw fail("missing tensors line");
    std::size_t count = 0;
    {
        std::istringstream ls(line);
        if (!(ls >> key >> count) || key != "tensors") throw fail("malformed tensors line");
    }
    struct Entry {
        std::string name;
        Shape shape;
        std::size_t offset;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(is, line)) throw fail("truncated manifest");
        std::istringstream ls(line);
        Entry e;
        std::size_t rank = 0;
        if (!(ls >> e.name >> rank) || rank == 0) throw fail("malformed manifest line: " + line);
        e.shape.resize(rank);
        for (auto& d : e.shape) {
            if (!(ls >> d) || d == 0) throw fail("bad extent in manifest line: " + line);
        }
        if (!(ls >> e.offset)) throw fail("missing offset in manifest line: " + line);
        entries.push_back(std::move(e));
    }
    if (!std::getline(is, line)) throw fail("missing data line");
    std::size_t total = 0;
    {
        std::istringstream ls(line);
        if (!(ls >> key >> total) || key != "data") throw fail("malformed data line");
    }
    std::vector<unsigned char> bytes(total);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(total));
    if (static_cast<std::size_t>(is.gcount()) != total) throw fail("truncated payload");

    for (auto& e : entries) {
        const std::size_t numel = shape_numel(e.shape);
        if (e.offset + numel * 8 > total) throw fail("tensor '" + e.name + "' extends past payload");
        std::vector<double> values(numel);
        for (std::size_t j = 0; j < numel; ++j) values[j] = detail::get_le_double(bytes.data() + e.offset + 8 * j);
        ckpt.tensors.push_back({e.name, Tensor(e.shape, std::move(values))});
    }
    return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    write_checkpoint(os, ckpt);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
    return read_checkpoint(is);
}

/// Copies checkpoint values into an existing parameter list, checking shapes.
inline void assign_parameters(const Checkpoint& ckpt, ParameterList& params) {
    for (auto& p : params) {
        const Tensor& src = ckpt.at(p.name);
        if (src.shape() != p.tensor.shape()) {
            throw DataError("checkpoint: tensor '" + p.name + "' has shape " + shape_str(src.shape()) +
                            ", expected " + shape_str(p.tensor.shape()));
        }
        std::copy(src.data().begin(), src.data().end(), p.tensor.data().begin());
    }
}

}  // namespace siamhar

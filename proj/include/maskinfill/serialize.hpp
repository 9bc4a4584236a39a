#pragma once

// Checkpoint blobs: a versioned little-endian container of named tensors
// plus a shape manifest, the vocabulary hash and the config hash of the run
// that produced them. Loading refuses blobs whose hashes do not match the
// caller's expectation, so checkpoints and vocabularies cannot be mixed.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "maskinfill/tensor.hpp"

namespace maskinfill {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'M', 'F', 'C', 'K'};

struct CheckpointMeta {
    std::string stage;          // e.g. "cls", "pretrain", "rec", "ss", "cnn"
    std::uint64_t vocab_hash = 0;
    std::uint64_t config_hash = 0;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

}  // namespace detail

// Tensors are written in the order given; names are part of the manifest.
inline void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                            const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kCheckpointMagic, 4);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_str(os, meta.stage);
    detail::write_u64(os, meta.vocab_hash);
    detail::write_u64(os, meta.config_hash);
    detail::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::write_str(os, name);
        detail::write_u32(os, static_cast<std::uint32_t>(t->rank()));
        for (std::size_t d : t->shape()) detail::write_u64(os, d);
        static_assert(sizeof(double) == 8);
        os.write(reinterpret_cast<const char*>(t->data()),
                 static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

// Fills the destination tensors by name; every destination must be present
// in the blob with a matching shape. expected_vocab_hash of 0 skips the
// vocabulary check (used by tooling that only inspects blobs).
inline CheckpointMeta load_checkpoint(const std::string& path,
                                      const std::vector<std::pair<std::string, Tensor*>>& tensors,
                                      std::uint64_t expected_vocab_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != std::string(kCheckpointMagic, 4))
        throw std::runtime_error("not a checkpoint file: " + path);
    const std::uint32_t version = detail::read_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version in " + path);
    CheckpointMeta meta;
    meta.stage = detail::read_str(is);
    meta.vocab_hash = detail::read_u64(is);
    meta.config_hash = detail::read_u64(is);
    if (expected_vocab_hash != 0 && meta.vocab_hash != expected_vocab_hash)
        throw std::runtime_error("checkpoint " + path + " was built against a different vocabulary");

    const std::uint32_t count = detail::read_u32(is);
    std::vector<std::pair<std::string, Tensor>> loaded;
    loaded.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = detail::read_str(is);
        const std::uint32_t rank = detail::read_u32(is);
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<std::size_t>(detail::read_u64(is));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw std::runtime_error("truncated checkpoint: " + path);
        loaded.emplace_back(std::move(name), std::move(t));
    }
    for (const auto& [name, dst] : tensors) {
        bool found = false;
        for (auto& [lname, lt] : loaded) {
            if (lname != name) continue;
            if (lt.shape() != dst->shape())
                throw std::runtime_error("checkpoint tensor '" + name + "' shape mismatch in " + path);
            *dst = std::move(lt);
            found = true;
            break;
        }
        if (!found) throw std::runtime_error("checkpoint tensor '" + name + "' missing from " + path);
    }
    return meta;
}

inline CheckpointMeta peek_checkpoint(const std::string& path) {
    return load_checkpoint(path, {}, 0);
}

}  // namespace maskinfill

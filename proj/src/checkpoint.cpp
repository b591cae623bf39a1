#include "avd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace avd {

namespace {
constexpr char kMagic[5] = {'A', 'V', 'D', 'K', '1'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8 & 0xff),
                          (unsigned char)(v >> 16 & 0xff), (unsigned char)(v >> 24 & 0xff)};
    os.write((const char*)b, 4);
}
uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read((char*)b, 4);
    return (uint32_t)b[0] | (uint32_t)b[1] << 8 | (uint32_t)b[2] << 16 | (uint32_t)b[3] << 24;
}
// unlike numel_of, tolerates zero extents (empty strings/blobs)
int64_t payload_count(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::runtime_error("checkpoint: negative extent");
        n *= d;
    }
    return n;
}
}  // namespace

void Checkpoint::put_f32(const std::string& name, const Shape& shape,
                         const std::vector<float>& data) {
    if ((int64_t)data.size() != payload_count(shape))
        throw std::runtime_error("checkpoint: shape/data mismatch for " + name);
    CheckpointEntry e;
    e.dtype = CheckpointEntry::F32;
    e.shape = shape;
    e.f32 = data;
    entries_[name] = std::move(e);
}

void Checkpoint::put_f64(const std::string& name, const Shape& shape,
                         const std::vector<double>& data) {
    if ((int64_t)data.size() != payload_count(shape))
        throw std::runtime_error("checkpoint: shape/data mismatch for " + name);
    CheckpointEntry e;
    e.dtype = CheckpointEntry::F64;
    e.shape = shape;
    e.f64 = data;
    entries_[name] = std::move(e);
}

void Checkpoint::put_i64(const std::string& name, const std::vector<int64_t>& data) {
    CheckpointEntry e;
    e.dtype = CheckpointEntry::I64;
    e.shape = {(int)data.size()};
    e.i64 = data;
    entries_[name] = std::move(e);
}

void Checkpoint::put_u8(const std::string& name, const std::vector<uint8_t>& data) {
    CheckpointEntry e;
    e.dtype = CheckpointEntry::U8;
    e.shape = {(int)data.size()};
    e.u8 = data;
    entries_[name] = std::move(e);
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::runtime_error("checkpoint: missing entry " + name);
    return it->second;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 5);
    write_u32(os, (uint32_t)entries_.size());
    for (const auto& [name, e] : entries_) {
        write_u32(os, (uint32_t)name.size());
        os.write(name.data(), (std::streamsize)name.size());
        os.put((char)e.dtype);
        write_u32(os, (uint32_t)e.shape.size());
        for (int d : e.shape) write_u32(os, (uint32_t)d);
    }
    for (const auto& [name, e] : entries_) {
        switch (e.dtype) {
            case CheckpointEntry::F32:
                os.write((const char*)e.f32.data(), (std::streamsize)(e.f32.size() * 4));
                break;
            case CheckpointEntry::I64:
                os.write((const char*)e.i64.data(), (std::streamsize)(e.i64.size() * 8));
                break;
            case CheckpointEntry::U8:
                os.write((const char*)e.u8.data(), (std::streamsize)e.u8.size());
                break;
            case CheckpointEntry::F64:
                os.write((const char*)e.f64.data(), (std::streamsize)(e.f64.size() * 8));
                break;
        }
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kMagic, 5) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t count = read_u32(is);
    Checkpoint ck;
    std::vector<std::string> order;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t nlen = read_u32(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        CheckpointEntry e;
        e.dtype = (uint8_t)is.get();
        const uint32_t rank = read_u32(is);
        for (uint32_t r = 0; r < rank; ++r) e.shape.push_back((int)read_u32(is));
        order.push_back(name);
        ck.entries_[name] = std::move(e);
    }
    for (const auto& name : order) {
        auto& e = ck.entries_[name];
        const int64_t n = payload_count(e.shape);
        switch (e.dtype) {
            case CheckpointEntry::F32:
                e.f32.resize((size_t)n);
                is.read((char*)e.f32.data(), n * 4);
                break;
            case CheckpointEntry::I64:
                e.i64.resize((size_t)n);
                is.read((char*)e.i64.data(), n * 8);
                break;
            case CheckpointEntry::U8:
                e.u8.resize((size_t)n);
                is.read((char*)e.u8.data(), n);
                break;
            case CheckpointEntry::F64:
                e.f64.resize((size_t)n);
                is.read((char*)e.f64.data(), n * 8);
                break;
            default:
                throw std::runtime_error("checkpoint: unknown dtype in " + path);
        }
    }
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
    return ck;
}

uint64_t file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("file_hash: cannot open " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[8192];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= (uint8_t)buf[i];
            h *= 1099511628211ull;
        }
        if (is.eof()) break;
    }
    return h;
}

}  // namespace avd

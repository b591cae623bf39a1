// Checkpoint container: magic "AVDK1", length-prefixed manifest
// (name, dtype tag, shape), then raw little-endian payloads in manifest
// order. f32 payloads are bit-exact round trips.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avd/tensor.hpp"

namespace avd {

struct CheckpointEntry {
    enum Dtype : uint8_t { F32 = 0, I64 = 1, U8 = 2, F64 = 3 };
    uint8_t dtype = F32;
    Shape shape;
    std::vector<float> f32;
    std::vector<int64_t> i64;
    std::vector<uint8_t> u8;
    std::vector<double> f64;
};

class Checkpoint {
  public:
    void put_f32(const std::string& name, const Shape& shape, const std::vector<float>& data);
    void put_f64(const std::string& name, const Shape& shape, const std::vector<double>& data);
    void put_i64(const std::string& name, const std::vector<int64_t>& data);
    void put_u8(const std::string& name, const std::vector<uint8_t>& data);
    void put_scalar(const std::string& name, int64_t v) { put_i64(name, {v}); }
    void put_string(const std::string& name, const std::string& s) {
        put_u8(name, std::vector<uint8_t>(s.begin(), s.end()));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    const CheckpointEntry& at(const std::string& name) const;
    int64_t scalar(const std::string& name) const { return at(name).i64.at(0); }
    std::string str(const std::string& name) const {
        const auto& e = at(name);
        return std::string(e.u8.begin(), e.u8.end());
    }
    const std::map<std::string, CheckpointEntry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

  private:
    std::map<std::string, CheckpointEntry> entries_;
};

// FNV-1a over the serialized bytes; stable fingerprint for reproducibility checks.
uint64_t file_hash(const std::string& path);

}  // namespace avd

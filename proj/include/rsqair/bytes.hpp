#ifndef RSQAIR_BYTES_HPP
#define RSQAIR_BYTES_HPP

// Little-endian packing helpers shared by the binary container formats.

#include <cstdint>
#include <cstring>
#include <vector>

namespace rsqair::bytes {

inline void push_u32(std::vector<uint8_t>& buf, uint32_t v) {
    buf.push_back(static_cast<uint8_t>(v & 0xff));
    buf.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    buf.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    buf.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

inline void push_u64(std::vector<uint8_t>& buf, uint64_t v) {
    push_u32(buf, static_cast<uint32_t>(v & 0xffffffffull));
    push_u32(buf, static_cast<uint32_t>(v >> 32));
}

inline void push_f32(std::vector<uint8_t>& buf, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    push_u32(buf, u);
}

inline void push_f64(std::vector<uint8_t>& buf, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    push_u64(buf, u);
}

inline uint32_t pull_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline uint64_t pull_u64(const uint8_t* p) {
    return static_cast<uint64_t>(pull_u32(p)) | (static_cast<uint64_t>(pull_u32(p + 4)) << 32);
}

inline float pull_f32(const uint8_t* p) {
    uint32_t u = pull_u32(p);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline double pull_f64(const uint8_t* p) {
    uint64_t u = pull_u64(p);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace rsqair::bytes

#endif

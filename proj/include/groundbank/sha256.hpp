#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace groundbank {

// Incremental SHA-256. Used for content digests of weights, banks, and
// resolved configs so cached artifacts can be invalidated reliably.
class Sha256 {
  public:
    Sha256();

    void update(const void* data, size_t len);
    void update(const std::string& s) { update(s.data(), s.size()); }

    // Finalize and return the digest as lowercase hex. The object must not be
    // updated afterwards.
    std::string hex_digest();

  private:
    void process_block(const uint8_t* block);

    uint32_t state_[8];
    uint64_t total_len_ = 0;
    uint8_t buffer_[64];
    size_t buffer_len_ = 0;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);

} // namespace groundbank

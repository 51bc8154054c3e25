#pragma once

#include <cstdint>

namespace rd {

// Counter-based generator (Philox4x32-10): every deviate is a pure function
// of (seed, stream, draw index), so streams can be evaluated in any order,
// from any thread, with identical results.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  // k-th uniform deviate in (0,1). Each 4x32 output block yields two
  // doubles; consecutive k share a block but use disjoint lanes.
  double uniform(std::uint64_t k) const {
    std::uint32_t x[4] = {static_cast<std::uint32_t>(k >> 1),
                          static_cast<std::uint32_t>(k >> 33),
                          static_cast<std::uint32_t>(seed_ >> 32),
                          static_cast<std::uint32_t>(stream_ >> 32)};
    std::uint32_t key0 = static_cast<std::uint32_t>(seed_);
    std::uint32_t key1 = static_cast<std::uint32_t>(stream_);
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ull * x[0];
      const std::uint64_t p1 = 0xCD9E8D57ull * x[2];
      const std::uint32_t y0 = static_cast<std::uint32_t>(p1 >> 32) ^ x[1] ^ key0;
      const std::uint32_t y1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t y2 = static_cast<std::uint32_t>(p0 >> 32) ^ x[3] ^ key1;
      const std::uint32_t y3 = static_cast<std::uint32_t>(p0);
      x[0] = y0;
      x[1] = y1;
      x[2] = y2;
      x[3] = y3;
      key0 += 0x9E3779B9u;
      key1 += 0xBB67AE85u;
    }
    const unsigned lane = static_cast<unsigned>(k & 1) * 2;
    const std::uint64_t bits =
        (static_cast<std::uint64_t>(x[lane]) << 32) | x[lane + 1];
    // 53 significant bits, offset half a step so the value is never 0 or 1.
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace rd

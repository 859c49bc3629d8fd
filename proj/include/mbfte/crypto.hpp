#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbfte/bytes.hpp"

namespace mbfte::crypto {

using Sha256Digest = std::array<std::uint8_t, 32>;
using Sha512Digest = std::array<std::uint8_t, 64>;

Sha256Digest sha256(ByteView data);
// SHA-256(prefix || s) for each s, hashing the shared prefix once.
std::vector<Sha256Digest> sha256_each(ByteView prefix, const std::vector<std::string>& suffixes);
Sha512Digest hmac_sha512(ByteView key, ByteView data);

// AES-256 in CTR mode with a 128-bit big-endian counter block starting at `iv`.
// `offset` is the keystream byte position, so a message can be processed in
// pieces and still line up with a single-shot call.
Bytes aes256_ctr(ByteView key, ByteView iv, ByteView data, std::uint64_t offset = 0);

// Source of uniformly random bytes. Implementations own their state and are
// not thread-safe.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  std::uint64_t next_u64();
  // Uniform in [0, 2^bits), bits <= 64.
  std::uint64_t next_bits(unsigned bits);
  // Uniform in [0, n) by rejection.
  std::uint64_t uniform(std::uint64_t n);
};

// OpenSSL's CSPRNG.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

// AES-256-CTR keystream keyed by SHA-256 of a seed; reproducible across runs.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed);
  explicit SeededRandom(std::string_view seed_phrase);
  void fill(std::span<std::uint8_t> out) override;

 private:
  Sha256Digest key_{};
  std::uint64_t position_ = 0;
};

}  // namespace mbfte::crypto

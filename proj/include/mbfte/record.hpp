#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "mbfte/bytes.hpp"
#include "mbfte/crypto.hpp"

namespace mbfte {

inline constexpr std::size_t kSvBytes = 2;
inline constexpr std::size_t kLengthBytes = 2;
inline constexpr std::size_t kTagBytes = 5;
inline constexpr std::size_t kRecordOverhead = kSvBytes + kLengthBytes + kTagBytes;
inline constexpr std::size_t kControlBytes = 3;
inline constexpr std::size_t kMaxMessageBytes = 0xffff;
inline constexpr std::size_t kMaxFragments = 255;
inline constexpr std::size_t kKeyFileBytes = 105;

using Key32 = std::array<std::uint8_t, 32>;
using Iv16 = std::array<std::uint8_t, 16>;
using Sv = std::array<std::uint8_t, 2>;

struct KeyBundle {
  Key32 k1{};  // sentinel
  Key32 k2{};  // tag
  Key32 k3{};  // CTR
  std::uint64_t counter = 0;
  std::uint8_t tweak_range = 10;

  bool operator==(const KeyBundle&) const = default;
};

// K_i = HMAC-SHA512(master, "K1" | "K2" | "K3")[:32].
KeyBundle derive_keys(ByteView master, std::uint8_t tweak_range = 10);
// Deterministic: master = SHA-256(phrase).
KeyBundle keygen_from_phrase(std::string_view phrase, std::uint8_t tweak_range = 10);
KeyBundle keygen_random(crypto::RandomSource& rng, std::uint8_t tweak_range = 10);

// 96 key bytes, 8-byte big-endian counter, 1-byte tweak range.
Bytes serialize_keys(const KeyBundle& keys);
KeyBundle parse_keys(ByteView data);
void save_key_file(const std::filesystem::path& path, const KeyBundle& keys);
KeyBundle load_key_file(const std::filesystem::path& path);

struct InitialValue {
  Iv16 iv{};
  std::uint8_t ix = 0;
};

// IV for message number `counter`: HMAC-SHA512(K1, "IV" || be64(counter))[:16].
Iv16 derive_iv(const KeyBundle& keys, std::uint64_t counter);

Sv sentinel(const KeyBundle& keys, const InitialValue& iv);
Sv fragment_sentinel(const KeyBundle& keys, const InitialValue& iv, std::uint8_t index);

// V || CTR(<|M|>_16 || M) || T. Throws Errc::message_too_long.
Bytes seal(ByteView M, const KeyBundle& keys, const InitialValue& iv);
// Throws Errc::bad_tag or Errc::bad_length.
Bytes open(ByteView record, const KeyBundle& keys, const InitialValue& iv);

// SVs for IX = 0 .. tweak_range-1.
std::vector<Sv> expected_sv(const KeyBundle& keys, const Iv16& iv_base, unsigned tweak_range);

// Decrypts the length prefix from the first four record bytes.
std::uint16_t peek_length(ByteView head, const KeyBundle& keys, const InitialValue& iv);

struct FragmentControl {
  std::uint8_t index = 0;
  std::uint8_t total = 0;
  std::uint8_t payload_len = 0;
};

// Fragment records. Fragment i is V_i || C_i where C_i is the CTR encryption
// of control_i || chunk_i, continuing the keystream of the previous fragment.
// The last fragment additionally carries the tag over V_1 || C_1 || ... || C_k.
// `max_record_bits` bounds the V || C part of every fragment.
std::vector<Bytes> fragment(ByteView M, const KeyBundle& keys, const InitialValue& iv,
                            std::size_t max_record_bits);

// Control block of fragment `index` given the payload size shared by all
// non-final fragments (equal to fragment 0's payload_len).
FragmentControl peek_control(ByteView head, const KeyBundle& keys, const InitialValue& iv,
                             std::size_t index, std::size_t chunk);

// Expected record length of fragment `index` from its control block.
std::size_t fragment_record_length(const FragmentControl& control);

// Fragments in index order. Throws Errc::bad_tag or Errc::bad_length.
Bytes reassemble(const std::vector<Bytes>& fragments, const KeyBundle& keys, const InitialValue& iv);

}  // namespace mbfte

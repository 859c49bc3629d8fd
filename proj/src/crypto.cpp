#include "mbfte/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cstring>
#include <memory>

#include "mbfte/error.hpp"

namespace mbfte::crypto {

namespace {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

struct MdDeleter {
  void operator()(EVP_MD* md) const { EVP_MD_free(md); }
};

const EVP_MD* sha256_md() {
  static std::unique_ptr<EVP_MD, MdDeleter> md(EVP_MD_fetch(nullptr, "SHA256", nullptr));
  if (!md) throw Error(Errc::io, "SHA-256 unavailable");
  return md.get();
}

// Adds `blocks` to a 128-bit big-endian counter block.
std::array<std::uint8_t, 16> advance_counter(ByteView iv, std::uint64_t blocks) {
  std::array<std::uint8_t, 16> out{};
  std::copy(iv.begin(), iv.end(), out.begin());
  unsigned carry = 0;
  for (int i = 15; i >= 0; --i) {
    unsigned add = static_cast<unsigned>(blocks & 0xff) + carry;
    blocks >>= 8;
    unsigned sum = out[i] + add;
    out[i] = static_cast<std::uint8_t>(sum);
    carry = sum >> 8;
  }
  return out;
}

}  // namespace

Sha256Digest sha256(ByteView data) {
  Sha256Digest out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

std::vector<Sha256Digest> sha256_each(ByteView prefix, const std::vector<std::string>& suffixes) {
  thread_local std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> base(EVP_MD_CTX_new());
  thread_local std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> work(EVP_MD_CTX_new());
  if (!base || !work) throw Error(Errc::io, "EVP_MD_CTX_new failed");
  if (EVP_DigestInit_ex(base.get(), sha256_md(), nullptr) != 1 ||
      EVP_DigestUpdate(base.get(), prefix.data(), prefix.size()) != 1) {
    throw Error(Errc::io, "SHA-256 failed");
  }
  std::vector<Sha256Digest> out(suffixes.size());
  for (std::size_t i = 0; i < suffixes.size(); ++i) {
    unsigned int len = 0;
    if (EVP_MD_CTX_copy_ex(work.get(), base.get()) != 1 ||
        EVP_DigestUpdate(work.get(), suffixes[i].data(), suffixes[i].size()) != 1 ||
        EVP_DigestFinal_ex(work.get(), out[i].data(), &len) != 1) {
      throw Error(Errc::io, "SHA-256 failed");
    }
  }
  return out;
}

Sha512Digest hmac_sha512(ByteView key, ByteView data) {
  Sha512Digest out{};
  unsigned int len = 0;
  if (HMAC(EVP_sha512(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
           out.data(), &len) == nullptr) {
    throw Error(Errc::io, "HMAC-SHA512 failed");
  }
  return out;
}

Bytes aes256_ctr(ByteView key, ByteView iv, ByteView data, std::uint64_t offset) {
  if (key.size() != 32 || iv.size() != 16) {
    throw Error(Errc::invalid_argument, "AES-256-CTR needs a 32-byte key and 16-byte IV");
  }
  Bytes out(data.size());
  if (data.empty()) return out;

  auto start = advance_counter(iv, offset / 16);
  std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter> ctx(EVP_CIPHER_CTX_new());
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_ctr(), nullptr, key.data(), start.data()) != 1) {
    throw Error(Errc::io, "AES-256-CTR init failed");
  }
  int len = 0;
  // Burn the partial block so the keystream lines up with `offset`.
  std::size_t skip = offset % 16;
  if (skip != 0) {
    std::uint8_t scratch[16] = {};
    if (EVP_EncryptUpdate(ctx.get(), scratch, &len, scratch, static_cast<int>(skip)) != 1) {
      throw Error(Errc::io, "AES-256-CTR update failed");
    }
  }
  if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, data.data(), static_cast<int>(data.size())) != 1) {
    throw Error(Errc::io, "AES-256-CTR update failed");
  }
  return out;
}

std::uint64_t RandomSource::next_u64() {
  std::uint8_t buf[8];
  fill(buf);
  std::uint64_t v = 0;
  for (auto b : buf) v = v << 8 | b;
  return v;
}

std::uint64_t RandomSource::next_bits(unsigned bits) {
  if (bits == 0) return 0;
  std::uint64_t v = next_u64();
  return bits >= 64 ? v : v & ((std::uint64_t{1} << bits) - 1);
}

std::uint64_t RandomSource::uniform(std::uint64_t n) {
  if (n == 0) throw Error(Errc::invalid_argument, "uniform(0)");
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  for (;;) {
    std::uint64_t v = next_u64();
    if (v < limit) return v % n;
  }
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw Error(Errc::io, "RAND_bytes failed");
  }
}

SeededRandom::SeededRandom(std::uint64_t seed) {
  std::uint8_t buf[8];
  for (int i = 7; i >= 0; --i) {
    buf[i] = static_cast<std::uint8_t>(seed);
    seed >>= 8;
  }
  key_ = sha256(buf);
}

SeededRandom::SeededRandom(std::string_view seed_phrase) {
  key_ = sha256(ByteView(reinterpret_cast<const std::uint8_t*>(seed_phrase.data()), seed_phrase.size()));
}

void SeededRandom::fill(std::span<std::uint8_t> out) {
  static constexpr std::array<std::uint8_t, 16> zero_iv{};
  Bytes zeros(out.size());
  Bytes stream = aes256_ctr(key_, zero_iv, zeros, position_);
  std::copy(stream.begin(), stream.end(), out.begin());
  position_ += out.size();
}

}  // namespace mbfte::crypto

#include "mbfte/record.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "mbfte/error.hpp"

namespace mbfte {

namespace {

Bytes label_bytes(std::string_view label) { return Bytes(label.begin(), label.end()); }

void append(Bytes& out, ByteView more) { out.insert(out.end(), more.begin(), more.end()); }

Sv sv_from(const KeyBundle& keys, const InitialValue& iv, const std::uint8_t* index) {
  Bytes input = label_bytes("SV");
  append(input, iv.iv);
  input.push_back(iv.ix);
  if (index != nullptr) input.push_back(*index);
  auto mac = crypto::hmac_sha512(keys.k1, input);
  return {mac[0], mac[1]};
}

std::array<std::uint8_t, kTagBytes> tag_over(const KeyBundle& keys, ByteView body) {
  Bytes input = label_bytes("Tag");
  append(input, body);
  auto mac = crypto::hmac_sha512(keys.k2, input);
  std::array<std::uint8_t, kTagBytes> out{};
  std::copy_n(mac.begin(), kTagBytes, out.begin());
  return out;
}

bool tag_matches(const KeyBundle& keys, ByteView body, ByteView tag) {
  auto expect = tag_over(keys, body);
  // Constant-time compare; the tag is short and public-facing.
  unsigned diff = 0;
  for (std::size_t i = 0; i < kTagBytes; ++i) diff |= expect[i] ^ tag[i];
  return diff == 0;
}

}  // namespace

KeyBundle derive_keys(ByteView master, std::uint8_t tweak_range) {
  if (tweak_range == 0) throw Error(Errc::invalid_argument, "tweak range must be at least 1");
  KeyBundle keys;
  auto take = [&](std::string_view label, Key32& dst) {
    auto mac = crypto::hmac_sha512(master, label_bytes(label));
    std::copy_n(mac.begin(), 32, dst.begin());
  };
  take("K1", keys.k1);
  take("K2", keys.k2);
  take("K3", keys.k3);
  keys.tweak_range = tweak_range;
  return keys;
}

KeyBundle keygen_from_phrase(std::string_view phrase, std::uint8_t tweak_range) {
  auto master = crypto::sha256(ByteView(reinterpret_cast<const std::uint8_t*>(phrase.data()), phrase.size()));
  return derive_keys(master, tweak_range);
}

KeyBundle keygen_random(crypto::RandomSource& rng, std::uint8_t tweak_range) {
  std::array<std::uint8_t, 32> master{};
  rng.fill(master);
  return derive_keys(master, tweak_range);
}

Bytes serialize_keys(const KeyBundle& keys) {
  Bytes out;
  out.reserve(kKeyFileBytes);
  append(out, keys.k1);
  append(out, keys.k2);
  append(out, keys.k3);
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(keys.counter >> (8 * i)));
  out.push_back(keys.tweak_range);
  return out;
}

KeyBundle parse_keys(ByteView data) {
  if (data.size() != kKeyFileBytes) {
    throw Error(Errc::invalid_argument, "key file must be exactly 105 bytes, got " + std::to_string(data.size()));
  }
  KeyBundle keys;
  std::copy_n(data.begin(), 32, keys.k1.begin());
  std::copy_n(data.begin() + 32, 32, keys.k2.begin());
  std::copy_n(data.begin() + 64, 32, keys.k3.begin());
  keys.counter = 0;
  for (int i = 0; i < 8; ++i) keys.counter = keys.counter << 8 | data[96 + i];
  keys.tweak_range = data[104];
  if (keys.tweak_range == 0) throw Error(Errc::invalid_argument, "key file has tweak range 0");
  return keys;
}

void save_key_file(const std::filesystem::path& path, const KeyBundle& keys) {
  auto bytes = serialize_keys(keys);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io, "cannot replace " + path.string() + ": " + ec.message());
}

KeyBundle load_key_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open key file " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_keys(data);
}

Iv16 derive_iv(const KeyBundle& keys, std::uint64_t counter) {
  Bytes input = label_bytes("IV");
  for (int i = 7; i >= 0; --i) input.push_back(static_cast<std::uint8_t>(counter >> (8 * i)));
  auto mac = crypto::hmac_sha512(keys.k1, input);
  Iv16 iv{};
  std::copy_n(mac.begin(), 16, iv.begin());
  return iv;
}

Sv sentinel(const KeyBundle& keys, const InitialValue& iv) { return sv_from(keys, iv, nullptr); }

Sv fragment_sentinel(const KeyBundle& keys, const InitialValue& iv, std::uint8_t index) {
  return sv_from(keys, iv, &index);
}

Bytes seal(ByteView M, const KeyBundle& keys, const InitialValue& iv) {
  if (M.size() > kMaxMessageBytes) {
    throw Error(Errc::message_too_long, "message of " + std::to_string(M.size()) + " bytes exceeds 65535");
  }
  Bytes plain;
  plain.reserve(M.size() + kLengthBytes);
  plain.push_back(static_cast<std::uint8_t>(M.size() >> 8));
  plain.push_back(static_cast<std::uint8_t>(M.size()));
  append(plain, M);

  Sv v = sentinel(keys, iv);
  Bytes record(v.begin(), v.end());
  append(record, crypto::aes256_ctr(keys.k3, iv.iv, plain));
  auto t = tag_over(keys, record);
  append(record, t);
  return record;
}

Bytes open(ByteView record, const KeyBundle& keys, const InitialValue& iv) {
  if (record.size() < kRecordOverhead) throw Error(Errc::bad_length, "record shorter than 9 bytes");
  ByteView body = record.first(record.size() - kTagBytes);
  if (!tag_matches(keys, body, record.last(kTagBytes))) throw Error(Errc::bad_tag, "tag mismatch");
  Bytes plain = crypto::aes256_ctr(keys.k3, iv.iv, body.subspan(kSvBytes));
  std::size_t len = static_cast<std::size_t>(plain[0]) << 8 | plain[1];
  if (len != plain.size() - kLengthBytes) {
    throw Error(Errc::bad_length, "length prefix " + std::to_string(len) + " does not match body");
  }
  return Bytes(plain.begin() + kLengthBytes, plain.end());
}

std::vector<Sv> expected_sv(const KeyBundle& keys, const Iv16& iv_base, unsigned tweak_range) {
  if (tweak_range < 1 || tweak_range > 256) throw Error(Errc::invalid_argument, "tweak range must be in [1, 256]");
  std::vector<Sv> out;
  out.reserve(tweak_range);
  for (unsigned ix = 0; ix < tweak_range; ++ix) {
    out.push_back(sentinel(keys, InitialValue{iv_base, static_cast<std::uint8_t>(ix)}));
  }
  return out;
}

std::uint16_t peek_length(ByteView head, const KeyBundle& keys, const InitialValue& iv) {
  if (head.size() < kSvBytes + kLengthBytes) throw Error(Errc::bad_length, "need four bytes to peek the length");
  Bytes plain = crypto::aes256_ctr(keys.k3, iv.iv, head.subspan(kSvBytes, kLengthBytes));
  return static_cast<std::uint16_t>(plain[0] << 8 | plain[1]);
}

std::vector<Bytes> fragment(ByteView M, const KeyBundle& keys, const InitialValue& iv,
                            std::size_t max_record_bits) {
  if (max_record_bits < 8 * (kSvBytes + kControlBytes + 1)) {
    throw Error(Errc::invalid_argument, "fragment size leaves no room for payload");
  }
  if (M.size() > kMaxMessageBytes) throw Error(Errc::message_too_long, "message exceeds 65535 bytes");
  const std::size_t chunk = std::min<std::size_t>(255, max_record_bits / 8 - kSvBytes - kControlBytes);

  Bytes plain;
  plain.push_back(static_cast<std::uint8_t>(M.size() >> 8));
  plain.push_back(static_cast<std::uint8_t>(M.size()));
  append(plain, M);
  const std::size_t total = (plain.size() + chunk - 1) / chunk;
  if (total > kMaxFragments) {
    throw Error(Errc::message_too_long, "message needs " + std::to_string(total) + " fragments, limit is 255");
  }

  std::vector<Bytes> out;
  Bytes tagged;
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t begin = i * chunk;
    std::size_t len = std::min(chunk, plain.size() - begin);
    Bytes piece = {static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(total), static_cast<std::uint8_t>(len)};
    piece.insert(piece.end(), plain.begin() + static_cast<std::ptrdiff_t>(begin),
                 plain.begin() + static_cast<std::ptrdiff_t>(begin + len));
    Sv v = fragment_sentinel(keys, iv, static_cast<std::uint8_t>(i));
    Bytes rec(v.begin(), v.end());
    append(rec, crypto::aes256_ctr(keys.k3, iv.iv, piece, offset));
    offset += piece.size();
    append(tagged, rec);
    out.push_back(std::move(rec));
  }
  auto t = tag_over(keys, tagged);
  append(out.back(), t);
  return out;
}

FragmentControl peek_control(ByteView head, const KeyBundle& keys, const InitialValue& iv,
                             std::size_t index, std::size_t chunk) {
  if (head.size() < kSvBytes + kControlBytes) throw Error(Errc::bad_length, "need five bytes to peek a control block");
  std::uint64_t offset = static_cast<std::uint64_t>(index) * (kControlBytes + chunk);
  Bytes c = crypto::aes256_ctr(keys.k3, iv.iv, head.subspan(kSvBytes, kControlBytes), offset);
  return FragmentControl{c[0], c[1], c[2]};
}

std::size_t fragment_record_length(const FragmentControl& control) {
  std::size_t len = kSvBytes + kControlBytes + control.payload_len;
  if (control.total != 0 && control.index + 1 == control.total) len += kTagBytes;
  return len;
}

Bytes reassemble(const std::vector<Bytes>& fragments, const KeyBundle& keys, const InitialValue& iv) {
  if (fragments.empty()) throw Error(Errc::bad_length, "no fragments");
  const std::size_t total = fragments.size();
  for (const auto& f : fragments) {
    if (f.size() < kSvBytes + kControlBytes) throw Error(Errc::bad_length, "fragment too short");
  }
  const Bytes& last = fragments.back();
  if (last.size() < kSvBytes + kControlBytes + kTagBytes) throw Error(Errc::bad_length, "final fragment too short");

  Bytes tagged;
  for (std::size_t i = 0; i + 1 < total; ++i) append(tagged, fragments[i]);
  ByteView last_view(last);
  append(tagged, last_view.first(last.size() - kTagBytes));
  if (!tag_matches(keys, tagged, last_view.last(kTagBytes))) throw Error(Errc::bad_tag, "fragment tag mismatch");

  Bytes plain;
  std::uint64_t offset = 0;
  std::size_t chunk = 0;
  for (std::size_t i = 0; i < total; ++i) {
    ByteView rec(fragments[i]);
    if (i + 1 == total) rec = rec.first(rec.size() - kTagBytes);
    Bytes piece = crypto::aes256_ctr(keys.k3, iv.iv, rec.subspan(kSvBytes), offset);
    offset += piece.size();
    FragmentControl ctl{piece[0], piece[1], piece[2]};
    if (ctl.index != i || ctl.total != total || ctl.payload_len != piece.size() - kControlBytes) {
      throw Error(Errc::bad_length, "fragment control block inconsistent at index " + std::to_string(i));
    }
    if (i == 0) chunk = ctl.payload_len;
    if (i + 1 < total && ctl.payload_len != chunk) throw Error(Errc::bad_length, "uneven non-final fragment");
    plain.insert(plain.end(), piece.begin() + kControlBytes, piece.end());
  }
  if (plain.size() < kLengthBytes) throw Error(Errc::bad_length, "reassembled message lacks a length prefix");
  std::size_t len = static_cast<std::size_t>(plain[0]) << 8 | plain[1];
  if (len != plain.size() - kLengthBytes) throw Error(Errc::bad_length, "length prefix does not match fragments");
  return Bytes(plain.begin() + kLengthBytes, plain.end());
}

}  // namespace mbfte

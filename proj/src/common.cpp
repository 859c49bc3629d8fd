#include "mbfte/bytes.hpp"
#include "mbfte/error.hpp"

namespace mbfte {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::provider_failure: return "provider-failure";
    case Errc::token_not_in_support: return "token-not-in-support";
    case Errc::no_alternate: return "no-alternate";
    case Errc::no_progress: return "no-progress";
    case Errc::message_too_long: return "message-too-long";
    case Errc::bad_tag: return "bad-tag";
    case Errc::bad_length: return "bad-length";
    case Errc::untokenizable: return "untokenizable";
    case Errc::no_valid_parse: return "no-valid-parse";
    case Errc::over_limit: return "over-limit";
    case Errc::rate_limited: return "rate-limited";
    case Errc::too_short: return "too-short";
    case Errc::exhausted_retries: return "exhausted-retries";
    case Errc::io: return "io";
  }
  return "unknown";
}

std::string to_hex(ByteView b) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (auto v : b) {
    out.push_back(digits[v >> 4]);
    out.push_back(digits[v & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char ch) -> int {
    if (ch >= '0' && ch <= '9') return ch - '0';
    if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
    if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(Errc::invalid_argument, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::invalid_argument, "bad hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

}  // namespace mbfte

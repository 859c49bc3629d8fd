#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mbfte/bytes.hpp"
#include "mbfte/crypto.hpp"
#include "mbfte/format.hpp"

namespace mbfte {

using Symbols = std::vector<std::uint32_t>;

// Symbol width `r` in bits and coding length `l` in symbols; the coder's state
// is held to r*l bits of precision.
struct CoderParams {
  unsigned r = 8;
  unsigned l = 4;

  void validate() const;
  // Throws unless 2^{r(l-1)} >= denominator, which keeps every token's slice
  // of a rescaled range non-empty.
  void validate_for(const SamplingConfig& config) const;

  unsigned precision() const { return r * l; }
  std::uint64_t full() const { return std::uint64_t{1} << precision(); }
  std::uint64_t unit() const { return std::uint64_t{1} << (r * (l - 1)); }
  std::uint32_t symbol_mask() const { return static_cast<std::uint32_t>((std::uint64_t{1} << r) - 1); }
};

// Range [a, b) over frame coordinates, the decoder's window c, the number w
// of trailing symbols of D still awaiting a possible carry, and the emitted
// symbols D.
//
// While w > 0 the range straddles the carry point 2^{rl}: coordinates at or
// above it mean D[-w] is one larger and the following w-1 symbols (held as
// all-ones) wrap to zero. Pending symbols are stored in their no-carry form.
struct CoderState {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t c = 0;
  std::uint32_t w = 0;
  Symbols D;
};

// Supplies the next ciphertext symbol to shift into the decoder window.
class SymbolFeed {
 public:
  virtual ~SymbolFeed() = default;
  virtual std::uint32_t next() = 0;
};

// Fixed-precision arithmetic coding engine shared by decoder and encoder.
class RangeCoder {
 public:
  explicit RangeCoder(CoderParams params);

  const CoderParams& params() const { return params_; }

  CoderState initial_state() const;

  // Entry index in `dist` whose slice of [a, b) contains c.
  std::size_t locate(const CoderState& state, const QuantizedDistribution& dist) const;

  // Narrows [a, b) to the slice of entry `position`.
  void adjust(CoderState& state, const QuantizedDistribution& dist, std::size_t position) const;

  // Shifts determined symbols into D until b - a > 2^{r(l-1)}. When `feed`
  // is non-null the window c follows a and b and takes one fresh symbol per
  // shift.
  void rescale(CoderState& state, SymbolFeed* feed) const;

  // Encoder step. Throws Errc::token_not_in_support.
  void encode_token(CoderState& state, const QuantizedDistribution& dist, TokenIndex token) const;

 private:
  CoderParams params_;
  std::uint64_t full_;
  std::uint64_t unit_;
  std::uint64_t frame_top_;
};

struct DecodeResult {
  std::vector<TokenIndex> tokens;
  std::size_t consumed_padding_symbols = 0;
  // Sum of ln(f/D_q) over the emitted tokens.
  double log_prob = 0.0;
  Symbols D;
  std::uint32_t w = 0;
};

struct EncodeResult {
  Symbols D;
  std::uint32_t w = 0;
};

// Samples tokens by arithmetic-decoding C against the format; stops once at
// least |C| symbols have been shifted out. Symbols past the end of C come from
// `pad`. `max_tokens` guards against zero-capacity chains (0 picks a bound
// proportional to |C|); exceeding it throws Errc::no_progress.
DecodeResult decode(const Symbols& C, const ModelFormat& format, const SamplingConfig& config,
                    const CoderParams& params, crypto::RandomSource& pad,
                    std::size_t max_tokens = 0);
DecodeResult decode(ByteView C, const ModelFormat& format, const SamplingConfig& config,
                    const CoderParams& params, crypto::RandomSource& pad,
                    std::size_t max_tokens = 0);

EncodeResult encode(const std::vector<TokenIndex>& tokens, const ModelFormat& format,
                    const SamplingConfig& config, const CoderParams& params);

// D with D[-w] incremented (mod 2^r) and the last w-1 symbols inverted.
// Throws Errc::no_alternate when w == 0.
Symbols alternate_encoding(const Symbols& D, std::uint32_t w, unsigned r = 8);
Symbols alternate_encoding(const EncodeResult& result, unsigned r = 8);

// GetToken on a fresh full-width range with a uniformly random window: one
// sample from `dist` driven by r*l random bits.
TokenIndex sample_with_coder(const QuantizedDistribution& dist, const CoderParams& params,
                             crypto::RandomSource& bits);

Symbols symbols_from_bytes(ByteView bytes);
// Requires every symbol < 256.
Bytes bytes_from_symbols(const Symbols& symbols);

}  // namespace mbfte

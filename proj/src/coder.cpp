#include "mbfte/coder.hpp"

#include <algorithm>
#include <cmath>

#include "mbfte/error.hpp"

namespace mbfte {

namespace {

using u128 = unsigned __int128;

std::uint64_t scale(std::uint64_t range, std::uint64_t cum, std::uint32_t denominator) {
  return static_cast<std::uint64_t>(static_cast<u128>(range) * cum / denominator);
}

class CiphertextFeed final : public SymbolFeed {
 public:
  CiphertextFeed(const Symbols& C, std::size_t start, unsigned r, crypto::RandomSource& pad)
      : C_(C), next_(start), r_(r), pad_(pad) {}

  std::uint32_t next() override {
    if (next_ < C_.size()) return C_[next_++];
    ++next_;
    ++padding_;
    return static_cast<std::uint32_t>(pad_.next_bits(r_));
  }

  std::size_t padding() const { return padding_; }

 private:
  const Symbols& C_;
  std::size_t next_;
  unsigned r_;
  crypto::RandomSource& pad_;
  std::size_t padding_ = 0;
};

}  // namespace

void CoderParams::validate() const {
  if (r < 1 || l < 2) throw Error(Errc::invalid_argument, "coder needs r >= 1 and l >= 2");
  if (r > 31) throw Error(Errc::invalid_argument, "symbols wider than 31 bits are not supported");
  if (r * l > 62) throw Error(Errc::invalid_argument, "r*l must not exceed 62");
}

void CoderParams::validate_for(const SamplingConfig& config) const {
  validate();
  if (unit() < config.quant_denominator) {
    throw Error(Errc::invalid_argument, "2^{r(l-1)} must be at least the quantization denominator");
  }
}

RangeCoder::RangeCoder(CoderParams params) : params_(params) {
  params_.validate();
  full_ = params_.full();
  unit_ = params_.unit();
  frame_top_ = full_ - unit_;
}

CoderState RangeCoder::initial_state() const {
  CoderState s;
  s.a = 0;
  s.b = full_;
  return s;
}

std::size_t RangeCoder::locate(const CoderState& state, const QuantizedDistribution& dist) const {
  const std::uint64_t range = state.b - state.a;
  const std::uint64_t offset = state.c - state.a;
  const auto& cum = dist.cumulative();
  // Last entry whose scaled lower edge is <= offset.
  std::size_t lo = 0;
  std::size_t hi = dist.size();
  while (hi - lo > 1) {
    std::size_t mid = (lo + hi) / 2;
    if (scale(range, cum[mid], dist.denominator()) <= offset) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

void RangeCoder::adjust(CoderState& state, const QuantizedDistribution& dist, std::size_t position) const {
  const std::uint64_t range = state.b - state.a;
  const auto& cum = dist.cumulative();
  const std::uint64_t base = state.a;
  state.a = base + scale(range, cum[position], dist.denominator());
  state.b = base + scale(range, cum[position + 1], dist.denominator());
}

void RangeCoder::rescale(CoderState& state, SymbolFeed* feed) const {
  const unsigned r = params_.r;
  const unsigned top_shift = params_.precision() - r;
  const std::uint32_t mask = params_.symbol_mask();
  for (;;) {
    if (state.w > 0) {
      if (state.a >= full_) {
        // Carry: the pending head goes up by one and the all-ones tail wraps.
        auto& D = state.D;
        const std::size_t n = D.size();
        D[n - state.w] = (D[n - state.w] + 1) & mask;
        for (std::size_t i = 1; i < state.w; ++i) D[n - i] = ~D[n - i] & mask;
        state.a -= full_;
        state.b -= full_;
        if (feed != nullptr) state.c -= full_;
        state.w = 0;
      } else if (state.b <= full_) {
        state.w = 0;
      }
    }
    if (state.b - state.a > unit_) break;

    std::uint64_t base;
    std::uint32_t symbol;
    if (state.w == 0) {
      symbol = static_cast<std::uint32_t>(state.a >> top_shift);
      base = static_cast<std::uint64_t>(symbol) * unit_;
      if (((state.b - 1) >> top_shift) != symbol) state.w = 1;
    } else {
      symbol = mask;
      base = frame_top_;
      ++state.w;
    }
    state.D.push_back(symbol);
    state.a = (state.a - base) << r;
    state.b = (state.b - base) << r;
    if (feed != nullptr) state.c = ((state.c - base) << r) | feed->next();
  }
}

void RangeCoder::encode_token(CoderState& state, const QuantizedDistribution& dist, TokenIndex token) const {
  auto position = dist.position_of(token);
  if (position < 0) {
    throw Error(Errc::token_not_in_support, "token " + std::to_string(token) + " has zero frequency");
  }
  adjust(state, dist, static_cast<std::size_t>(position));
  rescale(state, nullptr);
}

DecodeResult decode(const Symbols& C, const ModelFormat& format, const SamplingConfig& config,
                    const CoderParams& params, crypto::RandomSource& pad, std::size_t max_tokens) {
  params.validate_for(config);
  if (C.empty()) throw Error(Errc::invalid_argument, "cannot decode an empty ciphertext");
  const std::uint32_t mask = params.symbol_mask();
  for (auto s : C) {
    if (s > mask) throw Error(Errc::invalid_argument, "ciphertext symbol wider than r bits");
  }
  if (max_tokens == 0) max_tokens = 1024 + 16 * params.r * C.size();

  RangeCoder coder(params);
  CoderState state = coder.initial_state();
  CiphertextFeed feed(C, 0, params.r, pad);
  for (unsigned i = 0; i < params.l; ++i) state.c = (state.c << params.r) | feed.next();

  DecodeResult result;
  std::string seed = format.start_seed();
  while (state.D.size() < C.size()) {
    if (result.tokens.size() >= max_tokens) {
      throw Error(Errc::no_progress, "decoder emitted " + std::to_string(max_tokens) +
                                         " tokens without consuming the ciphertext");
    }
    QuantizedDistribution dist = next_distribution(format, config, seed);
    std::size_t position = coder.locate(state, dist);
    TokenIndex token = dist.entries()[position].token;
    result.log_prob += std::log(static_cast<double>(dist.entries()[position].frequency) / dist.denominator());
    coder.adjust(state, dist, position);
    coder.rescale(state, &feed);
    result.tokens.push_back(token);
    seed = format.next_seed(seed, token);
  }
  result.consumed_padding_symbols = feed.padding();
  result.D = std::move(state.D);
  result.w = state.w;
  return result;
}

DecodeResult decode(ByteView C, const ModelFormat& format, const SamplingConfig& config,
                    const CoderParams& params, crypto::RandomSource& pad, std::size_t max_tokens) {
  if (params.r != 8) throw Error(Errc::invalid_argument, "byte input needs r = 8");
  return decode(symbols_from_bytes(C), format, config, params, pad, max_tokens);
}

EncodeResult encode(const std::vector<TokenIndex>& tokens, const ModelFormat& format,
                    const SamplingConfig& config, const CoderParams& params) {
  params.validate_for(config);
  RangeCoder coder(params);
  CoderState state = coder.initial_state();
  std::string seed = format.start_seed();
  for (TokenIndex t : tokens) {
    QuantizedDistribution dist = next_distribution(format, config, seed);
    coder.encode_token(state, dist, t);
    seed = format.next_seed(seed, t);
  }
  return EncodeResult{std::move(state.D), state.w};
}

Symbols alternate_encoding(const Symbols& D, std::uint32_t w, unsigned r) {
  if (w == 0) throw Error(Errc::no_alternate, "no pending symbols, so no alternate encoding");
  if (w > D.size()) throw Error(Errc::invalid_argument, "pending count exceeds the encoding length");
  const std::uint32_t mask = static_cast<std::uint32_t>((std::uint64_t{1} << r) - 1);
  Symbols out = D;
  const std::size_t n = out.size();
  out[n - w] = (out[n - w] + 1) & mask;
  for (std::size_t i = 1; i < w; ++i) out[n - i] = ~out[n - i] & mask;
  return out;
}

Symbols alternate_encoding(const EncodeResult& result, unsigned r) {
  return alternate_encoding(result.D, result.w, r);
}

TokenIndex sample_with_coder(const QuantizedDistribution& dist, const CoderParams& params,
                             crypto::RandomSource& bits) {
  RangeCoder coder(params);
  CoderState state = coder.initial_state();
  state.c = bits.next_bits(params.precision());
  return dist.entries()[coder.locate(state, dist)].token;
}

Symbols symbols_from_bytes(ByteView bytes) { return Symbols(bytes.begin(), bytes.end()); }

Bytes bytes_from_symbols(const Symbols& symbols) {
  Bytes out;
  out.reserve(symbols.size());
  for (auto s : symbols) {
    if (s > 0xff) throw Error(Errc::invalid_argument, "symbol does not fit in a byte");
    out.push_back(static_cast<std::uint8_t>(s));
  }
  return out;
}

}  // namespace mbfte

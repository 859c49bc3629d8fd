#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mbfte/codec.hpp"
#include "mbfte/error.hpp"

namespace mbfte::detail {

// Distributions and token matches for one fixed covertext. The seed at a text
// position depends only on the characters before it, so every parse path
// shares these.
class TextModel {
 public:
  TextModel(std::string_view text, const CodecContext& ctx) : text_(text), ctx_(ctx) {
    const auto& toks = ctx.format.tokens();
    matches_.resize(text.size());
    for (std::size_t p = 0; p < text.size(); ++p) {
      for (std::size_t t = 0; t < toks.size(); ++t) {
        if (text.compare(p, toks[t].size(), toks[t]) == 0) matches_[p].push_back(static_cast<TokenIndex>(t));
      }
      if (matches_[p].empty()) {
        throw Error(Errc::untokenizable, "character at offset " + std::to_string(p) + " is outside the token alphabet");
      }
    }
    dists_.resize(text.size());
  }

  std::size_t size() const { return text_.size(); }
  const std::vector<TokenIndex>& matches(std::size_t p) const { return matches_[p]; }

  const QuantizedDistribution& dist(std::size_t p) {
    if (!dists_[p]) {
      std::string seed = ctx_.format.initial_seed();
      seed.append(text_.substr(0, p));
      const std::size_t n = ctx_.format.context_len();
      if (seed.size() > n) seed.erase(0, seed.size() - n);
      dists_[p] = next_distribution(ctx_.format, ctx_.config, seed);
    }
    return *dists_[p];
  }

 private:
  std::string_view text_;
  const CodecContext& ctx_;
  std::vector<std::vector<TokenIndex>> matches_;
  std::vector<std::optional<QuantizedDistribution>> dists_;
};

}  // namespace mbfte::detail

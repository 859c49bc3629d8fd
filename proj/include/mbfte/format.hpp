#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mbfte {

using TokenIndex = std::uint32_t;

// Supplies raw next-token logits for a seed. Implementations must be pure in
// the seed: the same seed always yields the identical vector.
class DistributionProvider {
 public:
  virtual ~DistributionProvider() = default;
  virtual const std::vector<std::string>& tokens() const = 0;
  virtual std::vector<double> logits(std::string_view seed) const = 0;
  virtual std::string kind() const = 0;
};

// logit_i = ln(1 + (be32(SHA-256(seed || 0x00 || token_i)[0..4]) mod 255)).
class ToyHashProvider final : public DistributionProvider {
 public:
  explicit ToyHashProvider(std::vector<std::string> tokens);

  const std::vector<std::string>& tokens() const override { return tokens_; }
  std::vector<double> logits(std::string_view seed) const override;
  std::string kind() const override { return "toy-hash"; }

  static double logit(std::string_view seed, std::string_view token);

 private:
  std::vector<std::string> tokens_;
};

// The shipped 40-token table: space, the 26 lowercase letters, the overlapping
// family th / the / these, and ten longer words.
const std::vector<std::string>& default_token_table();

// One token per line, line number = token index. A trailing LF is optional;
// CR is not stripped.
std::vector<std::string> load_token_table(const std::filesystem::path& path);

struct SamplingConfig {
  static constexpr std::size_t kUnbounded = 0;

  double temperature = 0.9;
  std::size_t top_k = kUnbounded;  // 0 keeps every token
  double top_p = 1.0;
  std::uint32_t quant_denominator = 1u << 16;

  void validate(std::size_t vocab_size) const;
};

struct QuantEntry {
  TokenIndex token;
  std::uint32_t frequency;
};

// Integer token frequencies summing to `denominator`, ordered by frequency
// descending then token index ascending. `cumulative[i]` is the sum of the
// frequencies before entry i; a trailing element equal to the denominator
// closes the table.
class QuantizedDistribution {
 public:
  QuantizedDistribution() = default;
  QuantizedDistribution(std::vector<QuantEntry> entries, std::uint32_t denominator);

  const std::vector<QuantEntry>& entries() const { return entries_; }
  const std::vector<std::uint64_t>& cumulative() const { return cumulative_; }
  std::uint32_t denominator() const { return denominator_; }
  std::size_t size() const { return entries_.size(); }

  // Position of `token` in entries(), or -1 when outside the support.
  std::ptrdiff_t position_of(TokenIndex token) const;
  std::uint32_t frequency_of(TokenIndex token) const;

  // Stable little-endian serialization used for determinism checks.
  std::string serialize() const;

 private:
  std::vector<QuantEntry> entries_;
  std::vector<std::uint64_t> cumulative_;
  std::vector<std::int32_t> index_;  // token -> position, -1 outside support
  std::uint32_t denominator_ = 0;
};

// Largest-remainder quantization of probabilities (given in canonical order:
// descending, ties by token index) with each survivor floored at one.
QuantizedDistribution quantize(const std::vector<std::pair<TokenIndex, double>>& probs,
                               std::uint32_t denominator);

// The tuple (tokens, seed space, distributions, seed transition, initial seed).
class ModelFormat {
 public:
  ModelFormat(std::shared_ptr<const DistributionProvider> provider, std::size_t context_len,
              std::string initial_seed);

  static ModelFormat toy(std::size_t context_len = 16, std::string initial_seed = "");

  const std::vector<std::string>& tokens() const { return provider_->tokens(); }
  std::size_t context_len() const { return context_len_; }
  const std::string& initial_seed() const { return initial_seed_; }
  const DistributionProvider& provider() const { return *provider_; }
  std::shared_ptr<const DistributionProvider> provider_ptr() const { return provider_; }

  // Token index for a token string, or -1.
  std::ptrdiff_t find(std::string_view token) const;
  const std::string& token(TokenIndex i) const { return tokens()[i]; }
  std::size_t max_token_length() const { return max_token_len_; }
  // True when every byte of `text` occurs as a single-character token.
  bool covers(std::string_view text) const;

  std::string start_seed() const;
  std::string next_seed(std::string_view seed, std::string_view token) const;
  std::string next_seed(std::string_view seed, TokenIndex token) const;

 private:
  std::shared_ptr<const DistributionProvider> provider_;
  std::size_t context_len_;
  std::string initial_seed_;
  std::unordered_map<std::string, TokenIndex> lookup_;
  std::size_t max_token_len_ = 0;
  bool single_char_[256] = {};
};

QuantizedDistribution next_distribution(const ModelFormat& format, const SamplingConfig& config,
                                        std::string_view seed);

}  // namespace mbfte

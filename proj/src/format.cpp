#include "mbfte/format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "mbfte/crypto.hpp"
#include "mbfte/error.hpp"

namespace mbfte {

ToyHashProvider::ToyHashProvider(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {}

namespace {

double logit_from_digest(const crypto::Sha256Digest& digest) {
  std::uint32_t head = static_cast<std::uint32_t>(digest[0]) << 24 | static_cast<std::uint32_t>(digest[1]) << 16 |
                       static_cast<std::uint32_t>(digest[2]) << 8 | digest[3];
  return std::log(1.0 + static_cast<double>(head % 255));
}

Bytes seed_prefix(std::string_view seed) {
  Bytes input(seed.begin(), seed.end());
  input.push_back(0x00);
  return input;
}

}  // namespace

double ToyHashProvider::logit(std::string_view seed, std::string_view token) {
  Bytes input = seed_prefix(seed);
  input.insert(input.end(), token.begin(), token.end());
  return logit_from_digest(crypto::sha256(input));
}

std::vector<double> ToyHashProvider::logits(std::string_view seed) const {
  auto digests = crypto::sha256_each(seed_prefix(seed), tokens_);
  std::vector<double> out;
  out.reserve(digests.size());
  for (const auto& d : digests) out.push_back(logit_from_digest(d));
  return out;
}

const std::vector<std::string>& default_token_table() {
  static const std::vector<std::string> table = {
      " ", "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m",
      "n", "o", "p", "q", "r", "s", "t", "u", "v", "w", "x", "y", "z",
      "th", "the", "these", "which", "would", "about", "could", "people", "world",
      "after", "young", "know", "going",
  };
  return table;
}

std::vector<std::string> load_token_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open token table " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return tokens;
}

void SamplingConfig::validate(std::size_t vocab_size) const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(Errc::invalid_argument, "temperature must be positive");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(Errc::invalid_argument, "top_p must lie in (0, 1]");
  if (quant_denominator == 0 || (quant_denominator & (quant_denominator - 1)) != 0) {
    throw Error(Errc::invalid_argument, "quant_denominator must be a power of two");
  }
  if (quant_denominator < vocab_size) {
    throw Error(Errc::invalid_argument, "quant_denominator smaller than the token set");
  }
}

QuantizedDistribution::QuantizedDistribution(std::vector<QuantEntry> entries, std::uint32_t denominator)
    : entries_(std::move(entries)), denominator_(denominator) {
  cumulative_.reserve(entries_.size() + 1);
  TokenIndex top = 0;
  for (const auto& e : entries_) top = std::max(top, e.token);
  index_.assign(entries_.empty() ? 0 : top + 1, -1);
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].frequency == 0) throw Error(Errc::invalid_argument, "zero frequency entry");
    cumulative_.push_back(sum);
    sum += entries_[i].frequency;
    if (index_[entries_[i].token] >= 0) throw Error(Errc::invalid_argument, "duplicate token in distribution");
    index_[entries_[i].token] = static_cast<std::int32_t>(i);
  }
  cumulative_.push_back(sum);
  if (sum != denominator_) throw Error(Errc::invalid_argument, "frequencies do not sum to the denominator");
}

std::ptrdiff_t QuantizedDistribution::position_of(TokenIndex token) const {
  return token < index_.size() ? index_[token] : -1;
}

std::uint32_t QuantizedDistribution::frequency_of(TokenIndex token) const {
  auto pos = position_of(token);
  return pos < 0 ? 0 : entries_[static_cast<std::size_t>(pos)].frequency;
}

std::string QuantizedDistribution::serialize() const {
  std::string out;
  auto put32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
  };
  put32(denominator_);
  put32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put32(e.token);
    put32(e.frequency);
  }
  return out;
}

QuantizedDistribution quantize(const std::vector<std::pair<TokenIndex, double>>& probs,
                               std::uint32_t denominator) {
  const std::size_t n = probs.size();
  if (n == 0) throw Error(Errc::invalid_argument, "empty distribution");
  if (n > denominator) throw Error(Errc::invalid_argument, "more survivors than quantization levels");

  // One unit per survivor up front; the rest is split by largest remainder.
  const double spare = static_cast<double>(denominator - n);
  std::vector<std::uint32_t> freq(n);
  std::vector<double> remainder(n);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double ideal = probs[i].second * spare;
    double whole = std::floor(ideal);
    freq[i] = static_cast<std::uint32_t>(whole) + 1;
    remainder[i] = ideal - whole;
    assigned += freq[i];
  }
  if (assigned > denominator) throw Error(Errc::invalid_argument, "probabilities sum above one");
  std::uint64_t leftover = denominator - assigned;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (remainder[x] != remainder[y]) return remainder[x] > remainder[y];
    return probs[x].first < probs[y].first;
  });
  for (std::size_t i = 0; leftover > 0; i = (i + 1) % n, --leftover) ++freq[order[i]];

  std::vector<QuantEntry> entries(n);
  for (std::size_t i = 0; i < n; ++i) entries[i] = {probs[i].first, freq[i]};
  std::sort(entries.begin(), entries.end(), [](const QuantEntry& x, const QuantEntry& y) {
    if (x.frequency != y.frequency) return x.frequency > y.frequency;
    return x.token < y.token;
  });
  return QuantizedDistribution(std::move(entries), denominator);
}

ModelFormat::ModelFormat(std::shared_ptr<const DistributionProvider> provider, std::size_t context_len,
                         std::string initial_seed)
    : provider_(std::move(provider)), context_len_(context_len), initial_seed_(std::move(initial_seed)) {
  if (!provider_) throw Error(Errc::invalid_argument, "null distribution provider");
  if (context_len_ == 0) throw Error(Errc::invalid_argument, "context_len must be positive");
  const auto& toks = provider_->tokens();
  if (toks.empty()) throw Error(Errc::invalid_argument, "empty token set");
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].empty()) throw Error(Errc::invalid_argument, "empty token at index " + std::to_string(i));
    if (!lookup_.emplace(toks[i], static_cast<TokenIndex>(i)).second) {
      throw Error(Errc::invalid_argument, "duplicate token '" + toks[i] + "'");
    }
    max_token_len_ = std::max(max_token_len_, toks[i].size());
    if (toks[i].size() == 1) single_char_[static_cast<unsigned char>(toks[i][0])] = true;
  }
  for (const auto& t : toks) {
    for (unsigned char ch : t) {
      if (!single_char_[ch]) {
        throw Error(Errc::invalid_argument, "token '" + t + "' uses a character with no single-character token");
      }
    }
  }
}

ModelFormat ModelFormat::toy(std::size_t context_len, std::string initial_seed) {
  return ModelFormat(std::make_shared<ToyHashProvider>(default_token_table()), context_len,
                     std::move(initial_seed));
}

std::ptrdiff_t ModelFormat::find(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  return it == lookup_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

bool ModelFormat::covers(std::string_view text) const {
  return std::all_of(text.begin(), text.end(),
                     [this](char ch) { return single_char_[static_cast<unsigned char>(ch)]; });
}

std::string ModelFormat::start_seed() const {
  if (initial_seed_.size() <= context_len_) return initial_seed_;
  return initial_seed_.substr(initial_seed_.size() - context_len_);
}

std::string ModelFormat::next_seed(std::string_view seed, std::string_view token) const {
  if (find(token) < 0) throw Error(Errc::invalid_argument, "token '" + std::string(token) + "' not in the token set");
  std::string joined;
  joined.reserve(seed.size() + token.size());
  joined.append(seed);
  joined.append(token);
  if (joined.size() > context_len_) joined.erase(0, joined.size() - context_len_);
  return joined;
}

std::string ModelFormat::next_seed(std::string_view seed, TokenIndex token) const {
  if (token >= tokens().size()) throw Error(Errc::invalid_argument, "token index out of range");
  return next_seed(seed, tokens()[token]);
}

QuantizedDistribution next_distribution(const ModelFormat& format, const SamplingConfig& config,
                                        std::string_view seed) {
  const std::size_t vocab = format.tokens().size();
  config.validate(vocab);

  std::vector<double> logits = format.provider().logits(seed);
  if (logits.size() != vocab) {
    throw Error(Errc::provider_failure, "provider returned " + std::to_string(logits.size()) +
                                            " logits for " + std::to_string(vocab) + " tokens");
  }

  double peak = -INFINITY;
  for (auto& z : logits) {
    if (!std::isfinite(z)) throw Error(Errc::provider_failure, "non-finite logit");
    z /= config.temperature;
    peak = std::max(peak, z);
  }
  std::vector<std::pair<TokenIndex, double>> probs(vocab);
  for (std::size_t i = 0; i < vocab; ++i) {
    double e = std::exp(logits[i] - peak);
    probs[i] = {static_cast<TokenIndex>(i), e};
  }
  std::sort(probs.begin(), probs.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });

  std::size_t keep = vocab;
  if (config.top_k != SamplingConfig::kUnbounded) keep = std::min(keep, config.top_k);
  probs.resize(keep);

  // Nucleus mass is measured over the top-k survivors, renormalized.
  double kept_mass = 0.0;
  for (const auto& p : probs) kept_mass += p.second;
  if (config.top_p < 1.0) {
    double running = 0.0;
    std::size_t cut = probs.size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
      running += probs[i].second / kept_mass;
      if (running >= config.top_p) {
        cut = i + 1;
        break;
      }
    }
    probs.resize(cut);
    kept_mass = 0.0;
    for (const auto& p : probs) kept_mass += p.second;
  }
  for (auto& p : probs) p.second /= kept_mass;
  return quantize(probs, config.quant_denominator);
}

}  // namespace mbfte

#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mbfte/codec.hpp"
#include "mbfte/crypto.hpp"

namespace mbfte {

struct Post {
  std::uint64_t id = 0;
  std::string author;
  std::string text;
  std::vector<std::string> signals;
  std::uint64_t timestamp = 0;

  bool operator==(const Post&) const = default;
};

// Words of the text that start with '#', in order of appearance.
std::vector<std::string> extract_signals(std::string_view text);

struct PlatformOptions {
  std::size_t limit = 500;       // bytes per post
  std::size_t rate_limit = 0;    // posts per author per window; 0 disables
  std::uint64_t rate_window = 60;  // logical ticks
};

// Append-only post store with a logical clock. Ids start at 1 and increase by
// one per accepted post; the timestamp is the clock tick of the post.
class PlatformStore {
 public:
  explicit PlatformStore(PlatformOptions options = {});
  PlatformStore(const PlatformStore& other);
  PlatformStore& operator=(const PlatformStore&) = delete;

  // Throws Errc::over_limit or Errc::rate_limited.
  std::uint64_t post(const std::string& author, const std::string& text);

  // Posts with since_id < id <= horizon carrying every signal in `filter`.
  std::vector<Post> scrape(const std::vector<std::string>& filter = {}, std::uint64_t since_id = 0,
                           std::optional<std::uint64_t> horizon = std::nullopt) const;

  std::size_t size() const;
  std::uint64_t last_id() const;
  const PlatformOptions& options() const { return options_; }

  // JSON lines: {"id","author","text","signals","timestamp"} per line.
  void save_jsonl(const std::filesystem::path& path) const;
  // A missing file loads as an empty store.
  static PlatformStore load_jsonl(const std::filesystem::path& path, PlatformOptions options = {});

 private:
  PlatformOptions options_;
  mutable std::mutex mu_;
  std::vector<Post> posts_;
  std::uint64_t clock_ = 0;
};

// Samples `tokens` tokens straight from the model.
std::vector<TokenIndex> sample_tokens(const CodecContext& ctx, std::size_t tokens, crypto::RandomSource& rng);

// Posts `count` texts sampled from the model (40 to 120 tokens each),
// deterministically from rng_seed, with optional signals appended.
std::vector<std::uint64_t> generate_background(PlatformStore& store, const CodecContext& ctx, std::size_t count,
                                               std::uint64_t rng_seed,
                                               const std::vector<std::string>& signals = {});

// The texts generate_background would post, without a store.
std::vector<std::string> background_texts(const CodecContext& ctx, std::size_t count, std::uint64_t rng_seed);

}  // namespace mbfte

#include "mbfte/platform.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "mbfte/error.hpp"

namespace mbfte {

using ojson = nlohmann::ordered_json;

std::vector<std::string> extract_signals(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i + 1 && text[i] == '#') out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

PlatformStore::PlatformStore(PlatformOptions options) : options_(options) {}

PlatformStore::PlatformStore(const PlatformStore& other) : options_(other.options_) {
  std::lock_guard lock(other.mu_);
  posts_ = other.posts_;
  clock_ = other.clock_;
}

std::uint64_t PlatformStore::post(const std::string& author, const std::string& text) {
  if (text.size() > options_.limit) {
    throw Error(Errc::over_limit, "post of " + std::to_string(text.size()) + " bytes exceeds the " +
                                      std::to_string(options_.limit) + "-byte limit");
  }
  std::lock_guard lock(mu_);
  const std::uint64_t now = clock_ + 1;
  if (options_.rate_limit > 0) {
    std::size_t recent = 0;
    for (auto it = posts_.rbegin(); it != posts_.rend() && it->timestamp + options_.rate_window > now; ++it) {
      if (it->author == author) ++recent;
    }
    if (recent >= options_.rate_limit) throw Error(Errc::rate_limited, author + " is over the posting rate");
  }
  clock_ = now;
  Post p;
  p.id = posts_.empty() ? 1 : posts_.back().id + 1;
  p.author = author;
  p.text = text;
  p.signals = extract_signals(text);
  p.timestamp = now;
  posts_.push_back(std::move(p));
  return posts_.back().id;
}

std::vector<Post> PlatformStore::scrape(const std::vector<std::string>& filter, std::uint64_t since_id,
                                        std::optional<std::uint64_t> horizon) const {
  std::lock_guard lock(mu_);
  std::vector<Post> out;
  auto first = std::upper_bound(posts_.begin(), posts_.end(), since_id,
                                [](std::uint64_t id, const Post& p) { return id < p.id; });
  for (auto it = first; it != posts_.end(); ++it) {
    if (horizon && it->id > *horizon) break;
    bool all = std::all_of(filter.begin(), filter.end(), [&](const std::string& s) {
      return std::find(it->signals.begin(), it->signals.end(), s) != it->signals.end();
    });
    if (all) out.push_back(*it);
  }
  return out;
}

std::size_t PlatformStore::size() const {
  std::lock_guard lock(mu_);
  return posts_.size();
}

std::uint64_t PlatformStore::last_id() const {
  std::lock_guard lock(mu_);
  return posts_.empty() ? 0 : posts_.back().id;
}

void PlatformStore::save_jsonl(const std::filesystem::path& path) const {
  std::lock_guard lock(mu_);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
    for (const auto& p : posts_) {
      ojson j;
      j["id"] = p.id;
      j["author"] = p.author;
      j["text"] = p.text;
      j["signals"] = p.signals;
      j["timestamp"] = p.timestamp;
      out << j.dump() << '\n';
    }
    if (!out) throw Error(Errc::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io, "cannot replace " + path.string() + ": " + ec.message());
}

PlatformStore PlatformStore::load_jsonl(const std::filesystem::path& path, PlatformOptions options) {
  PlatformStore store(options);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) return store;
    throw Error(Errc::io, "cannot read " + path.string());
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Post p;
    try {
      auto j = ojson::parse(line);
      p.id = j.at("id").get<std::uint64_t>();
      p.author = j.at("author").get<std::string>();
      p.text = j.at("text").get<std::string>();
      p.signals = j.at("signals").get<std::vector<std::string>>();
      p.timestamp = j.at("timestamp").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!store.posts_.empty() && p.id <= store.posts_.back().id) {
      throw Error(Errc::io, path.string() + ":" + std::to_string(lineno) + ": post ids must increase");
    }
    store.clock_ = std::max(store.clock_, p.timestamp);
    store.posts_.push_back(std::move(p));
  }
  return store;
}

std::vector<TokenIndex> sample_tokens(const CodecContext& ctx, std::size_t tokens, crypto::RandomSource& rng) {
  std::vector<TokenIndex> out;
  std::string seed = ctx.format.start_seed();
  for (std::size_t i = 0; i < tokens; ++i) {
    auto dist = next_distribution(ctx.format, ctx.config, seed);
    const std::uint64_t u = rng.uniform(dist.denominator());
    const auto& cum = dist.cumulative();
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    TokenIndex t = dist.entries()[static_cast<std::size_t>(it - cum.begin()) - 1].token;
    out.push_back(t);
    seed = ctx.format.next_seed(seed, t);
  }
  return out;
}

namespace {

std::string background_text(const CodecContext& ctx, crypto::RandomSource& rng, std::size_t max_bytes) {
  const std::size_t n = 40 + rng.uniform(81);
  std::string text;
  for (TokenIndex t : sample_tokens(ctx, n, rng)) {
    const auto& tok = ctx.format.token(t);
    if (text.size() + tok.size() > max_bytes) break;
    text += tok;
  }
  return text;
}

}  // namespace

std::vector<std::string> background_texts(const CodecContext& ctx, std::size_t count, std::uint64_t rng_seed) {
  crypto::SeededRandom rng(rng_seed);
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(background_text(ctx, rng, PlatformOptions{}.limit));
  return out;
}

std::vector<std::uint64_t> generate_background(PlatformStore& store, const CodecContext& ctx, std::size_t count,
                                               std::uint64_t rng_seed, const std::vector<std::string>& signals) {
  crypto::SeededRandom rng(rng_seed);
  const std::size_t overhead = attach_signals("", signals).size();
  if (overhead >= store.options().limit) throw Error(Errc::over_limit, "signals alone exceed the platform limit");
  std::vector<std::uint64_t> ids;
  ids.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string text = attach_signals(background_text(ctx, rng, store.options().limit - overhead), signals);
    ids.push_back(store.post("user" + std::to_string(i % 50), text));
  }
  return ids;
}

}  // namespace mbfte

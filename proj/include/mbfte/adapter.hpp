#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "mbfte/format.hpp"

namespace mbfte {

inline constexpr int kAdapterProtocolVersion = 1;

// Distribution provider backed by an external process speaking JSON lines on
// stdin/stdout. Logits arrive as integers in micro-nats. Requests are
// serialized over the one pipe; responses are cached per seed.
class ExternalAdapterProvider final : public DistributionProvider {
 public:
  // argv[0] is looked up on PATH. Throws Errc::provider_failure when the
  // process cannot be started or the hello exchange fails.
  explicit ExternalAdapterProvider(std::vector<std::string> argv);
  ~ExternalAdapterProvider() override;

  ExternalAdapterProvider(const ExternalAdapterProvider&) = delete;
  ExternalAdapterProvider& operator=(const ExternalAdapterProvider&) = delete;

  const std::vector<std::string>& tokens() const override { return tokens_; }
  std::vector<double> logits(std::string_view seed) const override;
  std::string kind() const override { return "external-adapter"; }

  const std::string& fingerprint() const { return fingerprint_; }
  // The model's native tokenization of `text`.
  std::vector<std::string> native_tokens(std::string_view text) const;
  // Raw micro-nat logits as sent by the adapter.
  std::vector<std::int64_t> raw_logits(std::string_view seed) const;

 private:
  std::string exchange(const std::string& request) const;
  void shutdown_child();

  int to_child_ = -1;
  int from_child_ = -1;
  int pid_ = -1;
  std::vector<std::string> tokens_;
  std::string fingerprint_;
  mutable std::mutex mu_;
  mutable std::string buffer_;
  mutable std::unordered_map<std::string, std::vector<std::int64_t>> cache_;
};

}  // namespace mbfte

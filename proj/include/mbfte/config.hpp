#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbfte/codec.hpp"
#include "mbfte/coder.hpp"
#include "mbfte/format.hpp"

namespace mbfte {

// Flat key=value configuration shared by every CLI command. See README for
// the grammar; unknown and duplicate keys are errors.
struct Config {
  std::string provider = "toy-hash";  // toy-hash | external-adapter
  std::string adapter_command;        // whitespace-separated argv
  std::filesystem::path token_table;  // empty: built-in table
  std::size_t context_len = 16;
  std::string initial_seed;
  SamplingConfig sampling;
  CoderParams coder;

  std::filesystem::path keys = "mbfte.key";
  std::filesystem::path store = "store.jsonl";
  std::vector<std::string> signals;
  unsigned tweaks = 1;
  std::vector<std::size_t> schedule{5, 10, 40};
  std::size_t platform_limit = 500;
  unsigned iv_window = 16;
  unsigned max_fragments = 16;
  std::uint64_t seed = 0;
  bool has_seed = false;

  void validate() const;
};

// Throws Errc::invalid_argument with "<source>:<line>: ..." messages.
Config parse_config(std::string_view text, const std::string& source = "<config>");
Config load_config(const std::filesystem::path& path);

// Parses "max"/"unbounded" as 0; otherwise a non-negative integer.
std::size_t parse_top_k(std::string_view value);
std::vector<std::size_t> parse_schedule(std::string_view value);
// Comma- or space-separated signal list.
std::vector<std::string> parse_signals(std::string_view value);

ModelFormat make_format(const Config& config);
CodecContext make_context(const Config& config);

}  // namespace mbfte

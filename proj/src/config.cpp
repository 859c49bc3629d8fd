#include "mbfte/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "mbfte/adapter.hpp"
#include "mbfte/error.hpp"

namespace mbfte {

namespace {

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(Errc::invalid_argument, where + ": " + what);
}

template <typename T>
T parse_uint(std::string_view v, const std::string& where) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad(where, "expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

double parse_double(std::string_view v, const std::string& where) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad(where, "expected a number, got '" + std::string(v) + "'");
  return out;
}

// Strips one pair of surrounding double quotes and handles \" \\ \n \t.
std::string unquote(std::string_view v, const std::string& where) {
  if (v.size() < 2 || v.front() != '"') return std::string(v);
  if (v.back() != '"') bad(where, "unterminated string");
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    char c = v[i];
    if (c == '\\') {
      if (i + 2 >= v.size()) bad(where, "dangling escape");
      char n = v[++i];
      switch (n) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: bad(where, std::string("unknown escape \\") + n);
      }
    } else if (c == '"') {
      bad(where, "stray quote in string");
    } else {
      out += c;
    }
  }
  return out;
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::size_t parse_top_k(std::string_view value) {
  if (value == "max" || value == "unbounded") return SamplingConfig::kUnbounded;
  return parse_uint<std::size_t>(value, "top_k");
}

std::vector<std::size_t> parse_schedule(std::string_view value) {
  std::vector<std::size_t> out;
  for (const auto& part : split_list(value)) out.push_back(parse_uint<std::size_t>(part, "schedule"));
  if (out.empty()) bad("schedule", "empty schedule");
  return out;
}

std::vector<std::string> parse_signals(std::string_view value) { return split_list(value); }

void Config::validate() const {
  if (provider != "toy-hash" && provider != "external-adapter") bad("provider", "unknown provider '" + provider + "'");
  if (provider == "external-adapter" && trim(adapter_command).empty()) bad("adapter_command", "required for external-adapter");
  if (context_len == 0) bad("context_len", "must be positive");
  if (tweaks == 0 || tweaks > 256) bad("tweaks", "must be in 1..256");
  ReceiverOptions ro;
  ro.schedule = schedule;
  try {
    ro.validate();
  } catch (const Error& e) {
    bad("schedule", e.what());
  }
  if (platform_limit == 0) bad("platform_limit", "must be positive");
  if (iv_window == 0) bad("iv_window", "must be positive");
  if (max_fragments > kMaxFragments) bad("max_fragments", "at most 255");
  for (const auto& s : signals) {
    if (s.find(' ') != std::string::npos) bad("signals", "signal contains a space");
  }
  coder.validate();
  coder.validate_for(sampling);
}

Config parse_config(std::string_view text, const std::string& source) {
  Config cfg;
  using Setter = std::function<void(std::string_view, const std::string&)>;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"provider", [&](auto v, auto& w) { cfg.provider = unquote(v, w); }},
      {"adapter_command", [&](auto v, auto& w) { cfg.adapter_command = unquote(v, w); }},
      {"token_table", [&](auto v, auto& w) { cfg.token_table = unquote(v, w); }},
      {"context_len", [&](auto v, auto& w) { cfg.context_len = parse_uint<std::size_t>(v, w); }},
      {"initial_seed", [&](auto v, auto& w) { cfg.initial_seed = unquote(v, w); }},
      {"temperature", [&](auto v, auto& w) { cfg.sampling.temperature = parse_double(v, w); }},
      {"top_k",
       [&](auto v, auto& w) {
         cfg.sampling.top_k = (v == "max" || v == "unbounded") ? SamplingConfig::kUnbounded
                                                                : parse_uint<std::size_t>(v, w);
       }},
      {"top_p", [&](auto v, auto& w) { cfg.sampling.top_p = parse_double(v, w); }},
      {"quant_denominator", [&](auto v, auto& w) { cfg.sampling.quant_denominator = parse_uint<std::uint32_t>(v, w); }},
      {"coder_r", [&](auto v, auto& w) { cfg.coder.r = parse_uint<unsigned>(v, w); }},
      {"coder_l", [&](auto v, auto& w) { cfg.coder.l = parse_uint<unsigned>(v, w); }},
      {"keys", [&](auto v, auto& w) { cfg.keys = unquote(v, w); }},
      {"store", [&](auto v, auto& w) { cfg.store = unquote(v, w); }},
      {"signals", [&](auto v, auto& w) { cfg.signals = parse_signals(unquote(v, w)); }},
      {"tweaks", [&](auto v, auto& w) { cfg.tweaks = parse_uint<unsigned>(v, w); }},
      {"schedule",
       [&](auto v, auto& w) {
         try {
           cfg.schedule = parse_schedule(unquote(v, w));
         } catch (const Error& e) {
           bad(w, e.what());
         }
       }},
      {"platform_limit", [&](auto v, auto& w) { cfg.platform_limit = parse_uint<std::size_t>(v, w); }},
      {"iv_window", [&](auto v, auto& w) { cfg.iv_window = parse_uint<unsigned>(v, w); }},
      {"max_fragments", [&](auto v, auto& w) { cfg.max_fragments = parse_uint<unsigned>(v, w); }},
      {"seed",
       [&](auto v, auto& w) {
         cfg.seed = parse_uint<std::uint64_t>(v, w);
         cfg.has_seed = true;
       }},
  };

  std::set<std::string, std::less<>> seen;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos) bad(where, "expected key = value");
    auto key = trim(t.substr(0, eq));
    auto value = trim(t.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) bad(where, "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) bad(where, "duplicate key '" + std::string(key) + "'");
    it->second(value, where + ": " + std::string(key));
  }
  cfg.validate();
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Config cfg = parse_config(ss.str(), path.string());
  // Relative paths inside the file are taken relative to the file.
  auto base = path.parent_path();
  auto rebase = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative() && !base.empty()) p = base / p;
  };
  rebase(cfg.token_table);
  rebase(cfg.keys);
  rebase(cfg.store);
  if (!cfg.token_table.empty() && !std::filesystem::exists(cfg.token_table)) {
    bad(path.string() + ": token_table", cfg.token_table.string() + " does not exist");
  }
  return cfg;
}

ModelFormat make_format(const Config& config) {
  std::shared_ptr<const DistributionProvider> provider;
  if (config.provider == "external-adapter") {
    std::istringstream ss(config.adapter_command);
    std::vector<std::string> argv;
    for (std::string a; ss >> a;) argv.push_back(a);
    provider = std::make_shared<ExternalAdapterProvider>(std::move(argv));
  } else {
    auto table = config.token_table.empty() ? default_token_table() : load_token_table(config.token_table);
    provider = std::make_shared<ToyHashProvider>(std::move(table));
  }
  return ModelFormat(std::move(provider), config.context_len, config.initial_seed);
}

CodecContext make_context(const Config& config) { return CodecContext(make_format(config), config.sampling, config.coder); }

}  // namespace mbfte

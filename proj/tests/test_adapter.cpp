#include <doctest.h>

#include <cmath>
#include <functional>
#include <optional>

#include "mbfte/adapter.hpp"
#include "mbfte/codec.hpp"
#include "mbfte/config.hpp"
#include "mbfte/error.hpp"
#include "test_util.hpp"

using namespace mbfte;

namespace {

std::vector<std::string> fake(const std::string& mode = "normal") {
  return {"python3", (testutil::data_dir() / "fake_adapter.py").string(), mode};
}

std::optional<Errc> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("hello exchange and logits match the toy provider") {
  ExternalAdapterProvider ext(fake());
  ToyHashProvider toy(default_token_table());
  CHECK(ext.tokens() == toy.tokens());
  CHECK(ext.fingerprint() == "toy-sha256");
  CHECK(ext.kind() == "external-adapter");
  for (std::string seed : {"", "ab", "the people "}) {
    auto a = ext.logits(seed);
    auto b = toy.logits(seed);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 5e-7);
    CHECK(ext.raw_logits(seed) == ext.raw_logits(seed));
  }
  CHECK(ext.native_tokens("abc") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("adapter-backed codec round trip") {
  CodecContext ctx(ModelFormat(std::make_shared<ExternalAdapterProvider>(fake()), 16, ""));
  crypto::SeededRandom rng(11);
  auto keys = keygen_random(rng);
  const Bytes m = to_bytes("over the pipe");
  auto res = send(m, keys, ctx, SenderOptions{}, rng);
  CHECK(receive(res.posts[0], keys, ctx) == m);
}

TEST_CASE("adapter failures surface as provider_failure") {
  CHECK(code_of([] { ExternalAdapterProvider p({}); }) == Errc::provider_failure);
  CHECK(code_of([] { ExternalAdapterProvider p({"/nonexistent/adapter"}); }) == Errc::provider_failure);
  CHECK(code_of([] { ExternalAdapterProvider p(fake("version")); }) == Errc::provider_failure);
  CHECK(code_of([] { ExternalAdapterProvider p(fake("silent-hello")); }) == Errc::provider_failure);
  {
    ExternalAdapterProvider p(fake("error"));
    CHECK(code_of([&] { p.logits(""); }) == Errc::provider_failure);
    // The process keeps serving after an error reply.
    CHECK(p.native_tokens("x") == std::vector<std::string>{"x"});
  }
  {
    ExternalAdapterProvider p(fake("short"));
    CHECK(code_of([&] { p.logits(""); }) == Errc::provider_failure);
  }
  {
    ExternalAdapterProvider p(fake("exit"));
    CHECK(code_of([&] { p.logits(""); }) == Errc::provider_failure);
  }
}

TEST_CASE("config selects the external adapter") {
  auto cfg = parse_config("provider = external-adapter\nadapter_command = python3 " +
                              (testutil::data_dir() / "fake_adapter.py").string() + "\n",
                          "inline");
  auto f = make_format(cfg);
  CHECK(f.provider().kind() == "external-adapter");
  CHECK(f.tokens().size() == 40);
  CHECK_THROWS_AS(parse_config("provider = external-adapter\n", "inline"), Error);
}

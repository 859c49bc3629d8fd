#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "mbfte/error.hpp"
#include "mbfte/record.hpp"
#include "test_util.hpp"

using namespace mbfte;

namespace {

KeyBundle zero_keys() { return KeyBundle{}; }

KeyBundle random_keys(crypto::RandomSource& rng) { return keygen_random(rng); }

InitialValue random_iv(crypto::RandomSource& rng) {
  InitialValue iv;
  rng.fill(iv.iv);
  return iv;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io;
}

}  // namespace

TEST_CASE("seal golden vectors match the independent oracle") {
  const auto& g = testutil::frozen()["record"];
  auto keys = zero_keys();
  CHECK(to_hex(seal(to_bytes("hi"), keys, InitialValue{})) == g["seal_zero_keys_zero_iv_hi"].get<std::string>());
  CHECK(to_hex(seal(to_bytes("hi"), keys, InitialValue{})) == "3b9ddc97a8113cb418d91d");
  auto iv0 = derive_iv(keys, 0);
  CHECK(to_hex(iv0) == g["derive_iv_zero_k1_counter0"].get<std::string>());
  CHECK(to_hex(seal(to_bytes("hi"), keys, InitialValue{iv0, 3})) == g["seal_zero_keys_counter0_ix3_hi"].get<std::string>());
  auto alpha = keygen_from_phrase("alpha");
  CHECK(to_hex(serialize_keys(alpha)) == g["keyfile_alpha"].get<std::string>());
  CHECK(to_hex(seal(to_bytes("hello"), alpha, InitialValue{derive_iv(alpha, 7), 0})) ==
        g["seal_alpha_counter7_hello"].get<std::string>());
}

TEST_CASE("record lengths") {
  crypto::SeededRandom rng(1);
  auto keys = random_keys(rng);
  auto iv = random_iv(rng);
  Bytes m40(40, 'x');
  CHECK(seal(m40, keys, iv).size() == 49);
  auto empty = seal(Bytes{}, keys, iv);
  CHECK(empty.size() == 9);
  CHECK(open(empty, keys, iv).empty());
  Bytes too_long(kMaxMessageBytes + 1);
  CHECK(code_of([&] { seal(too_long, keys, iv); }) == Errc::message_too_long);
}

TEST_CASE("open inverts seal") {
  crypto::SeededRandom rng(2);
  auto keys = random_keys(rng);
  for (std::size_t len : {std::size_t{0}, std::size_t{1}, std::size_t{17}, std::size_t{1000}, kMaxMessageBytes}) {
    auto iv = random_iv(rng);
    Bytes m(len);
    rng.fill(m);
    CHECK(open(seal(m, keys, iv), keys, iv) == m);
  }
  for (int i = 0; i < 200; ++i) {
    auto iv = random_iv(rng);
    Bytes m(rng.uniform(300));
    rng.fill(m);
    CHECK(open(seal(m, keys, iv), keys, iv) == m);
  }
}

TEST_CASE("tampering fails") {
  crypto::SeededRandom rng(3);
  auto keys = random_keys(rng);
  auto iv = random_iv(rng);
  auto rec = seal(to_bytes("attack at dawn"), keys, iv);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      auto bad = rec;
      bad[i] ^= static_cast<std::uint8_t>(1u << bit);
      CHECK(code_of([&] { open(bad, keys, iv); }) == Errc::bad_tag);
    }
  }
  Bytes truncated(rec.begin(), rec.end() - 1);
  CHECK_THROWS_AS(open(truncated, keys, iv), Error);
  CHECK(code_of([&] { open(Bytes(5), keys, iv); }) == Errc::bad_length);
}

TEST_CASE("a wrong length prefix with a valid tag is bad-length") {
  // Forge a record whose tag verifies but whose prefix overstates the body.
  KeyBundle keys = zero_keys();
  InitialValue iv;
  auto rec = seal(to_bytes("abc"), keys, iv);
  Bytes body(rec.begin(), rec.end() - kTagBytes);
  body[2] ^= 0x01;  // flips the high bit of the decrypted length to 0x0103
  Bytes input = to_bytes("Tag");
  input.insert(input.end(), body.begin(), body.end());
  auto mac = crypto::hmac_sha512(keys.k2, input);
  body.insert(body.end(), mac.begin(), mac.begin() + kTagBytes);
  CHECK(code_of([&] { open(body, keys, iv); }) == Errc::bad_length);
}

TEST_CASE("sentinel is independent of the message and tracks the tweak") {
  crypto::SeededRandom rng(4);
  auto keys = random_keys(rng);
  auto iv = random_iv(rng);
  auto a = seal(to_bytes("one"), keys, iv);
  auto b = seal(to_bytes("a different message"), keys, iv);
  CHECK(std::equal(a.begin(), a.begin() + 2, b.begin()));
  auto svs = expected_sv(keys, iv.iv, 1);
  REQUIRE(svs.size() == 1);
  CHECK(svs[0] == Sv{a[0], a[1]});
  CHECK(expected_sv(keys, iv.iv, 10).size() == 10);
}

TEST_CASE("ten tweaks give distinct sentinels almost always") {
  crypto::SeededRandom rng(5);
  int collisions = 0, unchanged = 0;
  for (int i = 0; i < 1000; ++i) {
    auto keys = random_keys(rng);
    auto iv = random_iv(rng);
    auto svs = expected_sv(keys, iv.iv, 10);
    std::set<Sv> distinct(svs.begin(), svs.end());
    if (distinct.size() != 10) ++collisions;
    if (svs[0] == svs[1]) ++unchanged;
  }
  CHECK(collisions <= 10);
  CHECK(unchanged <= 10);
}

TEST_CASE("random strings never pass the tag") {
  crypto::SeededRandom rng(6);
  auto keys = random_keys(rng);
  auto iv = random_iv(rng);
  int passes = 0;
  for (int i = 0; i < 10000; ++i) {
    Bytes junk(49);
    rng.fill(junk);
    try {
      open(junk, keys, iv);
      ++passes;
    } catch (const Error&) {
    }
  }
  CHECK(passes == 0);
}

TEST_CASE("peek_length reads the prefix from the head") {
  crypto::SeededRandom rng(7);
  auto keys = random_keys(rng);
  auto iv = random_iv(rng);
  Bytes m(321, 'q');
  auto rec = seal(m, keys, iv);
  CHECK(peek_length(ByteView(rec).first(4), keys, iv) == 321);
}

TEST_CASE("fragmentation round trips in any arrival order") {
  crypto::SeededRandom rng(8);
  auto keys = random_keys(rng);
  auto iv = random_iv(rng);
  Bytes m(100);
  rng.fill(m);

  auto one = fragment(Bytes{1, 2, 3}, keys, iv, 8 * 64);
  REQUIRE(one.size() == 1);
  CHECK(reassemble(one, keys, iv) == Bytes{1, 2, 3});

  auto frags = fragment(m, keys, iv, 8 * 40);  // 35-byte chunks of the 102-byte M'
  REQUIRE(frags.size() == 3);
  for (std::size_t i = 0; i < frags.size(); ++i) {
    CHECK(frags[i].size() <= (i + 1 == frags.size() ? 40 + kTagBytes : 40));
    auto sv = fragment_sentinel(keys, iv, static_cast<std::uint8_t>(i));
    CHECK(frags[i][0] == sv[0]);
    CHECK(frags[i][1] == sv[1]);
    auto control = peek_control(frags[i], keys, iv, i, 35);
    CHECK(control.index == i);
    CHECK(control.total == 3);
    CHECK(fragment_record_length(control) == frags[i].size());
  }
  // Arrival order shuffled, then sorted by the control index.
  std::vector<std::size_t> order{2, 0, 1};
  std::vector<std::pair<std::uint8_t, Bytes>> arrived;
  for (auto i : order) arrived.emplace_back(peek_control(frags[i], keys, iv, i, 35).index, frags[i]);
  std::sort(arrived.begin(), arrived.end());
  std::vector<Bytes> sorted;
  for (auto& [idx, f] : arrived) sorted.push_back(f);
  CHECK(reassemble(sorted, keys, iv) == m);

  for (std::size_t i = 0; i < frags.size(); ++i) {
    auto bad = frags;
    bad[i][3] ^= 0x40;
    CHECK(code_of([&] { reassemble(bad, keys, iv); }) == Errc::bad_tag);
  }
  CHECK_THROWS_AS(fragment(m, keys, iv, 8 * 5), Error);
  Bytes huge(255 * 10);
  CHECK(code_of([&] { fragment(huge, keys, iv, 8 * 15); }) == Errc::message_too_long);
}

TEST_CASE("key files") {
  auto dir = testutil::temp_dir("keys");
  auto a = keygen_from_phrase("phrase");
  auto b = keygen_from_phrase("phrase");
  CHECK(a == b);
  crypto::SystemRandom sys;
  CHECK(!(keygen_random(sys) == keygen_random(sys)));
  a.counter = 0x0102030405060708ull;
  a.tweak_range = 7;
  auto bytes = serialize_keys(a);
  CHECK(bytes.size() == kKeyFileBytes);
  CHECK(bytes[96] == 0x01);
  CHECK(bytes[103] == 0x08);
  CHECK(bytes[104] == 7);
  CHECK(parse_keys(bytes) == a);
  save_key_file(dir / "k", a);
  CHECK(std::filesystem::file_size(dir / "k") == 105);
  CHECK(load_key_file(dir / "k") == a);
  CHECK_THROWS_AS(parse_keys(Bytes(104)), Error);
  CHECK(code_of([&] { load_key_file(dir / "missing"); }) == Errc::io);
  std::filesystem::remove_all(dir);
}

#include <doctest.h>

#include <algorithm>
#include <set>

#include "mbfte/codec.hpp"
#include "mbfte/error.hpp"
#include "mbfte/platform.hpp"
#include "test_util.hpp"

using namespace mbfte;

namespace {

CodecContext toy_ctx() { return CodecContext(ModelFormat::toy()); }

std::vector<std::string> spell(const ModelFormat& f, const std::vector<TokenIndex>& t) {
  std::vector<std::string> out;
  for (auto i : t) out.push_back(f.token(i));
  return out;
}

Bytes random_message(crypto::RandomSource& rng, std::size_t max_len) {
  Bytes m(1 + rng.uniform(max_len));
  rng.fill(m);
  return m;
}

bool is_prefix(const std::vector<TokenIndex>& p, const std::vector<TokenIndex>& full) {
  return p.size() <= full.size() && std::equal(p.begin(), p.end(), full.begin());
}

}  // namespace

TEST_CASE("greedy tokenization takes the longest match") {
  auto f = ModelFormat::toy();
  CHECK(spell(f, tokenize_greedy("these", f)) == std::vector<std::string>{"these"});
  CHECK(spell(f, tokenize_greedy("theth", f)) == std::vector<std::string>{"the", "th"});
  for (const auto& t : f.tokens()) {
    if (t.size() == 1) CHECK(tokenize_greedy(t, f).size() == 1);
  }
  CHECK(join_tokens(f, tokenize_greedy("the young people would know", f)) == "the young people would know");
  try {
    tokenize_greedy("hello World", f);
    FAIL("expected untokenizable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::untokenizable);
  }
}

TEST_CASE("signals attach at the end and strip exactly") {
  std::vector<std::string> sigs{"#news", "#daily"};
  auto post = attach_signals("some text", sigs);
  CHECK(post == "some text #news #daily");
  CHECK(strip_signals(post, sigs) == "some text");
  CHECK(strip_signals("some text", sigs) == "some text");
  CHECK(strip_signals("a #news b", {"#news"}) == "a b");
  CHECK(strip_signals("a #newsy", {"#news"}) == "a #newsy");
}

TEST_CASE("a single tweak candidate is deterministic") {
  auto ctx = toy_ctx();
  auto keys = keygen_from_phrase("det");
  crypto::SeededRandom pad1(1), pad2(1);
  auto a = send(to_bytes("hello"), keys, ctx, SenderOptions{}, pad1);
  auto b = send(to_bytes("hello"), keys, ctx, SenderOptions{}, pad2);
  REQUIRE(a.posts.size() == 1);
  CHECK(a.posts == b.posts);
  CHECK(a.candidates.size() == 1);
  CHECK(a.fragments == 0);
}

TEST_CASE("four tweak candidates are distinct and all decode") {
  auto ctx = toy_ctx();
  auto keys = keygen_from_phrase("tweaks");
  crypto::SeededRandom pad(2);
  SenderOptions opts;
  opts.tweak_candidates = 4;
  opts.signals = {"#x"};
  auto res = send(to_bytes("four candidates"), keys, ctx, opts, pad);
  REQUIRE(res.candidates.size() == 4);
  std::set<std::string> texts;
  for (const auto& c : res.candidates) texts.insert(c.text);
  CHECK(texts.size() == 4);
  for (const auto& c : res.candidates) CHECK(to_string(receive(c.text, keys, ctx)) == "four candidates");
  CHECK(res.posts[0] == res.candidates[res.chosen].text + " #x");
  for (const auto& c : res.candidates) CHECK(c.score <= res.candidates[res.chosen].score);
  ReceiverOptions ro;
  ro.signals = {"#x"};
  CHECK(to_string(receive(res.posts[0], keys, ctx, ro)) == "four candidates");
}

TEST_CASE("receive inverts send for random messages") {
  auto ctx = toy_ctx();
  crypto::SeededRandom rng(3);
  auto keys = keygen_random(rng);
  for (int i = 0; i < 200; ++i) {
    keys.counter = static_cast<std::uint64_t>(i);
    Bytes m = random_message(rng, 40);
    auto res = send(m, keys, ctx, SenderOptions{}, rng);
    REQUIRE(res.posts.size() == 1);
    KeyBundle rx = keys;
    rx.counter = keys.counter > 5 ? keys.counter - 5 : 0;  // receiver lags a few messages
    CHECK(receive(res.posts[0], rx, ctx) == m);
  }
}

TEST_CASE("an ambiguous covertext is recovered by the beam") {
  auto ctx = toy_ctx();
  crypto::SeededRandom rng(4);
  auto keys = keygen_random(rng);
  int found = 0;
  for (int i = 0; i < 2000 && found < 5; ++i) {
    keys.counter = static_cast<std::uint64_t>(i);
    Bytes m = random_message(rng, 24);
    auto res = send(m, keys, ctx, SenderOptions{}, rng);
    const auto& cover = res.candidates[res.chosen];
    if (tokenize_greedy(cover.text, ctx.format) == cover.tokens) continue;
    ++found;
    SvIndex index(keys, 16, 0);
    auto got = try_receive(cover.text, ctx, index, ReceiverOptions{});
    REQUIRE(got.has_value());
    REQUIRE(got->message.has_value());
    CHECK(*got->message == m);
    CHECK(got->stats.stage.rfind("beam-", 0) == 0);
  }
  CHECK(found == 5);
}

TEST_CASE("hand-built ambiguity over the t / th / the / these family") {
  // A covertext made only of the family tokens, split where greedy would merge.
  auto ctx = toy_ctx();
  auto keys = keygen_from_phrase("family");
  crypto::SeededRandom rng(5);
  int checked = 0;
  for (int i = 0; i < 3000 && checked < 3; ++i) {
    keys.counter = static_cast<std::uint64_t>(i);
    Bytes m = random_message(rng, 16);
    auto res = send(m, keys, ctx, SenderOptions{}, rng);
    const auto& cover = res.candidates[res.chosen];
    // Look for a sender split such as "th" + "e" that greedy reads as "the".
    bool split = false;
    for (std::size_t k = 0; k + 1 < cover.tokens.size(); ++k) {
      const auto& a = ctx.format.token(cover.tokens[k]);
      const auto& b = ctx.format.token(cover.tokens[k + 1]);
      if ((a == "th" && b == "e") || (a == "t" && b == "h") || (a == "the" && b == "s")) split = true;
    }
    if (!split || tokenize_greedy(cover.text, ctx.format) == cover.tokens) continue;
    ++checked;
    CHECK(receive(cover.text, keys, ctx) == m);
  }
  CHECK(checked == 3);
}

TEST_CASE("unrelated text never yields a plaintext") {
  auto ctx = toy_ctx();
  auto keys = keygen_from_phrase("unrelated");
  auto texts = background_texts(ctx, 100, 6);
  for (const auto& t : texts) {
    try {
      receive(t, keys, ctx);
      FAIL("background text opened");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::no_valid_parse);
    }
  }
}

TEST_CASE("sentinel fast check accepts genuine covertext with the true path alive") {
  auto ctx = toy_ctx();
  crypto::SeededRandom rng(7);
  auto keys = keygen_random(rng);
  SvIndex index(keys, 16, 0);
  std::size_t parsed = 0, total = 0;
  for (int i = 0; i < 100; ++i) {
    KeyBundle tx = keys;
    tx.counter = keys.counter + static_cast<std::uint64_t>(i % 16);
    auto res = send(random_message(rng, 40), tx, ctx, SenderOptions{}, rng);
    const auto& cover = res.candidates[res.chosen];
    auto check = sv_fast_check(cover.text, ctx, index);
    CHECK(check.accepted);
    bool alive = std::any_of(check.survivors.begin(), check.survivors.end(),
                             [&](const ParsePath& p) { return is_prefix(p.tokens, cover.tokens); });
    CHECK(alive);
    parsed += check.tokens_parsed;
    total += cover.tokens.size();
  }
  CHECK(parsed * 4 < total);
  try {
    sv_fast_check("abc DEF", ctx, index);
    FAIL("expected untokenizable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::untokenizable);
  }
}

TEST_CASE("long messages fragment into posts within the limit") {
  auto ctx = toy_ctx();
  auto keys = keygen_from_phrase("fragments");
  crypto::SeededRandom rng(8);
  Bytes m(300);
  rng.fill(m);
  SenderOptions opts;
  opts.signals = {"#f"};
  auto res = send(m, keys, ctx, opts, rng);
  CHECK(res.posts.size() >= 2);
  CHECK(res.fragments == res.posts.size());
  ReceiverOptions ro;
  ro.signals = opts.signals;
  SvIndex index(keys, ro.iv_window, ro.max_fragments);
  std::vector<FragmentPiece> pieces;
  for (const auto& p : res.posts) {
    CHECK(p.size() <= 500);
    auto got = try_receive(strip_signals(p, ro.signals), ctx, index, ro);
    REQUIRE(got.has_value());
    REQUIRE(got->piece.has_value());
    pieces.push_back(*got->piece);
  }
  std::reverse(pieces.begin(), pieces.end());
  auto msgs = reassemble_pieces(pieces, keys, ctx.params);
  REQUIRE(msgs.size() == 1);
  CHECK(msgs[0].message == m);
  pieces.pop_back();
  CHECK(reassemble_pieces(pieces, keys, ctx.params).empty());
}

TEST_CASE("receiver options validation") {
  ReceiverOptions o;
  CHECK_NOTHROW(o.validate());
  o.schedule = {10, 5};
  CHECK_THROWS_AS(o.validate(), Error);
  o.schedule = {};
  CHECK_THROWS_AS(o.validate(), Error);
}

TEST_CASE("token log probabilities follow the distributions") {
  auto ctx = toy_ctx();
  auto toks = tokenize_greedy("the world", ctx.format);
  auto lp = token_log_probs(toks, ctx);
  REQUIRE(lp.size() == toks.size());
  for (double v : lp) CHECK(v < 0.0);
  SamplingConfig k1;
  k1.top_k = 1;
  CodecContext narrow(ModelFormat::toy(), k1);
  auto lp1 = token_log_probs(tokenize_greedy("zzzz", ctx.format), narrow);
  CHECK(std::any_of(lp1.begin(), lp1.end(), [](double v) { return std::isinf(v); }));
}

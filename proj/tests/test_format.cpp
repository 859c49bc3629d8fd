#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mbfte/coder.hpp"
#include "mbfte/error.hpp"
#include "mbfte/format.hpp"
#include "test_util.hpp"

using namespace mbfte;

namespace {

std::vector<std::pair<std::uint32_t, std::uint32_t>> as_pairs(const QuantizedDistribution& d) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  for (const auto& e : d.entries()) out.emplace_back(e.token, e.frequency);
  return out;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> frozen_pairs(const nlohmann::json& j) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  for (const auto& e : j) out.emplace_back(e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>());
  return out;
}

}  // namespace

TEST_CASE("equal logits quantize to equal frequencies") {
  auto f = testutil::fixed_format({"a", "b", "c", "d"}, {0.5, 0.5, 0.5, 0.5});
  SamplingConfig cfg;
  cfg.temperature = 1.0;
  auto d = next_distribution(f, cfg, "");
  REQUIRE(d.size() == 4);
  for (const auto& e : d.entries()) CHECK(e.frequency == 16384);
}

TEST_CASE("top_k = 1 keeps a single token with all the mass") {
  auto f = ModelFormat::toy();
  SamplingConfig cfg;
  cfg.top_k = 1;
  for (std::string seed : {"", "ab", "the world"}) {
    auto d = next_distribution(f, cfg, seed);
    REQUIRE(d.size() == 1);
    CHECK(d.entries()[0].frequency == cfg.quant_denominator);
  }
}

TEST_CASE("toy logits match the hash oracle") {
  const auto& g = testutil::frozen()["toy"];
  CHECK(ToyHashProvider::logit("", "t") == doctest::Approx(4.8283137373023015).epsilon(1e-15));
  CHECK(ToyHashProvider::logit("", "t") == g["logit_empty_t"].get<double>());
  CHECK(ToyHashProvider::logit("ab", "the") == g["logit_ab_the"].get<double>());
}

TEST_CASE("toy distributions match the oracle") {
  const auto& g = testutil::frozen()["toy"];
  auto f = ModelFormat::toy();
  SamplingConfig cfg;
  CHECK(as_pairs(next_distribution(f, cfg, "")) == frozen_pairs(g["dist_empty_seed"]));
  CHECK(as_pairs(next_distribution(f, cfg, "ab")) == frozen_pairs(g["dist_ab_seed"]));
  SamplingConfig k5 = cfg;
  k5.top_k = 5;
  CHECK(as_pairs(next_distribution(f, k5, "")) == frozen_pairs(g["dist_empty_seed_k5"]));
  SamplingConfig p05 = cfg;
  p05.top_p = 0.5;
  CHECK(as_pairs(next_distribution(f, p05, "")) == frozen_pairs(g["dist_empty_seed_p05"]));
}

TEST_CASE("toy logits are deterministic and independent of table order") {
  auto table = default_token_table();
  ToyHashProvider a(table);
  std::reverse(table.begin(), table.end());
  ToyHashProvider b(table);
  auto za = a.logits("seed text");
  auto zb = b.logits("seed text");
  CHECK(za == a.logits("seed text"));
  for (std::size_t i = 0; i < za.size(); ++i) CHECK(za[i] == zb[za.size() - 1 - i]);
}

TEST_CASE("next_seed keeps the last context_len characters") {
  auto toy3 = ModelFormat::toy(3);
  CHECK(toy3.next_seed("abc", "d") == "bcd");
  auto toy8 = ModelFormat::toy(8);
  CHECK(toy8.next_seed("", "the") == "the");
  auto toy4 = ModelFormat::toy(4);
  CHECK(toy4.next_seed("xyzw", "these") == "hese");
  CHECK_THROWS_AS(toy4.next_seed("ab", "qq"), Error);
  CHECK(ModelFormat::toy(4, "longer seed").start_seed() == "seed");
}

TEST_CASE("quantization invariants hold across configs and seeds") {
  auto f = ModelFormat::toy();
  const std::vector<SamplingConfig> configs = [] {
    std::vector<SamplingConfig> v;
    for (double t : {0.3, 0.9, 1.7}) {
      for (std::size_t k : {std::size_t{0}, std::size_t{1}, std::size_t{7}, std::size_t{39}}) {
        for (double p : {0.2, 0.9, 1.0}) {
          SamplingConfig c;
          c.temperature = t;
          c.top_k = k;
          c.top_p = p;
          v.push_back(c);
        }
      }
    }
    return v;
  }();
  crypto::SeededRandom rng(11);
  for (const auto& cfg : configs) {
    for (int i = 0; i < 10; ++i) {
      std::string seed;
      for (int j = 0; j < 6; ++j) seed += static_cast<char>('a' + rng.uniform(26));
      auto d = next_distribution(f, cfg, seed);
      std::uint64_t sum = 0;
      for (std::size_t e = 0; e < d.size(); ++e) {
        CHECK(d.entries()[e].frequency >= 1);
        CHECK(d.cumulative()[e] == sum);
        if (e > 0) {
          const auto& prev = d.entries()[e - 1];
          const auto& cur = d.entries()[e];
          CHECK((prev.frequency > cur.frequency || (prev.frequency == cur.frequency && prev.token < cur.token)));
        }
        sum += d.entries()[e].frequency;
      }
      CHECK(sum == cfg.quant_denominator);
      CHECK(d.cumulative().back() == cfg.quant_denominator);
      if (cfg.top_k == 0 && cfg.top_p == 1.0) CHECK(d.size() == f.tokens().size());
      CHECK(next_distribution(f, cfg, seed).serialize() == d.serialize());
    }
  }
}

TEST_CASE("quantized probabilities stay within |Sigma|/D_q of the real ones") {
  auto f = ModelFormat::toy();
  SamplingConfig cfg;
  auto z = f.provider().logits("xy");
  double peak = *std::max_element(z.begin(), z.end());
  double total = 0;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) total += p[i] = std::exp((z[i] - peak) / cfg.temperature);
  auto d = next_distribution(f, cfg, "xy");
  const double bound = static_cast<double>(z.size()) / cfg.quant_denominator;
  for (const auto& e : d.entries()) {
    CHECK(std::abs(static_cast<double>(e.frequency) / cfg.quant_denominator - p[e.token] / total) <= bound);
  }
}

TEST_CASE("sampling config validation") {
  SamplingConfig c;
  c.temperature = 0;
  CHECK_THROWS_AS(c.validate(40), Error);
  c = {};
  c.top_p = 0;
  CHECK_THROWS_AS(c.validate(40), Error);
  c = {};
  c.top_p = 1.5;
  CHECK_THROWS_AS(c.validate(40), Error);
  c = {};
  c.quant_denominator = 32;
  CHECK_THROWS_AS(c.validate(40), Error);
  c = {};
  CHECK_NOTHROW(c.validate(40));
}

TEST_CASE("model format rejects bad token sets") {
  using P = testutil::FixedProvider;
  CHECK_THROWS_AS(ModelFormat(std::make_shared<P>(std::vector<std::string>{"a", "a"}, std::vector<double>{0, 0}), 4, ""),
                  Error);
  CHECK_THROWS_AS(ModelFormat(std::make_shared<P>(std::vector<std::string>{"a", "ab"}, std::vector<double>{0, 0}), 4, ""),
                  Error);
  CHECK_THROWS_AS(ModelFormat(std::make_shared<P>(std::vector<std::string>{"a", ""}, std::vector<double>{0, 0}), 4, ""),
                  Error);
  CHECK_NOTHROW(ModelFormat(std::make_shared<P>(std::vector<std::string>{"a", "b", "ab"}, std::vector<double>{0, 0, 0}), 4, ""));
}

TEST_CASE("token table files load one token per line") {
  auto dir = testutil::temp_dir("table");
  auto path = dir / "t.txt";
  {
    std::ofstream out(path);
    out << " \na\nb\nab\n";
  }
  auto t = load_token_table(path);
  CHECK(t == std::vector<std::string>{" ", "a", "b", "ab"});
  CHECK_THROWS_AS(load_token_table(dir / "missing.txt"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("default table shape") {
  const auto& t = default_token_table();
  CHECK(t.size() == 40);
  CHECK(t[0] == " ");
  for (std::string s : {"t", "th", "the", "these"}) CHECK(std::find(t.begin(), t.end(), s) != t.end());
}

TEST_CASE("coder sampling converges to the quantized distribution") {
  auto f = ModelFormat::toy();
  SamplingConfig cfg;
  auto d = next_distribution(f, cfg, "q");
  crypto::SeededRandom bits(5);
  std::vector<std::uint64_t> counts(f.tokens().size());
  for (int i = 0; i < 100000; ++i) ++counts[sample_with_coder(d, CoderParams{}, bits)];
  std::uint64_t seen = 0;
  for (auto c : counts) seen += c;
  CHECK(seen == 100000);
  double kl = 0;
  for (const auto& e : d.entries()) {
    double q = static_cast<double>(e.frequency) / d.denominator();
    double p = static_cast<double>(counts[e.token]) / 100000.0;
    if (p > 0) kl += p * std::log(p / q);
  }
  CHECK(kl < 0.01);
}

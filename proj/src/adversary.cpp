#include "mbfte/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "mbfte/error.hpp"
#include "text_model.hpp"

namespace mbfte {

AttackResult decoding_attack(std::string_view text, const CodecContext& ctx) {
  AttackResult result;
  if (text.empty()) return result;
  std::optional<detail::TextModel> model;
  try {
    model.emplace(text, ctx);
  } catch (const Error& e) {
    if (e.code() == Errc::untokenizable) return result;
    throw;
  }
  const std::size_t L = text.size();
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<double> best(L + 1, kNone);
  std::vector<std::pair<std::size_t, TokenIndex>> back(L + 1);
  best[0] = 0.0;
  for (std::size_t p = 0; p < L; ++p) {
    if (best[p] == kNone) continue;
    const auto& dist = model->dist(p);
    for (TokenIndex t : model->matches(p)) {
      std::uint32_t f = dist.frequency_of(t);
      if (f == 0) continue;
      const std::size_t q = p + ctx.format.token(t).size();
      const double score = best[p] + std::log(static_cast<double>(f) / dist.denominator());
      if (score > best[q]) {
        best[q] = score;
        back[q] = {p, t};
      }
    }
  }
  if (best[L] == kNone) return result;
  result.decodable = true;
  for (std::size_t q = L; q > 0; q = back[q].first) result.tokens.push_back(back[q].second);
  std::reverse(result.tokens.begin(), result.tokens.end());

  RangeCoder coder(ctx.params);
  CoderState state = coder.initial_state();
  std::size_t pos = 0;
  for (TokenIndex t : result.tokens) {
    coder.encode_token(state, model->dist(pos), t);
    pos += ctx.format.token(t).size();
  }
  result.recovered = std::move(state.D);
  return result;
}

std::vector<SweepPoint> decodability_sweep(const std::vector<std::string>& corpus, const CodecContext& base,
                                           const std::string& axis, const std::vector<double>& values) {
  if (corpus.empty()) throw Error(Errc::invalid_argument, "sweep corpus is empty");
  if (axis != "top_k" && axis != "top_p") throw Error(Errc::invalid_argument, "sweep axis must be top_k or top_p");
  std::vector<SweepPoint> out;
  for (double v : values) {
    SamplingConfig cfg = base.config;
    if (axis == "top_k") {
      if (v < 0 || v != std::floor(v)) throw Error(Errc::invalid_argument, "top_k values must be whole numbers");
      cfg.top_k = static_cast<std::size_t>(v);
    } else {
      cfg.top_p = v;
    }
    CodecContext ctx(base.format, cfg, base.params);
    std::size_t hits = 0;
    for (const auto& text : corpus) hits += decoding_attack(text, ctx).decodable ? 1 : 0;
    out.push_back({axis, v, static_cast<double>(hits) / static_cast<double>(corpus.size())});
  }
  return out;
}

double bit_entropy(ByteView bytes) {
  if (bytes.empty()) throw Error(Errc::invalid_argument, "entropy of an empty segment");
  std::array<std::size_t, 256> hist{};
  for (auto b : bytes) ++hist[b];
  const double n = static_cast<double>(bytes.size());
  double h = 0.0;
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h / 8.0;
}

namespace {

std::vector<int> unpack_bits(ByteView bytes) {
  std::vector<int> bits;
  bits.reserve(bytes.size() * 8);
  for (auto b : bytes) {
    for (int i = 7; i >= 0; --i) bits.push_back((b >> i) & 1);
  }
  return bits;
}

double igamc(double a, double x) { return x <= 0 ? 1.0 : boost::math::gamma_q(a, x); }

double monobit(const std::vector<int>& e) {
  const double n = static_cast<double>(e.size());
  double s = 0;
  for (int b : e) s += 2 * b - 1;
  return std::erfc(std::fabs(s) / std::sqrt(n) / std::sqrt(2.0));
}

double runs(const std::vector<int>& e) {
  const double n = static_cast<double>(e.size());
  const double pi = std::accumulate(e.begin(), e.end(), 0.0) / n;
  if (std::fabs(pi - 0.5) >= 2.0 / std::sqrt(n)) return 0.0;  // frequency prerequisite fails
  double v = 1;
  for (std::size_t k = 0; k + 1 < e.size(); ++k) v += e[k] != e[k + 1] ? 1 : 0;
  const double num = std::fabs(v - 2.0 * n * pi * (1 - pi));
  const double den = 2.0 * std::sqrt(2.0 * n) * pi * (1 - pi);
  return std::erfc(num / den);
}

double longest_run(const std::vector<int>& e) {
  std::size_t M;
  std::vector<double> pi;
  std::size_t lo;  // run length of the first class (and below)
  if (e.size() >= 6272) {
    M = 128;
    lo = 4;
    pi = {0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124};
  } else {
    M = 8;
    lo = 1;
    pi = {0.2148, 0.3672, 0.2305, 0.1875};
  }
  const std::size_t K = pi.size() - 1;
  const std::size_t N = e.size() / M;
  std::vector<double> v(pi.size(), 0.0);
  for (std::size_t blk = 0; blk < N; ++blk) {
    std::size_t longest = 0, run = 0;
    for (std::size_t i = 0; i < M; ++i) {
      run = e[blk * M + i] ? run + 1 : 0;
      longest = std::max(longest, run);
    }
    std::size_t cls = longest <= lo ? 0 : std::min(K, longest - lo);
    v[cls] += 1;
  }
  double chi2 = 0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const double expect = static_cast<double>(N) * pi[i];
    chi2 += (v[i] - expect) * (v[i] - expect) / expect;
  }
  return igamc(static_cast<double>(K) / 2.0, chi2 / 2.0);
}

// psi^2_m with wrap-around, as in the serial test.
double psi2(const std::vector<int>& e, unsigned m) {
  if (m == 0) return 0.0;
  const std::size_t n = e.size();
  std::vector<double> counts(std::size_t{1} << m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pattern = 0;
    for (unsigned j = 0; j < m; ++j) pattern = pattern << 1 | static_cast<std::size_t>(e[(i + j) % n]);
    counts[pattern] += 1;
  }
  double sum = 0;
  for (double c : counts) sum += c * c;
  return sum * static_cast<double>(counts.size()) / static_cast<double>(n) - static_cast<double>(n);
}

std::pair<double, double> serial(const std::vector<int>& e) {
  const double p2 = psi2(e, 2), p1 = psi2(e, 1), p0 = psi2(e, 0);
  const double d1 = p2 - p1;
  const double d2 = p2 - 2 * p1 + p0;
  return {igamc(1.0, d1 / 2.0), igamc(0.5, d2 / 2.0)};
}

}  // namespace

std::vector<RandomnessTest> randomness_battery(ByteView bytes, double alpha) {
  if (bytes.size() * 8 < 400) {
    throw Error(Errc::too_short, "randomness battery needs at least 400 bits, got " + std::to_string(bytes.size() * 8));
  }
  auto e = unpack_bits(bytes);
  std::vector<RandomnessTest> out;
  auto add = [&](std::string name, double p) { out.push_back({std::move(name), p, p >= alpha}); };
  add("monobit", monobit(e));
  add("runs", runs(e));
  add("longest_run", longest_run(e));
  auto [s1, s2] = serial(e);
  out.push_back({"serial", std::min(s1, s2), s1 >= alpha && s2 >= alpha});
  return out;
}

double kl_divergence(const std::vector<std::uint64_t>& counts, const QuantizedDistribution& dist) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (total <= 0) throw Error(Errc::invalid_argument, "no samples");
  double kl = 0.0;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    if (counts[t] == 0) continue;
    const double p = static_cast<double>(counts[t]) / total;
    const std::uint32_t f = dist.frequency_of(static_cast<TokenIndex>(t));
    if (f == 0) return std::numeric_limits<double>::infinity();
    kl += p * std::log(p * dist.denominator() / f);
  }
  return kl;
}

double rank_score(const std::vector<TokenIndex>& tokens, const CodecContext& ctx) {
  if (tokens.empty()) throw Error(Errc::invalid_argument, "rank of an empty token sequence");
  std::string seed = ctx.format.start_seed();
  double sum = 0.0;
  for (TokenIndex t : tokens) {
    auto z = ctx.format.provider().logits(seed);
    if (t >= z.size()) throw Error(Errc::invalid_argument, "token index out of range");
    std::size_t rank = 1;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (z[i] > z[t] || (z[i] == z[t] && i < t)) ++rank;
    }
    sum += static_cast<double>(rank);
    seed = ctx.format.next_seed(seed, t);
  }
  return sum / static_cast<double>(tokens.size());
}

double rank_detector(std::string_view text, const CodecContext& ctx) {
  return rank_score(tokenize_greedy(text, ctx.format), ctx);
}

double bayes_posterior(double base_rate, double tpr, double fpr) {
  for (double v : {base_rate, tpr, fpr}) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::invalid_argument, "probabilities must lie in [0, 1]");
  }
  const double hit = tpr * base_rate;
  const double denom = hit + fpr * (1.0 - base_rate);
  return denom == 0.0 ? 0.0 : hit / denom;
}

DetectionOutcome outcome_table(std::uint64_t population, double base_rate, double tpr, double fpr) {
  if (population < 1) throw Error(Errc::invalid_argument, "population must be at least 1");
  auto round_half_up = [](double x) { return static_cast<std::uint64_t>(std::floor(x + 0.5)); };
  DetectionOutcome o;
  o.population = population;
  o.base_rate = base_rate;
  o.tpr = tpr;
  o.fpr = fpr;
  o.posterior = bayes_posterior(base_rate, tpr, fpr);
  o.actual_positives = round_half_up(base_rate * static_cast<double>(population));
  o.true_flags = round_half_up(tpr * static_cast<double>(o.actual_positives));
  o.false_alarms = round_half_up(fpr * static_cast<double>(population - o.actual_positives));
  o.flagged = o.true_flags + o.false_alarms;
  o.missed = o.actual_positives - o.true_flags;
  return o;
}

UserSimResult user_detection_sim(const UserSimConfig& cfg, const ScoreSource& scores, double threshold,
                                 crypto::RandomSource& rng) {
  if (!(cfg.q > 0.0 && cfg.q <= 1.0)) throw Error(Errc::invalid_argument, "q must lie in (0, 1]");
  if (cfg.users < 1 || cfg.posts_per_user < 1) throw Error(Errc::invalid_argument, "users and posts must be >= 1");
  if (!(cfg.mbfte_user_fraction >= 0.0 && cfg.mbfte_user_fraction <= 1.0) ||
      !(cfg.per_user_base_rate >= 0.0 && cfg.per_user_base_rate <= 1.0)) {
    throw Error(Errc::invalid_argument, "fractions must lie in [0, 1]");
  }
  const auto covert_users = static_cast<std::size_t>(std::floor(cfg.mbfte_user_fraction * cfg.users + 0.5));
  const auto covert_posts = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(cfg.per_user_base_rate * cfg.posts_per_user + 0.5)), 1,
      cfg.posts_per_user);
  const auto top = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(cfg.q * static_cast<double>(cfg.posts_per_user) - 1e-9)), 1,
      cfg.posts_per_user);

  UserSimResult r;
  std::vector<double> s(cfg.posts_per_user);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    const bool covert_user = u < covert_users;
    for (std::size_t i = 0; i < cfg.posts_per_user; ++i) s[i] = scores(covert_user && i < covert_posts, rng);
    std::partial_sort(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(top), s.end(), std::greater<>());
    const double agg = std::accumulate(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(top), 0.0) /
                       static_cast<double>(top);
    const bool flagged = agg >= threshold;
    if (covert_user) {
      flagged ? ++r.tp : ++r.fn;
    } else {
      flagged ? ++r.fp : ++r.tn;
    }
  }
  r.precision = r.tp + r.fp == 0 ? 0.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  return r;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(Errc::invalid_argument, "quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(Errc::invalid_argument, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double filter_threshold(const std::vector<double>& calibration, double reject_fraction) {
  if (!(reject_fraction >= 0.0 && reject_fraction < 1.0)) {
    throw Error(Errc::invalid_argument, "reject fraction must lie in [0, 1)");
  }
  if (reject_fraction == 0.0) return std::numeric_limits<double>::infinity();
  return quantile(calibration, 1.0 - reject_fraction);
}

FilterResult sender_filter(const std::function<SendResult(std::size_t attempt)>& generate,
                           const std::function<double(const SendResult&)>& detector, double threshold,
                           std::size_t max_attempts) {
  FilterResult out;
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    SendResult candidate = generate(attempt);
    ++out.attempts;
    double score = detector(candidate);
    if (score < threshold) {
      out.accepted = std::move(candidate);
      out.score = score;
      return out;
    }
    ++out.discarded;
  }
  throw Error(Errc::exhausted_retries, "no candidate scored below the threshold in " +
                                           std::to_string(max_attempts) + " attempts");
}

}  // namespace mbfte

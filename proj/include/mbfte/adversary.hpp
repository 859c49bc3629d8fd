#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mbfte/codec.hpp"
#include "mbfte/crypto.hpp"

namespace mbfte {

// ---- decoding attack -------------------------------------------------------

struct AttackResult {
  bool decodable = false;
  std::vector<TokenIndex> tokens;  // most probable surviving parse
  Symbols recovered;               // encoder output for that parse
};

// Decodable iff some complete tokenization keeps every token inside the
// restricted support of its step. Untokenizable text is not decodable.
AttackResult decoding_attack(std::string_view text, const CodecContext& ctx);

struct SweepPoint {
  std::string axis;  // "top_k" or "top_p"
  double value = 0.0;
  double decodable_fraction = 0.0;
};

// For each value, the fraction of `corpus` that is decodable with `base`'s
// sampling config modified on the given axis. A top_k value of 0 means
// unbounded.
std::vector<SweepPoint> decodability_sweep(const std::vector<std::string>& corpus, const CodecContext& base,
                                           const std::string& axis, const std::vector<double>& values);

// ---- randomness of recovered bits -----------------------------------------

// Shannon entropy of the byte histogram over 8 bits, in [0, 1].
double bit_entropy(ByteView bytes);

struct RandomnessTest {
  std::string name;
  double p_value = 0.0;
  bool pass = false;
};

// Monobit frequency, runs, longest run of ones, and serial (m = 2) tests over
// the bits of `bytes`, most significant bit first, at alpha = 0.01. Throws
// Errc::too_short below 400 bits.
std::vector<RandomnessTest> randomness_battery(ByteView bytes, double alpha = 0.01);

// KL(empirical || quantized) in nats, from token counts.
double kl_divergence(const std::vector<std::uint64_t>& counts, const QuantizedDistribution& dist);

// ---- likelihood detector ---------------------------------------------------

// Mean rank (1 = highest logit, ties by token index) of each token under the
// raw model ordering at its step.
double rank_score(const std::vector<TokenIndex>& tokens, const CodecContext& ctx);
// rank_score of the greedy tokenization. Throws Errc::untokenizable.
double rank_detector(std::string_view text, const CodecContext& ctx);

// ---- detection economics ---------------------------------------------------

double bayes_posterior(double base_rate, double tpr, double fpr);

struct DetectionOutcome {
  std::uint64_t population = 0;
  double base_rate = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::uint64_t actual_positives = 0;
  std::uint64_t flagged = 0;
  std::uint64_t false_alarms = 0;
  std::uint64_t missed = 0;
  std::uint64_t true_flags = 0;
  double posterior = 0.0;
};

// Counts rounded to nearest, ties up.
DetectionOutcome outcome_table(std::uint64_t population, double base_rate, double tpr, double fpr);

struct UserSimConfig {
  std::size_t users = 10000;
  double mbfte_user_fraction = 0.01;
  std::size_t posts_per_user = 10;
  double per_user_base_rate = 0.1;  // share of an MBFTE user's posts that are covert
  double q = 0.1;                   // top-q share of a user's scores averaged
};

struct UserSimResult {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;  // 0 when nothing is flagged
};

// Score for one message; `covert` says whether it is MBFTE.
using ScoreSource = std::function<double(bool covert, crypto::RandomSource& rng)>;

// Users are flagged when the mean of their top ceil(q * posts) scores reaches
// the threshold. MBFTE users post round(posts * base_rate) covert messages,
// at least one.
UserSimResult user_detection_sim(const UserSimConfig& cfg, const ScoreSource& scores, double threshold,
                                 crypto::RandomSource& rng);

// Linear-interpolated quantile of `values` at q in [0, 1].
double quantile(std::vector<double> values, double q);

struct FilterResult {
  SendResult accepted;
  double score = 0.0;
  std::size_t attempts = 0;
  std::size_t discarded = 0;
};

// Draws candidates from `generate` (attempt number 0, 1, ...) until one scores
// strictly below `threshold`. Throws Errc::exhausted_retries after
// max_attempts.
FilterResult sender_filter(const std::function<SendResult(std::size_t attempt)>& generate,
                           const std::function<double(const SendResult&)>& detector, double threshold,
                           std::size_t max_attempts = 100);

// Threshold that discards the top reject_fraction of calibration scores; +inf
// when reject_fraction is 0.
double filter_threshold(const std::vector<double>& calibration, double reject_fraction);

}  // namespace mbfte

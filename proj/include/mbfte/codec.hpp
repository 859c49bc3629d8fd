#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mbfte/bytes.hpp"
#include "mbfte/coder.hpp"
#include "mbfte/crypto.hpp"
#include "mbfte/format.hpp"
#include "mbfte/record.hpp"

namespace mbfte {

// Everything both parties must agree on besides the keys.
struct CodecContext {
  ModelFormat format;
  SamplingConfig config;
  CoderParams params;

  explicit CodecContext(ModelFormat f, SamplingConfig c = {}, CoderParams p = {})
      : format(std::move(f)), config(c), params(p) {
    params.validate_for(config);
    config.validate(format.tokens().size());
  }
};

std::string join_tokens(const ModelFormat& format, const std::vector<TokenIndex>& tokens);

// Left-to-right longest match. Throws Errc::untokenizable.
std::vector<TokenIndex> tokenize_greedy(std::string_view text, const ModelFormat& format);

// Per-token ln(f/D_q) along a token path; -inf where a token leaves support.
std::vector<double> token_log_probs(const std::vector<TokenIndex>& tokens, const CodecContext& ctx);

// Appends " sig1 sig2 ..." to the text.
std::string attach_signals(std::string text, const std::vector<std::string>& signals);
// Removes the exact " sig1 sig2 ..." suffix when present, otherwise every
// whole-word " sig" occurrence of each declared signal.
std::string strip_signals(std::string text, const std::vector<std::string>& signals);

struct Covertext {
  std::string text;  // without signals
  std::vector<TokenIndex> tokens;
  std::uint8_t ix = 0;
  double log_prob = 0.0;
  double score = 0.0;
};

// Higher is better. The default is mean per-token log-probability.
using CandidateScorer = std::function<double(const Covertext&)>;

struct SenderOptions {
  std::vector<std::string> signals;
  unsigned tweak_candidates = 1;
  std::size_t platform_limit = 500;
  CandidateScorer scorer;
};

struct SendResult {
  std::vector<std::string> posts;      // ready to publish, signals attached
  std::vector<Covertext> candidates;   // every tweak candidate generated (single-record sends)
  std::size_t chosen = 0;
  std::size_t fragments = 0;           // 0 for a single record
  std::uint64_t counter = 0;
};

// Arithmetic-decodes a byte record into a covertext.
Covertext covertext_for(ByteView record, const CodecContext& ctx, crypto::RandomSource& pad);

// Seals M under keys.counter for each candidate tweak and returns the best
// covertext. Falls back to fragmentation when the post would exceed the
// platform limit. Does not advance keys.counter.
SendResult send(ByteView M, const KeyBundle& keys, const CodecContext& ctx, const SenderOptions& options,
                crypto::RandomSource& pad);

struct KeyCandidate {
  std::uint64_t counter = 0;
  InitialValue iv;
  int fragment = -1;  // -1 for a whole record
};

// Every sentinel the receiver is willing to accept: counters
// [keys.counter, keys.counter + iv_window) crossed with all tweaks, for whole
// records and for fragment indices below max_fragments.
class SvIndex {
 public:
  SvIndex(const KeyBundle& keys, unsigned iv_window, unsigned max_fragments);

  const KeyBundle& keys() const { return keys_; }
  const std::vector<KeyCandidate>& candidates() const { return candidates_; }
  // Candidate ids whose SV equals (s0, s1).
  const std::vector<std::uint32_t>& lookup(std::uint32_t s0, std::uint32_t s1) const;
  std::size_t distinct_values() const { return distinct_; }

 private:
  KeyBundle keys_;
  std::vector<KeyCandidate> candidates_;
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> by_value_;
  std::size_t distinct_ = 0;
};

struct ReceiverOptions {
  std::vector<std::size_t> schedule{5, 10, 40};
  unsigned iv_window = 16;
  unsigned max_fragments = 16;
  std::vector<std::string> signals;

  void validate() const;
};

// One candidate tokenization being extended left to right.
struct ParsePath {
  std::vector<TokenIndex> tokens;
  double log_prob = 0.0;
  CoderState state;
  std::size_t position = 0;
};

struct SvCheckResult {
  bool accepted = false;
  std::vector<ParsePath> survivors;
  std::size_t checked_prefixes = 0;  // distinct determined 2-symbol heads compared
  std::size_t tokens_parsed = 0;
};

// Parses only until every live path has two determined symbols and compares
// those against the index. Throws Errc::untokenizable for characters outside
// the token alphabet.
SvCheckResult sv_fast_check(std::string_view text, const CodecContext& ctx, const SvIndex& index,
                            std::size_t beam_width = 40);

struct FragmentPiece {
  KeyCandidate key;
  std::vector<Symbols> forms;  // candidate symbol strings, best first
};

struct ReceiveStats {
  std::string stage;  // "greedy" or "beam-N"
  std::size_t paths_expanded = 0;
  std::size_t trial_opens = 0;
};

struct Received {
  std::optional<Bytes> message;
  std::optional<FragmentPiece> piece;
  KeyCandidate key;
  ReceiveStats stats;
};

// Runs the greedy tokenization then the beam ladder over already
// signal-stripped text. Returns nullopt when nothing opens.
std::optional<Received> try_receive(std::string_view text, const CodecContext& ctx, const SvIndex& index,
                                    const ReceiverOptions& options);

// Whole-record receive of a post (signals stripped here). Throws
// Errc::untokenizable or Errc::no_valid_parse.
Bytes receive(std::string_view post, const KeyBundle& keys, const CodecContext& ctx,
              const ReceiverOptions& options = {});

struct ReassembledMessage {
  Bytes message;
  KeyCandidate key;
  std::vector<std::size_t> sources;  // indexes into the input pieces, by fragment index
};

// Groups pieces by (counter, tweak), orders them by fragment index, and
// returns every set whose tag verifies.
std::vector<ReassembledMessage> reassemble_pieces(const std::vector<FragmentPiece>& pieces, const KeyBundle& keys,
                                                  const CoderParams& params, std::size_t max_combinations = 4096);

}  // namespace mbfte

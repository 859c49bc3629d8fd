#include "mbfte/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "mbfte/error.hpp"
#include "text_model.hpp"

namespace mbfte {

using detail::TextModel;

namespace {

void require_byte_symbols(const CodecContext& ctx) {
  if (ctx.params.r != 8) throw Error(Errc::invalid_argument, "records are byte strings, so the coder needs r = 8");
}

bool path_less(const ParsePath& x, const ParsePath& y) {
  if (x.log_prob != y.log_prob) return x.log_prob > y.log_prob;
  return x.tokens < y.tokens;
}

void keep_best(std::vector<ParsePath>& paths, std::size_t n) {
  if (paths.size() > n) {
    std::partial_sort(paths.begin(), paths.begin() + static_cast<std::ptrdiff_t>(n), paths.end(), path_less);
    paths.resize(n);
  } else {
    std::sort(paths.begin(), paths.end(), path_less);
  }
}

// Up to two readings of a path's symbols: as emitted, and with the pending
// carry applied.
std::vector<Symbols> readings(const CoderState& st, unsigned r) {
  std::vector<Symbols> out{st.D};
  if (st.w > 0) out.push_back(alternate_encoding(st.D, st.w, r));
  return out;
}

std::size_t max_symbols_per_token(const CodecContext& ctx) {
  unsigned bits = 0;
  while ((std::uint64_t{1} << bits) < ctx.config.quant_denominator) ++bits;
  return bits / ctx.params.r + 1;
}

Bytes as_bytes(const Symbols& s, std::size_t n) {
  Bytes out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint8_t>(s[i]);
  return out;
}

// Whether a path can still be a valid covertext, judged from its record
// head: SV membership, then the decrypted length or control block.
class HeadJudge {
 public:
  HeadJudge(const SvIndex& index, const CodecContext& ctx)
      : index_(index), ctx_(ctx), per_token_(max_symbols_per_token(ctx)) {}

  // Expected record length for candidate `id` from the given reading, 0 when
  // it cannot be known yet or at all, SIZE_MAX when the head is inconsistent.
  std::size_t expected_length(std::uint32_t id, const Symbols& form) {
    const KeyCandidate& cand = index_.candidates()[id];
    if (cand.fragment > 0) return 0;
    const std::size_t need = cand.fragment < 0 ? kSvBytes + kLengthBytes : kSvBytes + kControlBytes;
    if (form.size() < need) return 0;
    std::uint64_t key = static_cast<std::uint64_t>(id) << 24 | form[2] << 16 | form[3] << 8 |
                        (cand.fragment < 0 ? 0 : form[4]);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::size_t len;
    Bytes head = as_bytes(form, need);
    if (cand.fragment < 0) {
      len = peek_length(head, index_.keys(), cand.iv) + kRecordOverhead;
    } else {
      FragmentControl ctl = peek_control(head, index_.keys(), cand.iv, 0, 0);
      if (ctl.index != 0 || ctl.total == 0 || ctl.payload_len == 0) {
        len = std::numeric_limits<std::size_t>::max();
      } else {
        len = fragment_record_length(ctl);
      }
    }
    cache_.emplace(key, len);
    return len;
  }

  bool viable(const ParsePath& path, std::size_t text_len) {
    const bool final = path.position == text_len;
    const std::size_t produced = path.state.D.size();
    const std::size_t reach = produced + per_token_ * (text_len - path.position);
    for (const auto& form : readings(path.state, ctx_.params.r)) {
      if (form.size() < kSvBytes) {
        if (!final) return true;
        continue;
      }
      for (std::uint32_t id : index_.lookup(form[0], form[1])) {
        std::size_t R = expected_length(id, form);
        if (R == std::numeric_limits<std::size_t>::max()) continue;
        if (R == 0) return true;
        if (final ? produced >= R : (produced < R && R <= reach)) return true;
      }
    }
    return false;
  }

 private:
  const SvIndex& index_;
  const CodecContext& ctx_;
  std::size_t per_token_;
  std::unordered_map<std::uint64_t, std::size_t> cache_;
};

struct TrialOutcome {
  std::optional<Bytes> message;
  KeyCandidate key;
  std::vector<std::pair<KeyCandidate, Symbols>> pieces;
  std::size_t opens = 0;
};

// Trial decryption of a finished path: the peeked length first, then direct,
// alternate, and up to l-1 truncated readings.
void trial_open(const ParsePath& path, const CodecContext& ctx, const SvIndex& index, HeadJudge& judge,
                TrialOutcome& out) {
  const auto forms = readings(path.state, ctx.params.r);
  for (const auto& form : forms) {
    if (form.size() < kSvBytes) continue;
    for (std::uint32_t id : index.lookup(form[0], form[1])) {
      const KeyCandidate& cand = index.candidates()[id];
      std::size_t R = judge.expected_length(id, form);
      if (cand.fragment >= 0) {
        if (R == std::numeric_limits<std::size_t>::max()) continue;
        if (R != 0 && form.size() < R) continue;
        out.pieces.emplace_back(cand, Symbols(form.begin(), form.begin() + static_cast<std::ptrdiff_t>(R == 0 ? form.size() : R)));
        continue;
      }
      std::vector<std::size_t> lengths;
      if (R != 0 && R <= form.size()) lengths.push_back(R);
      for (std::size_t t = 0; t < ctx.params.l && t < form.size(); ++t) {
        std::size_t n = form.size() - t;
        if (n >= kRecordOverhead && std::find(lengths.begin(), lengths.end(), n) == lengths.end()) {
          lengths.push_back(n);
        }
      }
      for (std::size_t n : lengths) {
        ++out.opens;
        try {
          out.message = open(as_bytes(form, n), index.keys(), cand.iv);
          out.key = cand;
          return;
        } catch (const Error&) {
        }
      }
    }
  }
}

bool extend(const ParsePath& path, TokenIndex token, const QuantizedDistribution& dist, const RangeCoder& coder,
            const ModelFormat& format, ParsePath& next) {
  auto pos = dist.position_of(token);
  if (pos < 0) return false;
  next = path;
  coder.adjust(next.state, dist, static_cast<std::size_t>(pos));
  coder.rescale(next.state, nullptr);
  next.tokens.push_back(token);
  next.log_prob += std::log(static_cast<double>(dist.entries()[static_cast<std::size_t>(pos)].frequency) /
                            dist.denominator());
  next.position += format.token(token).size();
  return true;
}

ParsePath root_path(const RangeCoder& coder) {
  ParsePath root;
  root.state = coder.initial_state();
  return root;
}

// Follows one fixed token sequence; nullopt when it leaves support or fails
// the head checks.
std::optional<ParsePath> follow(const std::vector<TokenIndex>& tokens, TextModel& model, const RangeCoder& coder,
                                const CodecContext& ctx, HeadJudge& judge, std::size_t& expanded) {
  ParsePath path = root_path(coder);
  for (TokenIndex t : tokens) {
    ParsePath next;
    if (!extend(path, t, model.dist(path.position), coder, ctx.format, next)) return std::nullopt;
    ++expanded;
    if (!judge.viable(next, model.size())) return std::nullopt;
    path = std::move(next);
  }
  return path;
}

// Position-synchronous beam: the best `width` paths are kept at each text
// offset before they are extended.
std::vector<ParsePath> beam_parse(TextModel& model, const RangeCoder& coder, const CodecContext& ctx,
                                  HeadJudge& judge, std::size_t width, std::size_t& expanded) {
  const std::size_t L = model.size();
  std::vector<std::vector<ParsePath>> buckets(L + 1);
  buckets[0].push_back(root_path(coder));
  for (std::size_t p = 0; p < L; ++p) {
    auto& here = buckets[p];
    if (here.empty()) continue;
    keep_best(here, width);
    const auto& dist = model.dist(p);
    for (const auto& path : here) {
      for (TokenIndex t : model.matches(p)) {
        ParsePath next;
        if (!extend(path, t, dist, coder, ctx.format, next)) continue;
        ++expanded;
        if (!judge.viable(next, L)) continue;
        buckets[next.position].push_back(std::move(next));
      }
    }
    here.clear();
    here.shrink_to_fit();
  }
  keep_best(buckets[L], width);
  return std::move(buckets[L]);
}

}  // namespace

std::string join_tokens(const ModelFormat& format, const std::vector<TokenIndex>& tokens) {
  std::string out;
  for (TokenIndex t : tokens) out += format.token(t);
  return out;
}

std::vector<TokenIndex> tokenize_greedy(std::string_view text, const ModelFormat& format) {
  std::vector<TokenIndex> out;
  std::size_t p = 0;
  const std::size_t longest = format.max_token_length();
  while (p < text.size()) {
    bool found = false;
    for (std::size_t len = std::min(longest, text.size() - p); len >= 1; --len) {
      auto id = format.find(text.substr(p, len));
      if (id >= 0) {
        out.push_back(static_cast<TokenIndex>(id));
        p += len;
        found = true;
        break;
      }
    }
    if (!found) {
      throw Error(Errc::untokenizable, "character at offset " + std::to_string(p) + " is outside the token alphabet");
    }
  }
  return out;
}

std::vector<double> token_log_probs(const std::vector<TokenIndex>& tokens, const CodecContext& ctx) {
  std::vector<double> out;
  out.reserve(tokens.size());
  std::string seed = ctx.format.start_seed();
  for (TokenIndex t : tokens) {
    auto dist = next_distribution(ctx.format, ctx.config, seed);
    std::uint32_t f = dist.frequency_of(t);
    out.push_back(f == 0 ? -std::numeric_limits<double>::infinity()
                         : std::log(static_cast<double>(f) / dist.denominator()));
    seed = ctx.format.next_seed(seed, t);
  }
  return out;
}

std::string attach_signals(std::string text, const std::vector<std::string>& signals) {
  for (const auto& s : signals) {
    text.push_back(' ');
    text += s;
  }
  return text;
}

std::string strip_signals(std::string text, const std::vector<std::string>& signals) {
  if (signals.empty()) return text;
  std::string suffix = attach_signals("", signals);
  if (text.size() >= suffix.size() && text.compare(text.size() - suffix.size(), suffix.size(), suffix) == 0) {
    text.erase(text.size() - suffix.size());
    return text;
  }
  for (const auto& s : signals) {
    std::string needle = " " + s;
    for (auto at = text.find(needle); at != std::string::npos; at = text.find(needle, at)) {
      const auto end = at + needle.size();
      if (end == text.size() || text[end] == ' ') {
        text.erase(at, needle.size());
      } else {
        at = end;
      }
    }
  }
  return text;
}

Covertext covertext_for(ByteView record, const CodecContext& ctx, crypto::RandomSource& pad) {
  require_byte_symbols(ctx);
  auto d = decode(record, ctx.format, ctx.config, ctx.params, pad);
  Covertext out;
  out.tokens = std::move(d.tokens);
  out.text = join_tokens(ctx.format, out.tokens);
  out.log_prob = d.log_prob;
  out.score = out.tokens.empty() ? 0.0 : d.log_prob / static_cast<double>(out.tokens.size());
  return out;
}

SendResult send(ByteView M, const KeyBundle& keys, const CodecContext& ctx, const SenderOptions& options,
                crypto::RandomSource& pad) {
  require_byte_symbols(ctx);
  if (options.tweak_candidates < 1 || options.tweak_candidates > keys.tweak_range) {
    throw Error(Errc::invalid_argument, "tweak candidates must be in [1, tweak_range]");
  }
  SendResult result;
  result.counter = keys.counter;
  const Iv16 iv = derive_iv(keys, keys.counter);

  for (unsigned ix = 0; ix < options.tweak_candidates; ++ix) {
    InitialValue v{iv, static_cast<std::uint8_t>(ix)};
    Covertext c = covertext_for(seal(M, keys, v), ctx, pad);
    c.ix = static_cast<std::uint8_t>(ix);
    if (options.scorer) c.score = options.scorer(c);
    result.candidates.push_back(std::move(c));
  }
  for (std::size_t i = 1; i < result.candidates.size(); ++i) {
    if (result.candidates[i].score > result.candidates[result.chosen].score) result.chosen = i;
  }
  const Covertext& best = result.candidates[result.chosen];
  std::string post = attach_signals(best.text, options.signals);
  if (post.size() <= options.platform_limit) {
    result.posts.push_back(std::move(post));
    return result;
  }

  // Too long for one post: split the message and shrink the fragments until
  // every covertext fits.
  const std::size_t overhead = attach_signals("", options.signals).size();
  if (overhead >= options.platform_limit) throw Error(Errc::over_limit, "signals alone exceed the platform limit");
  const std::size_t budget = options.platform_limit - overhead;
  const double chars_per_byte =
      static_cast<double>(best.text.size()) / static_cast<double>(M.size() + kRecordOverhead);
  const std::size_t min_bits = 8 * (kSvBytes + kControlBytes + 1);
  std::size_t bits = std::max<std::size_t>(
      min_bits, static_cast<std::size_t>(8.0 * 0.85 * static_cast<double>(budget) / chars_per_byte));
  InitialValue v{iv, best.ix};
  for (;;) {
    auto records = fragment(M, keys, v, bits);
    std::vector<std::string> posts;
    bool fits = true;
    for (const auto& rec : records) {
      std::string p = attach_signals(covertext_for(rec, ctx, pad).text, options.signals);
      if (p.size() > options.platform_limit) {
        fits = false;
        break;
      }
      posts.push_back(std::move(p));
    }
    if (fits) {
      result.posts = std::move(posts);
      result.fragments = records.size();
      return result;
    }
    if (bits == min_bits) throw Error(Errc::over_limit, "cannot fit even a minimal fragment under the platform limit");
    bits = std::max(min_bits, bits * 85 / 100);
  }
}

SvIndex::SvIndex(const KeyBundle& keys, unsigned iv_window, unsigned max_fragments) : keys_(keys) {
  if (iv_window == 0) throw Error(Errc::invalid_argument, "iv window must be at least 1");
  if (max_fragments > kMaxFragments) throw Error(Errc::invalid_argument, "max_fragments above 255");
  std::set<std::uint32_t> values;
  for (unsigned w = 0; w < iv_window; ++w) {
    const std::uint64_t counter = keys.counter + w;
    const Iv16 iv = derive_iv(keys, counter);
    for (unsigned ix = 0; ix < keys.tweak_range; ++ix) {
      InitialValue v{iv, static_cast<std::uint8_t>(ix)};
      for (int frag = -1; frag < static_cast<int>(max_fragments); ++frag) {
        Sv sv = frag < 0 ? sentinel(keys, v) : fragment_sentinel(keys, v, static_cast<std::uint8_t>(frag));
        std::uint32_t key = static_cast<std::uint32_t>(sv[0]) << 8 | sv[1];
        by_value_[key].push_back(static_cast<std::uint32_t>(candidates_.size()));
        candidates_.push_back(KeyCandidate{counter, v, frag});
        values.insert(key);
      }
    }
  }
  distinct_ = values.size();
}

const std::vector<std::uint32_t>& SvIndex::lookup(std::uint32_t s0, std::uint32_t s1) const {
  static const std::vector<std::uint32_t> none;
  if (s0 > 0xff || s1 > 0xff) return none;
  auto it = by_value_.find(s0 << 8 | s1);
  return it == by_value_.end() ? none : it->second;
}

void ReceiverOptions::validate() const {
  if (schedule.empty()) throw Error(Errc::invalid_argument, "receiver schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] < 1) throw Error(Errc::invalid_argument, "schedule entries must be at least 1");
    if (i > 0 && schedule[i] <= schedule[i - 1]) {
      throw Error(Errc::invalid_argument, "schedule must be strictly increasing");
    }
  }
}

SvCheckResult sv_fast_check(std::string_view text, const CodecContext& ctx, const SvIndex& index,
                            std::size_t beam_width) {
  require_byte_symbols(ctx);
  TextModel model(text, ctx);
  RangeCoder coder(ctx.params);
  SvCheckResult result;
  std::set<std::uint32_t> heads;
  const std::size_t L = model.size();
  std::vector<std::vector<ParsePath>> buckets(L + 1);
  buckets[0].push_back(root_path(coder));
  for (std::size_t p = 0; p < L; ++p) {
    auto& here = buckets[p];
    if (here.empty()) continue;
    keep_best(here, beam_width);
    const auto& dist = model.dist(p);
    for (const auto& path : here) {
      for (TokenIndex t : model.matches(p)) {
        ParsePath next;
        if (!extend(path, t, dist, coder, ctx.format, next)) continue;
        ++result.tokens_parsed;
        const auto& st = next.state;
        if (st.D.size() >= st.w + kSvBytes) {
          heads.insert(st.D[0] << 8 | st.D[1]);
          if (!index.lookup(st.D[0], st.D[1]).empty()) result.survivors.push_back(std::move(next));
          continue;
        }
        buckets[next.position].push_back(std::move(next));
      }
    }
    here.clear();
  }
  result.checked_prefixes = heads.size();
  result.accepted = !result.survivors.empty();
  return result;
}

std::optional<Received> try_receive(std::string_view text, const CodecContext& ctx, const SvIndex& index,
                                    const ReceiverOptions& options) {
  require_byte_symbols(ctx);
  options.validate();
  TextModel model(text, ctx);
  RangeCoder coder(ctx.params);
  HeadJudge judge(index, ctx);

  Received got;
  std::vector<std::pair<KeyCandidate, Symbols>> pieces;
  auto settle = [&](TrialOutcome& outcome, const std::string& stage) -> bool {
    got.stats.trial_opens += outcome.opens;
    if (outcome.message) {
      got.message = std::move(outcome.message);
      got.key = outcome.key;
      got.stats.stage = stage;
      return true;
    }
    for (auto& pc : outcome.pieces) {
      if (got.stats.stage.empty()) got.stats.stage = stage;
      pieces.push_back(std::move(pc));
    }
    return false;
  };

  auto greedy = follow(tokenize_greedy(text, ctx.format), model, coder, ctx, judge, got.stats.paths_expanded);
  if (greedy && greedy->position == model.size()) {
    TrialOutcome outcome;
    trial_open(*greedy, ctx, index, judge, outcome);
    if (settle(outcome, "greedy")) return got;
  }
  for (std::size_t width : options.schedule) {
    auto finished = beam_parse(model, coder, ctx, judge, width, got.stats.paths_expanded);
    const std::string stage = "beam-" + std::to_string(width);
    for (const auto& path : finished) {
      TrialOutcome outcome;
      trial_open(path, ctx, index, judge, outcome);
      if (settle(outcome, stage)) return got;
    }
  }
  if (pieces.empty()) return std::nullopt;

  // A fragment cannot be authenticated alone; keep the distinct readings per
  // candidate key, best first.
  constexpr std::size_t kMaxForms = 8;
  std::map<std::tuple<std::uint64_t, int, int>, FragmentPiece> grouped;
  std::vector<std::tuple<std::uint64_t, int, int>> order;
  for (auto& [cand, form] : pieces) {
    auto key = std::make_tuple(cand.counter, static_cast<int>(cand.iv.ix), cand.fragment);
    auto [it, fresh] = grouped.try_emplace(key);
    if (fresh) {
      it->second.key = cand;
      order.push_back(key);
    }
    auto& forms = it->second.forms;
    if (forms.size() < kMaxForms && std::find(forms.begin(), forms.end(), form) == forms.end()) {
      forms.push_back(std::move(form));
    }
  }
  // Several keys can match by chance; report the one reached first, from the
  // most probable path of the earliest stage.
  got.piece = std::move(grouped[order.front()]);
  got.key = got.piece->key;
  return got;
}

Bytes receive(std::string_view post, const KeyBundle& keys, const CodecContext& ctx, const ReceiverOptions& options) {
  std::string text = strip_signals(std::string(post), options.signals);
  SvIndex index(keys, options.iv_window, 0);
  auto got = try_receive(text, ctx, index, options);
  if (!got || !got->message) throw Error(Errc::no_valid_parse, "no parse of the covertext opens under these keys");
  return std::move(*got->message);
}

std::vector<ReassembledMessage> reassemble_pieces(const std::vector<FragmentPiece>& pieces, const KeyBundle& keys,
                                                  const CoderParams& params, std::size_t max_combinations) {
  if (params.r != 8) throw Error(Errc::invalid_argument, "records are byte strings, so the coder needs r = 8");
  std::map<std::pair<std::uint64_t, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& k = pieces[i].key;
    if (k.fragment < 0) continue;
    groups[{k.counter, k.iv.ix}].push_back(i);
  }

  std::vector<ReassembledMessage> out;
  for (const auto& [gk, members] : groups) {
    const InitialValue iv = pieces[members.front()].key.iv;
    bool done = false;
    for (std::size_t first : members) {
      if (done || pieces[first].key.fragment != 0) continue;
      for (const auto& f0 : pieces[first].forms) {
        if (done || f0.size() < kSvBytes + kControlBytes) continue;
        FragmentControl c0 = peek_control(as_bytes(f0, kSvBytes + kControlBytes), keys, iv, 0, 0);
        if (c0.index != 0 || c0.total == 0 || c0.payload_len == 0) continue;
        const std::size_t total = c0.total;
        const std::size_t chunk = c0.payload_len;

        // Candidate records per fragment index, with their source piece.
        std::vector<std::vector<std::pair<Bytes, std::size_t>>> slots(total);
        for (std::size_t m : members) {
          const auto& pc = pieces[m];
          const std::size_t idx = static_cast<std::size_t>(pc.key.fragment);
          if (idx >= total) continue;
          const auto& forms = idx == 0 ? std::vector<Symbols>{f0} : pc.forms;
          if (idx == 0 && m != first) continue;
          for (const auto& f : forms) {
            if (f.size() < kSvBytes + kControlBytes) continue;
            FragmentControl c = peek_control(as_bytes(f, kSvBytes + kControlBytes), keys, iv, idx, chunk);
            const bool last = idx + 1 == total;
            if (c.index != idx || c.total != total || c.payload_len == 0) continue;
            if (last ? c.payload_len > chunk : c.payload_len != chunk) continue;
            const std::size_t R = fragment_record_length(c);
            if (f.size() < R || f.size() - R >= params.l) continue;
            Bytes rec = as_bytes(f, R);
            bool dup = false;
            for (const auto& s : slots[idx]) dup = dup || s.first == rec;
            if (!dup) slots[idx].emplace_back(std::move(rec), m);
          }
        }
        std::size_t combos = 1;
        bool missing = false;
        for (const auto& s : slots) {
          if (s.empty()) missing = true;
          combos = std::min(max_combinations + 1, combos * std::max<std::size_t>(1, s.size()));
        }
        if (missing) continue;
        combos = std::min(combos, max_combinations);

        std::vector<std::size_t> pick(total, 0);
        for (std::size_t n = 0; n < combos && !done; ++n) {
          std::vector<Bytes> records;
          for (std::size_t i = 0; i < total; ++i) records.push_back(slots[i][pick[i]].first);
          try {
            ReassembledMessage msg;
            msg.message = reassemble(records, keys, iv);
            msg.key = pieces[first].key;
            msg.key.fragment = -1;
            for (std::size_t i = 0; i < total; ++i) msg.sources.push_back(slots[i][pick[i]].second);
            out.push_back(std::move(msg));
            done = true;
          } catch (const Error&) {
          }
          for (std::size_t i = 0; i < total; ++i) {
            if (++pick[i] < slots[i].size()) break;
            pick[i] = 0;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace mbfte

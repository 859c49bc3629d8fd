"""Reference computations used to produce the golden values in the C++ tests.

Written from the format descriptions, not from the C++ sources: the coder
here keeps the whole low end of the interval as one Python integer, so carries
never need special handling.
"""

import hashlib
import hmac
import math
import struct

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

DEFAULT_TOKENS = [" "] + [chr(c) for c in range(ord("a"), ord("z") + 1)] + [
    "th", "the", "these", "which", "would", "about", "could", "people",
    "world", "after", "young", "know", "going",
]


# ---- toy model ------------------------------------------------------------

def toy_logit(seed: str, token: str) -> float:
    d = hashlib.sha256(seed.encode() + b"\x00" + token.encode()).digest()
    return math.log(1.0 + (int.from_bytes(d[:4], "big") % 255))


def quantize(probs, denominator):
    """probs: [(token, p)] in canonical order. Returns [(token, freq)]."""
    n = len(probs)
    spare = float(denominator - n)
    freq, rem = [], []
    for _, p in probs:
        ideal = p * spare
        whole = math.floor(ideal)
        freq.append(int(whole) + 1)
        rem.append(ideal - whole)
    leftover = denominator - sum(freq)
    order = sorted(range(n), key=lambda i: (-rem[i], probs[i][0]))
    i = 0
    while leftover > 0:
        freq[order[i]] += 1
        i = (i + 1) % n
        leftover -= 1
    entries = [(probs[i][0], freq[i]) for i in range(n)]
    entries.sort(key=lambda e: (-e[1], e[0]))
    return entries


def distribution(logits, temperature=0.9, top_k=0, top_p=1.0, denominator=1 << 16):
    z = [x / temperature for x in logits]
    peak = max(z)
    probs = [(i, math.exp(v - peak)) for i, v in enumerate(z)]
    probs.sort(key=lambda e: (-e[1], e[0]))
    if top_k:
        probs = probs[:top_k]
    mass = 0.0
    for _, p in probs:
        mass += p
    if top_p < 1.0:
        running = 0.0
        cut = len(probs)
        for i, (_, p) in enumerate(probs):
            running += p / mass
            if running >= top_p:
                cut = i + 1
                break
        probs = probs[:cut]
        mass = 0.0
        for _, p in probs:
            mass += p
    probs = [(t, p / mass) for t, p in probs]
    return quantize(probs, denominator)


class ToyModel:
    def __init__(self, tokens=None, context_len=16, initial_seed="", **sampling):
        self.tokens = tokens or DEFAULT_TOKENS
        self.context_len = context_len
        self.initial_seed = initial_seed
        self.sampling = sampling
        self._cache = {}

    def start_seed(self):
        return self.initial_seed[-self.context_len:] if self.initial_seed else ""

    def next_seed(self, seed, token_index):
        return (seed + self.tokens[token_index])[-self.context_len:]

    def dist(self, seed):
        if seed not in self._cache:
            logits = [toy_logit(seed, t) for t in self.tokens]
            self._cache[seed] = distribution(logits, **self.sampling)
        return self._cache[seed]


class FixedModel:
    """Same logits at every step."""

    def __init__(self, tokens, logits, **sampling):
        self.tokens = tokens
        self._dist = distribution(logits, **sampling)

    def start_seed(self):
        return ""

    def next_seed(self, seed, token_index):
        return ""

    def dist(self, seed):
        return self._dist


# ---- seeded random source ---------------------------------------------------

class SeededRandom:
    """AES-256-CTR keystream under SHA-256(be64(seed)), zero IV."""

    def __init__(self, seed: int):
        key = hashlib.sha256(struct.pack(">Q", seed)).digest()
        self._enc = Cipher(algorithms.AES(key), modes.CTR(bytes(16))).encryptor()

    def next_u64(self):
        return int.from_bytes(self._enc.update(bytes(8)), "big")

    def next_bits(self, bits):
        return self.next_u64() & ((1 << bits) - 1)

    def uniform(self, n):
        limit = (1 << 64) - 1 - ((1 << 64) - 1) % n
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n


# ---- arithmetic coder on unbounded integers --------------------------------

def _scaled(width, cum, denominator):
    return width * cum // denominator


def _cumulative(entries):
    out = [0]
    for _, f in entries:
        out.append(out[-1] + f)
    return out


def _digits(value, n, r):
    return [(value >> (r * (n - 1 - i))) & ((1 << r) - 1) for i in range(n)]


def _pending(low, width, n, r, l):
    """Trailing emitted symbols that change if the interval's top is used."""
    lo = low >> (r * l)
    hi = (low + width - 1) >> (r * l)
    if lo == hi:
        return 0
    a, b = _digits(lo, n, r), _digits(hi, n, r)
    k = 0
    while k < n and a[n - 1 - k] != b[n - 1 - k]:
        k += 1
    # Every differing position is trailing.
    return k


def encode(tokens, model, r, l):
    unit = 1 << (r * (l - 1))
    low, width, n = 0, 1 << (r * l), 0
    seed = model.start_seed()
    for t in tokens:
        entries = model.dist(seed)
        cum = _cumulative(entries)
        pos = [e[0] for e in entries].index(t)
        d = cum[-1]
        lo_edge = _scaled(width, cum[pos], d)
        hi_edge = _scaled(width, cum[pos + 1], d)
        low += lo_edge
        width = hi_edge - lo_edge
        while width <= unit:
            low <<= r
            width <<= r
            n += 1
        seed = model.next_seed(seed, t)
    return _digits(low >> (r * l), n, r), _pending(low, width, n, r, l)


def decode(C, model, r, l, pad=None):
    unit = 1 << (r * (l - 1))
    low, width, n = 0, 1 << (r * l), 0
    stream = list(C)
    padding = 0

    def symbol(i):
        nonlocal padding
        while i >= len(stream):
            stream.append(pad.next_bits(r))
            padding += 1
        return stream[i]

    window = 0
    for i in range(l):
        window = (window << r) | symbol(i)
    tokens = []
    seed = model.start_seed()
    while n < len(C):
        entries = model.dist(seed)
        cum = _cumulative(entries)
        d = cum[-1]
        offset = window - low
        pos = max(i for i in range(len(entries)) if _scaled(width, cum[i], d) <= offset)
        lo_edge = _scaled(width, cum[pos], d)
        hi_edge = _scaled(width, cum[pos + 1], d)
        low += lo_edge
        width = hi_edge - lo_edge
        while width <= unit:
            low <<= r
            width <<= r
            window = (window << r) | symbol(n + l)
            n += 1
        tokens.append(entries[pos][0])
        seed = model.next_seed(seed, entries[pos][0])
    return tokens, _digits(low >> (r * l), n, r), _pending(low, width, n, r, l), padding


# ---- record layer -----------------------------------------------------------

def _hmac512(key, data):
    return hmac.new(key, data, hashlib.sha512).digest()


def _ctr(key, iv, data, offset=0):
    enc = Cipher(algorithms.AES(key), modes.CTR(iv)).encryptor()
    enc.update(bytes(offset))
    return enc.update(data)


def derive_iv(k1, counter):
    return _hmac512(k1, b"IV" + struct.pack(">Q", counter))[:16]


def seal(message, k1, k2, k3, iv, ix=0):
    sv = _hmac512(k1, b"SV" + iv + bytes([ix]))[:2]
    body = sv + _ctr(k3, iv, struct.pack(">H", len(message)) + message)
    return body + _hmac512(k2, b"Tag" + body)[:5]


def keys_from_phrase(phrase):
    master = hashlib.sha256(phrase.encode()).digest()
    return [_hmac512(master, label)[:32] for label in (b"K1", b"K2", b"K3")]


def key_file(k1, k2, k3, counter, tweak_range):
    return k1 + k2 + k3 + struct.pack(">Q", counter) + bytes([tweak_range])


# ---- decoding attack by enumeration ----------------------------------------

def tokenizations(text, model, seed=None, prefix=()):
    """Yields every token sequence that spells `text` and stays in support."""
    if seed is None:
        seed = model.start_seed()
    if not text:
        yield prefix
        return
    support = {t for t, _ in model.dist(seed)}
    for i, tok in enumerate(model.tokens):
        if i in support and text.startswith(tok):
            yield from tokenizations(text[len(tok):], model, model.next_seed(seed, i), prefix + (i,))


def decodable(text, model):
    return next(tokenizations(text, model), None) is not None


def sample_text(model, n_tokens, rng):
    seed = model.start_seed()
    out = []
    for _ in range(n_tokens):
        entries = model.dist(seed)
        u = rng.uniform(sum(f for _, f in entries))
        acc = 0
        for t, f in entries:
            acc += f
            if u < acc:
                break
        out.append(model.tokens[t])
        seed = model.next_seed(seed, t)
    return "".join(out)

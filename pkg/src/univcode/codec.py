"""Arithmetic coding of integer sequences against any :class:`SeqModel`.

Each symbol is coded as a short run of binary decisions, so every model step
only needs interval masses, never a full CDF:

* the step's listed symbols plus the escape form a finite list, coded by
  bisection on its prefix sums;
* an escaped symbol is coded through the base measure: first its bit-length
  bucket (0, then [2**(b-1), 2**b)) in unary, then bisection inside the
  bucket, or one uniform split once the base is flat on the remaining range.

The coder keeps the interval [low, low + width) as exact integers at a
growing binary scale.  Before each decision the width is widened to at least
``2**(precision + 16) / min(P, 1 - P)``, so rounding a split costs at most a
2**-(precision + 16) relative fraction of the branch.  Python integers make
carry propagation a non-issue.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import CodecError, DomainError, ZeroProbabilityError
from .spa import SeqModel, Step, spa_from_descriptor

__all__ = [
    "Bitstream",
    "decode",
    "descriptor_hash",
    "encode",
    "read_text_ints",
    "read_varints",
    "write_text_ints",
    "write_varints",
]

MAGIC = b"UCLB"
VERSION = 1
HEADER = struct.Struct(">4sBIB32s")
GUARD_BITS = 16
MAX_BUCKET = 1 << 20


def canonical_json(desc: dict) -> bytes:
    return json.dumps(desc, sort_keys=True, separators=(",", ":")).encode()


def descriptor_hash(model_or_desc) -> bytes:
    desc = model_or_desc if isinstance(model_or_desc, dict) else model_or_desc.descriptor()
    return hashlib.sha256(canonical_json(desc)).digest()


@dataclass(frozen=True)
class Bitstream:
    n: int
    precision: int
    model_hash: bytes
    payload: bytes
    version: int = VERSION
    bits: int | None = None  # exact code length; byte padding excluded

    def to_bytes(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.n, self.precision, self.model_hash) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < HEADER.size:
            raise CodecError(f"truncated header: {len(data)} of {HEADER.size} bytes")
        magic, version, n, precision, h = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise CodecError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CodecError(f"unsupported format version {version}")
        return cls(n, precision, h, bytes(data[HEADER.size:]), version)

    @property
    def payload_bits(self) -> int:
        return 8 * len(self.payload) if self.bits is None else self.bits


class _Interval:
    """Shared state: low/width at scale 2**-scale."""

    def __init__(self, precision: int):
        if not 8 <= precision <= 64:
            raise DomainError("precision must lie in [8, 64]")
        self.guard = precision + GUARD_BITS
        self.low = 0
        self.width = 1
        self.scale = 0

    def _shift_for(self, need: int) -> int:
        return max(0, need - (self.width.bit_length() - 1))

    def _widen(self, s: int) -> None:
        self.low <<= s
        self.width <<= s
        self.scale += s

    def _need_binary(self, p: float) -> int:
        m = min(p, 1.0 - p)
        return self.guard + max(0, math.ceil(-math.log2(m)))

    def _split(self, p: float) -> int:
        num, den = p.as_integer_ratio()
        return min(max(self.width * num // den, 1), self.width - 1)

    def _bounds(self, t: int, count: int) -> int:
        return self.width * t // count


def _final_code(low: int, width: int, scale: int) -> tuple[int, int]:
    """Shortest (c, L) with [c, c+1) * 2**-L inside [low, low+width) * 2**-scale."""
    g = width.bit_length() - 1
    for L in range(max(scale - g, 0), scale + 1):
        step = scale - L
        c = -((-low) >> step)
        if (c + 1) << step <= low + width:
            return c, L
    raise AssertionError("unreachable: L = scale always fits")


def _pack(c: int, L: int) -> bytes:
    nbytes = (L + 7) // 8
    return (c << (8 * nbytes - L)).to_bytes(nbytes, "big") if nbytes else b""


class _Encoder(_Interval):
    def binary(self, p: float, bit: int) -> int:
        """Code ``bit`` where P(bit = 0) = p."""
        if p <= 0.0 or p >= 1.0:
            if (p <= 0.0) != bool(bit):
                raise ZeroProbabilityError("decision has probability zero")
            return bit
        self._widen(self._shift_for(self._need_binary(p)))
        split = self._split(p)
        if bit:
            self.low += split
            self.width -= split
        else:
            self.width = split
        return bit

    def uniform(self, count: int, t: int) -> int:
        if count > 1:
            self._widen(self._shift_for(self.guard + (count - 1).bit_length()))
            a, b = self._bounds(t, count), self._bounds(t + 1, count)
            self.low += a
            self.width = b - a
        return t

    def finish(self) -> tuple[bytes, int]:
        c, L = _final_code(self.low, self.width, self.scale)
        return _pack(c, L), L


class _Decoder(_Interval):
    def __init__(self, precision: int, payload: bytes):
        super().__init__(precision)
        self.value = int.from_bytes(payload, "big")
        self.nbits = 8 * len(payload)
        self.offset = 0  # code - low, at the current scale

    def _widen(self, s: int) -> None:
        if s:
            lo, hi = self.scale, self.scale + s
            # bits [lo, hi) of the payload, zeros past its end
            if hi <= self.nbits:
                chunk = (self.value >> (self.nbits - hi)) & ((1 << s) - 1)
            elif lo >= self.nbits:
                chunk = 0
            else:
                chunk = (self.value & ((1 << (self.nbits - lo)) - 1)) << (hi - self.nbits)
            self.offset = (self.offset << s) | chunk
        super()._widen(s)

    def binary(self, p: float, bit=None) -> int:
        if p <= 0.0:
            return 1
        if p >= 1.0:
            return 0
        self._widen(self._shift_for(self._need_binary(p)))
        split = self._split(p)
        if self.offset < split:
            self.width = split
            return 0
        self.offset -= split
        self.low += split
        self.width -= split
        return 1

    def uniform(self, count: int, t=None) -> int:
        if count <= 1:
            return 0
        self._widen(self._shift_for(self.guard + (count - 1).bit_length()))
        t = min(self.offset * count // self.width, count - 1)
        while t + 1 < count and self._bounds(t + 1, count) <= self.offset:
            t += 1
        while self._bounds(t, count) > self.offset:
            t -= 1
        a, b = self._bounds(t, count), self._bounds(t + 1, count)
        self.offset -= a
        self.low += a
        self.width = b - a
        return t


def _bisect(coder, weights: Sequence[float], idx: int | None) -> int:
    """Select one of ``weights`` by binary splits of the index range."""
    cum = [0.0]
    for w in weights:
        cum.append(cum[-1] + w)
    lo, hi = 0, len(weights)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        left, right = cum[mid] - cum[lo], cum[hi] - cum[mid]
        if left + right <= 0:
            raise ZeroProbabilityError("all remaining choices have probability zero")
        bit = coder.binary(left / (left + right), None if idx is None else int(idx >= mid))
        if bit:
            lo = mid
        else:
            hi = mid
    if weights[lo] <= 0:
        raise ZeroProbabilityError("selected choice has probability zero")
    return lo


def _bucket(t: int) -> tuple[int, int]:
    return (0, 0) if t == 0 else (1 << (t - 1), (1 << t) - 1)


def _code_natural(coder, base, x: int | None) -> int:
    """Code a natural number by its base-measure mass."""
    if x is not None and x < 0:
        raise DomainError("symbols must be nonnegative integers")
    target = None if x is None else x.bit_length()
    t = 0
    while True:
        lo, hi = _bucket(t)
        here, rest = base.mass_range(lo, hi), base.mass_range(hi + 1, None)
        if here + rest <= 0:
            raise ZeroProbabilityError("base measure has no mass left")
        if not coder.binary(here / (here + rest), None if x is None else int(target > t)):
            break
        t += 1
        if t > MAX_BUCKET:
            raise CodecError("escaped symbol beyond the supported bit length")
    while lo < hi:
        if base.uniform_on(lo, hi):
            return lo + coder.uniform(hi - lo + 1, None if x is None else x - lo)
        mid = (lo + hi) // 2
        left, right = base.mass_range(lo, mid), base.mass_range(mid + 1, hi)
        if left + right <= 0:
            raise ZeroProbabilityError("base measure has no mass in range")
        if coder.binary(left / (left + right), None if x is None else int(x > mid)):
            lo = mid + 1
        else:
            hi = mid
    return lo


def _code_step(coder, step: Step, x: int | None) -> int:
    symbols = [s for s, _ in step.seen]
    weights = [p for _, p in step.seen] + [step.escape]
    idx = None
    if x is not None:
        idx = len(symbols)
        for i, s in enumerate(symbols):
            if s == x:
                idx = i
                break
    choice = _bisect(coder, weights, idx)
    if choice < len(symbols):
        return symbols[choice]
    if step.base is None:
        raise ZeroProbabilityError("escape without a base measure")
    return _code_natural(coder, step.base, x)


def encode(x: Iterable[int], model: SeqModel, precision: int = 32) -> Bitstream:
    enc = _Encoder(precision)
    m = model.fresh()
    n = 0
    for pos, sym in enumerate(x):
        sym = int(sym)
        try:
            _code_step(enc, m.step(), sym)
        except ZeroProbabilityError as e:
            raise ZeroProbabilityError(f"symbol {sym} at position {pos} has probability zero: {e}",
                                       position=pos, symbol=sym) from None
        m.update(sym)
        n += 1
    if n >= 2**32:
        raise CodecError("sequence too long for the u32 length field")
    payload, bits = enc.finish()
    return Bitstream(n, precision, descriptor_hash(m), payload, bits=bits)


def decode(b: Bitstream | bytes, model) -> list[int]:
    """Inverse of :func:`encode`; ``model`` is a SeqModel or its descriptor."""
    if isinstance(b, (bytes, bytearray)):
        b = Bitstream.from_bytes(b)
    if isinstance(model, dict):
        expected = descriptor_hash(model)
        model = spa_from_descriptor(model)
    else:
        expected = descriptor_hash(model)
    if expected != b.model_hash:
        raise CodecError("descriptor hash mismatch: bitstream was made with another model")
    dec = _Decoder(b.precision, b.payload)
    m = model.fresh()
    out = []
    for _ in range(b.n):
        sym = _code_step(dec, m.step(), None)
        m.update(sym)
        out.append(sym)
    # the encoder's final code is a function of the final interval
    if _pack(*_final_code(dec.low, dec.width, dec.scale)) != b.payload:
        raise CodecError("payload truncated or corrupted")
    return out


# ---------------------------------------------------------------------------
# integer stream formats


def read_text_ints(f) -> list[int]:
    out = []
    for lineno, line in enumerate(f, 1):
        line = line.strip()
        if line:
            try:
                out.append(int(line))
            except ValueError:
                raise DomainError(f"line {lineno}: not an integer: {line!r}") from None
    return out


def write_text_ints(f, xs: Iterable[int]) -> None:
    for x in xs:
        f.write(f"{int(x)}\n")


def write_varints(xs: Iterable[int]) -> bytes:
    out = bytearray()
    for x in xs:
        x = int(x)
        if x < 0:
            raise DomainError("varints encode nonnegative integers only")
        while True:
            byte = x & 0x7F
            x >>= 7
            if x:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
    return bytes(out)


def read_varints(data: bytes) -> list[int]:
    out, x, shift = [], 0, 0
    for byte in data:
        x |= (byte & 0x7F) << shift
        if byte & 0x80:
            shift += 7
        else:
            out.append(x)
            x, shift = 0, 0
    if shift:
        raise CodecError("varint stream ends mid-number")
    return out

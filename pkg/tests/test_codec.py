import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from univcode.codec import (
    HEADER,
    Bitstream,
    decode,
    descriptor_hash,
    encode,
    read_text_ints,
    read_varints,
    write_text_ints,
    write_varints,
)
from univcode.dists import (
    ClassB,
    ClassI,
    ClassU,
    ExplicitPmf,
    GeometricPmf,
    HarmonicPmf,
    build_qU,
    point_mass,
    sample,
)
from univcode.errors import CodecError, ZeroProbabilityError
from univcode.spa import BayesMixture, Hybrid, KnownSource, PatternSPA


def slack(n, precision=32):
    return 2 + n * 2.0 ** -(precision - 2)


def test_fair_coin_payload():
    coin = ExplicitPmf({0: Fraction(1, 2), 1: Fraction(1, 2)})
    xs = [0, 1, 1, 0, 1, 0, 0, 1]
    b = encode(xs, KnownSource(coin))
    assert b.payload_bits <= 10
    assert decode(b, KnownSource(coin)) == xs


def test_empty_sequence():
    m = KnownSource(ClassU(3))
    b = encode([], m)
    assert b.payload == b"" and b.n == 0
    assert len(b.to_bytes()) == HEADER.size
    assert decode(b.to_bytes(), m) == []


@pytest.mark.parametrize("dist", [ClassU(3), ClassB(0.1, 5)])
def test_long_round_trip_and_length(dist):
    xs = [int(v) for v in sample(dist, 2024, 10_000)]
    for model in (KnownSource(dist), Hybrid(PatternSPA(), build_qU())):
        b = encode(xs, model)
        assert decode(b.to_bytes(), model.descriptor()) == xs
        ideal = -model.log2_prob(xs)
        assert ideal - 1e-6 <= b.payload_bits <= ideal + slack(len(xs))


models = [
    KnownSource(ClassU(2)),
    KnownSource(ClassI(seed=1)),
    KnownSource(HarmonicPmf()),
    KnownSource(GeometricPmf(0.3)),
    BayesMixture([ClassU(1), ClassU(2), ClassB(Fraction(1, 3), 2)]),
    Hybrid(PatternSPA(), build_qU()),
    Hybrid(PatternSPA(0.2, 2.0), ClassU(3), renormalize=True),
]
sources = [ClassU(2), ClassI(seed=1), HarmonicPmf(), GeometricPmf(0.3), ClassU(1), ClassU(2),
           ClassU(3)]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, len(models) - 1), st.integers(0, 10**6), st.integers(0, 60),
       st.sampled_from([12, 32, 48]))
def test_random_round_trips(i, seed, n, precision):
    model, src = models[i], sources[i]
    if isinstance(model, BayesMixture):
        src = [ClassU(1), ClassU(2), ClassB(Fraction(1, 3), 2)][seed % 3]
    xs = [int(v) for v in sample(src, seed, n)]
    b = encode(xs, model, precision)
    assert decode(Bitstream.from_bytes(b.to_bytes()), model) == xs
    assert b.payload_bits <= -model.log2_prob(xs) + slack(n, precision)


def test_huge_symbols():
    d = ClassU(9)  # atoms up to 2**81
    xs = [int(v) for v in sample(d, 3, 200)]
    assert max(xs) > 2**63
    b = encode(xs, KnownSource(d))
    assert decode(b, KnownSource(d)) == xs
    h = Hybrid(PatternSPA(), build_qU())
    b = encode(xs, h)
    assert decode(b, h) == xs


def test_known_source_approaches_entropy():
    d = ClassU(3)
    rates = []
    for seed in range(20):
        xs = sample(d, seed, 10_000)
        rates.append(encode(xs, KnownSource(d)).payload_bits / len(xs))
    assert abs(np.mean(rates) - d.entropy()) < 0.05


def test_zero_probability_names_position():
    with pytest.raises(ZeroProbabilityError) as e:
        encode([0, 0, 7, 0], KnownSource(point_mass(0)))
    assert e.value.position == 2 and e.value.symbol == 7


def test_header_checks():
    m = KnownSource(ClassU(2))
    raw = encode([0, 3, 0], m).to_bytes()
    assert raw[:4] == b"UCLB" and raw[4] == 1
    with pytest.raises(CodecError, match="hash"):
        decode(raw, KnownSource(ClassU(3)))
    bad = bytearray(raw)
    bad[15] ^= 0xFF  # inside the descriptor hash
    with pytest.raises(CodecError, match="hash"):
        decode(bytes(bad), m)
    with pytest.raises(CodecError, match="magic"):
        decode(b"XXXX" + raw[4:], m)
    with pytest.raises(CodecError, match="truncated header"):
        decode(raw[:20], m)


def test_truncated_payload_detected():
    d = ClassU(3)
    m = KnownSource(d)
    raw = encode([int(v) for v in sample(d, 4, 500)], m).to_bytes()
    with pytest.raises(CodecError):
        decode(raw[:-3], m)


def test_hash_is_canonical():
    a = descriptor_hash({"spa": "known", "source": {"class": "U", "k": 2}})
    b = descriptor_hash({"source": {"k": 2, "class": "U"}, "spa": "known"})
    assert a == b and len(a) == 32


@given(st.lists(st.integers(0, 2**70)))
def test_varint_round_trip(xs):
    assert read_varints(write_varints(xs)) == xs


def test_varint_format():
    assert write_varints([0, 1, 127, 128, 300]) == bytes([0, 1, 0x7F, 0x80, 0x01, 0xAC, 0x02])
    with pytest.raises(CodecError):
        read_varints(bytes([0x80]))


def test_text_format():
    buf = io.StringIO()
    write_text_ints(buf, [3, 0, 17])
    assert buf.getvalue() == "3\n0\n17\n"
    assert read_text_ints(io.StringIO("3\n\n0\n17\n")) == [3, 0, 17]

import itertools
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grantfree.phy import (
    bit_location,
    bit_posteriors_from_symbol_posteriors,
    crc_attach,
    crc_check,
    extrinsic,
    get_code,
    get_constellation,
    hard_decision,
    soft_demod,
    symbol_priors_from_llrs,
)
from grantfree.phy.ldpc import (
    LDPCCode,
    count_4cycles,
    gf2_rref,
    parse_alist,
    search_parity_matrix,
    write_alist,
)

FIXTURES = Path(__file__).parent / "fixtures"
QPSK = get_constellation("qpsk")


def long_division_crc(bits):
    """CRC-8 remainder by integer polynomial long division."""
    v = int("".join(map(str, bits)), 2) << 8
    g = 0x19B
    while v.bit_length() > 8:
        v ^= g << (v.bit_length() - 9)
    return [int(c) for c in format(v, "08b")]


# ---------------------------------------------------------------- CRC

def test_crc_zero_payload():
    d = crc_attach(np.zeros(142, np.uint8))
    assert d.shape == (150,)
    assert not d.any()
    assert crc_check(d)


def test_crc_reference_vectors():
    # frozen from the long-division oracle
    assert list(crc_attach([1, 0, 1, 1, 0, 0, 1, 1])[-8:]) == [0, 1, 1, 0, 1, 0, 1, 1]
    assert list(crc_attach([1])[-8:]) == [1, 0, 0, 1, 1, 0, 1, 1]
    assert list(crc_attach([1] * 16)[-8:]) == [1, 1, 0, 0, 1, 0, 1, 0]


def test_crc_matches_long_division():
    rng = np.random.default_rng(7)
    for _ in range(200):
        b = rng.integers(0, 2, size=rng.integers(1, 200))
        assert list(crc_attach(b)[-8:]) == long_division_crc(b)


def test_crc_round_trip_and_single_flips():
    rng = np.random.default_rng(1)
    b = rng.integers(0, 2, size=(10_000, 142), dtype=np.uint8)
    d = crc_attach(b)
    assert crc_check(d).all()
    flipped = d.copy()
    pos = rng.integers(0, 150, size=10_000)
    flipped[np.arange(10_000), pos] ^= 1
    assert not crc_check(flipped).any()


def test_crc_every_single_flip_position():
    rng = np.random.default_rng(2)
    d = crc_attach(rng.integers(0, 2, 142, dtype=np.uint8))
    flips = np.tile(d, (150, 1))
    flips[np.arange(150), np.arange(150)] ^= 1
    assert not crc_check(flips).any()


def test_crc_length_mismatch():
    with pytest.raises(ValueError):
        crc_attach(np.zeros(10, np.uint8), payload_bits=142)
    with pytest.raises(ValueError):
        crc_check(np.zeros(10, np.uint8), block_bits=150)


# ---------------------------------------------------------------- LDPC

@pytest.fixture(scope="module")
def code():
    return get_code(300, 150)


def test_shipped_code_shape(code):
    assert code.H.shape[1] == 300
    assert np.all(code.H.sum(axis=0) == 3)
    assert np.all(code.H.sum(axis=1) == 6)
    assert code.rate == 0.5


def test_shipped_matrix_reproduced_by_seeded_search(code):
    assert np.array_equal(search_parity_matrix(300, 3, 6), code.H)


def test_alist_round_trip(code):
    assert np.array_equal(parse_alist(write_alist(code.H)), code.H)


def test_count_4cycles_small():
    H = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]])
    # column pairs sharing two rows: (0,1) and (1,2)
    assert count_4cycles(H) == 2


def test_gf2_rref_rank():
    A = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], np.uint8)
    R, piv = gf2_rref(A)
    assert list(piv) == [0, 1]
    assert R.shape == (2, 3)


def test_encode_zero_and_parity(code):
    assert not code.encode(np.zeros(150, np.uint8)).any()
    rng = np.random.default_rng(3)
    d = rng.integers(0, 2, size=(1000, 150), dtype=np.uint8)
    c = code.encode(d)
    assert code.is_codeword(c).all()
    assert np.array_equal(code.extract_data(c), d)
    assert not c[:, code.frozen_positions].any()


def test_encode_parity_independent_product(code):
    rng = np.random.default_rng(4)
    c = code.encode(rng.integers(0, 2, 150, dtype=np.uint8))
    assert not ((code.H.astype(int) @ c) % 2).any()


def test_decode_noiseless_idempotent(code):
    rng = np.random.default_rng(5)
    c = code.encode(rng.integers(0, 2, size=(4, 150), dtype=np.uint8))
    prior = 30.0 * (1 - 2.0 * c)
    post = code.decode(prior)
    assert np.array_equal(hard_decision(post), c)
    assert np.all(np.sign(post) == np.sign(prior))
    again = code.decode(post)
    assert np.array_equal(hard_decision(again), c)


def test_decode_zero_prior(code):
    assert np.array_equal(code.decode(np.zeros(300)), np.zeros(300))


def test_decode_corrects_one_flip(code):
    rng = np.random.default_rng(6)
    c = code.encode(rng.integers(0, 2, 150, dtype=np.uint8))
    prior = 8.0 * (1 - 2.0 * c)
    prior[17] = -5.0 * (1 - 2.0 * c[17])
    assert np.array_equal(hard_decision(code.decode(prior)), c)


def test_decode_batch_equals_rows(code):
    rng = np.random.default_rng(8)
    llr = rng.normal(2.0, 2.0, size=(5, 300))
    batch = code.decode(llr)
    for row, out in zip(llr, batch):
        assert np.array_equal(code.decode(row), out)


def test_decode_runs_at_least_one_iteration(code):
    _, used = code.decode(np.full(300, 10.0), return_iters=True)
    assert used == 1


@pytest.fixture(scope="module")
def toy_code():
    # no simple (3,6)-regular graph of length 16 exists, so the toy code is (3,4)-regular
    H = search_parity_matrix(16, 3, 4)
    _, piv = gf2_rref(H)
    return LDPCCode(H, 16 - piv.size)


def test_toy_code_bp_agrees_with_ml(toy_code):
    k = toy_code.n_data
    data = np.array(list(itertools.product([0, 1], repeat=k)), dtype=np.uint8)
    book = toy_code.encode(data)
    assert toy_code.is_codeword(book).all()
    rate = k / 16
    ebn0 = 10 ** (4 / 10)
    sigma2 = 1 / (2 * rate * ebn0)
    rng = np.random.default_rng(11)
    agree = 0
    for _ in range(1000):
        c = book[rng.integers(len(book))]
        y = (1 - 2.0 * c) + np.sqrt(sigma2) * rng.standard_normal(16)
        llr = 2 * y / sigma2
        ml = book[np.argmax((1 - 2.0 * book) @ llr)]
        agree += np.array_equal(ml, hard_decision(toy_code.decode(llr)))
    assert agree >= 950


def test_toy_code_corrects_single_flip_like_ml(toy_code):
    k = toy_code.n_data
    book = toy_code.encode(np.array(list(itertools.product([0, 1], repeat=k)), dtype=np.uint8))
    c = book[5]
    for j in range(16):
        prior = 8.0 * (1 - 2.0 * c)
        prior[j] = -5.0 * (1 - 2.0 * c[j])
        ml = book[np.argmax((1 - 2.0 * book) @ prior)]
        assert np.array_equal(ml, c)
        assert np.array_equal(hard_decision(toy_code.decode(prior)), c)


# ---------------------------------------------------------------- modulation

def test_constellations_match_golden_fixture():
    golden = json.loads((FIXTURES / "constellations.json").read_text())
    for name, entries in golden.items():
        const = get_constellation(name)
        for k, e in enumerate(entries):
            assert "".join(map(str, const.labels[k])) == e["label"]
            assert abs(const.points[k] - complex(e["re"], e["im"])) < 1e-11


def test_qpsk_mapping_and_sets():
    assert QPSK.modulate([0, 0])[0] == pytest.approx((1 + 1j) / np.sqrt(2))
    assert list(QPSK.bit_set(0, 0)) == [0, 1]
    assert list(QPSK.bit_set(1, 1)) == [1, 3]


@pytest.mark.parametrize("name", ["qpsk", "16qam"])
def test_unit_power_and_partition(name):
    const = get_constellation(name)
    assert np.mean(np.abs(const.points) ** 2) == pytest.approx(1.0)
    assert len(set(np.round(const.points, 9))) == const.order
    for l in range(const.bits_per_symbol):
        both = np.concatenate([const.bit_set(l, 0), const.bit_set(l, 1)])
        assert sorted(both) == list(range(const.order))


def test_16qam_gray_neighbours_differ_in_one_bit():
    const = get_constellation("16qam")
    d = np.abs(const.points[:, None] - const.points[None, :])
    nearest = np.isclose(d, 2 / np.sqrt(10))
    for a, b in zip(*np.nonzero(nearest)):
        assert np.sum(const.labels[a] != const.labels[b]) == 1


def test_modulate_length_error():
    with pytest.raises(ValueError):
        QPSK.modulate([0, 1, 1])


# ---------------------------------------------------------------- soft bits

def test_bit_location_index_maps():
    assert bit_location(0, 2, pilot_len=50) == (0, 51)
    assert bit_location(1, 2, pilot_len=50) == (1, 51)
    assert bit_location(2, 2, pilot_len=50) == (0, 52)
    assert bit_location(299, 2, pilot_len=50) == (1, 200)


def test_bit_posteriors_examples():
    _, llr = bit_posteriors_from_symbol_posteriors(np.full((1, 4), 0.25), QPSK)
    assert np.allclose(llr, 0.0)
    _, llr = bit_posteriors_from_symbol_posteriors(np.array([[1.0, 0, 0, 0]]), QPSK)
    assert np.allclose(llr, 30.0)
    p0, llr = bit_posteriors_from_symbol_posteriors(np.array([[0.4, 0.3, 0.2, 0.1]]), QPSK)
    assert p0[0] == pytest.approx(0.7)
    assert llr[0] == pytest.approx(np.log(7 / 3))
    # bit 1: p(0) = eta(s0) + eta(s2)
    assert llr[1] == pytest.approx(np.log(0.6 / 0.4))


def test_bit_posteriors_reject_unnormalized():
    with pytest.raises(ValueError):
        bit_posteriors_from_symbol_posteriors(np.array([[0.5, 0.5, 0.5, 0.0]]), QPSK)


def test_extrinsic_examples():
    assert extrinsic(2.0, 0.5) == pytest.approx(1.5)
    assert extrinsic(-4.2, 0.0) == pytest.approx(-4.2)
    assert extrinsic(30.0, -30.0) == 30.0


def test_symbol_priors_examples():
    assert np.allclose(symbol_priors_from_llrs(np.zeros(2), QPSK), 0.25)
    assert symbol_priors_from_llrs(np.array([30.0, 30.0]), QPSK)[0, 0] == pytest.approx(1.0)
    eta = symbol_priors_from_llrs(np.array([np.log(3), 0.0]), QPSK)
    assert np.allclose(eta, [[0.375, 0.375, 0.125, 0.125]])


def test_hard_decision_tie_rule():
    assert hard_decision(0.0) == 0
    assert hard_decision(-1e-9) == 1
    assert list(hard_decision([3.0, -2.0, 0.0])) == [0, 1, 0]


def brute_force_llr(x, snr, const, position):
    num = sum(np.exp(-snr * abs(x - s) ** 2) for s in const.point_set(position, 0))
    den = sum(np.exp(-snr * abs(x - s) ** 2) for s in const.point_set(position, 1))
    return np.log(num / den)


def test_soft_demod_examples():
    # equidistant from both sets of bit 0
    assert soft_demod(np.array([0.0 + 0.7j]), 1.0, QPSK)[0] == pytest.approx(0.0, abs=1e-12)
    s0 = QPSK.points[0]
    assert np.all(soft_demod(np.array([s0]), 0.1, QPSK) > 10)
    x = 0.3 + 0.3j
    llr = soft_demod(np.array([x]), 1.0, QPSK)
    for l in range(2):
        assert llr[l] == pytest.approx(brute_force_llr(x, 1.0, QPSK, l), abs=1e-12)


def test_soft_demod_16qam_brute_force():
    const = get_constellation("16qam")
    rng = np.random.default_rng(9)
    x = rng.normal(size=5) + 1j * rng.normal(size=5)
    llr = soft_demod(x, 0.5, const).reshape(5, 4)
    for i in range(5):
        for l in range(4):
            assert llr[i, l] == pytest.approx(brute_force_llr(x[i], 2.0, const, l), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-40, 40), min_size=4, max_size=4))
def test_symbol_priors_normalized(llrs):
    for name in ("qpsk", "16qam"):
        const = get_constellation(name)
        eta = symbol_priors_from_llrs(np.array(llrs), const)
        assert np.allclose(eta.sum(axis=-1), 1.0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=4, max_size=4))
def test_point_mass_round_trip(bits):
    for name in ("qpsk", "16qam"):
        const = get_constellation(name)
        c = np.array(bits, dtype=np.uint8)
        idx = [np.flatnonzero(np.all(const.labels == g, axis=1))[0]
               for g in c.reshape(-1, const.bits_per_symbol)]
        eta = np.eye(const.order)[idx]
        _, llr = bit_posteriors_from_symbol_posteriors(eta, const)
        assert np.array_equal(hard_decision(llr), c)


@settings(max_examples=60, deadline=None)
@given(st.floats(-25, 25), st.floats(-25, 25))
def test_extrinsic_identity_before_clamp(post, prior):
    # inside the clamp range the identity L^p = L^e + L^a is exact
    assert extrinsic(post, prior, clip=np.inf) + prior == pytest.approx(post, abs=1e-12)
    e = extrinsic(post, prior)
    if abs(post - prior) < 30:
        assert e + prior == pytest.approx(post, abs=1e-12)

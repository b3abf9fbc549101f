import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ccs import signals as sg
from ccs.decoders import DecodeConfig, decode
from ccs.errors import BudgetError, FormatError, InvalidArgumentError
from ccs.expander import ExpanderMatrix, apply, generate


def pairwise_distinct_sums(values, tol=1e-10):
    """Reference check: compare every pair of subset sums directly."""
    sums = [sum(c) for r in range(len(values) + 1) for c in itertools.combinations(values, r)]
    for a, b in itertools.combinations(sums, 2):
        if abs(a - b) <= tol * max(1.0, abs(a), abs(b)):
            return False
    return True


def test_gaussian_signal_example():
    x = sg.sample_signal(100, 5, sg.SignalSpec(seed=1))
    assert x.k == 5 and len(set(x.support.tolist())) == 5
    assert len(set(x.values.tolist())) == 5 and np.all(x.values != 0)
    assert sg.is_dissociated(x)
    assert pairwise_distinct_sums(x.values.tolist())


def test_banded_signal_example():
    x = sg.sample_signal(100, 10, sg.SignalSpec("banded", band=0.5, seed=1))
    vals, counts = np.unique(x.values, return_counts=True)
    assert sorted(counts.tolist()) == [1, 1, 1, 1, 1, 5]


def test_band_zero_is_gaussian():
    a = sg.sample_signal(100, 10, sg.SignalSpec("banded", band=0.0, seed=4))
    b = sg.sample_signal(100, 10, sg.SignalSpec("gaussian-dissociated", seed=4))
    assert a == b


@pytest.mark.parametrize("band", [0.1, 0.3, 0.6, 0.9])
@pytest.mark.parametrize("k", [3, 10, 41])
def test_banded_group_size(band, k):
    x = sg.sample_signal(1000, k, sg.SignalSpec("banded", band=band, seed=k))
    _, counts = np.unique(x.values, return_counts=True)
    assert counts.max() == max(1, math.ceil(band * k))


def test_integer_signal_range():
    x = sg.sample_signal(200, 50, sg.SignalSpec("integer", seed=0))
    assert set(x.values.tolist()) <= set(range(1, 11))


def test_sample_deterministic():
    spec = sg.SignalSpec(seed=9)
    assert sg.sample_signal(50, 7, spec) == sg.sample_signal(50, 7, spec)


@pytest.mark.parametrize("k", [0, 10, 11])
def test_sample_domain(k):
    with pytest.raises(InvalidArgumentError):
        sg.sample_signal(10, k)


def test_spec_validation():
    with pytest.raises(InvalidArgumentError):
        sg.SignalSpec("poisson")
    with pytest.raises(InvalidArgumentError):
        sg.SignalSpec("banded", band=1.0)


def test_sparse_signal_validation():
    with pytest.raises(InvalidArgumentError):
        sg.SparseSignal(5, [1, 1], [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        sg.SparseSignal(5, [1, 2], [1.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        sg.SparseSignal(5, [1, 5], [1.0, 2.0])
    x = sg.SparseSignal.from_dense(np.array([0.0, 2.0, 0.0, -1.0]))
    assert x.support.tolist() == [1, 3]
    assert np.array_equal(x.to_dense(), [0.0, 2.0, 0.0, -1.0])


def test_dissociated_examples():
    assert sg.is_dissociated([1.0, 2.0, 4.0])
    assert not sg.is_dissociated([1.0, 2.0, 3.0])
    assert not sg.is_dissociated([1.0, -1.0])
    assert sg.is_dissociated(np.array([0.0, 1.0, 0.0, 2.0]))  # zeros ignored


def test_dissociated_twelve_normals():
    v = np.random.default_rng(12).standard_normal(12)
    sums = np.sort(sg.subset_sums(v))
    assert sums.size == 4096
    gaps = np.diff(sums)
    scale = np.maximum(1.0, np.maximum(np.abs(sums[1:]), np.abs(sums[:-1])))
    assert np.all(gaps > 1e-10 * scale)
    assert sg.is_dissociated(v)


def test_dissociated_budget():
    with pytest.raises(BudgetError):
        sg.is_dissociated(np.arange(1, 24, dtype=float))
    assert sg.is_dissociated(2.0 ** np.arange(23), max_k=23)


def test_gaussian_signals_dissociated_across_seeds():
    rng = np.random.default_rng(0)
    for seed in range(100):
        k = int(rng.integers(1, 19))
        x = sg.sample_signal(1000, k, sg.SignalSpec(seed=seed))
        assert sg.is_dissociated(x), seed


@pytest.mark.parametrize("k", [20, 22])
def test_large_gaussian_signals_dissociated(k):
    # 2**k sums packed into a few standard deviations: at the default 1e-10
    # bucketing, near-coincidences become likely past k ~ 20, so check
    # distinctness at a tolerance just above rounding error instead
    for seed in range(3):
        x = sg.sample_signal(1000, k, sg.SignalSpec(seed=seed))
        assert sg.is_dissociated(x, tol=1e-14), seed


@given(st.lists(st.integers(-6, 6).filter(bool), min_size=1, max_size=7))
@settings(max_examples=200, deadline=None)
def test_is_dissociated_matches_pairwise_oracle(ints):
    v = [float(t) for t in ints]
    assert sg.is_dissociated(v) == pairwise_distinct_sums(v)


@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.data())
@settings(max_examples=100, deadline=None)
def test_dissociation_survives_restriction(seed, k, data):
    x = sg.sample_signal(100, k, sg.SignalSpec(seed=seed))
    assert sg.is_dissociated(x)
    keep = data.draw(st.lists(st.integers(0, k - 1), unique=True))
    assert sg.is_dissociated(x.values[keep])


def test_values_match_rule():
    assert sg.values_match(1.0, 1.0 + 5e-11)
    assert not sg.values_match(1.0, 1.0 + 5e-10)
    assert sg.values_match(1e6, 1e6 * (1 + 5e-11))
    assert sg.values_match(0.0, 5e-11)


def test_scales():
    A = generate(20, 50, 3, seed=0)
    s = sg.scale_columns_dissociated(A, seed=3)
    assert s.shape == (50,) and np.all(s != 0)
    assert np.array_equal(s, sg.scale_columns_dissociated(A, seed=3))


def test_scaling_resolves_binary_ambiguity():
    # columns 0, 1 share row 2; columns 2, 3 cover the same multiset of rows,
    # so unscaled y = A (e0 + e1) has two binary 2-sparse explanations
    A = ExpanderMatrix(6, 7, 3, np.array(
        [[0, 1, 2], [2, 3, 4], [0, 2, 3], [1, 2, 4], [1, 3, 5], [0, 4, 5], [2, 4, 5]]
    ))
    x = np.zeros(7)
    x[[0, 1]] = 1.0
    y = apply(A, x)
    assert len(oracles.sparse_solutions(A, y, 2)) >= 2
    x_plain, _ = decode(A, y, DecodeConfig())
    assert not np.array_equal(x_plain, x)

    s = sg.scale_columns_dissociated(A, seed=3)
    ys = apply(A, s * x)
    sols = oracles.sparse_solutions(A, ys, 2)
    assert len(sols) == 1
    z, rep = decode(A, ys, DecodeConfig())
    assert rep.converged
    np.testing.assert_allclose(z / s, x, atol=1e-12)


def test_signal_round_trip(tmp_path):
    x = sg.sample_signal(1000, 30, sg.SignalSpec(seed=5))
    assert sg.loads(sg.dumps(x)) == x
    sg.save(x, tmp_path / "x.sig")
    assert sg.load(tmp_path / "x.sig") == x
    assert sg.dumps(x).splitlines()[0] == "ccs-signal v1 1000 30"


@pytest.mark.parametrize(
    "text",
    ["", "ccs-signal v2 10 1\n0 1.0\n", "ccs-signal v1 10 2\n0 1.0\n", "ccs-signal v1 10 1\n0 abc\n",
     "ccs-signal v1 10 1\n12 1.0\n"],
)
def test_signal_loads_rejects(text):
    with pytest.raises((FormatError, InvalidArgumentError)):
        sg.loads(text)

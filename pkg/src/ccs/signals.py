"""Sparse test signals: dissociated, banded and integer-valued."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BudgetError, FormatError, InvalidArgumentError
from .expander import ExpanderMatrix

SIGNAL_MAGIC = "ccs-signal v1"
KINDS = ("gaussian-dissociated", "banded", "integer")

# relative tolerance for "equal" reals, shared with the decoders
DEFAULT_VALUE_TOL = 1e-10
DEFAULT_DISSOCIATED_MAX_K = 22


@dataclass(frozen=True, eq=False)
class SparseSignal:
    n: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if support.ndim != 1 or support.shape != values.shape:
            raise InvalidArgumentError("support and values must be 1-d and aligned")
        if support.size > self.n:
            raise InvalidArgumentError("more nonzeros than the ambient dimension")
        if support.size and (support[0] < 0 or support[-1] >= self.n):
            raise InvalidArgumentError(f"support index out of range [0, {self.n})")
        if np.any(np.diff(support) <= 0):
            raise InvalidArgumentError("support must be strictly increasing")
        if np.any(values == 0):
            raise InvalidArgumentError("signal values must be nonzero")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return int(self.support.size)

    def to_dense(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.support] = self.values
        return x

    @classmethod
    def from_dense(cls, x: np.ndarray) -> "SparseSignal":
        x = np.asarray(x, dtype=float)
        support = np.flatnonzero(x)
        return cls(x.size, support, x[support])

    def __eq__(self, other):
        if not isinstance(other, SparseSignal):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.support, other.support)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class SignalSpec:
    kind: str = "gaussian-dissociated"
    band: float = 0.0
    seed: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown signal kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.band < 1.0:
            raise InvalidArgumentError(f"band must lie in [0, 1), got {self.band}")


def sample_signal(n: int, k: int, spec: SignalSpec = SignalSpec()) -> SparseSignal:
    """Draw a ``k``-sparse signal of length ``n``.

    The support is uniform over all ``k``-subsets. Values depend on
    ``spec.kind``: i.i.d. standard normal; banded, where ``ceil(band * k)``
    randomly placed entries share a single normal draw; or i.i.d. uniform
    integers in ``{1, ..., 10}``.
    """
    if not 0 < k < n:
        raise InvalidArgumentError(f"need 0 < k < n, got k={k}, n={n}")
    rng = np.random.default_rng(spec.seed)
    support = np.sort(rng.choice(n, size=k, replace=False))
    if spec.kind == "integer":
        values = rng.integers(1, 11, size=k).astype(float)
    else:
        values = rng.standard_normal(k)
        band_size = math.ceil(spec.band * k) if spec.kind == "banded" else 0
        if band_size:
            common = rng.standard_normal()
            values[rng.choice(k, size=band_size, replace=False)] = common
    # a continuous draw is zero with probability zero, but guard the contract
    values[values == 0] = 1.0
    return SparseSignal(n, support, values)


def subset_sums(values) -> np.ndarray:
    """All ``2**len(values)`` subset sums, empty set included."""
    sums = np.zeros(1)
    for v in np.asarray(values, dtype=float):
        sums = np.concatenate([sums, sums + v])
    return sums


def values_match(a, b, tol: float = DEFAULT_VALUE_TOL):
    """``|a - b| <= tol * max(1, |a|, |b|)``, elementwise."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return np.abs(a - b) <= tol * scale


def is_dissociated(
    x, tol: float = DEFAULT_VALUE_TOL, max_k: int = DEFAULT_DISSOCIATED_MAX_K
) -> bool:
    """True iff the subset sums of the nonzeros of ``x`` are pairwise distinct.

    ``x`` is a :class:`SparseSignal`, a dense vector, or a 1-d array of the
    nonzero values. Sums are compared with :func:`values_match`.
    """
    if isinstance(x, SparseSignal):
        values = x.values
    else:
        values = np.asarray(x, dtype=float)
        values = values[values != 0]
    if values.size > max_k:
        raise BudgetError(
            f"2**{values.size} subset sums exceed the budget 2**{max_k}; raise max_k"
        )
    sums = np.sort(subset_sums(values))
    return not bool(np.any(values_match(sums[1:], sums[:-1], tol)))


def scale_columns_dissociated(A: ExpanderMatrix, seed=None) -> np.ndarray:
    """I.i.d. standard-normal column scales.

    Measuring ``y = A @ (scales * x)`` and decoding ``z`` from ``y`` gives
    ``x = z / scales``; the scaled entries are dissociated almost surely
    even when ``x`` is binary or integer-valued.
    """
    scales = np.random.default_rng(seed).standard_normal(A.n)
    scales[scales == 0] = 1.0
    return scales


# -- serialisation ---------------------------------------------------------


def dumps(x: SparseSignal) -> str:
    lines = [f"{SIGNAL_MAGIC} {x.n} {x.k}"]
    lines.extend(f"{i} {v:.17g}" for i, v in zip(x.support.tolist(), x.values.tolist()))
    return "\n".join(lines) + "\n"


def loads(text: str) -> SparseSignal:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty signal file")
    head = lines[0].split()
    if head[:2] != SIGNAL_MAGIC.split() or len(head) != 4:
        raise FormatError(f"bad signal header: {lines[0]!r}")
    try:
        n, k = int(head[2]), int(head[3])
        rows = [ln.split() for ln in lines[1:]]
        if len(rows) != k or any(len(r) != 2 for r in rows):
            raise FormatError(f"expected {k} lines of 'index value'")
        support = np.array([int(r[0]) for r in rows], dtype=np.int64)
        values = np.array([float(r[1]) for r in rows])
        return SparseSignal(n, support, values)
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(f"malformed signal file: {exc}") from exc


def save(x: SparseSignal, path) -> None:
    Path(path).write_text(dumps(x))


def load(path) -> SparseSignal:
    return loads(Path(path).read_text())

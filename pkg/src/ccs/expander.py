"""Left d-regular binary measurement matrices.

A matrix is stored column-wise: ``cols[j]`` holds the ``d`` sorted row
indices of the ones in column ``j`` (the neighbourhood of left node ``j``
in the bipartite graph). Nothing here ever materialises the dense matrix
except :meth:`ExpanderMatrix.to_dense`, which exists for tests.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import BudgetError, FormatError, InvalidArgumentError

TEXT_MAGIC = "ccs-matrix v1"

# certify_expansion enumerates all subsets up to this size without asking
DEFAULT_CERTIFY_MAX_N = 24
DEFAULT_CERTIFY_MAX_K = 3


@dataclass(frozen=True, eq=False)
class ExpanderMatrix:
    m: int
    n: int
    d: int
    cols: np.ndarray

    def __post_init__(self):
        m, n, d = self.m, self.n, self.d
        if not (0 < d < m < n):
            raise InvalidArgumentError(
                f"need 0 < d < m < n, got m={m}, n={n}, d={d}"
            )
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        if cols.shape != (n, d):
            raise InvalidArgumentError(
                f"cols must have shape ({n}, {d}), got {cols.shape}"
            )
        if cols.size and (cols.min() < 0 or cols.max() >= m):
            raise InvalidArgumentError("row index out of range [0, m)")
        if d > 1 and not np.all(np.diff(cols, axis=1) > 0):
            raise InvalidArgumentError(
                "column row lists must be strictly increasing"
            )
        cols.setflags(write=False)
        object.__setattr__(self, "cols", cols)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    def __eq__(self, other):
        if not isinstance(other, ExpanderMatrix):
            return NotImplemented
        return (self.m, self.n, self.d) == (other.m, other.n, other.d) and bool(
            np.array_equal(self.cols, other.cols)
        )

    def __hash__(self):
        return hash((self.m, self.n, self.d, self.cols.tobytes()))

    def __repr__(self):
        return f"ExpanderMatrix(m={self.m}, n={self.n}, d={self.d})"

    @cached_property
    def row_index(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR-style transpose: columns of row ``i`` are
        ``indices[indptr[i]:indptr[i + 1]]``."""
        flat_rows = self.cols.ravel()
        flat_cols = np.repeat(np.arange(self.n), self.d)
        order = np.argsort(flat_rows, kind="stable")
        indptr = np.zeros(self.m + 1, dtype=np.int64)
        np.cumsum(np.bincount(flat_rows, minlength=self.m), out=indptr[1:])
        return indptr, flat_cols[order]

    def columns_touching(self, rows: np.ndarray) -> np.ndarray:
        """Sorted unique columns with a one in any of ``rows``."""
        indptr, indices = self.row_index
        rows = np.asarray(rows)
        parts = [indices[indptr[i] : indptr[i + 1]] for i in rows]
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(parts))

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.m, self.n))
        A[self.cols, np.arange(self.n)[:, None]] = 1.0
        return A


def generate(m: int, n: int, d: int, seed=None) -> ExpanderMatrix:
    """Draw each column's support uniformly from the ``C(m, d)`` subsets.

    Columns are independent. Uses Floyd's subset sampler, vectorised over
    columns, which gives the same distribution as a partial Fisher-Yates
    shuffle of ``range(m)`` per column.
    """
    for name, v in (("m", m), ("n", n), ("d", d)):
        if int(v) != v or v <= 0:
            raise InvalidArgumentError(f"{name} must be a positive integer, got {v}")
    m, n, d = int(m), int(n), int(d)
    if d >= m:
        raise InvalidArgumentError(f"need d < m, got d={d}, m={m}")
    if m >= n:
        raise InvalidArgumentError(f"need m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    cols = np.empty((n, d), dtype=np.int64)
    for i, top in enumerate(range(m - d, m)):
        t = rng.integers(0, top + 1, size=n)
        taken = (cols[:, :i] == t[:, None]).any(axis=1)
        cols[:, i] = np.where(taken, top, t)
    cols.sort(axis=1)
    return ExpanderMatrix(m, n, d, cols)


def apply(A: ExpanderMatrix, x: np.ndarray) -> np.ndarray:
    """Return ``y = A @ x`` touching only the nonzeros of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (A.n,):
        raise InvalidArgumentError(f"x must have length n={A.n}, got shape {x.shape}")
    nz = np.flatnonzero(x)
    return np.bincount(
        A.cols[nz].ravel(), weights=np.repeat(x[nz], A.d), minlength=A.m
    )


def _check_columns(A: ExpanderMatrix, S: Iterable[int]) -> np.ndarray:
    S = np.unique(np.asarray(list(S), dtype=np.int64))
    if S.size and (S[0] < 0 or S[-1] >= A.n):
        raise InvalidArgumentError(f"column index out of range [0, {A.n})")
    return S


def neighborhood(A: ExpanderMatrix, S: Iterable[int]) -> np.ndarray:
    S = _check_columns(A, S)
    return np.unique(A.cols[S].ravel())


def unique_neighborhood(A: ExpanderMatrix, S: Iterable[int]) -> np.ndarray:
    """Rows touched by exactly one column of ``S``."""
    S = _check_columns(A, S)
    rows, counts = np.unique(A.cols[S].ravel(), return_counts=True)
    return rows[counts == 1]


def column_overlaps(A: ExpanderMatrix) -> np.ndarray:
    """Pairwise overlap counts ``|N(j1) & N(j2)|`` for all column pairs
    (``n x n``, diagonal equal to ``d``). Intended for small matrices."""
    inc = np.zeros((A.n, A.m), dtype=np.int64)
    inc[np.arange(A.n)[:, None], A.cols] = 1
    return inc @ inc.T


@dataclass(frozen=True)
class SubsetProfile:
    """Neighbourhood sizes for every subset of one cardinality.

    ``subsets[t]`` is a sorted tuple of columns; ``n_all[t]`` is
    ``|N(S)|`` and ``n_unique[t]`` is ``|N1(S)|``.
    """

    size: int
    subsets: np.ndarray
    n_all: np.ndarray
    n_unique: np.ndarray


def subset_profiles(
    A: ExpanderMatrix, k: int, chunk: int = 1 << 16
) -> Iterator[SubsetProfile]:
    """Yield :class:`SubsetProfile` chunks for all ``S`` with ``1 <= |S| <= k``."""
    for s in range(1, k + 1):
        combos = itertools.combinations(range(A.n), s)
        while True:
            block = np.fromiter(
                itertools.chain.from_iterable(itertools.islice(combos, chunk)),
                dtype=np.int64,
            )
            if block.size == 0:
                break
            subsets = block.reshape(-1, s)
            rows = np.sort(A.cols[subsets].reshape(len(subsets), s * A.d), axis=1)
            if rows.shape[1] == 1:
                n_all = np.ones(len(rows), dtype=np.int64)
                n_unique = n_all.copy()
            else:
                new = rows[:, 1:] != rows[:, :-1]
                n_all = 1 + new.sum(axis=1)
                # an entry is unique if it differs from both neighbours
                left = np.concatenate([np.ones((len(rows), 1), bool), new], axis=1)
                right = np.concatenate([new, np.ones((len(rows), 1), bool)], axis=1)
                n_unique = (left & right).sum(axis=1)
            yield SubsetProfile(s, subsets, n_all, n_unique)


def expansion_holds(n_all, size, d, eps) -> np.ndarray | bool:
    """Strict expansion test ``|N(S)| > (1 - eps) d |S|`` (exact for
    rational ``eps``)."""
    eps = Fraction(eps)
    lhs = np.asarray(n_all, dtype=object) * eps.denominator
    return lhs > (eps.denominator - eps.numerator) * d * np.asarray(size, dtype=object)


def unique_neighbor_holds(n_unique, size, d, eps) -> np.ndarray | bool:
    """Strict test ``|N1(S)| > (1 - 2 eps) d |S|``."""
    eps = Fraction(eps)
    lhs = np.asarray(n_unique, dtype=object) * eps.denominator
    return lhs > (eps.denominator - 2 * eps.numerator) * d * np.asarray(
        size, dtype=object
    )


@dataclass(frozen=True)
class ExpansionReport:
    k_checked: int
    eps_star: Fraction
    lemma1_eps_star: Fraction
    exhaustive: bool = True

    def as_dict(self) -> dict:
        return {
            "k_checked": self.k_checked,
            "eps_star": float(self.eps_star),
            "eps_star_exact": str(self.eps_star),
            "lemma1_eps_star": float(self.lemma1_eps_star),
            "lemma1_eps_star_exact": str(self.lemma1_eps_star),
            "exhaustive": self.exhaustive,
        }


def certify_expansion(
    A: ExpanderMatrix, k: int, override_budget: bool = False
) -> ExpansionReport:
    """Exhaustively compute the tightest expansion parameters up to size ``k``.

    ``eps_star`` is the infimum of ``eps`` for which every ``S`` with
    ``|S| <= k`` has ``|N(S)| > (1 - eps) d |S|``, i.e. the maximum of
    ``1 - |N(S)| / (d |S|)``. ``lemma1_eps_star`` is the same quantity
    for the unique-neighbour bound ``|N1(S)| > (1 - 2 eps) d |S|``.
    Both are exact fractions.
    """
    if k < 1 or k > A.n:
        raise InvalidArgumentError(f"need 1 <= k <= n, got k={k}")
    if not override_budget and A.n > DEFAULT_CERTIFY_MAX_N and k > DEFAULT_CERTIFY_MAX_K:
        raise BudgetError(
            f"enumerating C({A.n}, <={k}) subsets exceeds the default budget "
            f"(n <= {DEFAULT_CERTIFY_MAX_N} or k <= {DEFAULT_CERTIFY_MAX_K}); "
            "pass override_budget=True"
        )
    eps = Fraction(0)
    eps1 = Fraction(0)
    for prof in subset_profiles(A, k):
        edges = A.d * prof.size
        eps = max(eps, Fraction(int(edges - prof.n_all.min()), edges))
        eps1 = max(eps1, Fraction(int(edges - prof.n_unique.min()), 2 * edges))
    return ExpansionReport(k, eps, eps1, exhaustive=True)


# -- serialisation ---------------------------------------------------------


def dumps_text(A: ExpanderMatrix) -> str:
    lines = [f"{TEXT_MAGIC} {A.m} {A.n} {A.d}"]
    lines.extend(" ".join(map(str, c)) for c in A.cols.tolist())
    return "\n".join(lines) + "\n"


def loads_text(text: str) -> ExpanderMatrix:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty matrix file")
    head = lines[0].split()
    if head[:2] != TEXT_MAGIC.split() or len(head) != 5:
        raise FormatError(f"bad matrix header: {lines[0]!r}")
    try:
        m, n, d = (int(v) for v in head[2:])
        body = [ln.split() for ln in lines[1:] if ln.strip()]
        if len(body) != n or any(len(r) != d for r in body):
            raise FormatError(f"expected {n} lines of {d} row indices")
        cols = np.array(body, dtype=np.int64).reshape(n, d)
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed matrix file: {exc}") from exc
    try:
        return ExpanderMatrix(m, n, d, cols)
    except InvalidArgumentError as exc:
        raise FormatError(str(exc)) from exc


def dumps_binary(A: ExpanderMatrix) -> bytes:
    return struct.pack("<3i", A.m, A.n, A.d) + A.cols.astype("<i4").tobytes()


def loads_binary(data: bytes) -> ExpanderMatrix:
    if len(data) < 12:
        raise FormatError("truncated binary matrix header")
    m, n, d = struct.unpack_from("<3i", data)
    if n <= 0 or d <= 0 or len(data) != 12 + 4 * n * d:
        raise FormatError(
            f"binary matrix payload has {len(data) - 12} bytes, expected {4 * max(n * d, 0)}"
        )
    cols = np.frombuffer(data, dtype="<i4", offset=12).astype(np.int64).reshape(n, d)
    try:
        return ExpanderMatrix(m, n, d, cols)
    except InvalidArgumentError as exc:
        raise FormatError(str(exc)) from exc


def save(A: ExpanderMatrix, path, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        path.write_bytes(dumps_binary(A))
    else:
        path.write_text(dumps_text(A))


def load(path) -> ExpanderMatrix:
    """Read either native format; the text form is detected by its header."""
    data = Path(path).read_bytes()
    if data.startswith(TEXT_MAGIC.encode()):
        return loads_text(data.decode())
    return loads_binary(data)

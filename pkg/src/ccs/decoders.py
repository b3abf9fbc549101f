"""Greedy decoders for expander measurements ``y = A x``.

All decoders share :class:`DecoderState` (estimate, residual, thresholds)
and the batched per-column score kernels below. A column's scores depend
only on ``r`` restricted to its ``d`` rows, so after a single-column update
only the columns sharing a row with it need fresh scores.

Algorithms
----------
serial-l0, parallel-l0
    Accept ``(j, w)`` when ``||r||_0 - ||r - w a_j||_0 >= alpha``. The
    candidate ``w`` is the majority value of ``r[N(j)]`` when
    ``alpha > d // 2`` and otherwise the entry at position ``iteration mod d``
    (the shifted score).
parallel-lddsr, lddsr
    Accept a nonzero value occurring more than ``d / 2`` times in ``r[N(j)]``.
er
    Update the column whose nonzero residual mode is most frequent.
smp
    ``x <- H_k[x + H_2k[median(r[N(j)])]]``.
ssmp
    Update the column whose median step most reduces ``||r||_1``;
    hard-threshold to ``k`` terms every ``(c - 1) k`` iterations.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidArgumentError
from .expander import ExpanderMatrix, apply
from .signals import DEFAULT_VALUE_TOL

ALGORITHMS = (
    "serial-l0",
    "parallel-l0",
    "parallel-lddsr",
    "lddsr",
    "er",
    "smp",
    "ssmp",
)

# |r_i| <= ZERO_REL * ||y||_inf counts as a zero residual entry
ZERO_REL = 1e-12


@dataclass
class DecodeConfig:
    algorithm: str = "parallel-l0"
    alpha: float = 2.0
    k_budget: int | None = None
    c: float = 2.0
    max_iters: int | None = None
    tol: float = 1e-6
    value_match_tol: float = DEFAULT_VALUE_TOL
    # None picks the shifted score exactly when alpha <= d // 2
    shifted: bool | None = None
    # "l0-reduction" (matches - zeros) or "frequency" (matches only)
    score: str = "l0-reduction"
    # stop once the residual has not improved for this many iterations
    patience: int | None = None
    # converge on an exactly zero residual instead of the relative l2 test
    exact: bool = False

    def validate(self, d: int) -> None:
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if self.algorithm in ("serial-l0", "parallel-l0") and not 1 < self.alpha <= d:
            raise InvalidArgumentError(f"alpha must lie in (1, d={d}], got {self.alpha}")
        if self.c <= 1:
            raise InvalidArgumentError(f"c must exceed 1, got {self.c}")
        if self.tol <= 0 or self.value_match_tol <= 0:
            raise InvalidArgumentError("tolerances must be positive")
        if self.score not in ("l0-reduction", "frequency"):
            raise InvalidArgumentError(f"unknown score rule {self.score!r}")
        if self.algorithm in ("smp", "ssmp") and (
            self.k_budget is None or self.k_budget < 0
        ):
            raise InvalidArgumentError(f"{self.algorithm} needs k_budget >= 0")
        if self.max_iters is not None and self.max_iters < 0:
            raise InvalidArgumentError("max_iters must be non-negative")


@dataclass
class DecodeReport:
    algorithm: str
    converged: bool
    iterations: int
    residual_l2_history: list[float]
    residual_l0_history: list[int]
    wall_time: float = 0.0
    exact: bool | None = None
    stop_reason: str = ""
    updates: int = 0
    column_visits: int | None = None
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


class UpdateEvent(NamedTuple):
    """Handed to an ``observer`` just before updates are applied.

    ``x_hat`` and ``r`` are read-only snapshots of the state the updates
    were selected against.
    """

    iteration: int
    cols: np.ndarray
    omegas: np.ndarray
    x_hat: np.ndarray
    r: np.ndarray


Observer = Callable[[UpdateEvent], None]


class ModeScore(NamedTuple):
    omega: float
    count: int
    majority: bool


class DecoderState:
    """Estimate ``x_hat`` and residual ``r = y - A x_hat`` for one run."""

    def __init__(self, A: ExpanderMatrix, y: np.ndarray, cfg: DecodeConfig):
        y = np.asarray(y, dtype=float)
        if y.shape != (A.m,):
            raise InvalidArgumentError(f"y must have length m={A.m}, got shape {y.shape}")
        self.A = A
        self.y = y
        self.cfg = cfg
        self.x_hat = np.zeros(A.n)
        self.r = y.copy()
        self.y_norm = float(np.linalg.norm(y))
        self.zero_thr = ZERO_REL * float(np.max(np.abs(y), initial=0.0))
        self.iteration = 0
        self.scores: np.ndarray | None = None

    @property
    def r_l0(self) -> int:
        return int(np.count_nonzero(np.abs(self.r) > self.zero_thr))

    @property
    def r_l1(self) -> float:
        return float(np.abs(self.r).sum())

    @property
    def r_l2(self) -> float:
        return float(np.linalg.norm(self.r))

    def converged(self) -> bool:
        if self.cfg.exact:
            return self.r_l0 == 0
        return self.r_l2 <= self.cfg.tol * self.y_norm

    def recompute_residual(self) -> float:
        """Re-derive ``r`` from ``x_hat``; returns the drift that was removed."""
        exact = self.y - apply(self.A, self.x_hat)
        drift = float(np.max(np.abs(exact - self.r), initial=0.0))
        self.r = exact
        return drift

    def update_column(self, j: int, omega: float) -> None:
        self.x_hat[j] += omega
        self.r[self.A.cols[j]] -= omega

    def gather(self, cols=None) -> np.ndarray:
        """``r`` restricted to each column's rows, shape ``(len(cols), d)``."""
        return self.r[self.A.cols if cols is None else self.A.cols[cols]]


# -- batched score kernels ----------------------------------------------------


def _match(a, b, tol):
    return np.abs(a - b) <= tol * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def majority_batch(R: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Boyer-Moore majority vote on each row of ``R`` plus a counting pass.

    Returns the candidate value and its exact frequency per row; the
    candidate is a true majority iff its count exceeds ``d // 2``.
    """
    c, d = R.shape
    cand = R[:, 0].copy()
    votes = np.ones(c, dtype=np.int64)
    for t in range(1, d):
        v = R[:, t]
        empty = votes == 0
        cand = np.where(empty, v, cand)
        same = _match(v, cand, tol)
        votes = np.where(empty, 1, np.where(same, votes + 1, votes - 1))
    count = _match(R, cand[:, None], tol).sum(axis=1)
    return cand, count


def mode_batch(R: np.ndarray, tol: float, zero_thr: float) -> tuple[np.ndarray, np.ndarray]:
    """Most frequent nonzero value per row and its frequency.

    Ties go to the earliest position. Rows whose entries are all zero get
    ``(0.0, 0)``.
    """
    counts = _match(R[:, :, None], R[:, None, :], tol).sum(axis=2)
    counts[np.abs(R) <= zero_thr] = 0
    best = np.argmax(counts, axis=1)
    rows = np.arange(R.shape[0])
    freq = counts[rows, best]
    omega = np.where(freq > 0, R[rows, best], 0.0)
    return omega, freq


def median_batch(R: np.ndarray) -> np.ndarray:
    """Lower median of each row."""
    mid = (R.shape[1] - 1) // 2
    return np.partition(R, mid, axis=1)[:, mid]


def l0_reduction_batch(R, omega, tol, zero_thr) -> np.ndarray:
    """``||r||_0 - ||r - w a_j||_0`` per row: matches gained minus zeros lost."""
    matches = _match(R, omega[:, None], tol).sum(axis=1)
    zeros = (np.abs(R) <= zero_thr).sum(axis=1)
    return matches - zeros


# -- single-column scores -----------------------------------------------------


def _column(r, A: ExpanderMatrix, j: int) -> np.ndarray:
    if not 0 <= j < A.n:
        raise InvalidArgumentError(f"column index {j} out of range [0, {A.n})")
    return np.asarray(r, dtype=float)[A.cols[j]]


def _zero_thr(r) -> float:
    return ZERO_REL * float(np.max(np.abs(r), initial=0.0))


def l0_reduction(
    r, A: ExpanderMatrix, j: int, omega: float, tol: float = DEFAULT_VALUE_TOL,
    zero_thr: float | None = None,
) -> int:
    """Exact change ``||r||_0 - ||r - omega a_j||_0`` in O(d).

    Entries equal to ``omega`` become zero; zero entries become
    ``-omega``; everything else stays nonzero.
    """
    if omega == 0:
        raise InvalidArgumentError("omega must be nonzero")
    rj = _column(r, A, j)
    thr = _zero_thr(r) if zero_thr is None else zero_thr
    return int(l0_reduction_batch(rj[None, :], np.array([omega]), tol, thr)[0])


def mode_score(r, A: ExpanderMatrix, j: int, tol: float = DEFAULT_VALUE_TOL) -> ModeScore:
    """Majority value of ``r[N(j)]`` via Boyer-Moore in O(d).

    When no value occurs more than ``d // 2`` times the result has
    ``majority=False`` and its count is at most ``d // 2``.
    """
    rj = _column(r, A, j)
    omega, count = majority_batch(rj[None, :], tol)
    count = int(count[0])
    return ModeScore(float(omega[0]), count, count > A.d // 2)


def shifted_score(
    r, A: ExpanderMatrix, j: int, ell: int, tol: float = DEFAULT_VALUE_TOL
) -> tuple[float, int]:
    """The ``(ell mod d)``-th entry of ``r[N(j)]`` and its frequency there."""
    rj = _column(r, A, j)
    omega = rj[ell % A.d]
    return float(omega), int(_match(rj, omega, tol).sum())


def median_score(r, A: ExpanderMatrix, j: int) -> float:
    """``argmin_w ||r - w a_j||_1``, the (lower) median of ``r[N(j)]``."""
    return float(median_batch(_column(r, A, j)[None, :])[0])


def hard_threshold(x: np.ndarray, k: int) -> np.ndarray:
    """Keep the ``k`` largest-magnitude entries; ties keep the smaller index."""
    x = np.asarray(x, dtype=float)
    if not 0 <= k <= x.size:
        raise InvalidArgumentError(f"need 0 <= k <= {x.size}, got {k}")
    out = np.zeros_like(x)
    if k == 0:
        return out
    keep = np.argsort(-np.abs(x), kind="stable")[:k]
    out[keep] = x[keep]
    return out


# -- shared engine ------------------------------------------------------------


_DEFAULT_MAX_ITERS = {
    "serial-l0": 200,  # sweeps
    "parallel-l0": 1000,
    "parallel-lddsr": 1000,
    "smp": 500,
}


def _resolve(cfg: DecodeConfig | None, algorithm: str, A: ExpanderMatrix) -> DecodeConfig:
    cfg = DecodeConfig(algorithm=algorithm) if cfg is None else replace(cfg, algorithm=algorithm)
    if algorithm == "parallel-lddsr":
        cfg = replace(cfg, alpha=A.d // 2 + 1, score="frequency", shifted=False)
    cfg.validate(A.d)
    if cfg.max_iters is None:
        cfg.max_iters = _DEFAULT_MAX_ITERS.get(algorithm, 20 * A.m)
    if cfg.patience is None:
        if algorithm in ("serial-l0", "parallel-l0", "parallel-lddsr"):
            cfg.patience = 5 * A.d
        elif algorithm == "smp":
            cfg.patience = 20
        else:
            cfg.patience = max(100, A.m)
    return cfg


def _use_shift(cfg: DecodeConfig, d: int) -> bool:
    return cfg.alpha <= d // 2 if cfg.shifted is None else cfg.shifted


class _Run:
    """Bookkeeping shared by every decoder: histories, patience, report."""

    def __init__(self, state: DecoderState, cfg: DecodeConfig, progress: str = "l0"):
        self.state = state
        self.cfg = cfg
        self.progress = progress
        self.l2 = [state.r_l2]
        self.l0 = [state.r_l0]
        self.best = self._measure()
        self.since_best = 0
        self.updates = 0
        self.t0 = time.perf_counter()

    def _measure(self) -> float:
        return self.state.r_l1 if self.progress == "l1" else self.state.r_l0

    def record(self) -> bool:
        """Log the current residual; False once patience is exhausted."""
        self.l2.append(self.state.r_l2)
        self.l0.append(self.state.r_l0)
        now = self._measure()
        if now < self.best:
            self.best = now
            self.since_best = 0
        else:
            self.since_best += 1
        return self.since_best < self.cfg.patience

    def report(self, stop_reason: str, x_true=None, column_visits=None):
        st = self.state
        converged = st.converged()
        if converged:
            stop_reason = "converged"
        exact = None
        if x_true is not None:
            x_true = np.asarray(x_true, dtype=float)
            scale = max(1.0, float(np.max(np.abs(x_true), initial=0.0)))
            exact = bool(np.max(np.abs(st.x_hat - x_true), initial=0.0) <= 1e-9 * scale)
        return DecodeReport(
            algorithm=self.cfg.algorithm,
            converged=converged,
            iterations=len(self.l2) - 1,
            residual_l2_history=self.l2,
            residual_l0_history=self.l0,
            wall_time=time.perf_counter() - self.t0,
            exact=exact,
            stop_reason=stop_reason,
            updates=self.updates,
            column_visits=column_visits,
            config=asdict(self.cfg),
        )


def _candidates(st: DecoderState, cols, pos: int, shifted: bool):
    """Candidate value and acceptance flag for each column in ``cols``."""
    cfg = st.cfg
    tol = cfg.value_match_tol
    R = st.gather(cols)
    d = st.A.d
    if shifted:
        omega = R[:, pos % d].copy()
    elif cfg.alpha > d // 2:
        omega, _ = majority_batch(R, tol)
    else:
        omega, _ = mode_batch(R, tol, st.zero_thr)
    if cfg.score == "frequency":
        score = _match(R, omega[:, None], tol).sum(axis=1)
    else:
        score = l0_reduction_batch(R, omega, tol, st.zero_thr)
    ok = (np.abs(omega) > st.zero_thr) & (score >= cfg.alpha)
    return omega, ok


def _parallel(A, y, cfg, x_true, observer):
    st = DecoderState(A, y, cfg)
    run = _Run(st, cfg)
    shifted = _use_shift(cfg, A.d)
    idle_limit = A.d if shifted else 1
    idle = 0
    reason = "max-iters"
    while not st.converged():
        if st.iteration >= cfg.max_iters:
            break
        omega, ok = _candidates(st, None, st.iteration, shifted)
        cols = np.flatnonzero(ok)
        if observer is not None and cols.size:
            observer(UpdateEvent(st.iteration, cols, omega[cols], st.x_hat.copy(), st.r.copy()))
        st.iteration += 1
        if cols.size:
            st.x_hat[cols] += omega[cols]
            st.recompute_residual()
            run.updates += cols.size
            idle = 0
        else:
            idle += 1
        if not run.record():
            reason = "no-progress"
            break
        if idle >= idle_limit:
            reason = "stall"
            break
    return st.x_hat, run.report(reason, x_true)


def decode_parallel_l0(A, y, cfg=None, *, x_true=None, observer=None):
    """Apply every qualifying ``(j, w)`` against the frozen residual, then
    recompute ``r`` once. One iteration costs O(dn)."""
    return _parallel(A, y, _resolve(cfg, "parallel-l0", A), x_true, observer)


def decode_parallel_lddsr(A, y, cfg=None, *, x_true=None, observer=None):
    """Parallel-l0 selection with the frequency score and threshold
    ``d // 2 + 1`` on majority candidates."""
    return _parallel(A, y, _resolve(cfg, "parallel-lddsr", A), x_true, observer)


def decode_serial_l0(A, y, cfg=None, *, x_true=None, observer=None):
    """Sweep the columns in order, updating ``r`` after each accepted column.

    One reported iteration is one sweep over all ``n`` columns; the report's
    ``column_visits`` holds the per-column count. A column's candidate only
    changes when a column sharing one of its rows is updated, so instead of
    visiting columns one by one the sweep jumps to the next accepting column
    and refreshes the candidates of the columns an update touched. This
    visits the same columns in the same order with the same residual as a
    literal loop.
    """
    cfg = _resolve(cfg, "serial-l0", A)
    st = DecoderState(A, y, cfg)
    run = _Run(st, cfg)
    shifted = _use_shift(cfg, A.d)
    idle_limit = A.d if shifted else 1
    idle = 0
    visits = 0
    reason = "max-iters"
    while not st.converged():
        if st.iteration >= cfg.max_iters:
            break
        pos = st.iteration
        omega, ok = _candidates(st, None, pos, shifted)
        j = -1
        sweep_updates = 0
        done = False
        while True:
            rest = ok[j + 1 :]
            if not rest.any():
                break
            j += 1 + int(np.argmax(rest))
            w = omega[j]
            if observer is not None:
                observer(UpdateEvent(st.iteration, np.array([j]), np.array([w]), st.x_hat.copy(), st.r.copy()))
            st.update_column(j, w)
            sweep_updates += 1
            if st.converged():
                done = True
                break
            touched = A.columns_touching(A.cols[j])
            touched = touched[touched > j]
            if touched.size:
                omega[touched], ok[touched] = _candidates(st, touched, pos, shifted)
        visits += j + 1 if done else A.n
        st.iteration += 1
        st.recompute_residual()
        run.updates += sweep_updates
        idle = idle + 1 if sweep_updates == 0 else 0
        if not run.record():
            reason = "no-progress"
            break
        if idle >= idle_limit:
            reason = "stall"
            break
    return st.x_hat, run.report(reason, x_true, column_visits=visits)


def _single_update(A, y, cfg, x_true, observer, scorer, select, progress="l0", every=None):
    """Engine for decoders that change one column per iteration.

    ``scorer(state, cols)`` returns ``(omega, score)`` for the given columns;
    ``select(omega, score)`` returns the column to update or ``None``.
    ``every`` optionally names a ``(period, hook)`` run after each
    ``period`` iterations; the hook may change ``x_hat`` freely.
    """
    st = DecoderState(A, y, cfg)
    run = _Run(st, cfg, progress)
    omega, score = scorer(st, None)
    reason = "max-iters"
    resync = 256
    while not st.converged():
        if st.iteration >= cfg.max_iters:
            break
        j = select(omega, score)
        if j is None:
            reason = "stall"
            break
        w = omega[j]
        if observer is not None:
            observer(UpdateEvent(st.iteration, np.array([j]), np.array([w]), st.x_hat.copy(), st.r.copy()))
        st.update_column(j, w)
        st.iteration += 1
        run.updates += 1
        if every is not None and st.iteration % every[0] == 0:
            every[1](st)
            st.recompute_residual()
            omega, score = scorer(st, None)
        elif st.iteration % resync == 0:
            if st.recompute_residual() > st.zero_thr:
                omega, score = scorer(st, None)
            else:
                touched = A.columns_touching(A.cols[j])
                omega[touched], score[touched] = scorer(st, touched)
        else:
            touched = A.columns_touching(A.cols[j])
            omega[touched], score[touched] = scorer(st, touched)
        if not run.record():
            reason = "no-progress"
            break
    st.recompute_residual()
    run.l2[-1] = st.r_l2
    run.l0[-1] = st.r_l0
    return st.x_hat, run.report(reason, x_true)


def decode_er(A, y, cfg=None, *, x_true=None, observer=None):
    """Expander Recovery without knowledge of the expansion parameter:
    update the column whose most frequent nonzero residual value occurs
    most often (ties to the smallest index)."""
    cfg = _resolve(cfg, "er", A)

    def scorer(st, cols):
        return mode_batch(st.gather(cols), cfg.value_match_tol, st.zero_thr)

    def select(omega, freq):
        j = int(np.argmax(freq))
        return j if freq[j] >= 2 else None

    return _single_update(A, y, cfg, x_true, observer, scorer, select)


def decode_lddsr(A, y, cfg=None, *, x_true=None, observer=None):
    """Update the first column holding a nonzero value more than ``d / 2``
    times in its residual neighbourhood."""
    cfg = _resolve(cfg, "lddsr", A)
    d = A.d

    def scorer(st, cols):
        omega, count = majority_batch(st.gather(cols), cfg.value_match_tol)
        ok = (np.abs(omega) > st.zero_thr) & (2 * count > d)
        return omega, ok

    def select(omega, ok):
        j = int(np.argmax(ok))
        return j if ok[j] else None

    return _single_update(A, y, cfg, x_true, observer, scorer, select)


def decode_ssmp(A, y, cfg=None, *, x_true=None, observer=None):
    """Sequential median steps chosen by largest l1 reduction, with
    ``x_hat <- H_k[x_hat]`` every ``(c - 1) k`` iterations."""
    cfg = _resolve(cfg, "ssmp", A)
    k = cfg.k_budget

    def scorer(st, cols):
        R = st.gather(cols)
        med = median_batch(R)
        gain = np.abs(R).sum(axis=1) - np.abs(R - med[:, None]).sum(axis=1)
        return med, gain

    def select(med, gain):
        j = int(np.argmax(gain))
        # gains below rounding noise cannot reduce ||r||_1
        return j if gain[j] > 1e-12 * max(1.0, abs(med[j])) else None

    def threshold(st):
        st.x_hat = hard_threshold(st.x_hat, k)

    period = max(1, math.ceil((cfg.c - 1) * k))
    return _single_update(A, y, cfg, x_true, observer, scorer, select, "l1", (period, threshold))


def decode_smp(A, y, cfg=None, *, x_true=None, observer=None):
    """Sparse Matching Pursuit: ``x <- H_k[x + H_2k[M(r)]]`` with ``M`` the
    per-column median. Stops when ``||r||_1`` grows (divergence)."""
    cfg = _resolve(cfg, "smp", A)
    k = cfg.k_budget
    st = DecoderState(A, y, cfg)
    run = _Run(st, cfg, "l1")
    reason = "max-iters"
    prev = st.r_l1
    while not st.converged():
        if st.iteration >= cfg.max_iters:
            break
        step = hard_threshold(median_batch(st.gather()), min(2 * k, A.n))
        cols = np.flatnonzero(step)
        if observer is not None and cols.size:
            observer(UpdateEvent(st.iteration, cols, step[cols], st.x_hat.copy(), st.r.copy()))
        new = hard_threshold(st.x_hat + step, k)
        st.iteration += 1
        if np.array_equal(new, st.x_hat):
            run.record()
            reason = "stall"
            break
        st.x_hat = new
        st.recompute_residual()
        run.updates += cols.size
        keep_going = run.record()
        now = st.r_l1
        if now > prev:
            reason = "diverged"
            break
        prev = now
        if not keep_going:
            reason = "no-progress"
            break
    return st.x_hat, run.report(reason, x_true)


_DISPATCH = {
    "serial-l0": decode_serial_l0,
    "parallel-l0": decode_parallel_l0,
    "parallel-lddsr": decode_parallel_lddsr,
    "lddsr": decode_lddsr,
    "er": decode_er,
    "smp": decode_smp,
    "ssmp": decode_ssmp,
}


def decode(A: ExpanderMatrix, y, cfg: DecodeConfig | None = None, *, x_true=None, observer=None):
    """Run ``cfg.algorithm``; returns ``(x_hat, DecodeReport)``."""
    cfg = cfg or DecodeConfig()
    if cfg.algorithm not in _DISPATCH:
        raise InvalidArgumentError(
            f"unknown algorithm {cfg.algorithm!r}; expected one of {ALGORITHMS}"
        )
    return _DISPATCH[cfg.algorithm](A, y, cfg, x_true=x_true, observer=observer)

"""Monte-Carlo recovery experiments.

Every trial draws its matrix and signal from a seed derived from
``(master seed, n, d, delta, rho, trial)``. The algorithm is deliberately
not part of the key, so all algorithms in a cell see identical problems,
and results do not depend on execution order or ``jobs``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .decoders import ALGORITHMS, DecodeConfig, decode
from .errors import InvalidArgumentError
from .expander import apply, generate
from .signals import SignalSpec, sample_signal

log = logging.getLogger(__name__)

RHO_CEILING = 0.99


@dataclass
class SweepConfig:
    n: int = 2**14
    d: int = 7
    algorithms: tuple[str, ...] = ("parallel-l0",)
    delta_grid: tuple[float, ...] = (0.1,)
    rho_start: float = 0.01
    rho_step: float = 0.01
    # explicit rho values for grid sweeps and fastest maps; ladders ignore it
    rho_grid: tuple[float, ...] | None = None
    trials_per_cell: int = 10
    success_rule: int = 1
    tol: float = 1e-6
    band: float = 0.0
    signal_kind: str = "gaussian-dissociated"
    alpha: float = 2.0
    c: float = 2.0
    decoder_tol: float = 1e-6
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        self.delta_grid = tuple(float(v) for v in self.delta_grid)
        if self.rho_grid is not None:
            self.rho_grid = tuple(float(v) for v in self.rho_grid)
        self.validate()

    def validate(self) -> None:
        if not self.algorithms or not self.delta_grid:
            raise InvalidArgumentError("algorithms and delta_grid must be nonempty")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise InvalidArgumentError(f"unknown algorithm {a!r}")
        if any(not 0 < dl < 1 for dl in self.delta_grid):
            raise InvalidArgumentError("every delta must lie in (0, 1)")
        if not (0 < self.rho_start < 1 and 0 < self.rho_step < 1):
            raise InvalidArgumentError("rho_start and rho_step must lie in (0, 1)")
        if self.rho_grid is not None and any(not 0 < r < 1 for r in self.rho_grid):
            raise InvalidArgumentError("every rho must lie in (0, 1)")
        if self.trials_per_cell < 1 or self.success_rule < 0:
            raise InvalidArgumentError("need trials_per_cell >= 1 and success_rule >= 0")
        if not 0 <= self.band < 1:
            raise InvalidArgumentError("band must lie in [0, 1)")

    def config_hash(self) -> str:
        payload = asdict(self)
        payload.pop("jobs")
        blob = json.dumps(payload, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def signal_kind_for_band(self) -> str:
        return "banded" if self.band > 0 else self.signal_kind


@dataclass
class CellRecord:
    algorithm: str
    delta: float
    rho: float
    n: int
    d: int
    band: float
    m: int
    k: int
    trials: int
    successes: int
    mean_time_success: float | None
    mean_iters_success: float | None
    outcomes: list[bool] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    def csv_row(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "delta": self.delta,
            "rho": self.rho,
            "n": self.n,
            "d": self.d,
            "band": self.band,
            "trials": self.trials,
            "successes": self.successes,
            "mean_time_ms": "" if self.mean_time_success is None else 1e3 * self.mean_time_success,
            "mean_iters": "" if self.mean_iters_success is None else self.mean_iters_success,
        }


CSV_COLUMNS = (
    "algorithm", "delta", "rho", "n", "d", "band",
    "trials", "successes", "mean_time_ms", "mean_iters",
)


def problem_size(n: int, delta: float, rho: float) -> tuple[int, int]:
    """``(m, k)`` for a cell: ``m = round(delta n)``, ``k = round(rho delta n)``."""
    return round(delta * n), round(rho * delta * n)


def trial_seed(master: int, n: int, d: int, delta: float, rho: float, trial: int) -> np.random.SeedSequence:
    key = (n, d, round(delta * 1e9), round(rho * 1e9), trial)
    return np.random.SeedSequence(master, spawn_key=key)


def _run_trial(args):
    cfg, delta, rho, algorithm, trial = args
    m, k = problem_size(cfg.n, delta, rho)
    mat_ss, sig_ss = trial_seed(cfg.seed, cfg.n, cfg.d, delta, rho, trial).spawn(2)
    A = generate(m, cfg.n, cfg.d, seed=mat_ss)
    spec = SignalSpec(cfg.signal_kind_for_band(), cfg.band, sig_ss)
    x = sample_signal(cfg.n, k, spec).to_dense()
    y = apply(A, x)
    dcfg = DecodeConfig(
        algorithm=algorithm, alpha=cfg.alpha, k_budget=k, c=cfg.c, tol=cfg.decoder_tol
    )
    t0 = time.perf_counter()
    x_hat, report = decode(A, y, dcfg)
    elapsed = time.perf_counter() - t0
    ok = bool(np.linalg.norm(x_hat - x) <= cfg.tol * np.linalg.norm(x))
    return ok, report.iterations, elapsed


def _map(fn, jobs_args, jobs):
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, jobs_args))
    return [fn(a) for a in jobs_args]


def run_cell(cfg: SweepConfig, delta: float, rho: float, algorithm: str) -> CellRecord:
    """Run ``cfg.trials_per_cell`` independent problems at one ``(delta, rho)``.

    A trial succeeds when ``||x_hat - x||_2 <= tol ||x||_2``; time and
    iteration means are over successful trials only.
    """
    m, k = problem_size(cfg.n, delta, rho)
    if k < 1:
        raise InvalidArgumentError(f"k = round(rho*delta*n) = {k}; need k >= 1")
    if not cfg.d < m:
        raise InvalidArgumentError(f"need d < m, got d={cfg.d}, m={m}")
    args = [(cfg, delta, rho, algorithm, t) for t in range(cfg.trials_per_cell)]
    results = _map(_run_trial, args, cfg.jobs)
    outcomes = [r[0] for r in results]
    iters = [r[1] for r in results]
    times = [r[2] for r in results]
    good = [i for i, ok in enumerate(outcomes) if ok]
    return CellRecord(
        algorithm=algorithm,
        delta=delta,
        rho=rho,
        n=cfg.n,
        d=cfg.d,
        band=cfg.band,
        m=m,
        k=k,
        trials=cfg.trials_per_cell,
        successes=len(good),
        mean_time_success=float(np.mean([times[i] for i in good])) if good else None,
        mean_iters_success=float(np.mean([iters[i] for i in good])) if good else None,
        outcomes=outcomes,
        iterations=iters,
        times=times,
    )


def climb_rho(cfg: SweepConfig, delta: float, algorithm: str) -> list[CellRecord]:
    """Ascend ``rho = rho_start, rho_start + rho_step, ...`` until a rung has
    fewer than ``success_rule`` successes (that rung is included) or the
    ladder reaches ``RHO_CEILING``."""
    if cfg.rho_start < cfg.rho_step:
        raise InvalidArgumentError("need rho_start >= rho_step")
    rungs = []
    i = 0
    while True:
        rho = round(cfg.rho_start + i * cfg.rho_step, 10)
        if rho > RHO_CEILING + 1e-12:
            break
        m, k = problem_size(cfg.n, delta, rho)
        if k >= m:
            break
        if k < 1:
            i += 1
            continue
        cell = run_cell(cfg, delta, rho, algorithm)
        rungs.append(cell)
        log.info("%s delta=%.4f rho=%.3f: %d/%d", algorithm, delta, rho, cell.successes, cell.trials)
        if cell.successes < cfg.success_rule:
            break
        i += 1
    return rungs


@dataclass
class TransitionFit:
    rho_star: float
    slope: float
    intercept: float
    degenerate: bool = False
    separated: bool = False
    extrapolated: bool = False
    delta: float | None = None
    algorithm: str | None = None


def _logistic_newton(x, s, t, max_steps=100, grad_tol=1e-9):
    """MLE of ``p(x) = 1 / (1 + exp(-(a + b x)))`` for ``s`` successes in
    ``t`` trials. Returns ``(a, b, converged)``."""
    a, b = 0.0, 0.0
    for _ in range(max_steps):
        z = np.clip(a + b * x, -700, 700)
        p = 1.0 / (1.0 + np.exp(-z))
        g = np.array([np.sum(s - t * p), np.sum((s - t * p) * x)])
        if np.max(np.abs(g)) <= grad_tol * max(1.0, t.sum()):
            return a, b, True
        w = t * p * (1 - p)
        H = np.array([[w.sum(), (w * x).sum()], [(w * x).sum(), (w * x * x).sum()]])
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return a, b, False
        a, b = a + step[0], b + step[1]
    return a, b, False


def fit_transition(records) -> TransitionFit:
    """Logistic fit of success rate against rho; ``rho_star`` is the 50% point.

    ``records`` holds :class:`CellRecord` objects or ``(rho, successes,
    trials)`` triples. All-success or all-failure data cannot be fitted and
    yields the top (resp. bottom) rung with ``degenerate`` set. Perfectly
    separated data has no finite MLE; Newton then drives the slope up while
    the 50% point settles at the separating midpoint, reported with
    ``separated`` set.
    """
    rows = [
        (r.rho, r.successes, r.trials) if isinstance(r, CellRecord) else tuple(r)
        for r in records
    ]
    if not rows:
        raise InvalidArgumentError("no rungs to fit")
    rho = np.array([r[0] for r in rows], dtype=float)
    s = np.array([r[1] for r in rows], dtype=float)
    t = np.array([r[2] for r in rows], dtype=float)
    if np.all(s == t) or np.all(s == 0):
        top = np.all(s == t)
        return TransitionFit(
            float(rho.max() if top else rho.min()), 0.0, 0.0, degenerate=True
        )
    center = rho.mean()
    scale = max(rho.std(), 1e-12)
    u = (rho - center) / scale
    a_u, b_u, ok = _logistic_newton(u, s, t)
    b = b_u / scale
    a = a_u - b_u * center / scale
    separated = bool((not ok) or abs(b_u) > 1e3)
    rho_star = -a / b if b != 0 else float("nan")
    extrapolated = bool(not (rho.min() <= rho_star <= rho.max()))
    return TransitionFit(
        float(rho_star), float(b), float(a), separated=separated, extrapolated=extrapolated
    )


@dataclass
class SweepResult:
    config: SweepConfig
    cells: list[CellRecord]
    transitions: list[TransitionFit]

    def transition(self, algorithm: str, delta: float) -> TransitionFit:
        for f in self.transitions:
            if f.algorithm == algorithm and math.isclose(f.delta, delta):
                return f
        raise KeyError((algorithm, delta))

    def summary(self) -> dict:
        return {
            "master_seed": self.config.seed,
            "config_hash": self.config.config_hash(),
            "config": asdict(self.config),
            "transitions": [asdict(f) for f in self.transitions],
        }


def sweep(cfg: SweepConfig) -> SweepResult:
    """Phase-transition sweep: a rho ladder and logistic fit per
    ``(delta, algorithm)``, or a plain grid when ``cfg.rho_grid`` is set."""
    cells: list[CellRecord] = []
    fits: list[TransitionFit] = []
    for delta in cfg.delta_grid:
        for alg in cfg.algorithms:
            if cfg.rho_grid is None:
                rungs = climb_rho(cfg, delta, alg)
            else:
                rungs = [run_cell(cfg, delta, rho, alg) for rho in cfg.rho_grid]
            cells.extend(rungs)
            if rungs:
                fit = fit_transition(rungs)
                fit.delta, fit.algorithm = delta, alg
                fits.append(fit)
    return SweepResult(cfg, cells, fits)


@dataclass
class MapCell:
    delta: float
    rho: float
    winner: str | None
    mean_time: float | None
    records: dict[str, CellRecord]


def fastest_map(cfg: SweepConfig) -> list[MapCell]:
    """Per ``(delta, rho)`` cell, the algorithm with the lowest mean recovery
    time among those recovering at least half of the trials."""
    if cfg.rho_grid is None:
        raise InvalidArgumentError("fastest_map needs cfg.rho_grid")
    out = []
    for delta in cfg.delta_grid:
        for rho in cfg.rho_grid:
            recs = {alg: run_cell(cfg, delta, rho, alg) for alg in cfg.algorithms}
            eligible = [
                (r.mean_time_success, alg)
                for alg, r in recs.items()
                if 2 * r.successes >= r.trials and r.successes > 0
            ]
            if eligible:
                t, alg = min(eligible)
                out.append(MapCell(delta, rho, alg, t, recs))
            else:
                out.append(MapCell(delta, rho, None, None, recs))
    return out


@dataclass
class ScalingRow:
    n: int
    mean_time: float | None
    successes: int
    trials: int
    ratio: float | None = None
    flagged: bool = False


def scaling_study(
    delta: float,
    sizes,
    rho: float,
    trials: int = 10,
    d: int = 7,
    seed: int = 0,
    algorithm: str = "parallel-l0",
) -> list[ScalingRow]:
    """Mean recovery time per ``n`` at fixed ``(delta, rho)``.

    ``ratio`` on row ``i`` is ``t[i + 1] / t[i]``. Rows with fewer than half
    the trials recovered are flagged and give no ratio.
    """
    sizes = list(sizes)
    for a, b in zip(sizes, sizes[1:]):
        if b != 4 * a:
            raise InvalidArgumentError("sizes must grow by a factor of 4")
    rows = []
    for n in sizes:
        cfg = SweepConfig(
            n=n, d=d, algorithms=(algorithm,), delta_grid=(delta,),
            trials_per_cell=trials, seed=seed,
        )
        cell = run_cell(cfg, delta, rho, algorithm)
        rows.append(
            ScalingRow(n, cell.mean_time_success, cell.successes, trials,
                       flagged=2 * cell.successes < trials)
        )
    for cur, nxt in zip(rows, rows[1:]):
        if not (cur.flagged or nxt.flagged):
            cur.ratio = nxt.mean_time / cur.mean_time
    return rows


# -- output ---------------------------------------------------------------


def write_sweep(result: SweepResult, outdir, plotdata: bool = False) -> dict[str, Path]:
    """Write ``sweep-<hash>.csv`` and ``sweep-<hash>.json`` (plus plot data
    files when asked); returns the paths written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    h = result.config.config_hash()
    paths = {"csv": outdir / f"sweep-{h}.csv", "json": outdir / f"sweep-{h}.json"}
    with paths["csv"].open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for c in result.cells:
            w.writerow(c.csv_row())
    paths["json"].write_text(json.dumps(result.summary(), indent=2, default=list))
    if plotdata:
        paths.update(write_plotdata(result, outdir))
    return paths


def _write_xy(path: Path, xlabel: str, ylabel: str, pts) -> None:
    lines = [f"# {xlabel} {ylabel}"] + [f"{x:.10g} {y:.10g}" for x, y in pts]
    path.write_text("\n".join(lines) + "\n")


def write_plotdata(result: SweepResult, outdir) -> dict[str, Path]:
    """Two-column data files: transition curves (delta, rho*), and per
    delta the mean time (ms) and mean iterations against rho."""
    outdir = Path(outdir)
    h = result.config.config_hash()
    paths = {}
    for alg in result.config.algorithms:
        fits = sorted((f.delta, f.rho_star) for f in result.transitions if f.algorithm == alg)
        p = outdir / f"plot-{h}-transition-{alg}.dat"
        _write_xy(p, "delta", "rho_star", fits)
        paths[f"transition-{alg}"] = p
        for delta in result.config.delta_grid:
            cells = [c for c in result.cells if c.algorithm == alg and c.delta == delta and c.successes]
            tag = f"{alg}-delta{delta:g}"
            p = outdir / f"plot-{h}-time-{tag}.dat"
            _write_xy(p, "rho", "mean_time_ms", [(c.rho, 1e3 * c.mean_time_success) for c in cells])
            paths[f"time-{tag}"] = p
            p = outdir / f"plot-{h}-iterations-{tag}.dat"
            _write_xy(p, "rho", "mean_iters", [(c.rho, c.mean_iters_success) for c in cells])
            paths[f"iterations-{tag}"] = p
    return paths

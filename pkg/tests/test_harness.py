import csv
import json

import numpy as np
import pytest

from ccs import harness as hv
from ccs.errors import InvalidArgumentError
from ccs.harness import SweepConfig


def small_cfg(**kw):
    base = dict(n=2048, d=7, algorithms=("parallel-l0",), delta_grid=(0.1,), trials_per_cell=5, seed=3)
    base.update(kw)
    return SweepConfig(**base)


# -- logistic fit --------------------------------------------------------------------


def test_fit_step_midpoint():
    rows = [(0.01 * (i + 1), s, 10) for i, s in enumerate([10, 10, 10, 0, 0, 0])]
    fit = hv.fit_transition(rows)
    assert 0.03 < fit.rho_star < 0.04
    assert fit.slope < 0 and not fit.degenerate


def test_fit_degenerate_ladders():
    up = hv.fit_transition([(0.01, 10, 10), (0.02, 10, 10), (0.03, 10, 10)])
    assert up.degenerate and up.rho_star == 0.03
    down = hv.fit_transition([(0.01, 0, 10), (0.02, 0, 10)])
    assert down.degenerate and down.rho_star == 0.01
    with pytest.raises(InvalidArgumentError):
        hv.fit_transition([])


def test_fit_recovers_known_logistic():
    a, b = 12.0, -40.0  # 50% point at 0.3
    rng = np.random.default_rng(0)
    rho = np.linspace(0.05, 0.55, 26)
    t = np.full(rho.size, 4000)
    s = rng.binomial(t, 1 / (1 + np.exp(-(a + b * rho))))
    fit = hv.fit_transition(list(zip(rho, s, t)))
    assert abs(fit.intercept - a) <= 0.05 * abs(a)
    assert abs(fit.slope - b) <= 0.05 * abs(b)
    assert abs(fit.rho_star - 0.3) <= 0.05 * 0.3
    assert not fit.separated and not fit.extrapolated


def test_fit_matches_direct_likelihood_maximum():
    rows = [(0.1, 9, 10), (0.2, 8, 10), (0.3, 5, 10), (0.4, 3, 10), (0.5, 0, 10)]
    fit = hv.fit_transition(rows)
    rho = np.array([r[0] for r in rows])
    s = np.array([r[1] for r in rows], float)
    t = np.array([r[2] for r in rows], float)

    def loglik(a, b):
        p = 1 / (1 + np.exp(-(a + b * rho)))
        return float(np.sum(s * np.log(p) + (t - s) * np.log(1 - p)))

    best = loglik(fit.intercept, fit.slope)
    for da in (-0.05, 0.05):
        for db in (-0.2, 0.2):
            assert best >= loglik(fit.intercept + da, fit.slope + db)


# -- cells and ladders -------------------------------------------------------------------


def test_problem_size():
    assert hv.problem_size(2**14, 0.1, 0.1) == (1638, 164)


def test_run_cell_far_below_transition():
    cfg = SweepConfig(n=2**14, trials_per_cell=10, seed=0)
    rec = hv.run_cell(cfg, 0.1, 0.02, "parallel-l0")
    assert rec.successes == rec.trials == 10
    assert rec.mean_time_success > 0 and rec.mean_iters_success >= 1


def test_run_cell_far_above_transition():
    cfg = SweepConfig(n=2**14, algorithms=("smp",), trials_per_cell=10, seed=0)
    rec = hv.run_cell(cfg, 0.1, 0.9, "smp")
    assert rec.successes == 0 and rec.mean_time_success is None
    assert rec.csv_row()["mean_time_ms"] == ""


def test_run_cell_deterministic_and_schedule_free():
    cfg = small_cfg(trials_per_cell=6)
    a = hv.run_cell(cfg, 0.1, 0.2, "parallel-l0")
    b = hv.run_cell(cfg, 0.1, 0.2, "parallel-l0")
    c = hv.run_cell(small_cfg(trials_per_cell=6, jobs=2), 0.1, 0.2, "parallel-l0")
    assert a.outcomes == b.outcomes == c.outcomes
    assert a.iterations == b.iterations == c.iterations


def test_algorithms_share_problems():
    cfg = small_cfg()
    seqs = [hv.trial_seed(cfg.seed, cfg.n, cfg.d, 0.1, 0.2, t) for t in range(3)]
    again = [hv.trial_seed(cfg.seed, cfg.n, cfg.d, 0.1, 0.2, t) for t in range(3)]
    for s1, s2 in zip(seqs, again):
        assert s1.generate_state(4).tolist() == s2.generate_state(4).tolist()
    assert seqs[0].generate_state(4).tolist() != seqs[1].generate_state(4).tolist()


def test_run_cell_rejects_empty_signal():
    with pytest.raises(InvalidArgumentError):
        hv.run_cell(small_cfg(n=100), 0.1, 0.01, "parallel-l0")


def test_ladder_stops_at_start_when_always_failing(monkeypatch):
    monkeypatch.setattr(hv, "_run_trial", lambda args: (False, 1, 0.0))
    rungs = hv.climb_rho(small_cfg(), 0.1, "parallel-l0")
    assert [r.rho for r in rungs] == [0.01]


def test_ladder_reaches_ceiling_when_always_succeeding(monkeypatch):
    monkeypatch.setattr(hv, "_run_trial", lambda args: (True, 1, 1e-3))
    rungs = hv.climb_rho(small_cfg(n=1000), 0.1, "parallel-l0")
    assert rungs[-1].rho == pytest.approx(0.99)
    assert len(rungs) == 99


def test_ladder_requires_start_at_least_step():
    with pytest.raises(InvalidArgumentError):
        hv.climb_rho(small_cfg(rho_start=0.01, rho_step=0.02), 0.1, "parallel-l0")


def test_parallel_l0_ladder_top():
    cfg = SweepConfig(n=2**14, rho_start=0.2, seed=0)
    rungs = hv.climb_rho(cfg, 0.1, "parallel-l0")
    assert rungs[-1].rho >= 0.25


@pytest.mark.parametrize(
    "kw",
    [dict(algorithms=()), dict(algorithms=("nope",)), dict(delta_grid=(1.0,)), dict(rho_start=0.0),
     dict(trials_per_cell=0), dict(band=1.0), dict(rho_grid=(0.0,))],
)
def test_config_validation(kw):
    with pytest.raises(InvalidArgumentError):
        small_cfg(**kw)


def test_config_hash_ignores_jobs():
    assert small_cfg().config_hash() == small_cfg(jobs=4).config_hash()
    assert small_cfg().config_hash() != small_cfg(seed=4).config_hash()


# -- sweeps and outputs ----------------------------------------------------------------


def test_sweep_writes_reproducible_artifacts(tmp_path):
    cfg = small_cfg(algorithms=("parallel-l0", "smp"), rho_start=0.05, rho_step=0.05)
    res = hv.sweep(cfg)
    assert {f.algorithm for f in res.transitions} == {"parallel-l0", "smp"}
    paths = hv.write_sweep(res, tmp_path / "a", plotdata=True)
    with paths["csv"].open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(hv.CSV_COLUMNS)
    assert len(rows) == len(res.cells)
    summary = json.loads(paths["json"].read_text())
    assert summary["master_seed"] == cfg.seed
    assert summary["config_hash"] == cfg.config_hash() and cfg.config_hash() in paths["csv"].name
    assert len(summary["transitions"]) == 2
    assert any(k.startswith("transition-") for k in paths)
    for key, p in paths.items():
        assert p.exists(), key

    again = hv.write_sweep(hv.sweep(cfg), tmp_path / "b")
    with again["csv"].open() as fh:
        rows2 = list(csv.DictReader(fh))
    strip = lambda rs: [(r["algorithm"], r["rho"], r["successes"], r["mean_iters"]) for r in rs]
    assert strip(rows) == strip(rows2)


def test_grid_sweep_single_cell():
    res = hv.sweep(small_cfg(rho_grid=(0.1,)))
    assert len(res.cells) == 1
    assert res.transition("parallel-l0", 0.1).degenerate


def test_fastest_map_single_algorithm():
    cells = hv.fastest_map(small_cfg(rho_grid=(0.1, 0.9)))
    assert cells[0].winner == "parallel-l0"
    assert cells[1].winner is None


def test_fastest_map_only_success_wins(monkeypatch):
    def fake(args):
        cfg, delta, rho, alg, t = args
        return (alg == "er", 5, 10.0 if alg == "er" else 1e-6)

    monkeypatch.setattr(hv, "_run_trial", fake)
    cells = hv.fastest_map(small_cfg(algorithms=("parallel-l0", "er"), rho_grid=(0.1,)))
    assert cells[0].winner == "er"


def test_fastest_map_prefers_parallel_l0():
    cfg = SweepConfig(
        n=2**14, algorithms=("parallel-l0", "er", "ssmp"), rho_grid=(0.15,), trials_per_cell=4, seed=0
    )
    (cell,) = hv.fastest_map(cfg)
    assert cell.winner == "parallel-l0"
    with pytest.raises(InvalidArgumentError):
        hv.fastest_map(small_cfg())


def test_scaling_study_small():
    rows = hv.scaling_study(0.05, [2**12, 2**14], 0.05, trials=4, seed=1)
    again = hv.scaling_study(0.05, [2**12, 2**14], 0.05, trials=4, seed=1)
    assert [r.successes for r in rows] == [r.successes for r in again]
    assert rows[0].ratio is not None and rows[0].ratio > 0 and rows[1].ratio is None
    with pytest.raises(InvalidArgumentError):
        hv.scaling_study(0.05, [2**12, 2**13], 0.05)


def test_scaling_flags_failing_rows():
    rows = hv.scaling_study(0.1, [2**10, 2**12], 0.9, trials=2)
    assert all(r.flagged for r in rows) and rows[0].ratio is None

"""Alternating optimisation, single trials, Monte-Carlo sweeps and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .beamform import solve_p3
from .gld import GldConfig, gld_solve
from .metrics import is_feasible, pn_interference, power_ok, rate, su_sir
from .npsp import NpspConfig, PhaseCodebook, npsp_solve
from .scenario import ProblemData, ReflectVector, Scenario, assemble_problem, channel_seed, generate_channels

__all__ = [
    "AoConfig",
    "AoResult",
    "TrialResult",
    "SweepRow",
    "SWEEPS",
    "DEFAULT_VALUES",
    "CSV_COLUMNS",
    "ao_solve",
    "run_trial",
    "run_sweep",
    "emit_csv",
    "read_csv",
]

# stream keys for the per-trial random draws that are not channels
_INIT_KEY, _RANDOM_KEY = 7, 8

SWEEPS = {"pmax": "p_max_dbm", "pns": "j_pns", "gamma": "gamma_bar_dbm", "n": "n_elements"}
DEFAULT_VALUES = {
    "pmax": [-2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
    "pns": [1, 2, 3, 4],
    "gamma": [-125.0, -120.0, -115.0, -110.0, -105.0],
    "n": [1, 8, 16, 32],
}
CSV_COLUMNS = [
    "sweep_param",
    "value",
    "rate_continuous_mean",
    "rate_continuous_se",
    "rate_discrete_mean",
    "rate_discrete_se",
    "rate_no_ris_mean",
    "rate_random_mean",
    "discrete_found_fraction",
    "trials",
    "seed",
]


@dataclass(frozen=True)
class AoConfig:
    max_rounds: int = 20
    rel_tol: float = 1e-4
    gld: GldConfig = GldConfig()
    npsp: NpspConfig = NpspConfig()
    # add the receiver noise to the objective denominator (SINR); without it
    # the RIS can cancel all interference and the SIR is unbounded
    noise_in_objective: bool = True

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AoConfig":
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown AO keys: {sorted(unknown)}")
        if isinstance(data.get("gld"), dict):
            data["gld"] = GldConfig(**data["gld"])
        if isinstance(data.get("npsp"), dict):
            data["npsp"] = NpspConfig(**data["npsp"])
        return cls(**data)


@dataclass
class AoResult:
    theta: ReflectVector
    v: np.ndarray
    sir_trace: list[float]
    degenerate: bool = False
    gld_rows: list[tuple] = field(default_factory=list)

    def __iter__(self):
        return iter((self.theta, self.v, self.sir_trace))


def ao_solve(
    pd: ProblemData,
    scenario: Scenario,
    cfg: AoConfig,
    rng: np.random.Generator,
    record: bool = False,
) -> AoResult:
    """Alternate beamforming and reflect-vector design until the SIR stalls.

    The start point is ``[0.9 u; 1]`` with random unit-modulus ``u``; the
    beamformer of each round makes the pair feasible, so the reflect
    vector step always starts from a feasible point.
    """
    p_max, gbar = scenario.p_max_w, scenario.gamma_bar_w
    u = np.exp(1j * rng.uniform(0.0, 2 * np.pi, pd.n_elements))
    theta = ReflectVector.from_entries(0.9 * u)
    trace: list[float] = []
    rows: list[tuple] = []
    v = None
    for r in range(cfg.max_rounds):
        bf = solve_p3(pd, theta, p_max, gbar)
        if bf.degenerate and r == 0:
            off = ReflectVector.off(pd.n_elements)
            v0 = solve_p3(pd, off, p_max, gbar).v
            return AoResult(off, v0, [su_sir(pd, off, v0)], degenerate=True)
        v = bf.v
        if r == 0:
            trace.append(su_sir(pd, theta, v))
        st = gld_solve(pd, v, theta, gbar, cfg.gld, record=record)
        if record:
            rows.extend((r,) + row for row in st.rows)
        theta = st.theta
        trace.append(su_sir(pd, theta, v))
        if trace[-1] - trace[-2] <= cfg.rel_tol * abs(trace[-2]):
            break
    return AoResult(theta, v, trace, gld_rows=rows)


@dataclass
class TrialResult:
    rate_continuous: float
    rate_discrete: float | None
    rate_no_ris: float
    rate_random_phase: float
    sir_trace: list[float]
    feasible: dict[str, bool]
    discrete_found: bool = False
    gld_rows: list[tuple] = field(default_factory=list)


def _pair_ok(pd, theta, v, scenario) -> bool:
    gam = pn_interference(pd, theta, v)
    return bool(power_ok(v, scenario.p_max_w) and np.all(is_feasible(gam, scenario.gamma_bar_w)))


def run_trial(
    scenario: Scenario,
    cfg: AoConfig,
    seed: int,
    trial: int,
    discrete_bits: int | None = None,
    record: bool = False,
) -> TrialResult:
    """One channel draw: continuous AO, NPSP quantisation and two baselines."""
    N = scenario.n_elements
    channels = generate_channels(scenario, seed=channel_seed(seed, trial))
    noise = scenario.noise_w if cfg.noise_in_objective else 0.0
    pd = assemble_problem(scenario, channels, noise_w=noise)
    gbar = scenario.gamma_bar_w

    ao = ao_solve(pd, scenario, cfg, np.random.default_rng(channel_seed(seed, trial, _INIT_KEY, N)), record)
    feasible = {"continuous": _pair_ok(pd, ao.theta, ao.v, scenario)}

    off = ReflectVector.off(N)
    v_off = solve_p3(pd, off, scenario.p_max_w, gbar).v
    feasible["no_ris"] = _pair_ok(pd, off, v_off, scenario)

    bits = scenario.codebook_bits if discrete_bits is None else discrete_bits
    book = PhaseCodebook.uniform(bits)
    rng = np.random.default_rng(channel_seed(seed, trial, _RANDOM_KEY, N))
    phases = np.asarray(book.levels)[rng.integers(0, book.size, N)]
    amp = 1.0
    for _ in range(60):
        th_rand = ReflectVector.from_entries(amp * np.exp(1j * phases))
        v_rand = solve_p3(pd, th_rand, scenario.p_max_w, gbar).v
        if _pair_ok(pd, th_rand, v_rand, scenario):
            break
        amp *= 0.5
    feasible["random"] = _pair_ok(pd, th_rand, v_rand, scenario)

    rate_disc = None
    q = npsp_solve(ao.theta.entries, pd, ao.v, book, gbar, cfg.npsp)
    if q.found:
        th_q = ReflectVector.from_entries(q.theta_o)
        feasible["discrete"] = _pair_ok(pd, th_q, ao.v, scenario)
        rate_disc = float(rate(su_sir(pd, th_q, ao.v)))

    return TrialResult(
        rate_continuous=float(rate(ao.sir_trace[-1])),
        rate_discrete=rate_disc,
        rate_no_ris=float(rate(su_sir(pd, off, v_off))),
        rate_random_phase=float(rate(su_sir(pd, th_rand, v_rand))),
        sir_trace=ao.sir_trace,
        feasible=feasible,
        discrete_found=q.found,
        gld_rows=ao.gld_rows,
    )


@dataclass(frozen=True)
class SweepRow:
    sweep_param: str
    value: float
    rate_continuous_mean: float
    rate_continuous_se: float
    rate_discrete_mean: float
    rate_discrete_se: float
    rate_no_ris_mean: float
    rate_random_mean: float
    discrete_found_fraction: float
    trials: int
    seed: int

    def as_list(self) -> list:
        return [getattr(self, name) for name in CSV_COLUMNS]


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


def _scenario_at(template: Scenario, sweep: str, value) -> Scenario:
    name = SWEEPS[sweep]
    if name in ("j_pns", "n_elements"):
        return template.replace(**{name: int(value)})
    if name == "gamma_bar_dbm":
        return template.replace(gamma_bar_dbm=(float(value),) * template.j_pns)
    return template.replace(**{name: float(value)})


def _trial_job(args):
    scenario, cfg, seed, trial, bits, record = args
    return run_trial(scenario, cfg, seed, trial, bits, record)


def run_sweep(
    template: Scenario,
    sweep: str,
    values: Sequence | None = None,
    trials: int = 1,
    cfg: AoConfig = AoConfig(),
    seed: int | None = None,
    discrete_bits: int | None = None,
    workers: int = 1,
    record: bool = False,
    results: dict | None = None,
    cache: dict | None = None,
) -> list[SweepRow]:
    """Mean and standard error of every rate over ``trials`` channel draws.

    Trial ``i`` uses the channel seed ``(seed, i)`` at every sweep point;
    links whose dimensions do not change are therefore identical across
    points. ``results``, if given, receives the per-trial results keyed by
    ``(value, trial)``. ``cache`` maps job keys to finished trials so that
    sweeps sharing a point do not recompute it.
    """
    if sweep not in SWEEPS:
        raise ValueError(f"unknown sweep {sweep!r}; choose from {sorted(SWEEPS)}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seed = template.rng_seed if seed is None else int(seed)
    values = DEFAULT_VALUES[sweep] if values is None else list(values)

    jobs = [(_scenario_at(template, sweep, val), cfg, seed, i, discrete_bits, record) for val in values for i in range(trials)]
    cache = {} if cache is None else cache
    todo = [job for job in dict.fromkeys(jobs) if job not in cache]
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_trial_job, todo, chunksize=max(1, len(todo) // (4 * workers))))
    else:
        done = [_trial_job(job) for job in todo]
    cache.update(zip(todo, done))
    outcomes = [cache[job] for job in jobs]

    rows = []
    for k, val in enumerate(values):
        per = outcomes[k * trials : (k + 1) * trials]
        if results is not None:
            for i, res in enumerate(per):
                results[(val, i)] = res
        cont = _mean_se([r.rate_continuous for r in per])
        disc = _mean_se([r.rate_discrete for r in per if r.rate_discrete is not None])
        rows.append(
            SweepRow(
                sweep_param=sweep,
                value=float(val),
                rate_continuous_mean=cont[0],
                rate_continuous_se=cont[1],
                rate_discrete_mean=disc[0],
                rate_discrete_se=disc[1],
                rate_no_ris_mean=float(np.mean([r.rate_no_ris for r in per])),
                rate_random_mean=float(np.mean([r.rate_random_phase for r in per])),
                discrete_found_fraction=float(np.mean([r.discrete_found for r in per])),
                trials=trials,
                seed=seed,
            )
        )
    return rows


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def emit_csv(table: Sequence[SweepRow], path: str | os.PathLike) -> Path:
    """Write the sweep table; an empty table is an error and writes nothing."""
    if not table:
        raise ValueError("refusing to write an empty sweep table")
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in table:
                w.writerow([_fmt(x) for x in row.as_list()])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path: str | os.PathLike) -> list[dict[str, Any]]:
    with open(path, newline="") as fh:
        out = []
        for rec in csv.DictReader(fh):
            out.append({k: (v if k == "sweep_param" else float(v)) for k, v in rec.items()})
        return out


def emit_trace(results: dict, path: str | os.PathLike) -> Path:
    """Per-iteration reflect-vector traces of every trial."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "trial", "round", "iteration", "q", "t", "max_residual"])
        for (val, i), res in sorted(results.items(), key=lambda kv: (float(kv[0][0]), kv[0][1])):
            for row in res.gld_rows:
                w.writerow([_fmt(val), i] + [_fmt(x) for x in row])
    return path

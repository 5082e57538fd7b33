"""Discrete phase quantisation of a continuous reflect vector.

Nearest point searching with penalty: the phases of ``theta_bar`` are
moved onto an ``L``-level codebook (amplitudes kept) by a splitting
iteration between a discrete copy ``theta_d`` and a continuous auxiliary
``b``, with multipliers ``lambda`` on ``b = theta_d`` and ``w_j`` on the
interference limits. The best feasible discrete iterate is returned.
``exhaustive_quantize`` enumerates all ``L^N`` assignments for small
instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .metrics import is_feasible
from .scenario import ProblemData

__all__ = [
    "PhaseCodebook",
    "NpspConfig",
    "NpspState",
    "NpspResult",
    "theta_step",
    "b_step",
    "dual_step",
    "npsp_solve",
    "exhaustive_quantize",
    "EXHAUSTIVE_BUDGET",
    "VARIANTS",
]

EXHAUSTIVE_BUDGET = 10**6
VARIANTS = ("printed", "lagrangian", "affine")
_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PhaseCodebook:
    levels: tuple[float, ...]

    def __post_init__(self):
        lv = np.mod(np.asarray(self.levels, dtype=float), _TWO_PI)
        if lv.size < 2:
            raise ValueError("a codebook needs at least two levels")
        gaps = np.diff(np.sort(lv))
        wrap = _TWO_PI - (lv.max() - lv.min())
        if np.any(gaps < 1e-12) or wrap < 1e-12:
            raise ValueError("codebook levels must be distinct modulo 2*pi")
        object.__setattr__(self, "levels", tuple(float(x) for x in self.levels))

    @classmethod
    def uniform(cls, bits: int) -> "PhaseCodebook":
        L = 2 ** int(bits)
        return cls(tuple(_TWO_PI * np.arange(L) / L))

    @property
    def size(self) -> int:
        return len(self.levels)

    def nearest(self, angles) -> np.ndarray:
        """Codebook phase closest to each angle in circular distance."""
        lv = np.asarray(self.levels)
        diff = np.angle(np.exp(1j * (np.asarray(angles)[..., None] - lv)))
        return lv[np.argmin(np.abs(diff), axis=-1)]


@dataclass(frozen=True)
class NpspConfig:
    mu: float = 1.0
    n_itr: int = 200
    varsigma: float = 1e-8
    # "printed": Y carries the w-weighted interference term;
    # "lagrangian": Y = (2 + mu) I;
    # "affine": printed Y plus the linear term contributed by the fixed
    # last entry of the augmented vector
    variant: str = "affine"
    # measure interference in units of its threshold (Gamma_j / Gamma_bar_j)
    normalise: bool = True
    # +lambda in the b update as printed; the default -lambda is the sign
    # that makes the b update minimise the augmented Lagrangian
    printed_sign: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.n_itr < 1:
            raise ValueError("n_itr must be >= 1")
        if self.varsigma < 0:
            raise ValueError("varsigma must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")


@dataclass
class NpspState:
    theta_d: np.ndarray
    b: np.ndarray
    lam: np.ndarray
    w: np.ndarray
    f_obj: float = np.inf
    theta_o: np.ndarray | None = None

    @classmethod
    def start(cls, theta_bar: np.ndarray, j_pns: int, rng: np.random.Generator | None = None) -> "NpspState":
        """Fresh state; ``b`` starts at ``theta_bar`` and the multipliers at zero
        unless ``rng`` is given, in which case ``lambda`` is drawn at random."""
        theta_bar = np.asarray(theta_bar, dtype=complex)
        lam = np.zeros_like(theta_bar)
        if rng is not None:
            lam = 0.1 * (rng.standard_normal(theta_bar.size) + 1j * rng.standard_normal(theta_bar.size))
        return cls(theta_d=theta_bar.copy(), b=theta_bar.copy(), lam=lam, w=np.zeros(j_pns))


@dataclass(frozen=True)
class NpspResult:
    found: bool
    theta_o: np.ndarray | None
    f_obj: float
    iterations: int

    @property
    def theta_hat(self) -> np.ndarray | None:
        return None if self.theta_o is None else np.append(self.theta_o, 1.0)


def _scaled_interference(pd: ProblemData, v, gamma_bar_w, normalise: bool):
    """Interference vectors ``c_j = H_hat_sj v`` and thresholds, optionally
    rescaled so each finite positive threshold becomes 1."""
    c = pd.H_hat_sj @ v
    gbar = np.broadcast_to(np.asarray(gamma_bar_w, dtype=float), (pd.j_pns,)).copy()
    if normalise:
        scale = np.where(np.isfinite(gbar) & (gbar > 0), gbar, 1.0)
        c = c / np.sqrt(scale)[:, None]
        gbar = gbar / scale
    return c, gbar


def theta_step(state: NpspState, theta_bar: np.ndarray, codebook: PhaseCodebook, cfg: NpspConfig) -> np.ndarray:
    target = state.b + state.lam / cfg.mu
    return np.abs(theta_bar) * np.exp(1j * codebook.nearest(np.angle(target)))


def b_step(
    state: NpspState,
    theta_bar: np.ndarray,
    pd: ProblemData,
    v: np.ndarray,
    cfg: NpspConfig,
    gamma_bar_w=None,
) -> np.ndarray:
    """``b = Y^{-1} (2 theta_bar + mu theta_d -/+ lambda)``."""
    sign = 1.0 if cfg.printed_sign else -1.0
    rhs = 2.0 * theta_bar + cfg.mu * state.theta_d + sign * state.lam
    N = theta_bar.size
    if cfg.variant == "lagrangian" or not np.any(state.w > 0):
        return rhs / (2.0 + cfg.mu)
    if gamma_bar_w is None:
        gamma_bar_w = np.ones(pd.j_pns)
    c, _ = _scaled_interference(pd, v, gamma_bar_w, cfg.normalise)
    cn = c[:, :N]
    Y = (2.0 + cfg.mu) * np.eye(N, dtype=complex) + 2.0 * (cn.T * state.w) @ cn.conj()
    if cfg.variant == "affine":
        rhs = rhs - 2.0 * cn.T @ (state.w * c[:, N].conj())
    return np.linalg.solve(Y, rhs)


def dual_step(state: NpspState, pd: ProblemData, v: np.ndarray, gamma_bar_w, cfg: NpspConfig) -> tuple[np.ndarray, np.ndarray]:
    lam = state.lam + cfg.mu * (state.b - state.theta_d)
    c, gbar = _scaled_interference(pd, v, gamma_bar_w, cfg.normalise)
    gam = np.abs(c.conj() @ np.append(state.theta_d, 1.0)) ** 2
    excess = np.where(np.isfinite(gbar), np.maximum(gam - gbar, 0.0), 0.0)
    return lam, state.w + cfg.mu * excess


def _feasible(pd: ProblemData, v, theta_hat, gamma_bar_w) -> bool:
    c = pd.H_hat_sj @ v
    gam = np.abs(c.conj() @ theta_hat) ** 2
    return bool(np.all(is_feasible(gam, gamma_bar_w)))


def npsp_solve(
    theta_bar: np.ndarray,
    pd: ProblemData,
    v: np.ndarray,
    codebook: PhaseCodebook,
    gamma_bar_w,
    cfg: NpspConfig = NpspConfig(),
    rng: np.random.Generator | None = None,
) -> NpspResult:
    """Quantise ``theta_bar`` (the first ``N`` entries, without the trailing 1)."""
    theta_bar = np.asarray(theta_bar, dtype=complex)
    if theta_bar.shape != (pd.n_elements,):
        raise ValueError("theta_bar must hold the N reflecting entries")
    if np.any(np.abs(theta_bar) > 1 + 1e-9):
        raise ValueError("theta_bar entries must satisfy |theta_n| <= 1")
    gamma_bar_w = np.broadcast_to(np.asarray(gamma_bar_w, dtype=float), (pd.j_pns,))

    state = NpspState.start(theta_bar, pd.j_pns, rng)
    k = 0
    for k in range(1, cfg.n_itr + 1):
        state.theta_d = theta_step(state, theta_bar, codebook, cfg)
        state.b = b_step(state, theta_bar, pd, v, cfg, gamma_bar_w)
        state.lam, state.w = dual_step(state, pd, v, gamma_bar_w, cfg)

        if _feasible(pd, v, np.append(state.theta_d, 1.0), gamma_bar_w):
            f = float(np.sum(np.abs(theta_bar - state.theta_d) ** 2))
            if f < state.f_obj:
                state.f_obj = f
                state.theta_o = state.theta_d.copy()
        if state.theta_o is not None and (
            state.f_obj <= cfg.varsigma or np.sum(np.abs(state.b - state.theta_d) ** 2) <= cfg.varsigma
        ):
            break
    return NpspResult(state.theta_o is not None, state.theta_o, state.f_obj, k)


def exhaustive_quantize(
    theta_bar: np.ndarray,
    pd: ProblemData,
    v: np.ndarray,
    codebook: PhaseCodebook,
    gamma_bar_w,
    budget: int = EXHAUSTIVE_BUDGET,
) -> NpspResult:
    """Best feasible codebook assignment by full enumeration."""
    theta_bar = np.asarray(theta_bar, dtype=complex)
    N, L = theta_bar.size, codebook.size
    if L**N > budget:
        raise ValueError(f"exhaustive search over {L}^{N} candidates exceeds the budget of {budget}")
    gamma_bar_w = np.broadcast_to(np.asarray(gamma_bar_w, dtype=float), (pd.j_pns,))
    amp = np.abs(theta_bar)
    phases = np.exp(1j * np.asarray(codebook.levels))
    c = pd.H_hat_sj @ v  # (J, N+1)

    best, best_f, count = None, np.inf, 0
    # enumerate in chunks to keep memory bounded
    idx_iter = itertools.product(range(L), repeat=N)
    while True:
        chunk = np.array(list(itertools.islice(idx_iter, 65536)), dtype=int).reshape(-1, N)
        if chunk.shape[0] == 0:
            break
        count += chunk.shape[0]
        cand = amp * phases[chunk]  # (K, N)
        gam = np.abs(cand @ c[:, :N].conj().T + c[:, N].conj()) ** 2  # (K, J)
        ok = np.all(is_feasible(gam, gamma_bar_w), axis=1)
        if not np.any(ok):
            continue
        f = np.sum(np.abs(cand - theta_bar) ** 2, axis=1)
        f = np.where(ok, f, np.inf)
        i = int(np.argmin(f))
        if f[i] < best_f:
            best_f, best = float(f[i]), cand[i].copy()
    return NpspResult(best is not None, best, best_f, count)


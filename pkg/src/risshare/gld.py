"""Reflect-vector design by gradient-based linearisation with domain.

For fixed ``v`` the SIR-maximisation over ``theta_hat`` is rewritten as
the epigraph problem

    minimise  q(theta_hat, t) = -|c^H theta_hat|^2 / t,   c = H_hat_s v
    s.t.      theta_hat^H Phi_sum theta_hat <= t,
              |theta_hat^H H_hat_sj v|^2 <= Gamma_bar_j,
              |theta_n| <= 1,  theta_{N+1} = 1.

``q`` is concave, so each iteration minimises its tangent plane over the
(convex) feasible set with the cone solver and moves part of the way
towards the minimiser. Because ``q`` lies below every tangent plane, the
objective never increases.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import socp
from .metrics import DEGENERATE_FLOOR, FEAS_RTOL, pn_interference
from .scenario import ProblemData, ReflectVector

__all__ = [
    "GldConfig",
    "GldState",
    "QGradient",
    "q_eval",
    "q_gradient",
    "linearize",
    "interior_init",
    "gld_solve",
    "write_trace",
]


@dataclass(frozen=True)
class GldConfig:
    k_bar: int = 100
    epsilon: float = 0.9
    descent_tol: float = 1e-6
    boundary_margin: float = 1e-7

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.k_bar < 1:
            raise ValueError("k_bar must be >= 1")
        if self.descent_tol < 0 or self.boundary_margin < 0:
            raise ValueError("tolerances must be non-negative")


@dataclass
class GldState:
    theta: ReflectVector
    t: float
    q_value: float
    iteration: int
    trace: list[float] = field(default_factory=list)
    status: str = "converged"
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    @property
    def varpi(self) -> np.ndarray:
        return np.concatenate([self.theta.theta_hat, [self.t]])


@dataclass(frozen=True)
class QGradient:
    """Gradient of ``q`` at ``(theta_hat, t)``.

    ``theta`` is the complex block ``-(c c^H) theta_hat / t``; with real
    and imaginary parts taken as separate coordinates the gradient is
    twice its real and imaginary parts (:meth:`real_embedding`).
    """

    theta: np.ndarray
    t: float

    def real_embedding(self) -> np.ndarray:
        return np.concatenate([2.0 * self.theta.real, 2.0 * self.theta.imag, [self.t]])


def _th(theta) -> np.ndarray:
    return theta.theta_hat if isinstance(theta, ReflectVector) else np.asarray(theta, dtype=complex)


def q_eval(pd: ProblemData, v: np.ndarray, theta, t: float) -> float:
    if not t > 0:
        raise ValueError("t must be positive")
    c = pd.H_hat_s @ v
    return -float(np.abs(np.vdot(c, _th(theta))) ** 2) / t


def q_gradient(pd: ProblemData, v: np.ndarray, theta, t: float) -> QGradient:
    if not t > 0:
        raise ValueError("t must be positive")
    c = pd.H_hat_s @ v
    inner = np.vdot(c, _th(theta))
    return QGradient(theta=-c * inner / t, t=float(np.abs(inner) ** 2) / t**2)


def _interference_vectors(pd: ProblemData, v: np.ndarray) -> np.ndarray:
    return pd.H_hat_sj @ v  # (J, N+1)


def linearize(
    pd: ProblemData,
    v: np.ndarray,
    gamma_bar_w,
    grad: QGradient,
    t_scale: float = 1.0,
) -> socp.SocpProblem:
    """Cone program minimising the tangent plane of ``q`` over the domain.

    Variables are ``[Re theta_hat, Im theta_hat, tau]`` with ``t = t_scale * tau``.
    """
    N = pd.n_elements
    n1 = N + 1
    dim = 2 * n1 + 1
    emb = socp.embed_complex(n1)
    gamma_bar_w = np.broadcast_to(np.asarray(gamma_bar_w, dtype=float), (pd.j_pns,))

    g = grad.real_embedding()
    g[-1] *= t_scale

    def pad(rows):
        return np.hstack([rows, np.zeros((rows.shape[0], 1))])

    cones = []
    # |theta_n| <= 1
    for n in range(N):
        A = np.zeros((2, dim))
        A[0, n] = 1.0
        A[1, n1 + n] = 1.0
        cones.append(socp.Cone(A, np.zeros(2), np.zeros(dim), 1.0))

    eq_rows = []
    eq_rhs = []
    last = np.zeros((2, dim))
    last[0, N] = 1.0
    last[1, n1 + N] = 1.0
    eq_rows.append(last)
    eq_rhs.append([1.0, 0.0])

    # interference limits, |c_j^H theta_hat| <= sqrt(Gamma_bar_j)
    for cj, gbar in zip(_interference_vectors(pd, v), gamma_bar_w):
        nc = np.linalg.norm(cj)
        if np.isinf(gbar) or nc == 0.0:
            continue
        rows = pad(emb.inner_rows(cj) / nc)
        if gbar == 0.0:
            eq_rows.append(rows)
            eq_rhs.append([0.0, 0.0])
        else:
            cones.append(socp.Cone(rows, np.zeros(2), np.zeros(dim), float(np.sqrt(gbar) / nc)))

    # theta_hat^H Phi theta_hat <= t, as ||B theta_hat||^2 <= tau
    B = emb.matrix(pd.interference_rows / np.sqrt(t_scale))
    cones.append(socp.quad_leq_linear_cone(pad(B), dim - 1, dim))

    return socp.SocpProblem(
        c=g,
        cones=cones,
        F=np.vstack(eq_rows),
        f=np.concatenate(eq_rhs),
        assume_bounded=True,
    )


def _max_fraction(p: np.ndarray, d: np.ndarray, r2: np.ndarray) -> float:
    """Largest alpha in [0, inf] with ``|p + alpha d|^2 <= r2`` componentwise."""
    A = np.abs(d) ** 2
    B = (p.conj() * d).real
    C = np.minimum(np.abs(p) ** 2 - r2, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = (-B + np.sqrt(np.maximum(B * B - A * C, 0.0))) / A
    roots = np.where(A > 0, roots, np.inf)
    return float(np.min(roots, initial=np.inf))


def _slacks(pd, v, gamma_bar_w, theta_hat, t):
    mod = 1.0 - np.abs(theta_hat[:-1])
    cvec = _interference_vectors(pd, v)
    gam = np.abs(cvec.conj() @ theta_hat) ** 2
    finite = np.isfinite(gamma_bar_w) & (gamma_bar_w > 0)
    inter = np.where(finite, 1.0 - gam / np.where(finite, gamma_bar_w, 1.0), np.inf)
    rot = (t - pd.denominator(theta_hat)) / t
    return mod, inter, rot


def _residual(pd, v, gamma_bar_w, theta_hat, t) -> float:
    mod, inter, rot = _slacks(pd, v, gamma_bar_w, theta_hat, t)
    worst = min(np.min(mod, initial=np.inf), np.min(inter, initial=np.inf), rot)
    return max(0.0, -float(worst))


def interior_init(
    pd: ProblemData,
    v: np.ndarray,
    gamma_bar_w,
    rng: np.random.Generator,
    delta: float = 0.9,
    max_halvings: int = 60,
) -> tuple[ReflectVector, float]:
    """Random strictly interior starting point ``([delta u; 1], 1.1 * denominator)``."""
    gamma_bar_w = np.broadcast_to(np.asarray(gamma_bar_w, dtype=float), (pd.j_pns,))
    u = np.exp(1j * rng.uniform(0.0, 2 * np.pi, pd.n_elements))
    for _ in range(max_halvings):
        theta = ReflectVector.from_entries(delta * u)
        gam = pn_interference(pd, theta, v)
        if np.all(gam < gamma_bar_w):
            return theta, 1.1 * pd.denominator(theta.theta_hat)
        delta *= 0.5
    raise ValueError("no strictly feasible reflect vector along the sampled phases")


def gld_solve(
    pd: ProblemData,
    v: np.ndarray,
    init: ReflectVector,
    gamma_bar_w,
    cfg: GldConfig = GldConfig(),
    t_init: float | None = None,
    record: bool = False,
) -> GldState:
    """Run the linearise-and-damp iteration from a feasible ``init``.

    ``t_init`` defaults to the tight value ``init^H Phi_sum init``. On
    return ``t`` is tight again, which can only lower ``q``.
    """
    gamma_bar_w = np.broadcast_to(np.asarray(gamma_bar_w, dtype=float), (pd.j_pns,))
    th = init.theta_hat.copy()
    den = pd.denominator(th)
    if den < DEGENERATE_FLOOR and t_init is None:
        # interference already cancelled; q is unbounded below along t -> 0
        return GldState(theta=init, t=den, q_value=-np.inf, iteration=0, trace=[], status="degenerate")
    t = den if t_init is None else float(t_init)
    if not t > 0 or t < den * (1 - 1e-12):
        raise ValueError("t_init must be positive and at least the interference power")
    if _residual(pd, v, gamma_bar_w, th, t) > FEAS_RTOL:
        raise ValueError("initial reflect vector violates the constraints")

    c = pd.H_hat_s @ v
    cvec = _interference_vectors(pd, v)
    q = q_eval(pd, v, th, t)
    state = GldState(theta=init, t=t, q_value=q, iteration=0, trace=[q])
    if record:
        state.rows.append((0, q, t, _residual(pd, v, gamma_bar_w, th, t)))
    if not np.any(c):
        state.iteration = 1
        return state

    finite = np.isfinite(gamma_bar_w)
    status = "max_iter"
    k = 0
    while k < cfg.k_bar:
        grad = q_gradient(pd, v, th, t)
        # rescale every step so the epigraph variable stays O(1)
        t_scale = t
        sol = socp.solve(linearize(pd, v, gamma_bar_w, grad, t_scale))
        if sol.status != "optimal":
            status = "inner_" + sol.status
            break
        x = sol.x
        th_bar = x[: pd.n_elements + 1] + 1j * x[pd.n_elements + 1 : -1]
        th_bar[-1] = 1.0
        t_bar = t_scale * x[-1]

        mod, inter, rot = _slacks(pd, v, gamma_bar_w, th_bar, t_bar)
        interior = min(np.min(mod, initial=np.inf), np.min(inter, initial=np.inf), rot) > cfg.boundary_margin
        step = 1.0 if interior else cfg.epsilon

        # keep the iterate exactly feasible: never step past a constraint boundary
        d = th_bar - th
        limit = _max_fraction(th[:-1], d[:-1], np.ones(pd.n_elements))
        if np.any(finite):
            limit = min(
                limit,
                _max_fraction(cvec[finite].conj() @ th, cvec[finite].conj() @ d, gamma_bar_w[finite]),
            )
        step = min(step, limit)

        th_new = th + step * d
        th_new[-1] = 1.0
        t_new = max(t + step * (t_bar - t), pd.denominator(th_new))
        q_new = q_eval(pd, v, th_new, t_new)
        k += 1
        if q_new > q + 1e-12 * abs(q):
            status = "stalled"
            break
        decrease = q - q_new
        th, t, q = th_new, t_new, q_new
        state.trace.append(q)
        if record:
            state.rows.append((k, q, t, _residual(pd, v, gamma_bar_w, th, t)))
        if decrease <= cfg.descent_tol * abs(q):
            status = "converged"
            break

    # the epigraph variable is tight at any minimiser
    t = pd.denominator(th)
    if t < DEGENERATE_FLOOR:
        status = "degenerate"
        q = -np.inf
    else:
        q = q_eval(pd, v, th, t)
    amp = np.abs(th[:-1])
    over = amp > 1.0
    th[:-1][over] /= amp[over]
    state.theta = ReflectVector(th)
    state.t = t
    state.q_value = q
    state.iteration = k
    state.status = status
    return state


def write_trace(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "q", "t", "max_residual"])
        w.writerows(rows)

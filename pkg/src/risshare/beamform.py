"""Optimal S-AP beamforming for a fixed reflect vector.

With ``theta_hat`` fixed the SIR denominator is a constant, so maximising
the SIR over ``v`` amounts to maximising ``|a^H v|`` with
``a = H_hat_s^H theta_hat``. Because every constraint is invariant to a
common phase rotation of ``v`` we may require ``a^H v`` to be real, which
leaves the concave program

    maximise Re(a^H v)  s.t.  ||v||^2 <= P_max,
                              |b_j^H v|^2 <= Gamma_bar_j,
                              Im(a^H v) = 0,

a second-order cone program in the real and imaginary parts of ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import socp
from .metrics import pn_interference
from .scenario import ProblemData, ReflectVector

__all__ = ["BeamformResult", "solve_p3", "build_p3"]

_ACTIVE_RTOL = 1e-6


@dataclass(frozen=True)
class BeamformResult:
    v: np.ndarray
    objective: float
    status: str
    power_active: bool
    interference_active: np.ndarray
    degenerate: bool = False
    kkt_residual: float = 0.0

    @property
    def active_constraints(self) -> dict[str, object]:
        return {"power": self.power_active, "interference": self.interference_active}


def _effective(pd: ProblemData, theta) -> tuple[np.ndarray, np.ndarray]:
    th = theta.theta_hat if isinstance(theta, ReflectVector) else np.asarray(theta, dtype=complex)
    a = pd.H_hat_s.conj().T @ th
    b = np.einsum("jnm,n->jm", pd.H_hat_sj.conj(), th)
    return a, b


def build_p3(a: np.ndarray, b: np.ndarray, p_max_w: float, gamma_bar_w: np.ndarray) -> socp.SocpProblem:
    """Cone program in ``u = embed(v) / sqrt(P_max)``."""
    M = a.size
    emb = socp.embed_complex(M)
    na = np.linalg.norm(a)
    rows_a = emb.inner_rows(a) / na
    cones = [socp.Cone(np.eye(2 * M), np.zeros(2 * M), np.zeros(2 * M), 1.0)]
    eq_rows = [rows_a[1:2]]
    for bj, gbar in zip(b, gamma_bar_w):
        nb = np.linalg.norm(bj)
        if np.isinf(gbar) or nb == 0.0:
            continue
        rows_b = emb.inner_rows(bj) / nb
        if gbar == 0.0:
            eq_rows.append(rows_b)
        else:
            radius = np.sqrt(gbar / p_max_w) / nb
            cones.append(socp.Cone(rows_b, np.zeros(2), np.zeros(2 * M), float(radius)))
    F = np.vstack(eq_rows)
    return socp.SocpProblem(c=-rows_a[0], cones=cones, F=F, f=np.zeros(F.shape[0]))


def solve_p3(
    pd: ProblemData,
    theta,
    p_max_w: float,
    gamma_bar_w,
    tol: float = socp.TOL_KKT,
) -> BeamformResult:
    """Globally optimal beamformer for fixed ``theta``.

    The returned ``v`` is phase-canonical (``a^H v`` real and
    non-negative) and is shrunk if needed so that the power and
    interference limits hold to rounding.
    """
    if not p_max_w > 0:
        raise ValueError("p_max_w must be positive")
    gamma_bar_w = np.broadcast_to(np.asarray(gamma_bar_w, dtype=float), (pd.j_pns,))
    if np.any(gamma_bar_w < 0):
        raise ValueError("interference thresholds must be non-negative")
    a, b = _effective(pd, theta)
    M = a.size
    scale = np.linalg.norm(pd.H_hat_s) * np.linalg.norm(theta.theta_hat if isinstance(theta, ReflectVector) else theta)
    if np.linalg.norm(a) <= 1e-14 * scale:
        return BeamformResult(
            v=np.zeros(M, dtype=complex),
            objective=0.0,
            status="optimal",
            power_active=False,
            interference_active=np.zeros(pd.j_pns, dtype=bool),
            degenerate=True,
        )

    problem = build_p3(a, b, p_max_w, gamma_bar_w)
    sol = socp.solve(problem, tol=tol)
    v = np.sqrt(p_max_w) * socp.embed_complex(M).lift(sol.x)

    # canonical phase, then shrink onto the feasible set if rounding left it outside
    inner = np.vdot(a, v)
    if inner != 0:
        v = v * np.exp(-1j * np.angle(inner))
    shrink = 1.0
    power = float(np.vdot(v, v).real)
    if power > p_max_w:
        shrink = min(shrink, np.sqrt(p_max_w / power))
    gam = np.abs(b.conj() @ v) ** 2
    over = np.isfinite(gamma_bar_w) & (gam > gamma_bar_w) & (gamma_bar_w > 0)
    if np.any(over):
        shrink = min(shrink, float(np.min(np.sqrt(gamma_bar_w[over] / gam[over]))))
    v = v * shrink

    power = float(np.vdot(v, v).real)
    gam = pn_interference(pd, theta, v)
    return BeamformResult(
        v=v,
        objective=float(np.vdot(a, v).real),
        status=sol.status,
        power_active=power >= p_max_w * (1 - _ACTIVE_RTOL),
        interference_active=np.isfinite(gamma_bar_w) & (gam >= gamma_bar_w * (1 - _ACTIVE_RTOL)),
        kkt_residual=sol.kkt_residual,
    )

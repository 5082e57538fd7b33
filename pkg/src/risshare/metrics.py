"""Figures of merit: SU SIR and rate, PN interference, feasibility."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelSet, ProblemData, ReflectVector

__all__ = [
    "DEGENERATE_FLOOR",
    "FEAS_RTOL",
    "LinkReport",
    "rate",
    "su_sir",
    "pn_interference",
    "is_feasible",
    "power_ok",
    "link_report",
    "pu_sinr",
]

DEGENERATE_FLOOR = 1e-30
FEAS_RTOL = 1e-9
# absolute slack so that a zero threshold accepts round-off-level leakage
FEAS_ATOL = 1e-30


def rate(sir):
    """Achievable rate ``log2(1 + sir)`` in bit/s/Hz."""
    return np.log2(1.0 + np.asarray(sir, dtype=float))


def _theta_hat(theta) -> np.ndarray:
    return theta.theta_hat if isinstance(theta, ReflectVector) else np.asarray(theta, dtype=complex)


def signal_power(pd: ProblemData, theta, v: np.ndarray) -> float:
    return float(np.abs(_theta_hat(theta).conj() @ (pd.H_hat_s @ v)) ** 2)


def su_sir(pd: ProblemData, theta, v: np.ndarray, noise_w: float = 0.0) -> float:
    """SIR at the SU; ``noise_w > 0`` gives the SINR instead.

    Returns ``inf`` when the interference-plus-noise power falls below
    ``DEGENERATE_FLOOR`` (check with :func:`link_report` for the flag).
    """
    th = _theta_hat(theta)
    den = pd.denominator(th) + noise_w
    num = signal_power(pd, th, v)
    if den < DEGENERATE_FLOOR:
        return np.inf
    return num / den


def pn_interference(pd: ProblemData, theta, v: np.ndarray) -> np.ndarray:
    """``Gamma_j = |theta_hat^H H_hat_sj v|^2`` for every PN, in watts."""
    th = _theta_hat(theta)
    return np.abs(np.einsum("n,jnm,m->j", th.conj(), pd.H_hat_sj, v)) ** 2


def is_feasible(gamma_w: np.ndarray, gamma_bar_w: np.ndarray) -> np.ndarray:
    gamma_bar_w = np.broadcast_to(np.asarray(gamma_bar_w, dtype=float), np.shape(gamma_w))
    return np.asarray(gamma_w) <= gamma_bar_w * (1 + FEAS_RTOL) + FEAS_ATOL


def power_ok(v: np.ndarray, p_max_w: float) -> bool:
    return float(np.vdot(v, v).real) <= p_max_w * (1 + FEAS_RTOL)


@dataclass(frozen=True)
class LinkReport:
    sir: float
    rate_bpshz: float
    interference_w: np.ndarray
    feasible: np.ndarray
    degenerate: bool = False


def link_report(pd: ProblemData, theta, v: np.ndarray, gamma_bar_w, noise_w: float = 0.0) -> LinkReport:
    th = _theta_hat(theta)
    degenerate = pd.denominator(th) + noise_w < DEGENERATE_FLOOR
    sir = su_sir(pd, th, v, noise_w)
    gam = pn_interference(pd, th, v)
    return LinkReport(
        sir=sir,
        rate_bpshz=float(rate(sir)),
        interference_w=gam,
        feasible=is_feasible(gam, gamma_bar_w),
        degenerate=bool(degenerate),
    )


def pu_sinr(
    channels: ChannelSet,
    theta: ReflectVector,
    v: np.ndarray,
    j: int,
    p_j_w: float,
    noise_w: float,
) -> float:
    """SINR of the PU in PN ``j`` from the unlifted link expressions."""
    J = channels.dims[0]
    if not 0 <= j < J:
        raise IndexError(f"PN index {j} out of range for J={J}")
    coeff = theta.coefficients
    useful = channels.h_rj[j].conj() @ (coeff * channels.h_pj_r[j]) + channels.h_j[j]
    leak = (channels.h_rj[j].conj() * coeff) @ channels.H_sr @ v + channels.h_sj[j].conj() @ v
    return float(p_j_w * np.abs(useful) ** 2 / (np.abs(leak) ** 2 + noise_w))

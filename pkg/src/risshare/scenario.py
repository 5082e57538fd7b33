"""Scenario configuration, random channels and the lifted problem matrices.

The RIS enters every link through ``h^H diag(theta) H``. Stacking the
coefficients into the augmented vector ``theta_hat = [conj(theta); 1]``
turns each link into an inner product ``theta_hat^H X v`` with a fixed
matrix ``X``; :func:`assemble_problem` builds those matrices.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

__all__ = [
    "Scenario",
    "ChannelSet",
    "ProblemData",
    "ReflectVector",
    "db_to_linear",
    "dbm_to_watt",
    "path_loss_db",
    "channel_seed",
    "generate_channels",
    "assemble_problem",
]


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watt(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def path_loss_db(model: str, distance_m: float) -> float:
    """Log-distance path loss in dB for ``"direct"`` or ``"cascade"`` links."""
    if not distance_m > 0:
        raise ValueError(f"distance must be positive, got {distance_m!r}")
    if model == "direct":
        return 32.6 + 36.7 * math.log10(distance_m)
    if model == "cascade":
        return 35.6 + 22.0 * math.log10(distance_m)
    raise ValueError(f"unknown path-loss model {model!r}")


@dataclass(frozen=True)
class Scenario:
    """Physical and algorithmic configuration of one spectrum-sharing setup.

    Per-PN quantities (``p_pap_dbm``, ``gamma_bar_dbm``) are tuples of
    length ``j_pns``; a scalar is broadcast. ``rician_k_db = inf`` makes
    the RIS-side links purely line-of-sight.
    """

    j_pns: int = 2
    m_antennas: int = 4
    n_elements: int = 32
    p_max_dbm: float = 10.0
    p_pap_dbm: tuple[float, ...] | float = 10.0
    gamma_bar_dbm: tuple[float, ...] | float = -115.0
    noise_power_dbm: float = -110.0
    direct_pl_db: float = 106.0
    cascade_pl_db: float = 123.0
    rician_k_db: float = 10.0
    codebook_bits: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("p_pap_dbm", "gamma_bar_dbm"):
            value = getattr(self, name)
            if np.ndim(value) == 0:
                value = (float(value),) * int(self.j_pns)
            object.__setattr__(self, name, tuple(float(x) for x in value))
        self.validate()

    def validate(self) -> None:
        for name in ("j_pns", "m_antennas", "n_elements"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.codebook_bits < 1:
            raise ValueError("codebook_bits must be >= 1 (at least two levels)")
        if len(self.p_pap_dbm) != self.j_pns or len(self.gamma_bar_dbm) != self.j_pns:
            raise ValueError("per-PN lists must have length j_pns")
        finite = [self.p_max_dbm, self.noise_power_dbm, self.direct_pl_db, self.cascade_pl_db]
        finite += list(self.p_pap_dbm) + list(self.gamma_bar_dbm)
        if not all(math.isfinite(x) for x in finite):
            raise ValueError("power, threshold and path-loss fields must be finite")
        if math.isnan(self.rician_k_db) or self.rician_k_db == -math.inf:
            raise ValueError("rician_k_db must be a number or +inf")

    # linear-scale views
    @property
    def p_max_w(self) -> float:
        return float(dbm_to_watt(self.p_max_dbm))

    @property
    def p_pap_w(self) -> np.ndarray:
        return dbm_to_watt(self.p_pap_dbm)

    @property
    def gamma_bar_w(self) -> np.ndarray:
        return dbm_to_watt(self.gamma_bar_dbm)

    @property
    def noise_w(self) -> float:
        return float(dbm_to_watt(self.noise_power_dbm))

    @property
    def levels(self) -> int:
        return 2 ** int(self.codebook_bits)

    def replace(self, **changes) -> "Scenario":
        """Copy with changes; per-PN lists follow a change of ``j_pns``."""
        if "j_pns" in changes:
            j = int(changes["j_pns"])
            for name in ("p_pap_dbm", "gamma_bar_dbm"):
                if name not in changes:
                    current = getattr(self, name)
                    changes[name] = (current + (current[-1],) * j)[:j]
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scenario":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["p_pap_dbm"] = list(self.p_pap_dbm)
        out["gamma_bar_dbm"] = list(self.gamma_bar_dbm)
        return out


@dataclass(frozen=True)
class ChannelSet:
    """One realisation of every link. PN-indexed arrays have ``j`` first."""

    h_j: np.ndarray  # (J,)     P-AP_j -> PU_j
    h_pj_b: np.ndarray  # (J,)  P-AP_j -> SU
    h_s: np.ndarray  # (M,)     S-AP -> SU
    h_sj: np.ndarray  # (J, M)  S-AP -> PU_j
    h_pj_r: np.ndarray  # (J, N) P-AP_j -> RIS
    H_sr: np.ndarray  # (N, M)  S-AP -> RIS
    h_rj: np.ndarray  # (J, N)  RIS -> PU_j
    h_rb: np.ndarray  # (N,)    RIS -> SU

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(J, M, N)``."""
        return self.h_sj.shape[0], self.h_s.shape[0], self.h_rb.shape[0]

    def validate(self, scenario: Scenario | None = None) -> None:
        J, M, N = self.dims
        expected = {
            "h_j": (J,),
            "h_pj_b": (J,),
            "h_s": (M,),
            "h_sj": (J, M),
            "h_pj_r": (J, N),
            "H_sr": (N, M),
            "h_rj": (J, N),
            "h_rb": (N,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if scenario is not None and (J, M, N) != (
            scenario.j_pns,
            scenario.m_antennas,
            scenario.n_elements,
        ):
            raise ValueError("channel dimensions do not match the scenario")


@dataclass(frozen=True)
class ProblemData:
    H_hat_s: np.ndarray  # (N+1, M)
    H_hat_sj: np.ndarray  # (J, N+1, M)
    h_tilde_jrb: np.ndarray  # (J, N+1)
    p_pap_w: np.ndarray  # (J,)
    Phi_sum: np.ndarray  # (N+1, N+1)
    # receiver noise folded into the denominator; 0 gives the pure SIR
    noise_w: float = 0.0

    @property
    def n_elements(self) -> int:
        return self.H_hat_s.shape[0] - 1

    @property
    def m_antennas(self) -> int:
        return self.H_hat_s.shape[1]

    @property
    def j_pns(self) -> int:
        return self.H_hat_sj.shape[0]

    @property
    def interference_rows(self) -> np.ndarray:
        """``B`` with ``B^H B = Phi_sum``: rows ``sqrt(P_j) h_tilde_j^H``.

        With noise the extra row ``sqrt(noise) e_{N+1}^T`` is appended, which
        adds the constant ``noise`` since the last entry of ``theta_hat`` is 1.
        """
        rows = np.sqrt(self.p_pap_w)[:, None] * self.h_tilde_jrb.conj()
        if self.noise_w > 0:
            extra = np.zeros((1, rows.shape[1]), dtype=complex)
            extra[0, -1] = np.sqrt(self.noise_w)
            rows = np.vstack([rows, extra])
        return rows

    def denominator(self, theta_hat: np.ndarray) -> float:
        """``theta_hat^H Phi_sum theta_hat`` evaluated as a sum of squares."""
        return float(np.sum(np.abs(self.interference_rows @ theta_hat) ** 2))


@dataclass(frozen=True)
class ReflectVector:
    """Augmented reflecting-coefficient vector ``[theta_1..theta_N, 1]``.

    The entries are conjugates of the physical coefficients applied by
    the surface (see :attr:`coefficients`).
    """

    theta_hat: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta_hat, dtype=complex)
        if th.ndim != 1 or th.size < 2:
            raise ValueError("theta_hat must be a vector of length N+1 >= 2")
        if th[-1] != 1:
            raise ValueError("last entry of theta_hat must equal 1")
        if np.max(np.abs(th[:-1]), initial=0.0) > 1 + 1e-9:
            raise ValueError("reflecting amplitudes must not exceed 1")
        th = th.copy()
        th.setflags(write=False)
        object.__setattr__(self, "theta_hat", th)

    @classmethod
    def from_entries(cls, theta: np.ndarray) -> "ReflectVector":
        return cls(np.concatenate([np.asarray(theta, dtype=complex), [1.0]]))

    @classmethod
    def from_coefficients(cls, coefficients: np.ndarray) -> "ReflectVector":
        return cls.from_entries(np.conj(coefficients))

    @classmethod
    def off(cls, n: int) -> "ReflectVector":
        return cls.from_entries(np.zeros(n, dtype=complex))

    @property
    def n(self) -> int:
        return self.theta_hat.size - 1

    @property
    def entries(self) -> np.ndarray:
        return self.theta_hat[:-1]

    @property
    def coefficients(self) -> np.ndarray:
        """Physical coefficients ``theta`` used in ``diag(theta)``."""
        return np.conj(self.theta_hat[:-1])


# ---------------------------------------------------------------------------
# random channels

_DIRECT, _RIS = 0, 1


def channel_seed(seed, *key: int) -> np.random.SeedSequence:
    """Child seed sequence ``seed / key``; identical keys give identical streams."""
    if isinstance(seed, np.random.SeedSequence):
        base = seed
    else:
        base = np.random.SeedSequence(seed)
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + tuple(key))


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-power circularly-symmetric complex Gaussian entries."""
    shape = (shape,) if np.ndim(shape) == 0 else tuple(shape)
    x = rng.standard_normal(shape + (2,))
    return (x[..., 0] + 1j * x[..., 1]) / np.sqrt(2.0)


def _ula(n: int, angle: float) -> np.ndarray:
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def _rician(rng: np.random.Generator, los: np.ndarray, k_lin: float) -> np.ndarray:
    if math.isinf(k_lin):
        return los.astype(complex)
    return math.sqrt(k_lin / (k_lin + 1)) * los + math.sqrt(1 / (k_lin + 1)) * _cn(rng, los.shape)


def generate_channels(scenario: Scenario, seed=None) -> ChannelSet:
    """Draw one :class:`ChannelSet`.

    Every link has its own random stream keyed by its role and PN index,
    so adding a PN or changing ``N`` leaves the other links unchanged.
    Direct links are Rayleigh with mean-square gain ``10^(-direct_pl/10)``.
    RIS links are Rician with half-wavelength ULA line-of-sight responses
    at random angles; each of the two RIS segments carries half of the
    cascade loss in dB, so the product link has mean-square gain
    ``10^(-cascade_pl/10)`` per element pair.
    """
    J, M, N = scenario.j_pns, scenario.m_antennas, scenario.n_elements
    seed = scenario.rng_seed if seed is None else seed
    k_lin = math.inf if math.isinf(scenario.rician_k_db) else float(db_to_linear(scenario.rician_k_db))
    a_dir = math.sqrt(float(db_to_linear(-scenario.direct_pl_db)))
    a_seg = math.sqrt(float(db_to_linear(-scenario.cascade_pl_db / 2.0)))

    def stream(*key):
        return np.random.default_rng(channel_seed(seed, *key))

    h_s = a_dir * _cn(stream(_DIRECT, 0), M)
    h_j = np.empty(J, dtype=complex)
    h_pj_b = np.empty(J, dtype=complex)
    h_sj = np.empty((J, M), dtype=complex)
    for j in range(J):
        h_j[j] = a_dir * _cn(stream(_DIRECT, 1, j), 1)[0]
        h_pj_b[j] = a_dir * _cn(stream(_DIRECT, 2, j), 1)[0]
        h_sj[j] = a_dir * _cn(stream(_DIRECT, 3, j), M)

    rng = stream(_RIS, N, 0)
    arr, dep = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
    H_sr = a_seg * _rician(rng, np.outer(_ula(N, arr), _ula(M, dep).conj()), k_lin)
    rng = stream(_RIS, N, 1)
    h_rb = a_seg * _rician(rng, _ula(N, rng.uniform(-np.pi / 2, np.pi / 2)), k_lin)
    h_pj_r = np.empty((J, N), dtype=complex)
    h_rj = np.empty((J, N), dtype=complex)
    for j in range(J):
        rng = stream(_RIS, N, 2, j)
        h_pj_r[j] = a_seg * _rician(rng, _ula(N, rng.uniform(-np.pi / 2, np.pi / 2)), k_lin)
        rng = stream(_RIS, N, 3, j)
        h_rj[j] = a_seg * _rician(rng, _ula(N, rng.uniform(-np.pi / 2, np.pi / 2)), k_lin)

    ch = ChannelSet(h_j, h_pj_b, h_s, h_sj, h_pj_r, H_sr, h_rj, h_rb)
    ch.validate(scenario)
    return ch


def assemble_problem(
    scenario: Scenario | Sequence[float] | np.ndarray,
    channels: ChannelSet,
    noise_w: float = 0.0,
) -> ProblemData:
    """Build the lifted matrices from a channel realisation.

    ``scenario`` may also be given directly as the per-PN transmit powers
    in watts. A positive ``noise_w`` turns every SIR computed from the
    result into an SINR by adding ``noise_w`` to the last diagonal entry
    of ``Phi_sum``.
    """
    if not (np.isfinite(noise_w) and noise_w >= 0):
        raise ValueError("noise_w must be finite and non-negative")
    if isinstance(scenario, Scenario):
        channels.validate(scenario)
        p_pap = scenario.p_pap_w
    else:
        channels.validate()
        p_pap = np.asarray(scenario, dtype=float)
    J, M, N = channels.dims
    if p_pap.shape != (J,):
        raise ValueError("need one P-AP power per PN")

    H_hat_s = np.vstack([channels.h_rb.conj()[:, None] * channels.H_sr, channels.h_s.conj()[None, :]])
    H_hat_sj = np.stack(
        [
            np.vstack([channels.h_rj[j].conj()[:, None] * channels.H_sr, channels.h_sj[j].conj()[None, :]])
            for j in range(J)
        ]
    )
    h_tilde = np.hstack([channels.h_rb.conj()[None, :] * channels.h_pj_r, channels.h_pj_b[:, None]])
    Phi = np.einsum("j,ja,jb->ab", p_pap, h_tilde, h_tilde.conj())
    Phi = 0.5 * (Phi + Phi.conj().T)
    Phi[N, N] += noise_w
    return ProblemData(H_hat_s, H_hat_sj, h_tilde, np.array(p_pap, dtype=float), Phi, float(noise_w))

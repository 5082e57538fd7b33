"""Dense second-order cone programming.

Problems have the form::

    minimize    c^T x
    subject to  ||A_i x + b_i|| <= g_i^T x + d_i,   i = 1..k
                F x = f

Equalities are removed by a null-space parametrisation and the remaining
cone program is solved by an infeasible-start primal-dual interior-point
method with Nesterov-Todd scaling and a Mehrotra predictor-corrector step.

Internally the cone constraints are written ``G x + s = h`` with ``s`` in
a product of second-order cones; every cone block is stored head first,
``s = (s_0, s_1)`` with ``s_0 >= ||s_1||``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "Cone",
    "SocpProblem",
    "SocpSolution",
    "ComplexEmbedding",
    "embed_complex",
    "quad_leq_linear_cone",
    "solve",
    "check_kkt",
]

TOL_KKT = 1e-8
_DEBUG = False
MAX_ITER = 200

try:  # optional compiled loop; same iteration, much lower per-call overhead
    from . import _ipm_jit
except ImportError:  # pragma: no cover - exercised only without numba
    _ipm_jit = None

# "numba" or "numpy"; tests switch this to compare the two implementations
BACKEND = "numba" if _ipm_jit is not None else "numpy"
_STATUS = {_ipm_jit.OPTIMAL: "optimal", _ipm_jit.MAX_ITER: "max_iter", _ipm_jit.INFEASIBLE: "infeasible"} if _ipm_jit else {}


@dataclass(frozen=True)
class Cone:
    """One constraint ``||A x + b|| <= g^T x + d``."""

    A: np.ndarray
    b: np.ndarray
    g: np.ndarray
    d: float

    @property
    def size(self) -> int:
        return self.A.shape[0] + 1


@dataclass
class SocpProblem:
    c: np.ndarray
    cones: list[Cone]
    F: np.ndarray | None = None
    f: np.ndarray | None = None
    assume_bounded: bool = False

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    def validate(self) -> None:
        n = self.dim
        if self.c.ndim != 1:
            raise ValueError("objective must be a vector")
        for i, cone in enumerate(self.cones):
            if cone.A.ndim != 2 or cone.A.shape[1] != n:
                raise ValueError(f"cone {i}: A has shape {cone.A.shape}, expected (*, {n})")
            if cone.b.shape != (cone.A.shape[0],):
                raise ValueError(f"cone {i}: b has shape {cone.b.shape}")
            if cone.g.shape != (n,):
                raise ValueError(f"cone {i}: g has shape {cone.g.shape}")
            if not np.isfinite(cone.d):
                raise ValueError(f"cone {i}: d is not finite")
        if (self.F is None) != (self.f is None):
            raise ValueError("F and f must be given together")
        if self.F is not None:
            if self.F.ndim != 2 or self.F.shape[1] != n:
                raise ValueError(f"F has shape {self.F.shape}, expected (*, {n})")
            if self.f.shape != (self.F.shape[0],):
                raise ValueError(f"f has shape {self.f.shape}")
        if not self.assume_bounded and not self._ball_bounded():
            raise ValueError(
                "feasible set not certified bounded; pass assume_bounded=True"
            )

    def _ball_bounded(self) -> bool:
        rows = [cone.A for cone in self.cones if not np.any(cone.g)]
        if not rows:
            return False
        A = np.vstack(rows)
        if self.F is not None and self.F.shape[0]:
            Z = scipy.linalg.null_space(self.F)
            if Z.shape[1] == 0:
                return True
            A = A @ Z
        return np.linalg.matrix_rank(A) == A.shape[1]


@dataclass
class SocpSolution:
    x: np.ndarray
    obj: float
    status: str
    kkt_residual: float
    z: list[np.ndarray] = field(default_factory=list)
    y: np.ndarray | None = None
    iterations: int = 0
    certificate: np.ndarray | None = None


# ---------------------------------------------------------------------------
# complex <-> real plumbing


@dataclass(frozen=True)
class ComplexEmbedding:
    """Maps ``C^m`` onto ``R^{2m}`` as ``[Re v; Im v]``."""

    m: int

    def embed(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        return np.concatenate([v.real, v.imag])

    def lift(self, x: np.ndarray) -> np.ndarray:
        return x[: self.m] + 1j * x[self.m : 2 * self.m]

    def inner_rows(self, a: np.ndarray) -> np.ndarray:
        """Real 2 x 2m matrix taking ``embed(v)`` to ``[Re a^H v, Im a^H v]``."""
        a = np.asarray(a, dtype=complex)
        return np.array(
            [
                np.concatenate([a.real, a.imag]),
                np.concatenate([-a.imag, a.real]),
            ]
        )

    def matrix(self, B: np.ndarray) -> np.ndarray:
        """Real 2p x 2m matrix taking ``embed(v)`` to ``embed(B v)``."""
        B = np.asarray(B, dtype=complex)
        return np.block([[B.real, -B.imag], [B.imag, B.real]])


def embed_complex(m: int) -> ComplexEmbedding:
    if m < 1:
        raise ValueError("embedding dimension must be positive")
    return ComplexEmbedding(m)


def quad_leq_linear_cone(B: np.ndarray, t_index: int, dim: int | None = None) -> Cone:
    """Rotated-cone form of ``||B x||^2 <= x[t_index]``.

    Emits ``||[2 B x; t - 1]|| <= t + 1``, which holds exactly when
    ``||B x||^2 <= t`` (and therefore ``t >= 0``). ``B`` may have fewer
    than ``dim`` columns; it then acts on the leading coordinates.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[1] if dim is None else dim
    if B.shape[1] > n:
        raise ValueError("B has more columns than dim")
    B = np.hstack([B, np.zeros((B.shape[0], n - B.shape[1]))])
    if not 0 <= t_index < n:
        raise ValueError("t_index out of range")
    e_t = np.zeros(n)
    e_t[t_index] = 1.0
    A = np.vstack([2.0 * B, e_t])
    b = np.zeros(A.shape[0])
    b[-1] = -1.0
    return Cone(A=A, b=b, g=e_t, d=1.0)


# ---------------------------------------------------------------------------
# cone algebra, vectorised over a list of cone blocks


class _Blocks:
    def __init__(self, dims: list[int]):
        self.dims = np.asarray(dims, dtype=int)
        self.heads = np.concatenate([[0], np.cumsum(self.dims)[:-1]]).astype(int)
        self.m = int(self.dims.sum())
        self.k = len(dims)
        owner = np.repeat(np.arange(self.k), self.dims)
        self.mask = (owner[:, None] == owner[None, :]).astype(float)
        self.tail = np.ones(self.m, dtype=bool)
        self.tail[self.heads] = False
        # J = diag(1, -1, ..., -1) per block
        self.jsign = np.where(self.tail, -1.0, 1.0)
        self.e = np.zeros(self.m)
        self.e[self.heads] = 1.0

    def dot(self, u, v):
        return np.add.reduceat(u * v, self.heads, axis=0)

    def spread(self, per_block):
        return np.repeat(per_block, self.dims, axis=0)

    def tail_norm(self, u):
        return np.sqrt(np.add.reduceat(np.where(self.tail, u * u, 0.0), self.heads))

    def jnorm2(self, u):
        # u_0^2 - ||u_1||^2, factored to limit cancellation near the boundary
        t = self.tail_norm(u)
        u0 = u[self.heads]
        return (u0 - t) * (u0 + t)

    def prod(self, u, v):
        out = self.spread(u[self.heads]) * v + self.spread(v[self.heads]) * u
        out[self.heads] = self.dot(u, v)
        return out

    def solve_prod(self, lam, r):
        """Return x with ``lam o x = r``."""
        l0 = lam[self.heads]
        det = self.jnorm2(lam)
        lt_r = self.dot(lam, r) - l0 * r[self.heads]
        x0 = (l0 * r[self.heads] - lt_r) / det
        out = (r - self.spread(x0) * lam) / self.spread(l0)
        out[self.heads] = x0
        return out

    def interior_shift(self, u):
        """Smallest alpha with ``u + alpha e`` on the cone boundary."""
        return np.max(self.tail_norm(u) - u[self.heads])

    def max_step(self, lam, *ds):
        """Largest alpha keeping ``lam + alpha d`` in the cone for every ``d``
        (``lam`` interior)."""
        d = np.stack(ds, axis=1)
        lk = np.sqrt(self.jnorm2(lam))
        lbar = (lam / self.spread(lk))[:, None]
        jd = self.jsign[:, None] * d
        lkc = lk[:, None]
        rho0 = self.dot(lbar, jd) / lkc
        factor = (rho0 + d[self.heads] / lkc) / (lbar[self.heads] + 1.0)
        rho = d / self.spread(lkc) - self.spread(factor) * lbar
        rho[self.heads] = 0.0
        denom = np.sqrt(np.maximum(self.dot(rho, rho), 0.0)) - rho0
        worst = np.max(denom)
        return np.inf if worst <= 0.0 else 1.0 / worst


class _Scaling:
    """Nesterov-Todd scaling ``W = beta (2 w w^T - J)`` per block, ``W z = W^{-1} s``."""

    def __init__(self, blk: _Blocks, s: np.ndarray, z: np.ndarray):
        sn = np.sqrt(blk.jnorm2(s))
        zn = np.sqrt(blk.jnorm2(z))
        sbar = s / blk.spread(sn)
        zbar = z / blk.spread(zn)
        gamma = np.sqrt((1.0 + blk.dot(sbar, zbar)) / 2.0)
        # wbar satisfies (2 wbar wbar^T - J) zbar = sbar, i.e. it scales W^2;
        # W itself uses the square-root point v
        wbar = (sbar + blk.jsign * zbar) / blk.spread(2.0 * gamma)
        self.w = (wbar + blk.e) / blk.spread(np.sqrt(2.0 * (wbar[blk.heads] + 1.0)))
        self.jw = blk.jsign * self.w
        self.beta = np.sqrt(sn / zn)
        self.blk = blk

    def apply(self, u):
        blk = self.blk
        coef = blk.dot(self.w, u)
        if u.ndim == 1:
            out = 2.0 * self.w * blk.spread(coef) - blk.jsign * u
            return out * blk.spread(self.beta)
        out = 2.0 * self.w[:, None] * blk.spread(coef) - blk.jsign[:, None] * u
        return out * blk.spread(self.beta)[:, None]

    def inverse_matrix(self) -> np.ndarray:
        """Dense block-diagonal ``W^{-1}``."""
        blk = self.blk
        inv = 2.0 * np.outer(self.jw, self.jw) * blk.mask
        inv[np.diag_indices_from(inv)] -= blk.jsign
        return inv / blk.spread(self.beta)[:, None]

    def apply_inv(self, u):
        blk = self.blk
        if u.ndim == 1:
            coef = blk.dot(self.jw, u)
            out = 2.0 * self.jw * blk.spread(coef) - blk.jsign * u
            return out / blk.spread(self.beta)
        coef = blk.dot(self.jw[:, None], u)
        out = 2.0 * self.jw[:, None] * blk.spread(coef) - blk.jsign[:, None] * u
        return out / blk.spread(self.beta)[:, None]


# ---------------------------------------------------------------------------
# problem preparation


def _stack(problem: SocpProblem):
    """Cone data as ``G x + s = h`` with per-cone normalisation."""
    n = problem.dim
    if not problem.cones:
        G, h, dims, kappa = np.zeros((0, n)), np.zeros(0), [], np.zeros(0)
    else:
        G = np.vstack([row for cone in problem.cones for row in (-cone.g[None, :], -cone.A)])
        h = np.concatenate([np.r_[cone.d, cone.b] for cone in problem.cones])
        dims = [cone.size for cone in problem.cones]
        heads = np.concatenate([[0], np.cumsum(dims)[:-1]])
        size = np.maximum.reduceat(np.maximum(np.max(np.abs(G), axis=1), np.abs(h)), heads)
        kappa = np.where(size > 0, 1.0 / np.where(size > 0, size, 1.0), 1.0)
        rep = np.repeat(kappa, dims)
        G = G * rep[:, None]
        h = h * rep
    cmax = np.max(np.abs(problem.c), initial=0.0)
    sigma = cmax if cmax > 0 else 1.0
    return G, h, dims, kappa, sigma


def _normalised_equalities(problem: SocpProblem):
    if problem.F is None or problem.F.shape[0] == 0:
        return None, None
    F = np.asarray(problem.F, dtype=float)
    f = np.asarray(problem.f, dtype=float)
    rn = np.maximum(np.linalg.norm(F, axis=1), np.abs(f))
    rn[rn == 0] = 1.0
    return F / rn[:, None], f / rn


# ---------------------------------------------------------------------------
# independent optimality check


def check_kkt(problem: SocpProblem, x: np.ndarray, z: list[np.ndarray], _stacked=None) -> float:
    """Recompute KKT residuals of ``(x, z)`` from the raw problem data.

    Returns the maximum of primal infeasibility, dual infeasibility and
    complementarity, all measured on the cone-normalised problem. The
    equality multipliers are re-estimated here by least squares.
    """
    if not np.all(np.isfinite(x)) or not all(np.all(np.isfinite(zi)) for zi in z):
        return np.inf
    G, h, dims, kappa, sigma = _stack(problem) if _stacked is None else _stacked
    Fn, fn = _normalised_equalities(problem)
    blk = _Blocks(dims) if dims else None
    c = problem.c / sigma

    residuals = [0.0]
    if blk is not None:
        s = h - G @ x
        residuals.append(max(0.0, float(np.max(blk.tail_norm(s) - s[blk.heads]))))
        zn = np.concatenate(z) / (sigma * np.repeat(kappa, dims)) if z else np.zeros(0)
        residuals.append(max(0.0, float(np.max(blk.tail_norm(zn) - zn[blk.heads]))))
        dual = c + G.T @ zn
        comp = abs(float(s @ zn))
        residuals.append(comp)
    else:
        dual = c.copy()
    if Fn is not None:
        residuals.append(float(np.max(np.abs(Fn @ x - fn))))
        nu, *_ = np.linalg.lstsq(Fn.T, -dual, rcond=None)
        dual = dual + Fn.T @ nu
    residuals.append(float(np.max(np.abs(dual), initial=0.0)))
    return max(residuals)


# ---------------------------------------------------------------------------
# solver


def solve(problem: SocpProblem, tol: float = TOL_KKT, max_iter: int = MAX_ITER) -> SocpSolution:
    """Solve a :class:`SocpProblem`.

    ``status`` is ``"optimal"`` only when :func:`check_kkt` confirms a
    residual below ``tol``; an inconsistent problem yields ``"infeasible"``
    with a Farkas-type certificate, anything else ``"max_iter"``.
    """
    problem.validate()
    n = problem.dim
    stacked = _stack(problem)
    G, h, dims, kappa, sigma = stacked
    c = problem.c / sigma
    Fn, fn = _normalised_equalities(problem)

    if Fn is not None:
        x_p, *_ = np.linalg.lstsq(Fn, fn, rcond=None)
        eq_res = Fn @ x_p - fn
        if np.max(np.abs(eq_res)) > 1e3 * tol:
            return SocpSolution(
                x=x_p,
                obj=float(problem.c @ x_p),
                status="infeasible",
                kkt_residual=np.inf,
                certificate=eq_res,
            )
        Z = scipy.linalg.null_space(Fn)
    else:
        x_p = np.zeros(n)
        Z = np.eye(n)

    Gr = G @ Z
    hr = h - G @ x_p
    cr = Z.T @ c

    if not dims:
        # nothing but equalities; bounded only if the affine set is a point
        if Z.shape[1] and np.max(np.abs(cr)) > tol:
            return SocpSolution(x_p, float(problem.c @ x_p), "max_iter", np.inf)
        kkt = check_kkt(problem, x_p, [])
        return SocpSolution(x_p, float(problem.c @ x_p), "optimal", kkt)

    blk = _Blocks(dims)
    if Z.shape[1] == 0:
        x = x_p
        viol = float(np.max(blk.tail_norm(hr) - hr[blk.heads]))
        if viol > tol:
            return SocpSolution(x, float(problem.c @ x), "infeasible", np.inf)
        z = [np.zeros(d) for d in dims]
        kkt = check_kkt(problem, x, z, stacked)
        return SocpSolution(x, float(problem.c @ x), "optimal", kkt, z=z)

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        y, s, zz, status, iters, cert = _ipm(cr, Gr, hr, blk, tol, max_iter)
    x = x_p + Z @ y
    zs = zz * sigma * np.repeat(kappa, dims)
    z = np.split(zs, np.cumsum(dims)[:-1])
    obj = float(problem.c @ x)
    if status == "infeasible":
        return SocpSolution(x, obj, status, np.inf, z=z, iterations=iters, certificate=cert)
    kkt = check_kkt(problem, x, z, stacked)
    if status == "optimal" and kkt > tol:
        status = "max_iter"
    elif status == "max_iter" and kkt <= tol:
        # the iteration stalled on a vanishing step at a point that already
        # meets the scaled KKT conditions
        status = "optimal"
    nu = None
    if Fn is not None:
        dual = problem.c + sigma * (G.T @ zz)
        nu, *_ = np.linalg.lstsq(problem.F.T, -dual, rcond=None)
    return SocpSolution(x, obj, status, kkt, z=z, y=nu, iterations=iters)


def _factor(H, reg):
    H = H.copy()
    H[np.diag_indices_from(H)] += reg
    try:
        cho = scipy.linalg.cho_factor(H, check_finite=False, overwrite_a=True)
        return lambda r: scipy.linalg.cho_solve(cho, r, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        pinv = np.linalg.pinv(H)
        return lambda r: pinv @ r


def _ipm(c, G, h, blk: _Blocks, tol, max_iter):
    if BACKEND == "numba" and _ipm_jit is not None:
        x, s, z, code, it, cert = _ipm_jit.ipm(
            np.ascontiguousarray(c, dtype=float),
            np.ascontiguousarray(G, dtype=float),
            np.ascontiguousarray(h, dtype=float),
            blk.heads.astype(np.int64),
            blk.dims.astype(np.int64),
            float(tol),
            int(max_iter),
        )
        status = _STATUS[code]
        return x, s, z, status, it, (cert if status == "infeasible" else None)
    return _ipm_numpy(c, G, h, blk, tol, max_iter)


def _ipm_numpy(c, G, h, blk: _Blocks, tol, max_iter):
    m, p = G.shape
    target = 0.1 * tol

    # starting point: least-squares primal, min-norm dual, shifted inside
    H0 = G.T @ G + 1e-12 * np.eye(p)
    x = np.linalg.solve(H0, G.T @ h)
    s = h - G @ x
    z = -G @ np.linalg.solve(H0, c)
    for u in (s, z):
        shift = blk.interior_shift(u)
        if shift >= -1e-8 * max(1.0, np.linalg.norm(u)):
            u += (1.0 + shift) * blk.e
    ns = blk.k

    status = "max_iter"
    best = (np.inf, x, s, z)
    it = 0
    for it in range(1, max_iter + 1):
        rx = G.T @ z + c
        rz = G @ x + s - h
        gap = float(s @ z)
        pres = np.max(np.abs(rz))
        dres = np.max(np.abs(rx))
        merit = max(pres, dres, abs(gap))
        if not np.isfinite(merit):
            break
        if _DEBUG:
            print(it, pres, dres, gap)
        if merit < best[0]:
            best = (merit, x, s, z)
        if merit <= target:
            status = "optimal"
            break

        # Farkas ray: z in K, G^T z ~ 0, h^T z < 0
        hz = float(h @ z)
        if hz < 0 and np.max(np.abs(G.T @ z)) <= target * -hz and pres > target:
            return x, s, z, "infeasible", it, z / -hz

        mu = gap / ns
        W = _Scaling(blk, s, z)
        lam = W.apply(z)
        Gs = W.inverse_matrix() @ G
        Wrz = W.apply_inv(rz)
        H = Gs.T @ Gs
        reg = 1e-14 * max(1.0, float(np.max(np.abs(np.diag(H)))))
        hsolve = _factor(H, reg)

        def direction(rc):
            u = blk.solve_prod(lam, rc)
            rhs = -rx - Gs.T @ (Wrz + u)
            dx = hsolve(rhs)
            for _ in range(2):
                dx = dx + hsolve(rhs - H @ dx)
            dz_s = Gs @ dx + Wrz + u
            ds_s = u - dz_s
            return dx, ds_s, dz_s

        lamlam = blk.prod(lam, lam)
        dx, ds_s, dz_s = direction(-lamlam)
        a_aff = min(1.0, blk.max_step(lam, ds_s, dz_s))
        sig = (1.0 - a_aff) ** 3
        rc = -lamlam - blk.prod(ds_s, dz_s) + sig * mu * blk.e
        dx, ds_s, dz_s = direction(rc)
        a = min(1.0, 0.99 * blk.max_step(lam, ds_s, dz_s))
        if not a > 1e-12:
            break
        x = x + a * dx
        s = s + a * W.apply(ds_s)
        z = z + a * W.apply_inv(dz_s)
    merit, x, s, z = best
    if merit <= target:
        status = "optimal"
    return x, s, z, status, it, None

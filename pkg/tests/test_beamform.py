import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risshare.beamform import solve_p3
from risshare.metrics import pn_interference, su_sir
from risshare.scenario import ChannelSet, ReflectVector, assemble_problem

from conftest import make_instance, random_unit


def _setup(seed, j=2, m=4, n=8):
    sc, ch, pd = make_instance(seed, j=j, m=m, n=n)
    th = ReflectVector.from_entries(random_unit(np.random.default_rng(seed), n, 0.9))
    return sc, pd, th


def _a(pd, th):
    return pd.H_hat_s.conj().T @ th.theta_hat


@pytest.mark.parametrize("seed", range(50))
def test_unconstrained_interference_gives_maximum_ratio(seed):
    sc, pd, th = _setup(seed)
    res = solve_p3(pd, th, sc.p_max_w, np.inf)
    a = _a(pd, th)
    mrt = np.sqrt(sc.p_max_w) * a / np.linalg.norm(a)
    np.testing.assert_allclose(res.v, mrt, rtol=0, atol=1e-8 * np.max(np.abs(mrt)))
    assert res.objective == pytest.approx(np.sqrt(sc.p_max_w) * np.linalg.norm(a), rel=1e-8)
    assert res.power_active and not res.interference_active.any()


def test_zero_threshold_single_antenna_forces_zero_beam():
    sc, pd, th = _setup(1, j=1, m=1, n=3)
    assert abs(np.vdot(pd.H_hat_sj[0].conj().T @ th.theta_hat, [1.0])) > 0
    res = solve_p3(pd, th, sc.p_max_w, 0.0)
    assert res.status == "optimal"
    np.testing.assert_allclose(res.v, 0.0, atol=1e-12)
    assert res.objective == pytest.approx(0.0, abs=1e-12)


def _grid_oracle(a, b, p_max, gbar, rng):
    """max |a^H v| over ||v||^2 <= P, |b^H v|^2 <= gbar for M = 2.

    A common phase is irrelevant, so v = (x, y + i z) with x >= 0; the box
    is gridded densely and the best point is refined by shrinking boxes.
    """
    r = np.sqrt(p_max)

    def best_of(pts):
        v = np.stack([pts[:, 0] + 0j, pts[:, 1] + 1j * pts[:, 2]], axis=1)
        ok = (np.sum(np.abs(v) ** 2, axis=1) <= p_max) & (np.abs(v @ b.conj()) ** 2 <= gbar)
        if not ok.any():
            return None, -np.inf
        val = np.abs(v[ok] @ a.conj())
        k = int(np.argmax(val))
        return pts[ok][k], float(val[k])

    g = np.linspace(-r, r, 81)
    X, Y, Z = np.meshgrid(np.linspace(0, r, 41), g, g, indexing="ij")
    x, best = best_of(np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1))
    width = r / 20
    for _ in range(60):
        y, val = best_of(x + rng.uniform(-width, width, (20_000, 3)))
        if val > best:
            x, best = y, val
        else:
            width *= 0.7
    return best


@pytest.mark.parametrize("seed", range(10))
def test_two_antenna_instances_match_grid_oracle(seed):
    sc, pd, th = _setup(100 + seed, j=1, m=2, n=4)
    res = solve_p3(pd, th, sc.p_max_w, sc.gamma_bar_w)
    a = _a(pd, th)
    b = pd.H_hat_sj[0].conj().T @ th.theta_hat
    ref = _grid_oracle(a, b, sc.p_max_w, sc.gamma_bar_w[0], np.random.default_rng(seed))
    assert res.objective == pytest.approx(ref, rel=1e-3)
    assert res.objective >= ref * (1 - 1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), j=st.integers(1, 3), m=st.integers(1, 4))
def test_result_invariants(seed, j, m):
    sc, pd, th = _setup(seed, j=j, m=m)
    res = solve_p3(pd, th, sc.p_max_w, sc.gamma_bar_w)
    assert res.status == "optimal"
    assert np.vdot(res.v, res.v).real <= sc.p_max_w * (1 + 1e-9)
    assert np.all(pn_interference(pd, th, res.v) <= sc.gamma_bar_w * (1 + 1e-9))
    inner = np.vdot(_a(pd, th), res.v)
    assert abs(inner.imag) <= 1e-8 * (1 + abs(res.objective))
    assert inner.real >= 0
    # the SIR of the beam is the squared objective over the interference power
    den = pd.denominator(th.theta_hat)
    assert su_sir(pd, th, res.v) == pytest.approx(res.objective**2 / den, rel=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_objective_is_monotone_in_budget(seed):
    sc, pd, th = _setup(seed)
    objs = [solve_p3(pd, th, p, sc.gamma_bar_w).objective for p in np.geomspace(1e-4, 1.0, 8)]
    assert all(b >= a * (1 - 1e-8) for a, b in zip(objs, objs[1:]))


def test_degenerate_effective_channel():
    J, M, N = 1, 2, 3
    z = lambda *s: np.zeros(s, dtype=complex)  # noqa: E731
    o = lambda *s: np.ones(s, dtype=complex)  # noqa: E731
    ch = ChannelSet(o(J), o(J), z(M), o(J, M), o(J, N), o(N, M), o(J, N), z(N))
    pd = assemble_problem([1.0], ch)
    res = solve_p3(pd, ReflectVector.from_entries(np.full(N, 0.5)), 1.0, [1.0])
    assert res.degenerate and res.objective == 0.0
    np.testing.assert_array_equal(res.v, 0.0)


def test_input_validation():
    sc, pd, th = _setup(0)
    with pytest.raises(ValueError):
        solve_p3(pd, th, 0.0, sc.gamma_bar_w)
    with pytest.raises(ValueError):
        solve_p3(pd, th, 1.0, -1.0)


def test_active_constraints_report():
    sc, pd, th = _setup(3)
    res = solve_p3(pd, th, sc.p_max_w, sc.gamma_bar_w)
    act = res.active_constraints
    gam = pn_interference(pd, th, res.v)
    np.testing.assert_array_equal(act["interference"], gam >= sc.gamma_bar_w * (1 - 1e-6))
    assert act["power"] == (np.vdot(res.v, res.v).real >= sc.p_max_w * (1 - 1e-6))

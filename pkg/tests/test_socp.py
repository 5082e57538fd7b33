import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from risshare import socp
from risshare.socp import Cone, SocpProblem, check_kkt, embed_complex, quad_leq_linear_cone, solve

BACKENDS = ["numpy"] + (["numba"] if socp._ipm_jit is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    monkeypatch.setattr(socp, "BACKEND", request.param)
    return request.param


def ball(n, radius=1.0):
    return Cone(np.eye(n), np.zeros(n), np.zeros(n), radius)


def cone_slack(cone, x):
    return cone.g @ x + cone.d - np.linalg.norm(cone.A @ x + cone.b)


def random_problem(rng, n, k=3, radius=2.0):
    """``k`` random cones that contain the origin strictly, plus a ball."""
    cones = []
    for _ in range(k):
        A = rng.standard_normal((rng.integers(1, 4), n))
        b = 0.3 * rng.standard_normal(A.shape[0])
        g = 0.3 * rng.standard_normal(n)
        d = np.linalg.norm(b) + rng.uniform(0.2, 1.5)
        cones.append(Cone(A, b, g, float(d)))
    cones.append(ball(n, radius))
    return SocpProblem(c=rng.standard_normal(n), cones=cones)


def feasible_mask(problem, pts):
    ok = np.ones(len(pts), dtype=bool)
    for cone in problem.cones:
        ok &= np.linalg.norm(pts @ cone.A.T + cone.b, axis=1) <= pts @ cone.g + cone.d
    return ok


def grid_oracle(problem, rng, samples=200_000, box=2.0, rounds=80):
    """Derivative-free reference optimum.

    The best point of a dense random grid over the box is refined by a
    shrinking-box local search; a generic NLP solver started there is
    kept only if it lands feasible and lower.
    """
    n = problem.dim
    pts = rng.uniform(-box, box, (samples, n))
    feas = pts[feasible_mask(problem, pts)]
    x = feas[np.argmin(feas @ problem.c)]
    r = box / 4
    for _ in range(rounds):
        cand = x + rng.uniform(-r, r, (20_000, n))
        cand = cand[feasible_mask(problem, cand)]
        if len(cand):
            y = cand[np.argmin(cand @ problem.c)]
            if problem.c @ y < problem.c @ x:
                x = y
                continue
        r *= 0.7
    best = float(problem.c @ x)
    cons = [{"type": "ineq", "fun": (lambda z, c=cone: cone_slack(c, z))} for cone in problem.cones]
    res = scipy.optimize.minimize(
        lambda z: problem.c @ z, x, jac=lambda z: problem.c, constraints=cons, method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 500},
    )
    if min(cone_slack(c, res.x) for c in problem.cones) >= -1e-9:
        best = min(best, float(res.fun))
    return best


# ---------------------------------------------------------------- examples


def test_unit_ball_extreme_point(backend):
    sol = solve(SocpProblem(c=np.array([1.0, 0.0, 0.0]), cones=[ball(3)]))
    assert sol.status == "optimal"
    np.testing.assert_allclose(sol.x, [-1, 0, 0], atol=1e-7)
    assert sol.obj == pytest.approx(-1.0, abs=1e-8)


def test_fixed_coordinate_on_circle(backend):
    p = SocpProblem(c=np.array([1.0, 1.0]), cones=[ball(2)], F=np.array([[1.0, 0.0]]), f=np.array([0.5]))
    sol = solve(p)
    assert sol.status == "optimal"
    np.testing.assert_allclose(sol.x, [0.5, -np.sqrt(0.75)], atol=1e-7)
    assert sol.obj == pytest.approx(0.5 - 0.8660254, abs=1e-7)


@pytest.mark.parametrize("seed", range(10))
def test_random_instances_match_grid_oracle(seed, backend):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    p = random_problem(rng, n)
    sol = solve(p)
    assert sol.status == "optimal"
    ref = grid_oracle(p, np.random.default_rng(100 + seed))
    assert abs(sol.obj - ref) <= 1e-3 * max(1.0, abs(ref))
    # the solver may only beat the oracle by rounding
    assert sol.obj >= ref - 1e-6 * max(1.0, abs(ref))


def test_optimal_solutions_pass_kkt_recheck(backend):
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = random_problem(rng, int(rng.integers(2, 8)))
        sol = solve(p)
        assert sol.status == "optimal"
        assert check_kkt(p, sol.x, sol.z) <= socp.TOL_KKT
        assert min(cone_slack(c, sol.x) for c in p.cones) >= -1e-8


def test_scale_equivariance(backend):
    rng = np.random.default_rng(3)
    p = random_problem(rng, 4)
    x1 = solve(p).x
    for alpha in (1e-3, 7.0, 1e4):
        x2 = solve(SocpProblem(alpha * p.c, p.cones)).x
        np.testing.assert_allclose(x2, x1, atol=1e-9)


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend unavailable")
    rng = np.random.default_rng(11)
    old = socp.BACKEND
    try:
        for _ in range(15):
            p = random_problem(rng, int(rng.integers(2, 8)))
            out = []
            for b in BACKENDS:
                socp.BACKEND = b
                out.append(solve(p))
            assert out[0].status == out[1].status == "optimal"
            assert out[0].iterations == out[1].iterations
            np.testing.assert_allclose(out[0].x, out[1].x, atol=1e-9)
    finally:
        socp.BACKEND = old


def test_infeasible_problem_reports_certificate(backend):
    # ||x|| <= 1 together with x_1 >= 2 written as a cone |0| <= x_1 - 2
    p = SocpProblem(
        c=np.array([0.0, 1.0]),
        cones=[ball(2), Cone(np.zeros((1, 2)), np.zeros(1), np.array([1.0, 0.0]), -2.0)],
    )
    sol = solve(p)
    assert sol.status == "infeasible"
    assert sol.certificate is not None


def test_inconsistent_equalities_are_infeasible(backend):
    p = SocpProblem(c=np.zeros(2), cones=[ball(2)], F=np.array([[1.0, 0.0], [1.0, 0.0]]), f=np.array([0.1, 0.2]))
    assert solve(p).status == "infeasible"


def test_singleton_feasible_set_is_not_infeasible(backend):
    # ||x|| <= 0: the origin is the only feasible point
    sol = solve(SocpProblem(c=np.array([1.0, -2.0]), cones=[ball(2, 0.0)]))
    assert sol.status in ("optimal", "max_iter")
    np.testing.assert_allclose(sol.x, 0.0, atol=1e-6)


def test_iteration_cap_never_claims_optimal(backend):
    p = random_problem(np.random.default_rng(5), 5)
    sol = solve(p, max_iter=2)
    assert sol.status == "max_iter"


def test_stalled_iteration_at_a_kkt_point_is_optimal(backend, monkeypatch):
    p = random_problem(np.random.default_rng(5), 5)
    ref = solve(p)
    inner = socp._ipm

    def stalled(*args):
        x, s, z, _, it, cert = inner(*args)
        return x, s, z, "max_iter", it, cert

    monkeypatch.setattr(socp, "_ipm", stalled)
    sol = solve(p)
    assert sol.status == "optimal" and sol.kkt_residual <= socp.TOL_KKT
    np.testing.assert_array_equal(sol.x, ref.x)


def test_deterministic(backend):
    p = random_problem(np.random.default_rng(9), 5)
    a, b = solve(p), solve(p)
    assert a.x.tobytes() == b.x.tobytes()


@pytest.mark.parametrize(
    "make",
    [
        lambda: SocpProblem(np.zeros(2), [Cone(np.eye(3), np.zeros(3), np.zeros(3), 1.0)]),
        lambda: SocpProblem(np.zeros(2), [Cone(np.eye(2), np.zeros(3), np.zeros(2), 1.0)]),
        lambda: SocpProblem(np.zeros(2), [ball(2)], F=np.ones((1, 3)), f=np.ones(1)),
        lambda: SocpProblem(np.zeros(2), [ball(2)], F=np.ones((1, 2)), f=None),
        lambda: SocpProblem(np.zeros(2), [Cone(np.ones((1, 2)), np.zeros(1), np.zeros(2), 1.0)]),
    ],
)
def test_structural_errors(make):
    with pytest.raises(ValueError):
        solve(make())


def test_assume_bounded_skips_the_check():
    p = SocpProblem(np.array([0.0, 1.0]), [ball(2)], assume_bounded=True)
    assert solve(p).status == "optimal"


# ---------------------------------------------------------------- embedding


def test_embed_examples():
    emb = embed_complex(1)
    np.testing.assert_array_equal(emb.embed([1 + 2j]), [1.0, 2.0])
    x = emb.embed([1.0])
    assert np.linalg.norm(emb.inner_rows([1j]) @ x) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        embed_complex(0)


def test_embedded_modulus_matches_complex_arithmetic():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 9))
        a = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        a, v = a / np.linalg.norm(a), v / np.linalg.norm(v)
        emb = embed_complex(m)
        np.testing.assert_array_equal(emb.lift(emb.embed(v)), v)
        worst = max(worst, abs(np.linalg.norm(emb.inner_rows(a) @ emb.embed(v)) - abs(np.vdot(a, v))))
    assert worst <= 1e-15


def test_embedded_matrix_product():
    rng = np.random.default_rng(1)
    B = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    emb = embed_complex(4)
    np.testing.assert_allclose(emb.matrix(B) @ emb.embed(v), embed_complex(3).embed(B @ v), atol=1e-14)


# ---------------------------------------------------------------- rotated cone


def _in_cone(cone, x, tol=0.0):
    return np.linalg.norm(cone.A @ x + cone.b) <= cone.g @ x + cone.d + tol


def test_rotated_cone_boundary_example():
    cone = quad_leq_linear_cone(np.eye(2), 2, 3)
    x = np.array([0.6, 0.0, 0.36])
    np.testing.assert_allclose(cone.A @ x + cone.b, [1.2, 0.0, -0.64], atol=1e-15)
    assert np.linalg.norm(cone.A @ x + cone.b) == pytest.approx(1.36, abs=1e-15)
    assert cone.g @ x + cone.d == pytest.approx(1.36, abs=1e-15)


def test_rotated_cone_origin_is_on_boundary():
    cone = quad_leq_linear_cone(np.eye(2), 2, 3)
    x = np.zeros(3)
    assert np.linalg.norm(cone.A @ x + cone.b) == cone.g @ x + cone.d


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_rotated_cone_membership_matches_quadratic(seed):
    rng = np.random.default_rng(seed)
    p, n = rng.integers(1, 4), rng.integers(1, 5)
    B = rng.standard_normal((p, n))
    x = rng.standard_normal(n)
    q = float(np.sum((B @ x) ** 2))
    # sample t on both sides of the boundary, away from it by a margin
    t = q * rng.choice([0.5, 0.9, 1.1, 2.0]) + rng.choice([-1.0, 1.0]) * 1e-3
    cone = quad_leq_linear_cone(np.hstack([B, np.zeros((p, 1))]), n, n + 1)
    assert _in_cone(cone, np.append(x, t)) == (q <= t and t >= 0)


def test_rotated_cone_argument_checks():
    with pytest.raises(ValueError):
        quad_leq_linear_cone(np.eye(2), 5)
    with pytest.raises(ValueError):
        quad_leq_linear_cone(np.eye(3), 0, dim=2)

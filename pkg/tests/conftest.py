"""Shared helpers: random problem instances and the acceptance summary."""

from __future__ import annotations

import numpy as np
import pytest

from risshare.scenario import Scenario, assemble_problem, channel_seed, generate_channels

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def make_instance(seed: int, j: int = 2, m: int = 4, n: int = 8, noise: bool = True, **scenario_kw):
    """Scenario, channels and lifted data for one random draw."""
    sc = Scenario(j_pns=j, m_antennas=m, n_elements=n, **scenario_kw)
    ch = generate_channels(sc, seed=channel_seed(12345, seed))
    pd = assemble_problem(sc, ch, noise_w=sc.noise_w if noise else 0.0)
    return sc, ch, pd


def random_unit(rng: np.random.Generator, n: int, amp: float = 1.0) -> np.ndarray:
    return amp * np.exp(1j * rng.uniform(0.0, 2 * np.pi, n))


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

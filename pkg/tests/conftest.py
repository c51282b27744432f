from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from stochfreq.ito import from_gmm
from stochfreq.presets import BIMODAL_GMM, DESK_GMM, reference_params
from stochfreq.sfr import LinearSdeSystem, aggregate, build_sde_system

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def random_stable_matrix(rng: np.random.Generator, n: int = 3) -> np.ndarray:
    """Random real matrix shifted so every eigenvalue has real part <= -0.2."""
    M = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(M).real) + rng.uniform(0.2, 1.5)
    return M - shift * np.eye(n)


def reference_system(model=DESK_GMM, drift_rate: float = 1.0, **shares) -> LinearSdeSystem:
    params = reference_params(**shares)
    return build_sde_system(aggregate(params), params, from_gmm(model, drift_rate))


@pytest.fixture(scope="session")
def desk_system() -> LinearSdeSystem:
    return reference_system(DESK_GMM)


@pytest.fixture(scope="session")
def bimodal_system() -> LinearSdeSystem:
    return reference_system(BIMODAL_GMM)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

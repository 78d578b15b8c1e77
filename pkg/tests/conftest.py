from __future__ import annotations

import numpy as np
import pytest

from ccep.panel import PanelDataset

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Log one acceptance line; the summary is printed at the end of the run."""

    def _record(name: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


def random_panel(rng: np.random.Generator, N: int = 30, T: int = 6, k: int = 2,
                 factors: int = 1) -> PanelDataset:
    """Panel with a factor structure in both X and y, so CCE proxies are informative."""
    F = rng.normal(size=(T, factors)) + 1.0
    G = rng.normal(size=(N, factors, k))
    X = np.einsum("tp,npk->ntk", F, G) + rng.normal(size=(N, T, k))
    gam = rng.normal(size=(N, factors)) + 0.5
    beta = rng.normal(size=k)
    y = X @ beta + gam @ F.T + 0.5 * rng.normal(size=(N, T))
    return PanelDataset(y, X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)

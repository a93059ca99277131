import numpy as np
import pytest

from focusedmr.summary_data import Dataset

# Three-variant toy: beta_x=(0.1, 0.2, 0.3), beta_y=(0.02, 0.04, 0.09), every se 0.05.
TOY_BX = (0.1, 0.2, 0.3)
TOY_BY = (0.02, 0.04, 0.09)
TOY_SE = 0.05


def toy_dataset(core=(True, True, True)):
    se = [TOY_SE] * 3
    return Dataset.from_arrays(TOY_BX, se, TOY_BY, se, core)


def random_dataset(rng, p=20, n_core=5, theta=0.3, strength=4.0):
    sx = rng.uniform(0.02, 0.1, p)
    sy = rng.uniform(0.02, 0.1, p)
    bx = sx * (strength * rng.choice([-1, 1], p) + rng.standard_normal(p))
    by = theta * bx + sy * rng.standard_normal(p)
    core = np.arange(p) < n_core
    return Dataset.from_arrays(bx, sx, by, sy, core)


@pytest.fixture
def toy():
    return toy_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance bookkeeping: criterion number -> list of (ok, detail) parts.
ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {detail}")

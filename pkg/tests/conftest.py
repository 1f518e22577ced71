import functools

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "beamopt",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
    derandomize=True,
)
settings.load_profile("beamopt")


@functools.lru_cache(maxsize=None)
def _campaign(n, seed):
    from beamopt.synth import generate_campaign

    return tuple(generate_campaign(n, seed=seed))


@pytest.fixture(scope="session")
def campaign():
    """The 43-location synthetic campaign used by the end-to-end checks."""
    return list(_campaign(43, 7))


class _LmlGuard:
    """Wraps optimize_hyperparams so every call in the suite asserts the
    returned hyperparameters are no worse than the starting ones."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, X, y_db, h0, *args, **kwargs):
        from beamopt import gp

        h = self.fn(X, y_db, h0, *args, **kwargs)
        if len(y_db) >= 2:
            before = gp.log_marginal_likelihood(gp.fit(X, y_db, h0))
            after = gp.log_marginal_likelihood(gp.fit(X, y_db, h))
            assert after >= before - 1e-12, (before, after, h0, h)
        self.calls += 1
        return h


_GUARD = None


@pytest.fixture(autouse=True, scope="session")
def lml_guard():
    global _GUARD
    from beamopt import align, gp

    mp = pytest.MonkeyPatch()
    _GUARD = _LmlGuard(gp.optimize_hyperparams)
    mp.setattr(gp, "optimize_hyperparams", _GUARD)
    mp.setattr(align, "optimize_hyperparams", _GUARD)
    yield _GUARD
    mp.undo()


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> str:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])

import functools
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from migplan import builders, instances  # noqa: E402
from migplan.builders import VariableIndex  # noqa: E402
from migplan.milp import ModelBuilder  # noqa: E402
from migplan.planning import solve_dt  # noqa: E402
from migplan.scenarios import nominal_scenarios  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion id")
    config.addinivalue_line("markers", "acceptance: exit-criteria checks")
    config.addinivalue_line("markers", "slow: long-running checks on the mid-size fixtures")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    cid, title = mark.args
    state = "PASS" if rep.passed else "FAIL"
    prev = _ACCEPTANCE.get(cid)
    if prev is None or prev[1] == "PASS":
        _ACCEPTANCE[cid] = (title, state)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE, key=lambda c: int(c)):
        title, state = _ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid}: {state}  {title}")


@functools.lru_cache(maxsize=None)
def tiny_case(variant: int, count: int = 4, seed: int = 11, sigma: float = 0.3,
              epsilon: float = 0.25):
    """(problem, scenarios, nominal scenario, lambda0) for one tiny instance."""
    problem = instances.tiny_problem(variant, sigma=sigma, epsilon=epsilon)
    nominal = nominal_scenarios(instances.tiny_profile(problem), problem)[0]
    lam = solve_dt(problem, nominal, gap=1e-10).objective
    return problem, instances.tiny_scenarios(problem, count, seed), nominal, lam


def _investment_checker(problem):
    """Model holding only investment rows, for testing probe feasibility."""
    mb = ModelBuilder("probe")
    idx = VariableIndex()
    a = idx.add(mb, "alpha", upper=problem.alpha_cap)
    xc = builders._add_investment(mb, idx, problem, problem.demand_forecast, a)
    return mb.seal(), a, xc


def investment_probes(problem, rng, count):
    """Up to ``count`` random (alpha, period units) points satisfying every investment row."""
    model, a, xc = _investment_checker(problem)
    ub = problem.period_unit_bounds()
    out = []
    for _ in range(5000):
        if len(out) == count:
            break
        alpha = float(rng.uniform(0, problem.alpha_cap))
        units = np.zeros(ub.shape)
        for k in range(ub.shape[0]):
            draws = np.sort(rng.integers(0, ub[k].max() + 1, ub.shape[1]))
            units[k] = np.minimum(draws, ub[k])
        x = np.zeros(model.n_vars)
        x[a] = alpha
        x[xc] = units
        if model.max_violation(x) <= 1e-9:
            out.append((alpha, units))
    return out


@pytest.fixture
def tiny():
    return tiny_case


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def small_problem():
    """Three-DER, two-year, four-hour instance used by unit tests."""
    return instances.tiny_problem(0)


__all__ = ["tiny_case", "builders"]

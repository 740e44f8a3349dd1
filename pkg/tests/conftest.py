import itertools
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ptzgame.game import ActionSpace, marginal_game, table_objective

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def ring_space(sizes):
    """Each action may stay or step to a cyclic neighbor (|C| = 3 when m >= 3)."""
    cons = []
    for m in sizes:
        cons.append(tuple(frozenset({a, (a - 1) % m, (a + 1) % m}) for a in range(m)))
    return ActionSpace(tuple(sizes), tuple(cons))


def table_game(table, space=None):
    table = np.asarray(table, dtype=float)
    sizes = tuple(s - 1 for s in table.shape)
    return marginal_game(space or ActionSpace.complete(sizes), table_objective(table), "t", table)


def brute_nash(U, space):
    """Joint actions where nobody gains by a feasible unilateral move."""
    out = set()
    for a in itertools.product(*(range(m) for m in space.sizes)):
        ok = True
        for i in range(space.n_players):
            for b in space.feasible(i, a[i]):
                c = a[:i] + (b,) + a[i + 1 :]
                if U[c][i] > U[a][i] + 1e-12:
                    ok = False
        if ok:
            out.add(a)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for out in results.values():
        terminalreporter.write_line(out.line())

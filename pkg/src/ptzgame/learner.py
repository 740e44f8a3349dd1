"""Payoff-based partially irrational play.

Each sensor keeps its last two actions and the utilities they earned.  If
the latest utility is at least the previous one it explores with
probability eps and otherwise repeats its action.  If the latest utility
dropped it explores (avoiding both remembered actions), returns to the
better previous action, or, with probability ``(1-eps)*kappa*eps**delta``,
irrationally keeps the worse one.

``mode="constant"`` is the homogeneous variant (fixed eps);
``mode="schedule"`` decays eps as ``k ** (-1 / (n * (D + 1)))``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .game import ActionSpace, GameDefinition, GameError

INIT, EXPLORE, EXPLOIT, IRRATIONAL = 0, 1, 2, 3
BRANCH_NAMES = ("init", "explore", "exploit", "irrational")
EPS_CAP = 0.5

# joint action -> (per-sensor utilities, global objective)
Oracle = Callable[[tuple], tuple]


def epsilon_schedule(k: int, n: int, D: int) -> float:
    if k < 1:
        raise ValueError(f"round must be >= 1, got {k}")
    if n < 1 or D < 1:
        raise ValueError("need n >= 1 and D >= 1")
    return float(k) ** (-1.0 / (n * (D + 1)))


def kappa_bounds(space: ActionSpace) -> tuple[float, float]:
    """Open lower / closed upper bound on kappa for the decaying schedule.

    The interval is empty when the largest constraint set has 3 elements.
    """
    C = space.max_constraint_size()
    if C <= 2:
        raise GameError(f"largest constraint set has {C} elements; kappa bounds are empty")
    return 1.0 / (C - 1), 0.5


def kappa_feasible(kappa: float, space: ActionSpace) -> bool:
    lo, hi = kappa_bounds(space)
    return lo < kappa <= hi


@dataclass(frozen=True)
class LearnerParams:
    mode: str = "constant"  # "constant" | "schedule"
    epsilon: float = 0.015
    kappa: float = 0.12
    n: int = 1
    D: int = 1

    def __post_init__(self):
        if self.mode not in ("constant", "schedule"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "constant" and not 0 < self.epsilon <= 0.5:
            raise ValueError(f"constant epsilon must lie in (0, 0.5], got {self.epsilon}")
        if not 0 <= self.kappa <= 0.5:
            raise ValueError(f"kappa must lie in [0, 0.5], got {self.kappa}")

    def epsilon_at(self, k: int) -> float:
        if self.mode == "constant":
            return self.epsilon
        return min(EPS_CAP, epsilon_schedule(k, self.n, self.D))


def branch_probabilities(u1: float, u2: float, eps: float, kappa: float) -> dict:
    """Probabilities of (explore, exploit, irrational) for one memory state."""
    if u1 >= u2:
        return {"explore": eps, "exploit": 1.0 - eps, "irrational": 0.0}
    irr = (1.0 - eps) * kappa * eps ** (u2 - u1)
    return {"explore": eps, "exploit": (1.0 - eps) - irr, "irrational": irr}


class UniformStream:
    """Buffered uniform draws from one sensor's generator."""

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self.rng = rng
        self.block = block
        self._buf = rng.random(block)
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == self.block:
            self._buf = self.rng.random(self.block)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)


def sensor_streams(seed: int, n: int) -> list[UniformStream]:
    return [UniformStream(np.random.default_rng([seed, i])) for i in range(n)]


def _sample_excluding(options: Sequence[int], exclude: tuple, draw: Callable[[], float]) -> int:
    if all(o in exclude for o in options):
        raise GameError("empty exploration set; constraint sets need at least 3 elements")
    while True:
        b = options[int(draw() * len(options))]
        if b not in exclude:
            return b


def select_action(
    a1: int,
    a2: int,
    u1: float,
    u2: float,
    feasible: Sequence[int],
    eps: float,
    kappa: float,
    draw: Callable[[], float],
) -> tuple[int, int]:
    """One sensor's choice.  ``feasible`` is ``C_i(a1)`` as a sorted sequence."""
    r = draw()
    if u1 >= u2:
        if r < eps:
            return _sample_excluding(feasible, (a1,), draw), EXPLORE
        return a1, EXPLOIT
    delta = u2 - u1
    assert delta > 0
    if r < eps:
        return _sample_excluding(feasible, (a1, a2), draw), EXPLORE
    if r < eps + (1.0 - eps) * kappa * eps**delta:
        return a1, IRRATIONAL
    return a2, EXPLOIT


@dataclass
class LearnerState:
    a1: list
    a2: list
    u1: list
    u2: list
    k: int = 2

    @property
    def delta(self) -> list:
        return [x2 - x1 for x1, x2 in zip(self.u1, self.u2)]

    def copy(self) -> "LearnerState":
        return LearnerState(list(self.a1), list(self.a2), list(self.u1), list(self.u2), self.k)


@dataclass(frozen=True)
class RoundOutcome:
    k: int
    epsilon: float
    actions: tuple
    branches: tuple
    utilities: tuple
    W: float


def initial_state(oracle: Oracle, space: ActionSpace, streams, initial=None) -> tuple[LearnerState, RoundOutcome]:
    if initial is None:
        initial = tuple(int(s() * m) for s, m in zip(streams, space.sizes))
    a = tuple(int(x) for x in initial)
    U, W = oracle(a)
    U = [float(x) for x in U]
    state = LearnerState(list(a), list(a), list(U), list(U), k=2)
    return state, RoundOutcome(1, float("nan"), a, (INIT,) * len(a), tuple(U), float(W))


def step(oracle: Oracle, space: ActionSpace, state: LearnerState, params: LearnerParams, streams, feasible=None):
    """One synchronous round; returns the new state and what happened."""
    eps = params.epsilon_at(state.k)
    if feasible is None:
        feasible = [[sorted(c) for c in player] for player in space.constraints]
    picks, branches = [], []
    for i in range(space.n_players):
        b, br = select_action(
            state.a1[i], state.a2[i], state.u1[i], state.u2[i],
            feasible[i][state.a1[i]], eps, params.kappa, streams[i],
        )
        picks.append(b)
        branches.append(br)
    a = tuple(picks)
    U, W = oracle(a)
    U = [float(x) for x in U]
    new = LearnerState(list(a), list(state.a1), U, list(state.u1), state.k + 1)
    return new, RoundOutcome(state.k, eps, a, tuple(branches), tuple(U), float(W))


@dataclass
class RunLog:
    """Per-round trace; row ``r`` is round ``r`` (rows 0 and 1 are the initialization)."""

    epsilon: np.ndarray
    actions: np.ndarray
    branches: np.ndarray
    utilities: np.ndarray
    W: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def rounds(self) -> int:
        return len(self.W)

    @property
    def n_players(self) -> int:
        return self.actions.shape[1]

    def header(self) -> list:
        n = self.n_players
        return (
            ["round", "epsilon"]
            + [f"a{i}" for i in range(n)]
            + [f"branch{i}" for i in range(n)]
            + [f"U{i}" for i in range(n)]
            + ["W"]
        )

    def rows(self):
        for r in range(self.rounds):
            yield (
                [str(r), fmt(self.epsilon[r])]
                + [str(int(x)) for x in self.actions[r]]
                + [BRANCH_NAMES[int(x)] for x in self.branches[r]]
                + [fmt(x) for x in self.utilities[r]]
                + [fmt(self.W[r])]
            )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            w.writerows(self.rows())


def fmt(x: float) -> str:
    return format(float(x), ".12g")


def read_csv(path) -> RunLog:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        rows = list(reader)
    n = sum(1 for h in head if h.startswith("branch"))
    index = {name: i for i, name in enumerate(BRANCH_NAMES)}
    eps = np.array([float(r[1]) for r in rows])
    acts = np.array([[int(x) for x in r[2 : 2 + n]] for r in rows], dtype=np.int64).reshape(len(rows), n)
    brs = np.array([[index[x] for x in r[2 + n : 2 + 2 * n]] for r in rows], dtype=np.int8).reshape(len(rows), n)
    U = np.array([[float(x) for x in r[2 + 2 * n : 2 + 3 * n]] for r in rows]).reshape(len(rows), n)
    W = np.array([float(r[-1]) for r in rows])
    return RunLog(eps, acts, brs, U, W)


def game_oracle(game: GameDefinition) -> Oracle:
    """Table-backed oracle for enumerable games; falls back to direct calls."""
    try:
        U = game.utility_table
    except Exception:
        return lambda a: (game.utilities(a), game.objective(a) if game.objective else float("nan"))
    W = game.objective_table if game.objective is not None else None
    Ul = {a: [float(x) for x in U[a]] for a in game.space.joint_actions()}
    Wl = {a: float(W[a]) for a in Ul} if W is not None else {a: float("nan") for a in Ul}
    return lambda a: (Ul[a], Wl[a])


def run(
    oracle,
    space: ActionSpace,
    params: LearnerParams,
    rounds: int,
    seed: int,
    initial=None,
    before_round: Optional[Callable[[int], None]] = None,
) -> RunLog:
    """Run the learner for ``rounds`` rounds (deterministic in ``seed``).

    ``oracle`` is either a :class:`GameDefinition` or a callable mapping a
    joint action to ``(utilities, W)``.  ``before_round(k)`` runs before
    round ``k``'s actions are evaluated.
    """
    if rounds < 2:
        raise ValueError("need at least 2 rounds")
    if isinstance(oracle, GameDefinition):
        oracle = game_oracle(oracle)
    n = space.n_players
    streams = sensor_streams(seed, n)
    feasible = [[sorted(c) for c in player] for player in space.constraints]
    eps_col = np.empty(rounds)
    acts = np.empty((rounds, n), dtype=np.int64)
    brs = np.empty((rounds, n), dtype=np.int8)
    U = np.empty((rounds, n))
    W = np.empty(rounds)

    if before_round is not None:
        before_round(1)
    state, out = initial_state(oracle, space, streams, initial)
    for r in (0, 1):
        eps_col[r] = params.epsilon_at(1)
        acts[r], brs[r], U[r], W[r] = out.actions, out.branches, out.utilities, out.W
    for r in range(2, rounds):
        if before_round is not None:
            before_round(r)
        state, out = step(oracle, space, state, params, streams, feasible)
        eps_col[r] = out.epsilon
        acts[r], brs[r], U[r], W[r] = out.actions, out.branches, out.utilities, out.W
    meta = {"seed": seed, "mode": params.mode, "epsilon": params.epsilon, "kappa": params.kappa}
    return RunLog(eps_col, acts, brs, U, W, meta)


def occupancy(log: RunLog, targets: set, start: int = 0) -> float:
    hits = sum(1 for a in log.actions[start:] if tuple(int(x) for x in a) in targets)
    return hits / max(1, log.rounds - start)

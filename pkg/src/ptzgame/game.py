"""Constrained strategic games with marginal-contribution utilities.

A game is a finite set of players, per-player action sets with a
constraint map ``C_i`` (which actions may follow a given action), and a
utility oracle.  When the utilities are derived from a global objective by
marginal contribution the game is a constrained potential game with the
objective as potential.

Joint actions are plain tuples of ints.  The global objective oracle must
accept ``None`` in a player's slot, meaning that player views nothing.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

JointAction = tuple
Objective = Callable[[Sequence[Optional[int]]], float]
Utility = Callable[[int, JointAction], float]

ENUMERATION_LIMIT = 10**6
SCALE_MARGIN = 0.01
IDENTITY_TOL = 1e-12


class GameError(ValueError):
    pass


class EnumerationLimitError(GameError):
    """Raised when a game is too large to enumerate exhaustively."""


@dataclass(frozen=True)
class Violation:
    player: int
    actions: tuple
    item: str  # "symmetry" | "connectivity" | "cardinality"
    detail: str = ""

    def __str__(self) -> str:
        return f"player {self.player}, actions {self.actions}: {self.item} ({self.detail})"


@dataclass(frozen=True)
class ActionSpace:
    """Per-player action counts and constraint sets.

    ``constraints[i][a]`` is ``C_i(a)``; it contains ``a`` itself because
    staying put is always feasible.
    """

    sizes: tuple
    constraints: tuple

    def __post_init__(self):
        sizes = tuple(int(m) for m in self.sizes)
        cons = tuple(tuple(frozenset(int(b) for b in c) for c in player) for player in self.constraints)
        if len(sizes) != len(cons):
            raise GameError("sizes and constraints disagree on the player count")
        for i, (m, player) in enumerate(zip(sizes, cons)):
            if len(player) != m:
                raise GameError(f"player {i}: expected {m} constraint sets, got {len(player)}")
            for a, c in enumerate(player):
                if any(b < 0 or b >= m for b in c):
                    raise GameError(f"player {i}, action {a}: constraint set out of range")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "constraints", cons)

    @classmethod
    def complete(cls, sizes: Sequence[int]) -> "ActionSpace":
        return cls(tuple(sizes), tuple(tuple(frozenset(range(m)) for _ in range(m)) for m in sizes))

    @classmethod
    def from_adjacency(cls, adjacency: Sequence[Sequence[Sequence[int]]]) -> "ActionSpace":
        """Build from neighbor lists; each action is added to its own set."""
        cons = []
        for player in adjacency:
            cons.append(tuple(frozenset(list(nb) + [a]) for a, nb in enumerate(player)))
        return cls(tuple(len(p) for p in adjacency), tuple(cons))

    @property
    def n_players(self) -> int:
        return len(self.sizes)

    @property
    def n_joint(self) -> int:
        return int(np.prod(self.sizes, dtype=object))

    def feasible(self, i: int, a: int) -> frozenset:
        return self.constraints[i][a]

    def joint_actions(self) -> Iterator[JointAction]:
        return itertools.product(*(range(m) for m in self.sizes))

    def index(self, a: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(a), self.sizes))

    def unravel(self, idx: int) -> JointAction:
        return tuple(int(x) for x in np.unravel_index(idx, self.sizes))

    def max_constraint_size(self) -> int:
        return max(len(c) for player in self.constraints for c in player)


def validate_action_space(space: ActionSpace) -> list[Violation]:
    """Check symmetry, connectivity and ``|C_i(a)| >= 3`` for every player."""
    report = []
    for i, player in enumerate(space.constraints):
        for a, c in enumerate(player):
            if len(c) < 3:
                report.append(Violation(i, (a,), "cardinality", f"|C({a})| = {len(c)} < 3"))
            for b in sorted(c):
                if a not in player[b]:
                    report.append(
                        Violation(i, (a, b), "symmetry", f"{b} in C({a}) but {a} not in C({b})")
                    )
        unreached = set(range(space.sizes[i])) - _reachable(player, 0)
        if unreached:
            report.append(
                Violation(i, tuple(sorted(unreached)), "connectivity", "not reachable from action 0")
            )
    return report


def _reachable(player: Sequence[frozenset], start: int) -> set:
    seen = {start}
    queue = deque([start])
    while queue:
        a = queue.popleft()
        for b in player[a]:
            if b not in seen:
                seen.add(b)
                queue.append(b)
    return seen


def _bfs_dist(player: Sequence[frozenset], start: int) -> dict:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        a = queue.popleft()
        for b in player[a]:
            if b not in dist:
                dist[b] = dist[a] + 1
                queue.append(b)
    return dist


def compute_D(space: ActionSpace) -> tuple[int, list[int]]:
    """Diameter ``D_i`` of every player's constraint graph and ``D = max_i D_i``."""
    per_player = []
    for i, player in enumerate(space.constraints):
        diam = 0
        for a in range(len(player)):
            dist = _bfs_dist(player, a)
            if len(dist) < len(player):
                raise GameError(f"player {i}: constraint graph is disconnected")
            diam = max(diam, max(dist.values()))
        per_player.append(diam)
    return max(per_player), per_player


@dataclass(frozen=True)
class GameDefinition:
    space: ActionSpace
    utility: Utility
    objective: Optional[Objective] = None
    name: str = field(default="", compare=False)
    # dense objective with null indices, when the game came from one
    table: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def n_players(self) -> int:
        return self.space.n_players

    def utilities(self, a: JointAction) -> np.ndarray:
        return np.array([self.utility(i, a) for i in range(self.n_players)])

    @cached_property
    def utility_table(self) -> np.ndarray:
        """Array of shape ``sizes + (n,)`` holding every ``U_i(a)``."""
        _guard(self.space)
        table = np.empty(self.space.sizes + (self.n_players,))
        for a in self.space.joint_actions():
            table[a] = self.utilities(a)
        return table

    @cached_property
    def objective_table(self) -> np.ndarray:
        if self.objective is None:
            raise GameError("game has no global objective")
        _guard(self.space)
        table = np.empty(self.space.sizes)
        for a in self.space.joint_actions():
            table[a] = self.objective(a)
        return table


def _guard(space: ActionSpace, limit: int = ENUMERATION_LIMIT) -> None:
    if space.n_joint > limit:
        raise EnumerationLimitError(
            f"{space.n_joint} joint actions exceed the enumeration limit of {limit}"
        )


def marginal_utility(objective: Objective, i: int, a: Sequence[int]) -> float:
    """``W(a) - W^{-i}(a)``: the objective minus its value with player ``i`` viewing nothing."""
    without = list(a)
    without[i] = None
    return objective(tuple(a)) - objective(tuple(without))


def marginal_game(
    space: ActionSpace, objective: Objective, name: str = "", table: Optional[np.ndarray] = None
) -> GameDefinition:
    return GameDefinition(space, lambda i, a: marginal_utility(objective, i, a), objective, name, table)


def table_objective(table: np.ndarray) -> Objective:
    """Objective backed by a dense table with one extra "null" index per axis.

    ``table`` has shape ``(m_1 + 1, ..., m_n + 1)``; index ``m_i`` on axis ``i``
    stands for player ``i`` viewing nothing.
    """
    table = np.asarray(table, dtype=float)
    nulls = tuple(s - 1 for s in table.shape)

    def W(a):
        return float(table[tuple(nulls[i] if x is None else x for i, x in enumerate(a))])

    return W


def random_marginal_game(
    sizes: Sequence[int], rng: np.random.Generator, space: Optional[ActionSpace] = None
) -> GameDefinition:
    """Marginal-contribution game over a random nonnegative objective table."""
    table = rng.random(tuple(m + 1 for m in sizes))
    space = space or ActionSpace.complete(sizes)
    return marginal_game(space, table_objective(table), "random", table)


def unilateral_deviations(space: ActionSpace) -> Iterator[tuple[int, JointAction, JointAction]]:
    for a in space.joint_actions():
        for i in range(space.n_players):
            for b in sorted(space.feasible(i, a[i])):
                if b != a[i]:
                    yield i, a, a[:i] + (b,) + a[i + 1 :]


def check_potential_identity(game: GameDefinition, trials: int = 1000, seed: int = 0) -> float:
    """Max ``|dU_i - dW|`` over randomly sampled feasible unilateral deviations."""
    if game.objective is None:
        raise GameError("potential identity needs a global objective")
    rng = np.random.default_rng(seed)
    space = game.space
    worst = 0.0
    for _ in range(trials):
        a = tuple(int(rng.integers(m)) for m in space.sizes)
        i = int(rng.integers(space.n_players))
        options = sorted(space.feasible(i, a[i]) - {a[i]})
        if not options:
            continue
        b = a[:i] + (options[int(rng.integers(len(options)))],) + a[i + 1 :]
        du = game.utility(i, b) - game.utility(i, a)
        dw = game.objective(b) - game.objective(a)
        worst = max(worst, abs(du - dw))
    return worst


def potential_deviation_exhaustive(game: GameDefinition) -> float:
    """Max ``|dU_i - dW|`` over every feasible unilateral deviation."""
    U, W = game.utility_table, game.objective_table
    worst = 0.0
    for i, player in enumerate(game.space.constraints):
        # the identity says U_i - W does not depend on a_i
        gap = U[..., i] - W
        for x, feas in enumerate(player):
            base = np.take(gap, x, axis=i)
            for b in feas:
                if b != x:
                    worst = max(worst, float(np.abs(np.take(gap, b, axis=i) - base).max()))
    return worst


def enumerate_constrained_nash(game: GameDefinition) -> set:
    U = game.utility_table
    out = set()
    for a in game.space.joint_actions():
        ok = True
        for i in range(game.n_players):
            best = max(U[a[:i] + (b,) + a[i + 1 :]][i] for b in game.space.feasible(i, a[i]))
            if U[a][i] < best:
                ok = False
                break
        if ok:
            out.add(a)
    return out


def argmax_set(values: np.ndarray, tol: float = 1e-12) -> set:
    top = values.max()
    return {tuple(int(x) for x in idx) for idx in zip(*np.nonzero(values >= top - tol))}


def max_unilateral_gain(game: GameDefinition) -> float:
    """Largest ``U_i(a') - U_i(a)`` over feasible unilateral deviations (exhaustive)."""
    U = game.utility_table
    worst = 0.0
    for i, a, b in unilateral_deviations(game.space):
        worst = max(worst, U[b][i] - U[a][i])
    return worst


def scale_factor(max_gain: float, margin: float = SCALE_MARGIN) -> float:
    bound = 0.5 - margin
    if max_gain <= bound:
        return 1.0
    return bound / max_gain


def scale_game(game: GameDefinition, s: float) -> GameDefinition:
    if s == 1.0:
        return game
    u, W = game.utility, game.objective
    scaled_W = None if W is None else (lambda a: s * W(a))
    table = None if game.table is None else s * game.table
    return GameDefinition(game.space, lambda i, a: s * u(i, a), scaled_W, game.name, table)


def scale_to_half_gain(
    game: GameDefinition, objective_bound: Optional[float] = None, margin: float = SCALE_MARGIN
) -> tuple[GameDefinition, float]:
    """Scale utilities and objective so every unilateral gain is at most ``0.5 - margin``.

    Small games are scanned exhaustively.  Larger ones need ``objective_bound``,
    an upper bound on ``W`` (valid because ``0 <= U_i <= W`` for monotone
    objectives).
    """
    if game.space.n_joint <= ENUMERATION_LIMIT:
        gain = max_unilateral_gain(game)
    elif objective_bound is not None:
        gain = float(objective_bound)
    else:
        raise EnumerationLimitError("game too large to scan; pass objective_bound")
    if gain <= 0:
        return game, 1.0
    s = scale_factor(gain, margin)
    return scale_game(game, s), s


def save_game(game: GameDefinition, path: str | Path, table: Optional[np.ndarray] = None) -> None:
    """Write players, action counts, adjacency and (optionally) the dense objective table.

    ``table`` uses the null-index layout of :func:`table_objective`.
    """
    space = game.space
    doc = {
        "players": space.n_players,
        "actions": list(space.sizes),
        "constraints": [[sorted(c) for c in player] for player in space.constraints],
    }
    if table is None:
        table = game.table
    if table is not None:
        doc["objective_shape"] = list(table.shape)
        doc["objective"] = np.asarray(table, dtype=float).ravel().tolist()
    Path(path).write_text(json.dumps(doc, indent=1))


def load_game(path: str | Path) -> GameDefinition:
    doc = json.loads(Path(path).read_text())
    space = ActionSpace(tuple(doc["actions"]), tuple(tuple(frozenset(c) for c in p) for p in doc["constraints"]))
    if len(doc["actions"]) != doc["players"]:
        raise GameError("player count does not match the action list")
    if "objective" not in doc:
        zero = lambda i, a: 0.0  # noqa: E731
        return GameDefinition(space, zero, None, Path(path).stem)
    table = np.asarray(doc["objective"], dtype=float).reshape(doc["objective_shape"])
    if table.shape != tuple(m + 1 for m in space.sizes):
        raise GameError(f"objective table shape {table.shape} does not match actions {space.sizes}")
    return marginal_game(space, table_objective(table), Path(path).stem, table)

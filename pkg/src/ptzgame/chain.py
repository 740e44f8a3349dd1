"""Exact Markov-chain analysis of homogeneous partially irrational play.

The chain lives on pairs ``z = (a, a')`` of consecutive joint actions with
``a'_i in C_i(a_i)``.  Every transition probability is a product of
per-sensor factors, one of

    L1  explore after no loss          eps / (|C_i(a'_i)| - 1)
    L2  stay after no loss             1 - eps
    L3  explore after a loss           eps / (|C_i(a'_i)| - delta_i)
    L4  irrationally keep the worse    (1 - eps) kappa eps**D_i
    L5  return to the better action    (1 - eps)(1 - kappa eps**D_i)

with ``D_i = U_i(a) - U_i(a')`` and ``delta_i = 1`` if ``a_i = a'_i``
else 2.  When ``a_i = a'_i`` and the utility dropped (someone else moved),
L4 and L5 name the same next action, so they merge into a single factor
``1 - eps`` of resistance 0 (label ``L45``).

Resistances (the exponent of eps) add up along paths; minimum-resistance
trees over the diagonal states decide which joint actions survive as
eps -> 0.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .arborescence import min_in_tree, tree_weight
from .game import GameDefinition, GameError, argmax_set

STATE_LIMIT = 10**5
DIAG_LIMIT = 10**4
DENSE_LIMIT = 4000
POTENTIAL_TOL = 1e-9

L1, L2, L3, L4, L5, L45 = 1, 2, 3, 4, 5, 6
LABELS = {L1: "L1", L2: "L2", L3: "L3", L4: "L4", L5: "L5", L45: "L45"}


class ChainSizeError(GameError):
    pass


def player_moves(a0: int, a1: int, u0: float, u1: float, feasible, kappa: float) -> list:
    """Possible next actions of one sensor in state ``(a0, a1)``.

    Returns ``(next_action, label, param)``; ``param`` is the denominator for
    exploration factors and the utility drop for L4/L5.
    """
    C = len(feasible)
    moves = []
    if u1 >= u0:
        for b in sorted(feasible):
            if b != a1:
                moves.append((b, L1, C - 1))
        moves.append((a1, L2, 0.0))
        return moves
    drop = u0 - u1
    delta = 1 if a0 == a1 else 2
    for b in sorted(feasible):
        if b != a0 and b != a1:
            moves.append((b, L3, C - delta))
    if a0 == a1:
        moves.append((a1, L45, 0.0))
    else:
        if kappa > 0:
            moves.append((a1, L4, drop))
        moves.append((a0, L5, drop))
    return moves


def factor_value(label: int, param: float, eps: float, kappa: float) -> float:
    if label in (L1, L3):
        return eps / param
    if label in (L2, L45):
        return 1.0 - eps
    if label == L4:
        return (1.0 - eps) * kappa * eps**param
    return (1.0 - eps) * (1.0 - kappa * eps**param)


def factor_resistance(label: int, param: float) -> float:
    if label in (L1, L3):
        return 1.0
    if label == L4:
        return float(param)
    return 0.0


def _classify(z1, z2, game: GameDefinition, kappa: float):
    a0, a1 = z1
    b1, a2 = z2
    if tuple(b1) != tuple(a1):
        return None
    U = game.utility_table
    space = game.space
    out = []
    for i in range(game.n_players):
        u0, u1 = U[tuple(a0)][i], U[tuple(a1)][i]
        match = [m for m in player_moves(a0[i], a1[i], u0, u1, space.feasible(i, a1[i]), kappa) if m[0] == a2[i]]
        if not match:
            return None
        out.append(match[0])
    return out


def transition_probability(z1, z2, game: GameDefinition, eps: float, kappa: float) -> float:
    moves = _classify(z1, z2, game, kappa)
    if moves is None:
        return 0.0
    return math.prod(factor_value(lab, p, eps, kappa) for _, lab, p in moves)


def transition_resistance(z1, z2, game: GameDefinition, kappa: float) -> Optional[float]:
    moves = _classify(z1, z2, game, kappa)
    if moves is None:
        return None
    return float(sum(factor_resistance(lab, p) for _, lab, p in moves))


def transition_labels(z1, z2, game: GameDefinition, kappa: float) -> Optional[list]:
    moves = _classify(z1, z2, game, kappa)
    return None if moves is None else [LABELS[lab] for _, lab, _ in moves]


def slope_fit(probabilities, epsilons) -> float:
    """Least-squares slope of log P against log eps."""
    x = np.log(np.asarray(epsilons, dtype=float))
    y = np.log(np.asarray(probabilities, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


class ChainModel:
    """Enumerated state space, transitions and resistances for one ``(game, kappa)``."""

    def __init__(self, game: GameDefinition, kappa: float, limit: int = STATE_LIMIT):
        self.game = game
        self.kappa = float(kappa)
        space = game.space
        self.space = space
        n = space.n_players
        self.joint = list(space.joint_actions())
        self.joint_index = {a: x for x, a in enumerate(self.joint)}
        U = game.utility_table.reshape(-1, n)
        self.U = U

        states = []
        for x0, a0 in enumerate(self.joint):
            for a1 in _product(space.feasible(i, a0[i]) for i in range(n)):
                states.append((x0, self.joint_index[a1]))
                if len(states) > limit:
                    raise ChainSizeError(f"state space exceeds {limit} states; shrink the game")
        states.sort()
        self.states = states
        self.state_index = {s: k for k, s in enumerate(states)}
        self.diag = np.array([self.state_index[(x, x)] for x in range(len(self.joint))])

        src, dst, labels, params = [], [], [], []
        for k, (x0, x1) in enumerate(states):
            a0, a1 = self.joint[x0], self.joint[x1]
            per_player = [
                player_moves(a0[i], a1[i], U[x0, i], U[x1, i], space.feasible(i, a1[i]), self.kappa)
                for i in range(n)
            ]
            for combo in _product_lists(per_player):
                a2 = tuple(m[0] for m in combo)
                src.append(k)
                dst.append(self.state_index[(x1, self.joint_index[a2])])
                labels.append([m[1] for m in combo])
                params.append([m[2] for m in combo])
        self.src = np.array(src)
        self.dst = np.array(dst)
        self.labels = np.array(labels, dtype=np.int8).reshape(len(src), n)
        self.params = np.array(params, dtype=float).reshape(len(src), n)

    @property
    def size(self) -> int:
        return len(self.states)

    def state(self, k: int) -> tuple:
        x0, x1 = self.states[k]
        return self.joint[x0], self.joint[x1]

    def index_of(self, z) -> int:
        a0, a1 = z
        return self.state_index[(self.joint_index[tuple(a0)], self.joint_index[tuple(a1)])]

    def probabilities(self, eps: float) -> np.ndarray:
        vals = np.ones(len(self.src))
        lab, par = self.labels, self.params
        explore = (lab == L1) | (lab == L3)
        stay = (lab == L2) | (lab == L45)
        irr = lab == L4
        back = lab == L5
        f = np.ones_like(par)
        with np.errstate(divide="ignore"):
            f[explore] = eps / par[explore]
        f[stay] = 1.0 - eps
        f[irr] = (1.0 - eps) * self.kappa * eps ** par[irr]
        f[back] = (1.0 - eps) * (1.0 - self.kappa * eps ** par[back])
        vals = f.prod(axis=1)
        return vals

    @cached_property
    def resistances(self) -> np.ndarray:
        lab, par = self.labels, self.params
        r = np.where((lab == L1) | (lab == L3), 1.0, 0.0)
        r = r + np.where(lab == L4, par, 0.0)
        return r.sum(axis=1)

    def matrix(self, eps: float) -> sp.csr_matrix:
        return sp.csr_matrix((self.probabilities(eps), (self.src, self.dst)), shape=(self.size, self.size))

    def stationary(self, eps: float, tol: float = 1e-12, max_iter: int = 200000) -> np.ndarray:
        if eps <= 0:
            raise ValueError("stationary distribution needs eps > 0")
        P = self.matrix(eps)
        if self.size <= DENSE_LIMIT:
            mu = _dense_stationary(P.toarray())
        else:
            mu = np.full(self.size, 1.0 / self.size)
        PT = P.T.tocsr()
        for _ in range(max_iter):
            if np.abs(PT @ mu - mu).max() <= tol:
                return mu
            mu = PT @ mu
            mu /= mu.sum()
        raise RuntimeError(f"power iteration did not reach residual {tol}")

    def recurrent_classes(self) -> list:
        zero = self.resistances == 0
        G = sp.csr_matrix((np.ones(zero.sum()), (self.src[zero], self.dst[zero])), shape=(self.size, self.size))
        ncomp, comp = connected_components(G, directed=True, connection="strong")
        leaves = np.ones(ncomp, dtype=bool)
        s, d = self.src[zero], self.dst[zero]
        leaves[comp[s][comp[s] != comp[d]]] = False
        classes = [sorted(np.nonzero(comp == c)[0].tolist()) for c in range(ncomp) if leaves[c]]
        return sorted(classes)

    @cached_property
    def _adjacency(self):
        order = np.argsort(self.src, kind="stable")
        starts = np.searchsorted(self.src[order], np.arange(self.size + 1))
        return order, starts

    def resistance_from(self, k: int) -> np.ndarray:
        """Minimum path resistance from state ``k`` to every state (Dijkstra)."""
        order, starts = self._adjacency
        dst, res = self.dst, self.resistances
        dist = np.full(self.size, np.inf)
        dist[k] = 0.0
        heap = [(0.0, k)]
        done = np.zeros(self.size, dtype=bool)
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for e in order[starts[u] : starts[u + 1]]:
                v = dst[e]
                nd = d + res[e]
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist


def _dense_stationary(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    mu = scipy.linalg.solve(A, b)
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def _product(sets):
    return itertools.product(*(sorted(s) for s in sets))


def _product_lists(lists):
    return itertools.product(*lists)


# ---------------------------------------------------------------------------
# resistance graph over diagonal states


def is_straight_pair(a1, a2, space) -> Optional[int]:
    """The single deviating player if ``((a1,a1),(a2,a2))`` is an E_s edge, else None."""
    diff = [i for i in range(len(a1)) if a1[i] != a2[i]]
    if len(diff) == 1 and a2[diff[0]] in space.feasible(diff[0], a1[diff[0]]):
        return diff[0]
    return None


def straight_route_resistance(z1, z2, game: GameDefinition, kappa: float) -> float:
    a1 = tuple(z1[0]) if isinstance(z1[0], (tuple, list)) else tuple(z1)
    a2 = tuple(z2[0]) if isinstance(z2[0], (tuple, list)) else tuple(z2)
    i = is_straight_pair(a1, a2, game.space)
    if i is None:
        raise GameError(f"{a1} -> {a2} is not a single feasible deviation")
    U = game.utility_table
    drop = U[a1][i] - U[a2][i]
    if drop <= 0:
        return 1.0
    if kappa == 0:
        return math.inf
    return 1.0 + float(drop)


@dataclass
class ResistanceGraph:
    nodes: list  # joint actions; node l is the diagonal state (a, a)
    weights: np.ndarray  # weights[l, l'] = min resistance from node l to node l'
    straight: np.ndarray  # bool, True for E_s edges

    def edge_dict(self) -> dict:
        m = len(self.nodes)
        return {(u, v): float(self.weights[u, v]) for u in range(m) for v in range(m) if u != v}

    def export(self, path, trees: Optional[dict] = None) -> None:
        """Plain-text node list and weighted edge list (``tree`` lines mark arborescence edges)."""
        lines = [f"# nodes {len(self.nodes)}"]
        for l, a in enumerate(self.nodes):
            lines.append(f"node\t{l}\t{' '.join(map(str, a))}")
        for (u, v), w in sorted(self.edge_dict().items()):
            tag = "Es" if self.straight[u, v] else "Ed"
            lines.append(f"edge\t{u}\t{v}\t{w:.12g}\t{tag}")
        for root, tree in (trees or {}).items():
            for u, v in sorted(tree):
                lines.append(f"tree\t{root}\t{u}\t{v}")
        Path(path).write_text("\n".join(lines) + "\n")


def resistance_graph(model: ChainModel) -> ResistanceGraph:
    m = len(model.joint)
    if m > DIAG_LIMIT:
        raise ChainSizeError(f"{m} diagonal states exceed {DIAG_LIMIT}")
    W = np.zeros((m, m))
    for l in range(m):
        W[l] = model.resistance_from(model.diag[l])[model.diag]
    S = np.zeros((m, m), dtype=bool)
    for u in range(m):
        for v in range(m):
            S[u, v] = u != v and is_straight_pair(model.joint[u], model.joint[v], model.space) is not None
    return ResistanceGraph(list(model.joint), W, S)


def min_resistance_between(z1, z2, game: GameDefinition, kappa: float, model: Optional[ChainModel] = None) -> float:
    model = model or ChainModel(game, kappa)
    return float(model.resistance_from(model.index_of(z1))[model.index_of(z2)])


@dataclass
class PotentialResult:
    graph: ResistanceGraph
    potentials: np.ndarray
    trees: dict = field(repr=False)

    def stable(self, tol: float = POTENTIAL_TOL) -> set:
        best = self.potentials.min()
        return {self.graph.nodes[l] for l in np.nonzero(self.potentials <= best + tol)[0]}


def stochastic_potentials(game: GameDefinition, kappa: float, model: Optional[ChainModel] = None) -> PotentialResult:
    model = model or ChainModel(game, kappa)
    graph = resistance_graph(model)
    weights = graph.edge_dict()
    nodes = list(range(len(graph.nodes)))
    pots = np.empty(len(nodes))
    trees = {}
    for root in nodes:
        tree = min_in_tree(nodes, weights, root)
        trees[root] = tree
        pots[root] = tree_weight(tree, weights)
    return PotentialResult(graph, pots, trees)


def stochastically_stable_states(game: GameDefinition, kappa: float, model: Optional[ChainModel] = None) -> set:
    return stochastic_potentials(game, kappa, model).stable()


def stationary_distribution(game: GameDefinition, eps: float, kappa: float, model: Optional[ChainModel] = None):
    model = model or ChainModel(game, kappa)
    return model.stationary(eps)


def diag_mass(model: ChainModel, mu: np.ndarray, actions: set) -> float:
    return float(sum(mu[model.diag[model.joint_index[a]]] for a in actions))


def action_marginal(model: ChainModel, mu: np.ndarray) -> np.ndarray:
    """Stationary probability of the current joint action ``a(k)`` (second entry of z)."""
    out = np.zeros(len(model.joint))
    np.add.at(out, [x1 for _, x1 in model.states], mu)
    return out


def potential_maximizers(game: GameDefinition) -> set:
    return argmax_set(game.objective_table)

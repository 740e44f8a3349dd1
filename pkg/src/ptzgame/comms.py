"""Neighbor graph and distributed utility computation.

Two sensors are neighbors when some pair of their actions lets both see a
common polygon.  After a round, every sensor sends its neighbors the list
``(j, W_ij)`` over the polygons it currently sees; from those messages
alone it can compute its marginal-contribution utility.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .env import MonitoringEnv, RewardConfig, region_reward


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class CommGraph:
    neighbors: tuple  # neighbors[i] is a frozenset of sensor indices

    @property
    def n(self) -> int:
        return len(self.neighbors)

    def edges(self) -> set:
        return {(i, k) for i, nb in enumerate(self.neighbors) for k in nb if i < k}

    @classmethod
    def from_edges(cls, n: int, edges) -> "CommGraph":
        nb = [set() for _ in range(n)]
        for i, k in edges:
            if i == k:
                raise ValueError("self-loop in communication graph")
            nb[i].add(k)
            nb[k].add(i)
        return cls(tuple(frozenset(s) for s in nb))


def build_comm_graph(visible_sets: Sequence[Sequence[frozenset]]) -> CommGraph:
    """``visible_sets[i][a]`` is the set of polygons sensor ``i`` sees under action ``a``.

    An edge joins ``i`` and ``k`` iff some action pair gives them a common
    visible polygon, i.e. iff their unions over actions intersect.
    """
    reach = [frozenset().union(*vs) if vs else frozenset() for vs in visible_sets]
    n = len(reach)
    edges = [(i, k) for i in range(n) for k in range(i + 1, n) if reach[i] & reach[k]]
    return CommGraph.from_edges(n, edges)


def env_comm_graph(env: MonitoringEnv) -> CommGraph:
    return build_comm_graph(
        [[env.visible(i, a) for a in range(s.n_actions)] for i, s in enumerate(env.sensors)]
    )


@dataclass(frozen=True)
class UtilityMessage:
    sender: int
    entries: tuple  # ((j, W_ij), ...) over the sender's visible polygons

    @classmethod
    def from_table(cls, sender: int, table: Mapping[int, float]) -> "UtilityMessage":
        return cls(sender, tuple(sorted((int(j), float(w)) for j, w in table.items())))


def local_utility(
    i: int,
    own: Mapping[int, float],
    messages: Mapping[int, UtilityMessage],
    neighbors: frozenset,
    rule: str = "max",
    h: Callable = np.sqrt,
    scale: float = 1.0,
) -> float:
    """Sensor ``i``'s utility from its own table and its neighbors' messages only."""
    missing = set(neighbors) - set(messages)
    if missing:
        raise ProtocolError(f"sensor {i} is missing messages from {sorted(missing)}")
    others = {}
    for k in sorted(neighbors):
        for j, w in messages[k].entries:
            if j in own:
                others.setdefault(j, []).append(w)
    total = 0.0
    for j in sorted(own):
        rest = others.get(j, [])
        with_i = region_reward(rest + [own[j]], rule, h)
        without = region_reward(rest, rule, h)
        total += scale * with_i - scale * without
    return total


def round_exchange(
    tables: Sequence[Mapping[int, float]],
    graph: CommGraph,
    reward: Optional[RewardConfig] = None,
    scale: float = 1.0,
    log: Optional[list] = None,
) -> np.ndarray:
    """One synchronous message round; returns every sensor's utility.

    When ``log`` is a list, ``(sender, receiver, payload)`` triples are
    appended to it.
    """
    reward = reward or RewardConfig()
    h = reward.h_fn()
    outbox = [UtilityMessage.from_table(i, t) for i, t in enumerate(tables)]
    inboxes = [{} for _ in tables]
    for msg in outbox:
        for k in sorted(graph.neighbors[msg.sender]):
            inboxes[k][msg.sender] = msg
            if log is not None:
                log.append((msg.sender, k, msg.entries))
    return np.array(
        [local_utility(i, tables[i], inboxes[i], graph.neighbors[i], reward.rule, h, scale) for i in range(len(tables))]
    )


def write_message_log(log, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "sender", "receiver", "payload"])
        for row in log:
            k, (s, r, entries) = row
            w.writerow([k, s, r, ";".join(f"{j}:{v:.12g}" for j, v in entries)])


class EnvOracle:
    """Learner oracle over a monitoring environment.

    Computes ``W_ij`` tables for the joint action, runs one message round
    for the utilities, and evaluates the scaled global objective.
    """

    def __init__(self, env: MonitoringEnv, graph: Optional[CommGraph] = None, message_log: Optional[list] = None):
        self.env = env
        self.graph = graph or env_comm_graph(env)
        self.message_log = message_log
        self.round = 0

    def __call__(self, joint):
        tables = self.env.tables(joint)
        log = [] if self.message_log is not None else None
        U = round_exchange(tables, self.graph, self.env.reward, self.env.scale, log)
        if log is not None:
            self.message_log.extend((self.round, m) for m in log)
        self.round += 1
        return U, self.env.objective(joint)

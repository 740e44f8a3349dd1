"""Minimum-weight spanning arborescences (Chu-Liu/Edmonds).

Weights are given as a dict ``{(u, v): w}`` over integer nodes.  The
out-arborescence version grows edges away from the root; the in-tree
version (every node has a path *to* the root) is obtained by reversing the
graph, solving, and reversing back.
"""

from __future__ import annotations

from typing import Hashable, Iterable, Mapping


class NoArborescence(ValueError):
    pass


def _find_cycle(parent: Mapping[int, int]):
    color = {}
    for start in parent:
        path = []
        v = start
        while v in parent and v not in color:
            color[v] = start
            path.append(v)
            v = parent[v]
        if v in color and color[v] == start:
            return path[path.index(v):]
    return None


def min_out_arborescence(nodes: Iterable[int], weights: Mapping[tuple, float], root: int) -> set:
    """Edge set ``{(u, v)}`` of a minimum spanning arborescence rooted at ``root``."""
    nodes = list(nodes)
    edges = {(u, v): w for (u, v), w in weights.items() if u != v and v != root}
    return _edmonds(nodes, edges, root, max(nodes) + 1)


def _edmonds(nodes, edges, root, fresh):
    best = {}
    for (u, v), w in edges.items():
        cur = best.get(v)
        if cur is None or (w, u) < (cur[1], cur[0]):
            best[v] = (u, w)
    for v in nodes:
        if v != root and v not in best:
            raise NoArborescence(f"node {v} has no incoming edge")
    parent = {v: u for v, (u, _) in best.items()}
    cycle = _find_cycle(parent)
    if cycle is None:
        return {(u, v) for v, u in parent.items()}

    in_cycle = set(cycle)
    c = fresh
    contracted = {}
    origin = {}
    for (u, v), w in edges.items():
        if u in in_cycle and v in in_cycle:
            continue
        if v in in_cycle:
            key, w2 = (u, c), w - best[v][1]
        elif u in in_cycle:
            key, w2 = (c, v), w
        else:
            key, w2 = (u, v), w
        if key not in contracted or w2 < contracted[key]:
            contracted[key] = w2
            origin[key] = (u, v)
    sub_nodes = [v for v in nodes if v not in in_cycle] + [c]
    sub = _edmonds(sub_nodes, contracted, root, fresh + 1)

    result = set()
    entering = None
    for key in sub:
        u, v = origin[key]
        result.add((u, v))
        if key[1] == c:
            entering = v
    for v in cycle:
        if v != entering:
            result.add((parent[v], v))
    return result


def min_in_tree(nodes: Iterable[int], weights: Mapping[tuple, float], root: int) -> set:
    """Minimum tree in which every node has a unique path to ``root``.

    Reverses edge directions, solves the out-arborescence problem, and
    reverses the result back.
    """
    reversed_w = {(v, u): w for (u, v), w in weights.items()}
    tree = min_out_arborescence(nodes, reversed_w, root)
    return {(v, u) for (u, v) in tree}


def tree_weight(tree: Iterable[tuple], weights: Mapping[Hashable, float]) -> float:
    return float(sum(weights[e] for e in tree))

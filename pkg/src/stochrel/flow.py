"""Shortest-augmenting-path max flow on bipartite transportation networks.

The network is ``source -> left[a] (cap supply[a]) -> right[b] (cap total)
-> sink (cap demand[b])`` with a middle edge for every allowed pair.
Capacities are exact integers (callers scale rationals by a common
denominator) or floats with an explicit tolerance.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

__all__ = ["FlowResult", "transport_flow"]


@dataclass
class FlowResult:
    value: object
    flow: dict  # (a, b) -> flow on the middle edge, positive entries only
    cut_left: frozenset  # left nodes reachable from the source in the residual graph
    cut_right: frozenset


def transport_flow(
    supply: Sequence,
    demand: Sequence,
    allowed: Sequence[Sequence[int]],
    tol: float = 0,
) -> FlowResult:
    """Max flow from ``supply`` to ``demand`` along ``allowed[a]`` edges.

    ``tol`` is 0 for exact arithmetic; residual capacities ``<= tol`` count
    as saturated in float mode.
    """
    k1, k2 = len(supply), len(demand)
    total = sum(supply)
    s, t = k1 + k2, k1 + k2 + 1
    n = k1 + k2 + 2
    head: list[list[int]] = [[] for _ in range(n)]
    to: list[int] = []
    cap: list = []

    def add(u, v, c):
        head[u].append(len(to))
        to.append(v)
        cap.append(c)
        head[v].append(len(to))
        to.append(u)
        cap.append(0 * c)

    middle = {}
    for a in range(k1):
        if supply[a] > tol:
            add(s, a, supply[a])
    for a in range(k1):
        for b in allowed[a]:
            middle[(a, b)] = len(to)
            add(a, k1 + b, total)
    for b in range(k2):
        if demand[b] > tol:
            add(k1 + b, t, demand[b])

    value = 0 * total
    while True:
        parent = [-1] * n
        parent[s] = -2
        queue = deque([s])
        while queue and parent[t] == -1:
            u = queue.popleft()
            for e in head[u]:
                v = to[e]
                if parent[v] == -1 and cap[e] > tol:
                    parent[v] = e
                    queue.append(v)
        if parent[t] == -1:
            break
        push = None
        v = t
        while v != s:
            e = parent[v]
            push = cap[e] if push is None or cap[e] < push else push
            v = to[e ^ 1]
        v = t
        while v != s:
            e = parent[v]
            cap[e] -= push
            cap[e ^ 1] += push
            v = to[e ^ 1]
        value += push

    reach = [p != -1 for p in parent]
    flow = {}
    for key, e in middle.items():
        f = cap[e ^ 1]
        if f > tol:
            flow[key] = f
    return FlowResult(
        value=value,
        flow=flow,
        cut_left=frozenset(a for a in range(k1) if reach[a]),
        cut_right=frozenset(b for b in range(k2) if reach[k1 + b]),
    )

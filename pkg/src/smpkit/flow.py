"""Exact maximum flow and transport couplings over rationals."""

from __future__ import annotations

import math
from collections import defaultdict, deque
from fractions import Fraction
from typing import Hashable, Mapping

from smpkit.errors import MassMismatch


def max_flow(capacity: Mapping[tuple, int], source: Hashable, sink: Hashable) -> tuple[int, dict]:
    """Edmonds-Karp maximum flow on integer capacities.

    Args:
        capacity: ``(u, v) -> capacity``; missing edges have capacity 0.
        source: Source node.
        sink: Sink node.

    Returns:
        ``(value, flow)`` with ``flow[(u, v)]`` the positive flow on each used edge.
    """
    residual: dict = defaultdict(int)
    adj: dict = defaultdict(set)
    for (u, v), c in capacity.items():
        if c < 0:
            raise ValueError("capacities must be nonnegative")
        residual[(u, v)] += c
        adj[u].add(v)
        adj[v].add(u)
    value = 0
    while True:
        parent = {source: None}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            for v in sorted(adj[u], key=repr):
                if v not in parent and residual[(u, v)] > 0:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            break
        path, v = [], sink
        while parent[v] is not None:
            path.append((parent[v], v))
            v = parent[v]
        push = min(residual[e] for e in path)
        for u, v in path:
            residual[(u, v)] -= push
            residual[(v, u)] += push
        value += push
    flow = {}
    for (u, v), c in capacity.items():
        used = c - residual[(u, v)]
        if used > 0:
            flow[(u, v)] = used
    return value, flow


def coupling_exists(mu1: Mapping, mu2: Mapping, allowed) -> dict | None:
    """Find a coupling of two finite distributions supported on ``allowed`` pairs.

    Masses are compared exactly. Probabilities are scaled to integers by their
    common denominator, so the flow computation is exact.

    Args:
        mu1: ``x -> probability`` (first marginal).
        mu2: ``y -> probability`` (second marginal).
        allowed: Collection of ``(x, y)`` pairs the coupling may use.

    Returns:
        ``{(x, y): probability}`` or None when no coupling exists.

    Raises:
        MassMismatch: If the two total masses differ.
    """
    mu1 = {x: Fraction(p) for x, p in mu1.items() if p}
    mu2 = {y: Fraction(p) for y, p in mu2.items() if p}
    total = sum(mu1.values(), Fraction(0))
    if total != sum(mu2.values(), Fraction(0)):
        raise MassMismatch(f"masses {total} and {sum(mu2.values(), Fraction(0))} differ")
    if total == 0:
        return {}
    den = 1
    for p in list(mu1.values()) + list(mu2.values()):
        den = den * p.denominator // math.gcd(den, p.denominator)
    src, dst = ("src",), ("dst",)
    cap: dict = {}
    for x, p in mu1.items():
        cap[(src, ("L", x))] = int(p * den)
    for y, p in mu2.items():
        cap[(("R", y), dst)] = int(p * den)
    big = int(total * den)
    allowed = set(allowed)
    for x in mu1:
        for y in mu2:
            if (x, y) in allowed:
                cap[(("L", x), ("R", y))] = big
    value, flow = max_flow(cap, src, dst)
    if value != big:
        return None
    return {
        (u[1], v[1]): Fraction(f, den)
        for (u, v), f in flow.items()
        if u[0] == "L" and v[0] == "R"
    }

"""Epsilon-simulation, simulation, bisimulation and the simulation distance.

State ``s2`` eps-simulates ``s1`` when the labels agree, ``s2``'s residence
CDF accelerated by ``eps`` is faster than ``s1``'s, and every input's successor
distributions can be coupled inside the relation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from smpkit.dist import INF, Cdf, GridSpec, c_clamped, eps_faster, least_acceleration
from smpkit.errors import KindMismatch, UnknownState
from smpkit.flow import coupling_exists
from smpkit.smp import Smp


def _require_reactive(M: Smp):
    if M.kind != "reactive":
        raise KindMismatch("simulation is defined on reactive processes")


def _successors(M: Smp, s, a) -> dict:
    return M.successors(s, a)


class _FasterCache:
    """Memoises ``eps_faster`` per CDF pair for one eps."""

    def __init__(self, eps, grid):
        self.eps = eps
        self.grid = grid
        self.memo: dict = {}

    def __call__(self, F: Cdf, G: Cdf) -> bool:
        key = (F, G)
        if key not in self.memo:
            self.memo[key] = eps_faster(F, G, self.eps, self.grid)
        return self.memo[key]


def simulation_relation(M: Smp, eps=1, grid: GridSpec | None = None) -> set:
    """The greatest eps-simulation relation on ``M`` as a set of pairs.

    Starts from all pairs with equal labels and ``F_s2`` eps-faster than
    ``F_s1`` and removes pairs that lack a coupling for some input until
    nothing changes.
    """
    _require_reactive(M)
    faster = _FasterCache(eps, grid)
    rel = {
        (x, y)
        for x in M.states
        for y in M.states
        if M.labels[x] == M.labels[y] and faster(M.residence[y], M.residence[x])
    }
    succ = {(s, a): _successors(M, s, a) for s in M.states for a in M.inputs}
    mass = {k: sum(v.values(), Fraction(0)) for k, v in succ.items()}
    changed = True
    while changed:
        changed = False
        for pair in sorted(rel, key=repr):
            x, y = pair
            for a in M.inputs:
                if mass[(x, a)] != mass[(y, a)] or coupling_exists(succ[(x, a)], succ[(y, a)], rel) is None:
                    rel.discard(pair)
                    changed = True
                    break
    return rel


def eps_simulates(M: Smp, s1, s2, eps, grid: GridSpec | None = None) -> bool:
    """Whether ``s2`` eps-simulates ``s1``.

    Args:
        M: A reactive process.
        s1: The simulated state.
        s2: The simulating state.
        eps: Acceleration applied to ``s2``'s residence times.
        grid: Resolution for residence CDFs outside the closed-form family.
    """
    M.check_state(s1)
    M.check_state(s2)
    return (s1, s2) in simulation_relation(M, eps, grid)


def simulates(M: Smp, s1, s2, grid: GridSpec | None = None) -> bool:
    """Plain simulation: ``s2`` simulates ``s1`` without acceleration."""
    return eps_simulates(M, s1, s2, 1, grid)


def bisimulation_partition(M: Smp) -> list[list]:
    """Classes of probabilistic bisimilarity with equal residence CDFs.

    Two residence CDFs count as equal when each is 1-faster than the other.
    """
    _require_reactive(M)
    cdf_class = _cdf_classes(M)
    blocks: dict = {}
    for s in M.states:
        blocks.setdefault((M.labels[s], cdf_class[s]), []).append(s)
    part = list(blocks.values())
    while True:
        index = {s: i for i, b in enumerate(part) for s in b}
        new = []
        for b in part:
            groups: dict = {}
            for s in b:
                sig = []
                for a in M.inputs:
                    agg: dict = {}
                    for t, p in _successors(M, s, a).items():
                        agg[index[t]] = agg.get(index[t], Fraction(0)) + p
                    sig.append(tuple(sorted(agg.items())))
                groups.setdefault(tuple(sig), []).append(s)
            new.extend(groups.values())
        if len(new) == len(part):
            return new
        part = new


def _cdf_classes(M: Smp) -> dict:
    reps: list = []
    out = {}
    for s in M.states:
        F = M.residence[s]
        for i, G in enumerate(reps):
            if F == G or _same_cdf(F, G):
                out[s] = i
                break
        else:
            reps.append(F)
            out[s] = len(reps) - 1
    return out


def _same_cdf(F: Cdf, G: Cdf) -> bool:
    return eps_faster(F, G, 1) and eps_faster(G, F, 1)


def bisimilar(M: Smp, s1, s2) -> bool:
    """Whether ``s1`` and ``s2`` are bisimilar."""
    M.check_state(s1)
    M.check_state(s2)
    return any(s1 in b and s2 in b for b in bisimulation_partition(M))


def acceleration_constants(M: Smp, grid: GridSpec | None = None) -> list:
    """Sorted, deduplicated finite constants ``c(F_s, F_s')`` over all state pairs."""
    found = []
    seen = set()
    for s in M.states:
        for t in M.states:
            key = (M.residence[s], M.residence[t])
            if key in seen:
                continue
            seen.add(key)
            c = c_clamped(M.residence[s], M.residence[t], numeric_fallback=True, grid=grid)
            if c != INF:
                found.append(c)
    found.sort()
    out: list = []
    for c in found:
        if out and _close(out[-1], c):
            continue
        out.append(c)
    return out


def _close(a, b) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(float(a) - float(b)) <= 1e-9 * max(1.0, abs(float(b)))


def simulation_distance(M: Smp, s1, s2, grid: GridSpec | None = None):
    """Least eps >= 1 such that ``s2`` eps-simulates ``s1``, or inf.

    Only constants ``c(F_s, F_s')`` of the model can be the answer, so the
    search bisects over that sorted list.

    Returns:
        A Fraction when the constant is exact, a float otherwise, or ``inf``.
    """
    M.check_state(s1)
    M.check_state(s2)
    cs = acceleration_constants(M, grid)
    memo: dict = {}

    def ok(i):
        if i not in memo:
            memo[i] = eps_simulates(M, s1, s2, cs[i], grid)
        return memo[i]

    if ok(0):
        return cs[0]
    if not ok(len(cs) - 1):
        return INF
    i, j = 0, len(cs) - 1
    while i < j:
        h = math.ceil((j - i) / 2)
        if ok(j - h):
            j -= h
        else:
            i += h
    return cs[j]


def distance_table(M: Smp, grid: GridSpec | None = None) -> dict:
    """All-pairs simulation distances, reusing one relation per constant."""
    cs = acceleration_constants(M, grid)
    rels = [simulation_relation(M, c, grid) for c in cs]
    table = {}
    for x in M.states:
        for y in M.states:
            table[(x, y)] = next((c for c, rel in zip(cs, rels) if (x, y) in rel), INF)
    return table


@dataclass
class LogDistanceReport:
    """Log-distances and any hemimetric violations found.

    Attributes:
        table: ``(s, t) -> log d(s, t)``, ``inf`` where no acceleration works.
        violations: Human-readable descriptions; empty when the axioms hold.
    """

    table: dict
    violations: list


def log_distance_table(M: Smp, grid: GridSpec | None = None, tol: float = 1e-9) -> LogDistanceReport:
    """Compute ``log d`` for all pairs and check the hemimetric axioms."""
    d = distance_table(M, grid)
    table = {k: (math.inf if v == INF else math.log(float(v))) for k, v in d.items()}
    violations = []
    for s in M.states:
        if table[(s, s)] != 0:
            violations.append(f"log d({s},{s}) = {table[(s, s)]}")
    for x in M.states:
        for y in M.states:
            if table[(x, y)] < -tol:
                violations.append(f"log d({x},{y}) is negative")
            for z in M.states:
                lhs, rhs = table[(x, z)], table[(x, y)] + table[(y, z)]
                if lhs > rhs + tol:
                    violations.append(f"triangle fails for {x},{y},{z}: {lhs} > {rhs}")
    return LogDistanceReport(table, violations)


def accelerated_copy(M: Smp, eps, suffix: str = "'") -> tuple[Smp, dict]:
    """Disjoint union of ``M`` and a copy whose residence times run ``eps`` times faster.

    Returns:
        ``(union, names)`` with ``names[s]`` the copy of state ``s``.
    """
    _require_reactive(M)
    names = {s: f"{s}{suffix}" for s in M.states}
    if set(names.values()) & set(M.states):
        raise UnknownState("copy suffix collides with existing state ids")
    trans = dict(M.trans)
    for (s, a), row in M.trans.items():
        trans[(names[s], a)] = {(names[t], b): p for (t, b), p in row.items()}
    residence = dict(M.residence)
    labels = dict(M.labels)
    for s in M.states:
        residence[names[s]] = M.residence[s].scaled(eps)
        labels[names[s]] = M.labels[s]
    union = Smp("reactive", M.states + tuple(names.values()), M.inputs, M.outputs, trans, residence, labels)
    return union, names


def raw_pair_acceleration(M: Smp, s1, s2):
    """Unclamped least eps on residence CDFs alone, for diagnostics."""
    return least_acceleration(M.residence[s2], M.residence[s1])

"""Parallel timing anomalies and sufficient conditions that rule them out.

Replacing a component ``V`` by a faster ``U`` can make the composite
``U * W`` slower than ``V * W``. ``detect_anomaly`` measures this on one
time-bounded cylinder. ``strong_monotonic`` checks pointwise path
conditions which, together with ``U <= V`` and ``W <= W'``, guarantee
``U * W <= V * W'``. ``monotonic_bounded`` checks the weaker existential
variant up to a fixed path length.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from smpkit.dist import (
    INF,
    Cdf,
    CompositionKind,
    compose_cdf,
    eps_faster,
    least_acceleration,
)
from smpkit.errors import ExplosionGuard, KindMismatch, UnsupportedShape
from smpkit.smp import Smp, TimeBoundedCylinder, compose, cylinder_prob, enumerate_schedulers, pair_name

RESIDENCE_U = "ResidenceU"
RESIDENCE_V = "ResidenceV"
SCHEDULER_U = "SchedulerU"
SCHEDULER_V = "SchedulerV"
DETERMINISTIC_KERNEL = "DeterministicKernel"

PATH_LIMIT = 200000


@dataclass
class MonotonicityVerdict:
    """Outcome of a (strong) monotonicity check.

    Attributes:
        holds: Whether every checked condition is satisfied.
        violated_condition: One of the condition names, or None.
        witness: For a failure, the offending ``paths``, the 0-based state
            ``index`` and, for residence failures, a time ``t`` where the
            domination breaks (None when only an analytic certificate
            refutes it).
        numeric: True when some CDF comparison was settled by the grid.
        bound: The path length that was checked.
        complete: False for the bounded check of the existential variant,
            which says nothing about longer paths.
    """

    holds: bool
    violated_condition: str | None = None
    witness: dict | None = None
    numeric: bool = False
    bound: int = 0
    complete: bool = True

    def __bool__(self) -> bool:
        return self.holds

    def to_json(self) -> dict:
        return {
            "holds": self.holds,
            "violated_condition": self.violated_condition,
            "witness": self.witness,
            "numeric": self.numeric,
            "bound": self.bound,
            "complete": self.complete,
        }


def _star(star) -> CompositionKind:
    return star if isinstance(star, CompositionKind) else CompositionKind.parse(star)


def deterministic_kernel(M: Smp) -> bool:
    """Whether every ``(state, input)`` row has at most one successor state."""
    for s in M.states:
        for a in M.inputs:
            if len({t for (t, _), p in M.row(s, a).items() if p > 0}) > 1:
                return False
    return True


def _size(M) -> int:
    return M if isinstance(M, int) else len(M.states)


def path_bound_m(U, V, W, W2) -> int:
    """Path length after which strong monotonicity repeats itself.

    Args:
        U, V, W, W2: Processes or their state counts.
    """
    u, v, w, w2 = (_size(M) for M in (U, V, W, W2))
    return max(u * w, v * w2) + max(u, v, w, w2) + 1


def _successors(M: Smp, s) -> list:
    succ = {t for a in M.inputs for (t, _), p in M.row(s, a).items() if p > 0}
    return sorted(succ, key=M.states.index)


def _layers(M: Smp, start, n: int) -> list[dict]:
    """States reachable after exactly ``k`` steps, each with one path to it."""
    layer = {start: (start,)}
    out = [layer]
    for _ in range(n - 1):
        nxt = {}
        for s, path in layer.items():
            for t in _successors(M, s):
                nxt.setdefault(t, path + (t,))
        if not nxt:
            break
        out.append(nxt)
        layer = nxt
    return out


def _dominates(F: Cdf, G: Cdf) -> tuple[bool, bool]:
    """``F >= G`` pointwise, and whether the grid decided it."""
    try:
        least = least_acceleration(F, G)
    except UnsupportedShape:
        return eps_faster(F, G, 1), True
    if isinstance(least, float):
        return least <= 1 + 1e-12, True
    return least != INF and least <= 1, False


def _break_time(F: Cdf, G: Cdf) -> float | None:
    """A time where ``F < G``, searched on a log grid."""
    t = np.geomspace(1e-6, 1e4, 4001)
    gap = F.cdf(t) - G.cdf(t)
    k = int(np.argmin(gap))
    return float(t[k]) if gap[k] < 0 else None


def _prob(M: Smp, s, a, t, out) -> Fraction:
    return M.row(s, a).get((t, out), Fraction(0))


def strong_monotonic(U: Smp, V: Smp, W: Smp, W2: Smp | None, star, n: int | None = None) -> MonotonicityVerdict:
    """Check strong monotonicity of ``star`` in ``U``, ``V``, ``W`` and ``W2``.

    Residences: along every pair of equal-length state paths from the
    initial states, ``U * W`` must dominate ``U`` and ``V`` must dominate
    ``V * W2`` pointwise. Transitions: every scheduled probability of the
    composite step must be at least every scheduled probability of the
    component step (and the reverse on the ``V`` side). Universal
    quantification over schedulers turns this into a min over inputs on
    one side against a max on the other.

    Args:
        U, V: The faster and the slower component.
        W, W2: The two contexts. ``W2`` defaults to ``W``.
        star: Composition kind or its name.
        n: Path length to check, ``path_bound_m`` by default.
    """
    W2 = W if W2 is None else W2
    star = _star(star)
    for M in (U, V, W, W2):
        if M.kind != "reactive":
            raise KindMismatch("monotonicity is defined for reactive processes")
    n = path_bound_m(U, V, W, W2) if n is None else n
    if not deterministic_kernel(W2):
        return MonotonicityVerdict(False, DETERMINISTIC_KERNEL, {"paths": [], "index": 0, "t": None}, bound=n)
    sides = [
        (RESIDENCE_U, SCHEDULER_U, U, W, True),
        (RESIDENCE_V, SCHEDULER_V, V, W2, False),
    ]
    layers = {id(M): _layers(M, M.initial, n) for M in (U, V, W, W2)}
    numeric = False
    for k in range(n):
        for res_name, _, C, X, composite_faster in sides:
            lc, lx = layers[id(C)], layers[id(X)]
            if k >= len(lc) or k >= len(lx):
                continue
            for c, pc in lc[k].items():
                for x, px in lx[k].items():
                    mixed = compose_cdf(star, C.residence[c], X.residence[x])
                    F, G = (mixed, C.residence[c]) if composite_faster else (C.residence[c], mixed)
                    ok, grid = _dominates(F, G)
                    numeric |= grid
                    if not ok:
                        wit = {"paths": [list(pc), list(px)], "index": k, "t": _break_time(F, G)}
                        return MonotonicityVerdict(False, res_name, wit, numeric, n)
        if k == n - 1:
            break
        for _, sched_name, C, X, composite_faster in sides:
            lc, lx = layers[id(C)], layers[id(X)]
            if k + 1 >= len(lc) or k + 1 >= len(lx):
                continue
            for (c, pc), (x, px) in itertools.product(lc[k].items(), lx[k].items()):
                for c2, x2 in itertools.product(_successors(C, c), _successors(X, x)):
                    for out in C.outputs:
                        comp = [_prob(C, c, b, c2, out) * _prob(X, x, b, x2, out) for b in C.inputs]
                        alone = [_prob(C, c, b, c2, out) for b in C.inputs]
                        ok = min(comp) >= max(alone) if composite_faster else min(alone) >= max(comp)
                        if not ok:
                            wit = {
                                "paths": [list(pc) + [c2], list(px) + [x2]],
                                "index": k,
                                "output": out,
                                "t": None,
                            }
                            return MonotonicityVerdict(False, sched_name, wit, numeric, n)
    return MonotonicityVerdict(True, numeric=numeric, bound=n)


# ---------------------------------------------------------------------------
# Bounded check of the existential variant
# ---------------------------------------------------------------------------


def _all_paths(M: Smp, n: int) -> list[tuple]:
    """Every state path from the initial state with at most ``n`` states."""
    out, layer = [], [(M.initial,)]
    for _ in range(n):
        out.extend(layer)
        if len(out) > PATH_LIMIT:
            raise ExplosionGuard(f"more than {PATH_LIMIT} state paths")
        layer = [p + (t,) for p in layer for t in _successors(M, p[-1])]
    return out


def _mix_feasible(rows: list[tuple[list, Fraction]]) -> bool:
    """Is there an input distribution ``q`` with ``sum_b q_b x_b >= r`` for all rows?"""
    if not rows:
        return True
    k = len(rows[0][0])
    for b in range(k):
        if all(x[b] >= r for x, r in rows):
            return True
    if k == 1:
        return False
    A = -np.array([[float(v) for v in x] for x, _ in rows])
    rhs = -np.array([float(r) for _, r in rows]) + 1e-12
    res = linprog(np.zeros(k), A_ub=A, b_ub=rhs, A_eq=np.ones((1, k)), b_eq=[1.0], bounds=[(0, 1)] * k)
    return res.status == 0


def _exists_forall(C: Smp, X: Smp, n: int, composite_faster: bool, limit: int) -> dict | None:
    """Scheduler conditions of the existential variant up to ``n`` states.

    On the ``U`` side the composite scheduler moves second, so every pair
    history is a separate feasibility problem against each input of the
    component history. On the ``V`` side the component scheduler moves
    second and must answer every joint choice of the composite histories
    that project onto its history. The feasible choices of the moving-first
    side form a convex set, so its pure choices suffice.

    Returns:
        None when the condition holds, else a witness.
    """
    cp, xp = _all_paths(C, n), _all_paths(X, n)
    by_len: dict = {}
    for p in xp:
        by_len.setdefault(len(p), []).append(p)
    outs = C.outputs
    for pc in cp:
        if len(pc) == n:
            continue
        c = pc[-1]
        pairs = by_len.get(len(pc), [])
        if composite_faster:
            for px in pairs:
                x = px[-1]
                for choice in C.inputs:
                    rows = []
                    for c2, x2 in itertools.product(_successors(C, c), _successors(X, x)):
                        for out in outs:
                            xs = [_prob(C, c, b, c2, out) * _prob(X, x, b, x2, out) for b in C.inputs]
                            rows.append((xs, _prob(C, c, choice, c2, out)))
                    if not _mix_feasible(rows):
                        return {"paths": [list(pc), list(px)], "index": len(pc) - 1, "input": choice}
        else:
            count = len(C.inputs) ** len(pairs)
            if count > limit:
                raise ExplosionGuard(f"{count} joint choices exceed the limit {limit}")
            for picks in itertools.product(C.inputs, repeat=len(pairs)):
                rows = []
                for px, pick in zip(pairs, picks):
                    x = px[-1]
                    for c2, x2 in itertools.product(_successors(C, c), _successors(X, x)):
                        for out in outs:
                            xs = [_prob(C, c, b, c2, out) for b in C.inputs]
                            rows.append((xs, _prob(C, c, pick, c2, out) * _prob(X, x, pick, x2, out)))
                if not _mix_feasible(rows):
                    return {"paths": [list(pc)], "index": len(pc) - 1, "inputs": list(picks)}
    return None


def monotonic_bounded(
    U: Smp, V: Smp, W: Smp, W2: Smp | None, star, n: int = 3, limit: int = 4096
) -> MonotonicityVerdict:
    """Check the existential variant of monotonicity on paths of ``n`` states.

    Residence conditions are those of ``strong_monotonic``. The scheduler
    conditions keep their "for all, there exists" shape. The verdict is
    marked incomplete: a pass says nothing about longer paths.

    Raises:
        ExplosionGuard: Too many paths or joint scheduler choices.
    """
    W2 = W if W2 is None else W2
    res = strong_monotonic(U, V, W, W2, star, n)
    if res.violated_condition in (RESIDENCE_U, RESIDENCE_V, DETERMINISTIC_KERNEL):
        res.complete = False
        return res
    for name, C, X, faster in ((SCHEDULER_U, U, W, True), (SCHEDULER_V, V, W2, False)):
        wit = _exists_forall(C, X, n, faster, limit)
        if wit is not None:
            return MonotonicityVerdict(False, name, wit, res.numeric, n, complete=False)
    return MonotonicityVerdict(True, numeric=res.numeric, bound=n, complete=False)


# ---------------------------------------------------------------------------
# Anomaly detection
# ---------------------------------------------------------------------------


@dataclass
class AnomalyReport:
    """Cylinder probabilities of the components and of the composites.

    Each probability is the best over deterministic schedulers, which is
    what the faster-than preorder compares on a single cylinder.
    """

    p_uw: float
    p_vw: float
    p_u: float
    p_v: float
    anomaly: bool
    word: tuple = field(default_factory=tuple)
    t: Fraction = Fraction(0)

    def to_json(self) -> dict:
        return {
            "pU*W": self.p_uw,
            "pV*W": self.p_vw,
            "pU": self.p_u,
            "pV": self.p_v,
            "anomaly": self.anomaly,
            "word": list(self.word),
            "t": str(self.t),
        }


def best_cylinder_prob(M: Smp, s, C: TimeBoundedCylinder) -> float:
    """Largest cylinder probability over deterministic schedulers from ``s``."""
    horizon = max(len(C.word), 1)
    return max(cylinder_prob(M, sched, s, C) for sched in enumerate_schedulers(M, horizon, start=s))


def detect_anomaly(U: Smp, V: Smp, W: Smp, star, word, t) -> AnomalyReport:
    """Measure ``U * W`` against ``V * W`` on the cylinder ``(word, t)``.

    The caller is expected to know that ``U`` is faster than ``V``. The
    report flags an anomaly when the faster component yields the lower
    composite probability.
    """
    star = _star(star)
    C = TimeBoundedCylinder(tuple(word), t)
    UW, VW = compose(U, W, star), compose(V, W, star)
    p_uw = best_cylinder_prob(UW, pair_name(U.initial, W.initial), C)
    p_vw = best_cylinder_prob(VW, pair_name(V.initial, W.initial), C)
    p_u = best_cylinder_prob(U, U.initial, C)
    p_v = best_cylinder_prob(V, V.initial, C)
    return AnomalyReport(p_uw, p_vw, p_u, p_v, p_uw < p_vw, C.word, C.bound)

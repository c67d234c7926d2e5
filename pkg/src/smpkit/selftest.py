"""Reproduce the reference examples and tabulate expected against actual.

Used by ``smpkit selftest``. The randomised property suites are too slow for
an interactive command and live in the pytest suite instead.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

from smpkit.dist import INF, Exponential, Uniform, least_acceleration, least_acceleration_numeric


@dataclass
class Check:
    """One row of the self-test table."""

    criterion: int
    name: str
    expected: str
    actual: str
    ok: bool | None
    seconds: float = 0.0


def _fmt(x) -> str:
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.4g}"
    return str(x)


def _distance_rows():
    from smpkit.models import self_loop_pair
    from smpkit.simdist import raw_pair_acceleration, simulation_distance

    M = self_loop_pair()
    d12, d21 = simulation_distance(M, "s1", "s2"), simulation_distance(M, "s2", "s1")
    raw = raw_pair_acceleration(M, "s2", "s1")
    return [
        (1, "simdist d(s1,s2)", "2", _fmt(d12), d12 == 2),
        (1, "simdist d(s2,s1) (raw 1/2)", "1", f"{_fmt(d21)} (raw {raw})", d21 == 1 and raw == Fraction(1, 2)),
    ]


def _anomaly_rows():
    from smpkit.anomaly import detect_anomaly
    from smpkit.models import anomaly_instance

    expected = {"product": (0.09, 0.30), "min": (0.40, 0.51), "max": (0.75, 0.91)}
    rows = []
    for kind, (a, b) in expected.items():
        U, V, W = anomaly_instance(kind)
        rep = detect_anomaly(U, V, W, kind, "aa", 2)
        ok = abs(rep.p_uw - a) <= 0.01 and abs(rep.p_vw - b) <= 0.01 and rep.anomaly
        rows.append((2, f"anomaly {kind}", f"{a:.2f} / {b:.2f}, anomaly", f"{rep.p_uw:.3f} / {rep.p_vw:.3f}", ok))
    return rows


def _sat_rows():
    from smpkit.wlwb import EXAMPLE_SAT_FORMULA, model_check_wlwb, parse_wlwb, satisfiable_wlwb

    res = satisfiable_wlwb(parse_wlwb(EXAMPLE_SAT_FORMULA))
    ok = res.sat and model_check_wlwb(res.model, res.state, parse_wlwb(EXAMPLE_SAT_FORMULA))
    rows = [(3, "example formula", "sat, model checks", "sat" if ok else "unsat", ok)]
    for text in ("p & !p", "L 2 p & M 1 p"):
        r = satisfiable_wlwb(parse_wlwb(text))
        rows.append((3, text, "unsat", "sat" if r.sat else "unsat", not r.sat))
    return rows


def _bisim_rows():
    from smpkit.wlwb import bisim_figure, gen_weighted_bisim, weighted_bisim

    M = bisim_figure()
    g, w = gen_weighted_bisim(M, "s", "t"), weighted_bisim(M, "s", "t")
    return [(4, "{1,2,3} vs {1,3}", "gen true, weighted false", f"gen {g}, weighted {w}", g and not w)]


def _acceleration_rows():
    cases = [
        ("c(Exp 2, Exp 4)", Exponential(2), Exponential(4), Fraction(2)),
        ("c(Unif(0,3), Exp 0.5)", Uniform(0, 3), Exponential(Fraction(1, 2)), Fraction(3, 2)),
        ("c(Unif(1,4), Unif(2,3))", Uniform(1, 4), Uniform(2, 3), Fraction(4, 3)),
        ("c(Exp 1, Unif(1,2))", Exponential(1), Uniform(1, 2), INF),
    ]
    rows = []
    for name, F, G, want in cases:
        got, num = least_acceleration(F, G), least_acceleration_numeric(F, G)
        if want == INF:
            ok = got == INF and num == INF
        else:
            ok = got == want and abs(float(num) - float(want)) <= 1e-6
        rows.append((5, name, _fmt(want), f"{_fmt(got)} (numeric {_fmt(float(num))})", ok))
    return rows


def _incomparability_rows():
    from smpkit.fasterthan import incomparability
    from smpkit.models import loop_vs_branch

    rep = incomparability(loop_vs_branch())
    ok = rep.bisimilar and not rep.faster_than
    actual = f"bisimilar {rep.bisimilar}, faster {rep.faster_than}, horizon {rep.horizon}"
    return [(7, "loop vs branch", "bisimilar True, faster False", actual, ok)]


def _slow_bound_rows():
    from scipy.stats import poisson

    from smpkit.fasterthan import slow_bound_N, time_bounded_additive_faster
    from smpkit.models import two_chains

    N = slow_bound_N([2], Fraction(1, 100), 2)
    direct = next(n for n in range(200) if poisson.sf(n - 1, 4) <= 0.01)
    U, _ = two_chains(Exponential(2), Exponential(Fraction(1, 2)), Exponential(1))
    all_true = all(
        time_bounded_additive_faster(U, U, "u0", "u0", e, b)
        for e in (Fraction(1, 100), Fraction(1, 10))
        for b in (1, 2)
    )
    return [
        (8, "slow bound N(2, 2, 0.01)", str(direct), str(N), N == direct),
        (8, "U additive-faster than U", "True", str(all_true), all_true),
    ]


SECTIONS = [
    _distance_rows,
    _anomaly_rows,
    _sat_rows,
    _bisim_rows,
    _acceleration_rows,
    _incomparability_rows,
    _slow_bound_rows,
]


def run_selftest() -> list[Check]:
    """Run every reference example; criterion 6 is listed as a pytest pointer."""
    out = []
    for section in SECTIONS:
        start = time.perf_counter()
        rows = section()
        dt = (time.perf_counter() - start) / len(rows)
        out.extend(Check(c, n, e, a, bool(ok), dt) for c, n, e, a, ok in rows)
    out.append(Check(6, "property suites", "0 failures", "run pytest", None))
    return sorted(out, key=lambda c: c.criterion)


def format_table(rows: list[Check]) -> str:
    """Render the rows as a fixed-width text table."""
    head = ("#", "check", "expected", "actual", "result")
    body = [
        (str(r.criterion), r.name, r.expected, r.actual, "skip" if r.ok is None else ("PASS" if r.ok else "FAIL"))
        for r in rows
    ]
    widths = [max(len(x[i]) for x in [head] + body) for i in range(5)]
    lines = ["  ".join(x.ljust(w) for x, w in zip(line, widths)).rstrip() for line in [head] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)

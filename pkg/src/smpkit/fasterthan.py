"""The trace-based faster-than preorder.

``u`` is faster than ``v`` when every scheduler for ``v`` can be answered by a
scheduler for ``u`` whose time-bounded cylinder probabilities are at least as
large. The general problem is undecidable; this module decides the
unambiguous generative case, checks the time-bounded additive approximation
over enumerated schedulers, and implements the trace logic for generative
processes.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import poisson

from smpkit.dist import Cdf, Dirac, Exponential, Mixture, convolve_all, eps_faster, simplify
from smpkit.errors import ExplosionGuard, InputError, KindMismatch, NotUnambiguous, UnsupportedClass
from smpkit.lexer import TokenStream
from smpkit.rational import format_rational, rational
from smpkit.smp import (
    Scheduler,
    Smp,
    TimeBoundedCylinder,
    cylinder_prob,
    enumerate_schedulers,
    trivial_scheduler,
)

WORD_LIMIT = 200_000


# ---------------------------------------------------------------------------
# Unambiguous generative processes
# ---------------------------------------------------------------------------


def _require_generative(M: Smp):
    if M.kind != "generative":
        raise KindMismatch("expected a generative process")


def is_unambiguous(M: Smp) -> bool:
    """Whether every (state, output) pair has at most one successor."""
    _require_generative(M)
    (a,) = M.inputs
    for s in M.states:
        seen = set()
        for t, b in M.row(s, a):
            if b in seen:
                return False
            seen.add(b)
    return True


def _step_table(M: Smp) -> dict:
    """``(s, output) -> (successor, probability)`` for an unambiguous process."""
    (a,) = M.inputs
    return {(s, b): (t, p) for s in M.states for (t, b), p in M.row(s, a).items()}


@dataclass
class FasterThanResult:
    """A faster-than verdict.

    Attributes:
        holds: The verdict.
        method: ``"unambiguous"`` (exact up to the CDF comparison) or
            ``"approximate verdict"`` (bounded scheduler enumeration).
        witness: On failure, a JSON-friendly description of why.
        words_checked: Number of cylinders or loop words compared.
    """

    holds: bool
    method: str
    witness: dict | None = None
    words_checked: int = 0

    def __bool__(self) -> bool:
        return self.holds


class _Dominance:
    """Dominance check ``m_u * conv(res_u) >= m_v * conv(res_v)`` for all t.

    Residences are put in a canonical order so that permuted words share one
    entry of the process-wide cache.
    """

    def __call__(self, mu: Fraction, res_u: tuple, mv: Fraction, res_v: tuple) -> bool:
        res_u = tuple(sorted(map(simplify, res_u), key=lambda F: F.to_literal()))
        res_v = tuple(sorted(map(simplify, res_v), key=lambda F: F.to_literal()))
        return _dominates(mu, res_u, mv, res_v)


@lru_cache(maxsize=65536)
def _dominates(mu: Fraction, res_u: tuple, mv: Fraction, res_v: tuple) -> bool:
    if mv == 0:
        return True
    if mu < mv:
        return False
    if all(isinstance(F, Exponential) for F in res_u + res_v):
        return _exp_dominates(mu, [F.rate for F in res_u], mv, [F.rate for F in res_v])
    F, G = convolve_all(list(res_u)), convolve_all(list(res_v))
    if mu == mv:
        return eps_faster(F, G, 1)
    return eps_faster(Mixture((mu,), (F,)), Mixture((mv,), (G,)), 1)


def _exp_dominates(mu: Fraction, ru: list, mv: Fraction, rv: list, tol: float = 1e-12) -> bool:
    """Dominance between scaled hypoexponential CDFs.

    Exact certificates come first: sorted rates that are pointwise larger give
    stochastic order, while the orders of contact at zero and the decay rates
    at infinity can refute it. Otherwise the curves are compared on a grid
    refined around the smallest gap.
    """
    ru, rv = sorted(ru), sorted(rv)
    if len(ru) == len(rv) and all(a >= b for a, b in zip(ru, rv)):
        return True
    # Near zero, conv of n exponentials behaves like prod(rates) t^n / n!.
    if len(ru) > len(rv):
        return False
    if len(ru) == len(rv) and mu * math.prod(ru) < mv * math.prod(rv):
        return False
    if mu == mv and min(ru) < min(rv):
        return False
    F, G = convolve_all([Exponential(r) for r in ru]), convolve_all([Exponential(r) for r in rv])
    top = (10 * max(len(ru), len(rv)) + 60) / float(min(ru + rv))
    ts = np.concatenate([[0.0], np.geomspace(top * 1e-7, top, 3000)])
    for _ in range(3):
        gap = float(mu) * F.cdf(ts) - float(mv) * G.cdf(ts)
        if gap.min() < -tol:
            return False
        i = int(np.argmin(gap))
        ts = np.linspace(ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)], 256)
    return True


def _violation_time(mu, res_u, mv, res_v) -> tuple[float, float, float]:
    """Time of the largest dominance gap on a log grid, with both values there."""
    F, G = convolve_all(list(res_u)), convolve_all(list(res_v))
    rates = [float(H.rate) for H in res_u + res_v if isinstance(H, Exponential)]
    top = (10 * (len(res_u) + len(res_v)) + 60) / min(rates) if rates else 1e3
    ts = np.concatenate([[0.0], np.geomspace(top * 1e-7, top, 4000)])
    gap = float(mv) * G.cdf(ts) - float(mu) * F.cdf(ts)
    t = float(ts[int(np.argmax(gap))])
    return t, float(mu) * float(F.cdf(t)), float(mv) * float(G.cdf(t))


def _walk_words(TU: dict, TV: dict, u0, v0, outputs: Sequence, max_len: int):
    """Yield ``(word, u, v, mass_u, res_u, mass_v, res_v)`` for live V-words.

    ``u`` is None once the U side has no path for the word. Residences are the
    states left along the word, in order.
    """
    stack = [((), u0, v0, Fraction(1), (), Fraction(1), ())]
    count = 0
    while stack:
        word, u, v, mu, ru, mv, rv = stack.pop()
        if len(word) == max_len:
            continue
        for b in outputs:
            if (v, b) not in TV:
                continue
            v2, pv = TV[(v, b)]
            if u is not None and (u, b) in TU:
                u2, pu = TU[(u, b)]
                item = (word + (b,), u2, v2, mu * pu, ru + (u,), mv * pv, rv + (v,))
            else:
                item = (word + (b,), None, v2, Fraction(0), ru, mv * pv, rv + (v,))
            count += 1
            if count > WORD_LIMIT:
                raise ExplosionGuard(f"more than {WORD_LIMIT} words to compare")
            yield item
            stack.append(item)


def loop_set(MU: Smp, MV: Smp, u0, v0) -> set:
    """Loop triples ``(p1, p2, v)``: a common word of length at most ``|S|^2``
    leads to ``(p1, p2)`` and ``v`` (same length bound) leads both back."""
    TU, TV = _step_table(MU), _step_table(MV)
    n = len(MU.states) * len(MV.states)
    outputs = sorted(set(MU.outputs) | set(MV.outputs))
    pairs = {(u0, v0)}
    for word, u, v, *_ in _walk_words(TU, TV, u0, v0, outputs, n):
        if u is not None:
            pairs.add((u, v))
    out = set()
    for p1, p2 in pairs:
        for word, u, v, *_ in _walk_words(TU, TV, p1, p2, outputs, n):
            if (u, v) == (p1, p2):
                out.add((p1, p2, word))
    return out


def _res(M: Smp, states: tuple) -> tuple:
    return tuple(M.residence[s] for s in states)


def faster_than_unambiguous(MU: Smp, MV: Smp, u0=None, v0=None) -> FasterThanResult:
    """Decide whether ``u0`` is faster than ``v0`` for unambiguous generative processes.

    Compares cylinder CDFs for every word of length at most ``|S|^2``, where
    ``|S|`` counts the product states, and for every loop word at the loop
    pairs reached by such words.

    Raises:
        KindMismatch: Unless both processes are generative.
        NotUnambiguous: If either process is ambiguous.
    """
    _require_generative(MU)
    _require_generative(MV)
    for M in (MU, MV):
        if not is_unambiguous(M):
            raise NotUnambiguous("faster_than_unambiguous needs unambiguous processes")
    u0 = MU.check_state(MU.initial if u0 is None else u0)
    v0 = MV.check_state(MV.initial if v0 is None else v0)
    TU, TV = _step_table(MU), _step_table(MV)
    n = len(MU.states) * len(MV.states)
    outputs = sorted(set(MU.outputs) | set(MV.outputs))
    dom = _Dominance()
    checked = 0

    def fail(kind, word, mu, ru, mv, rv, **extra):
        t, pu, pv = _violation_time(mu, ru, mv, rv)
        witness = {"kind": kind, "word": list(word), "t": t, "u_prob": pu, "v_prob": pv, **extra}
        return FasterThanResult(False, "unambiguous", witness, checked)

    for word, _, _, mu, ru, mv, rv in _walk_words(TU, TV, u0, v0, outputs, n):
        checked += 1
        ru_c, rv_c = _res(MU, ru), _res(MV, rv)
        if not dom(mu, ru_c, mv, rv_c):
            return fail("word", word, mu, ru_c, mv, rv_c)
    for p1, p2, word in sorted(loop_set(MU, MV, u0, v0), key=repr):
        checked += 1
        mu, mv, ru, rv = Fraction(1), Fraction(1), [], []
        u, v = p1, p2
        for b in word:
            u2, pu = TU[(u, b)]
            v2, pv = TV[(v, b)]
            mu, mv = mu * pu, mv * pv
            ru.append(MU.residence[u])
            rv.append(MV.residence[v])
            u, v = u2, v2
        if not dom(mu, tuple(ru), mv, tuple(rv)):
            return fail("loop", word, mu, tuple(ru), mv, tuple(rv), loop=[p1, p2])
    return FasterThanResult(True, "unambiguous", None, checked)


# ---------------------------------------------------------------------------
# Time-bounded additive approximation
# ---------------------------------------------------------------------------


def _poisson_tail(lam: float, n: int) -> float:
    """``P(Poisson(lam) >= n)``."""
    if n <= 0:
        return 1.0
    return float(poisson.sf(n - 1, lam))


def slow_bound_N(rates: Iterable, eps, b) -> int:
    """Word length beyond which every cylinder of length ``n`` bounded by ``b`` has mass at most ``eps``.

    An ``n``-fold convolution of exponentials with rates at most ``theta`` is
    dominated by the Erlang(``n``, ``theta``) CDF, whose value at ``b`` is the
    Poisson(``theta * b``) tail from ``n``.

    Args:
        rates: Exponential rates, or residence CDFs (exponentials or mixtures
            of exponentials).
        eps: Additive tolerance.
        b: Time bound.

    Raises:
        UnsupportedClass: When some residence has no exponential tail bound.
    """
    eps, b = float(eps), float(b)
    if b < 0 or eps <= 0:
        raise InputError("need eps > 0 and b >= 0")
    theta = max((_max_rate(r) for r in rates), default=0.0)
    if eps >= 1:
        return 0
    lam = theta * b
    n = 0
    while _poisson_tail(lam, n) > eps:
        n += 1
    return n


def _max_rate(r) -> float:
    if isinstance(r, Exponential):
        return float(r.rate)
    if isinstance(r, Mixture):
        return max(_max_rate(p) for w, p in zip(r.weights, r.parts) if w > 0)
    if isinstance(r, Cdf):
        raise UnsupportedClass(f"no slow-class tail bound for {r.to_literal()}")
    return float(rational(r))


def model_rates(*models: Smp) -> list:
    return [M.residence[s] for M in models for s in M.states]


@dataclass
class AdditiveVerdict(FasterThanResult):
    """Verdict of the time-bounded additive check.

    Attributes:
        N: The slow bound used for the word length.
        schedulers: Number of adversary schedulers examined.
    """

    N: int = 0
    schedulers: int = 0


def _time_grid(b: float, models: Sequence[Smp], points: int) -> np.ndarray:
    knots = [k for M in models for F in M.residence.values() for k in F.knots() if 0 <= k <= b]
    return np.unique(np.concatenate([np.linspace(0.0, b, points), np.array(knots, dtype=float)]))


def _words(outputs: Sequence, max_len: int) -> list[tuple]:
    out = []
    for n in range(1, max_len + 1):
        if len(outputs) ** n > WORD_LIMIT:
            raise ExplosionGuard(f"more than {WORD_LIMIT} words of length {n}")
        out.extend(itertools.product(outputs, repeat=n))
    return out


class _Profiler:
    """Cylinder CDFs of many words on a fixed time grid.

    Words are processed in length order so each extends the path frontier of
    its prefix, and convolutions are evaluated once per residence multiset.
    """

    def __init__(self, M: Smp, words: list, ts: np.ndarray):
        self.M, self.words, self.ts = M, words, ts
        self.conv: dict = {}

    def _cdf(self, states: tuple) -> np.ndarray:
        if states not in self.conv:
            F = convolve_all([self.M.residence[x] for x in states])
            self.conv[states] = np.asarray(F.cdf(self.ts), dtype=float)
        return self.conv[states]

    def __call__(self, sched: Scheduler, s) -> np.ndarray:
        M = self.M
        frontier = {(): {((), (s,)): Fraction(1)}}
        rows = []
        for w in self.words:
            nxt: dict = {}
            for (res, h), p in frontier[w[:-1]].items():
                res2 = tuple(sorted(res + (h[-1],)))
                for a, q in sched.dist(h).items():
                    for (t, b), r in M.row(h[-1], a).items():
                        if b == w[-1]:
                            key = (res2, (t,) if sched.memoryless else h + (t,))
                            nxt[key] = nxt.get(key, Fraction(0)) + p * q * r
            frontier[w] = nxt
            row = np.zeros(self.ts.size)
            grouped: dict = {}
            for (res, _), p in nxt.items():
                grouped[res] = grouped.get(res, Fraction(0)) + p
            for res, p in grouped.items():
                row += float(p) * self._cdf(res)
            rows.append(row)
        return np.array(rows) if rows else np.zeros((0, self.ts.size))


def time_bounded_additive_faster(
    MU: Smp,
    MV: Smp,
    u0,
    v0,
    eps,
    b,
    horizon_override: int | None = None,
    grid_points: int = 65,
    tol: float = 1e-9,
) -> AdditiveVerdict:
    """Check ``P^s'(u0)(C) >= P^s(v0)(C) - eps`` for all ``s``, some ``s'``, all ``C`` bounded by ``b``.

    Words longer than the slow bound cannot violate the inequality, so only
    shorter ones are enumerated. Both sides range over deterministic
    history-dependent schedulers and times range over a grid of ``[0, b]``
    that includes every CDF knot.

    Args:
        MU: Process of the faster candidate.
        MV: Process of the reference.
        u0: Start state in ``MU``.
        v0: Start state in ``MV``.
        eps: Additive tolerance, positive.
        b: Time bound.
        horizon_override: Cap on the word length, which also lifts the
            slow-class requirement when the class has no tail bound.
        grid_points: Uniform grid size on ``[0, b]``.
        tol: Float slack in the comparison.

    Raises:
        UnsupportedClass: When no tail bound exists and no override is given.
        ExplosionGuard: When words or schedulers exceed their limits.
    """
    MU.check_state(u0)
    MV.check_state(v0)
    if MU.kind == "general" or MV.kind == "general":
        raise KindMismatch("additive check needs reactive or generative processes")
    exact = len(MU.inputs) == 1 and len(MV.inputs) == 1
    method = "grid" if exact else "approximate verdict"
    try:
        N = slow_bound_N(model_rates(MU, MV), eps, b)
    except UnsupportedClass:
        if horizon_override is None:
            raise
        N = horizon_override + 1
        method = "approximate verdict"
    if N <= 1:
        return AdditiveVerdict(True, method, None, 0, N=N, schedulers=0)
    max_len = N - 1 if horizon_override is None else min(N - 1, horizon_override)
    outputs = sorted(set(MV.outputs))
    words = _words(outputs, max_len)
    ts = _time_grid(float(b), (MU, MV), grid_points)
    eps_f = float(eps)
    candidates = list(enumerate_schedulers(MU, max_len - 1, start=u0))
    profiles: dict = {}
    prof_u = _Profiler(MU, words, ts)
    prof_v = prof_u if MV is MU else _Profiler(MV, words, ts)

    def profile(i):
        if i not in profiles:
            profiles[i] = prof_u(candidates[i], u0)
        return profiles[i]

    n_adv = 0
    for sigma in enumerate_schedulers(MV, max_len - 1, start=v0):
        n_adv += 1
        target = prof_v(sigma, v0) - eps_f - tol
        best = None
        for i in range(len(candidates)):
            slack = profile(i) - target
            if slack.size == 0 or slack.min() >= 0:
                best = None
                break
            k = np.unravel_index(int(np.argmin(slack)), slack.shape)
            if best is None or slack[k] > best[0]:
                best = (float(slack[k]), k, i)
        else:
            _, (w, j), i = best
            witness = {
                "word": list(words[w]),
                "t": float(ts[j]),
                "scheduler": sigma.describe(),
                "best_response": candidates[i].describe(),
            }
            return AdditiveVerdict(False, method, witness, len(words), N=N, schedulers=n_adv)
    return AdditiveVerdict(True, method, None, len(words), N=N, schedulers=n_adv)


def equally_fast(MU: Smp, MV: Smp, u0=None, v0=None, eps=None, b=None) -> bool:
    """Faster-than in both directions.

    Unambiguous generative pairs use the exact decider; otherwise ``eps`` and
    ``b`` select the additive check.
    """
    u0 = MU.initial if u0 is None else u0
    v0 = MV.initial if v0 is None else v0
    if eps is None:
        return bool(faster_than_unambiguous(MU, MV, u0, v0)) and bool(faster_than_unambiguous(MV, MU, v0, u0))
    return bool(time_bounded_additive_faster(MU, MV, u0, v0, eps, b)) and bool(
        time_bounded_additive_faster(MV, MU, v0, u0, eps, b)
    )


# ---------------------------------------------------------------------------
# Incomparability with simulation
# ---------------------------------------------------------------------------


@dataclass
class IncomparabilityReport:
    """Bisimilar states where one is still not faster than the other.

    Attributes:
        bisimilar: Whether the two states are bisimilar.
        faster_than: Whether every examined response matched the adversary.
        horizon: Word length used, derived from the responses.
        refutations: Per candidate response, the word, time and both probabilities.
    """

    bisimilar: bool
    faster_than: bool
    horizon: int
    refutations: list


def half_half_adversary(M: Smp, branch, left, right, horizon: int) -> Scheduler:
    """Memoryless scheduler: fair coin at ``branch``, ``a`` at ``left``, ``b`` at ``right``."""
    half = Fraction(1, 2)
    policy = {s: M.inputs[0] for s in M.states}
    policy[branch] = {"a": half, "b": half}
    policy[left] = "a"
    policy[right] = "b"
    return Scheduler.memoryless_from(policy, horizon)


def derived_horizon(q: Fraction) -> int:
    """Least ``n >= 2`` with ``min(q, 1 - q) ** n < 1/2``.

    The cylinders for ``a^n`` and ``b^n`` from the loop state have mass
    ``q^n`` and ``(1-q)^n`` under a response choosing ``a`` with probability
    ``q``; the adversary gives each mass ``1/2``.
    """
    m = min(q, 1 - q)
    n = 2
    while m**n >= Fraction(1, 2):
        n += 1
    return n


def incomparability(M: Smp, s="s", s0="s0", left="s1", right="s2", t=1, response_grid: int = 4) -> IncomparabilityReport:
    """Check that ``s`` is not faster than the bisimilar branching state ``s0``.

    The adversary runs from ``s0`` with the half/half scheduler. Responses from
    ``s`` range over memoryless randomised choices with ``P(a)`` on a grid of
    ``1/response_grid`` steps, plus all deterministic history-dependent
    schedulers up to the derived horizon. Each must lose on ``a^n`` or ``b^n``
    at time ``t`` for some ``n`` up to the horizon.
    """
    from smpkit.simdist import bisimilar

    bis = bisimilar(M, s, s0)
    qs = [Fraction(i, response_grid) for i in range(response_grid + 1)]
    horizon = max(derived_horizon(q) for q in qs)
    adversary = half_half_adversary(M, s0, left, right, horizon)
    words = [(c,) * n for n in range(1, horizon + 1) for c in ("a", "b")]
    cyl = [TimeBoundedCylinder(w, t) for w in words]
    target = [cylinder_prob(M, adversary, s0, C) for C in cyl]
    responses = [Scheduler.memoryless_from({x: {"a": q, "b": 1 - q} for x in M.states}, horizon) for q in qs]
    responses += list(enumerate_schedulers(M, horizon - 1, start=s))
    refutations = []
    all_lose = True
    for r in responses:
        r = dataclasses.replace(r, horizon=horizon)
        got = [cylinder_prob(M, r, s, C) for C in cyl]
        loss = next((i for i, (g, v) in enumerate(zip(got, target)) if g < v - 1e-12), None)
        if loss is None:
            all_lose = False
            refutations.append(None)
        else:
            refutations.append(
                {"word": "".join(words[loss]), "t": float(t), "response": got[loss], "adversary": target[loss]}
            )
    return IncomparabilityReport(bis, not all_lose, horizon, refutations)


# ---------------------------------------------------------------------------
# Trace logic for generative processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceFormula:
    """``P[<=t, >=p](<a1>...<an>true)``: the cylinder of the word by time ``t`` has probability at least ``p``."""

    t: Fraction
    p: Fraction
    word: tuple

    def __post_init__(self):
        object.__setattr__(self, "t", rational(self.t))
        object.__setattr__(self, "p", rational(self.p))
        object.__setattr__(self, "word", tuple(self.word))
        if not 0 <= self.p <= 1:
            raise InputError(f"probability bound {self.p} outside [0,1]")
        if self.t < 0:
            raise InputError("time bound must be nonnegative")

    def __str__(self) -> str:
        path = "".join(f"<{a}>" for a in self.word) + "true"
        return f"P[<={format_rational(self.t)},>={format_rational(self.p)}]({path})"


_TRACE_SYMBOLS = ("<=", ">=", "[", "]", ",", "(", ")", "<", ">", "-")


def parse_trace_formula(text: str) -> TraceFormula:
    """Parse ``P[<=t,>=p](<a><b>true)``.

    Raises:
        ParseError: At the offset of the first offending token.
    """
    ts = TokenStream(text, _TRACE_SYMBOLS)
    tok = ts.peek
    if ts.ident("P") != "P":
        raise ts.error("expected 'P'", tok)
    ts.expect("[")
    ts.expect("<=")
    t = ts.number("a time bound")
    ts.expect(",")
    ts.expect(">=")
    tok = ts.peek
    p = ts.number("a probability")
    if p > 1:
        raise ts.error("probability bound exceeds 1", tok)
    ts.expect("]")
    ts.expect("(")
    word = []
    while ts.accept("<"):
        word.append(ts.ident("an output label"))
        ts.expect(">")
    tok = ts.peek
    if ts.ident("true") != "true":
        raise ts.error("expected 'true'", tok)
    ts.expect(")")
    ts.finish()
    return TraceFormula(t, p, tuple(word))


def trace_probability(M: Smp, s, word: Sequence, t) -> float:
    _require_generative(M)
    if not word:
        return 1.0
    return cylinder_prob(M, trivial_scheduler(M, len(word)), s, TimeBoundedCylinder(tuple(word), t))


def model_check_trace_logic(M: Smp, s, psi: TraceFormula) -> bool:
    """Whether ``s`` satisfies ``psi`` in the generative process ``M``."""
    M.check_state(s)
    return trace_probability(M, s, psi.word, psi.t) >= float(psi.p)


def satisfiable_trace_logic(psi: TraceFormula) -> Smp:
    """A model of ``psi``: a chain spelling its word with zero residence times.

    Every formula is satisfiable since the chain reaches the end of the word
    with probability one at time zero.
    """
    n = len(psi.word)
    names = [f"q{i}" for i in range(n + 1)]
    trans = {(names[i], "go"): {(names[i + 1], a): 1} for i, a in enumerate(psi.word)}
    outputs = tuple(sorted(set(psi.word))) or ("a",)
    return Smp("generative", names, ("go",), outputs, trans, {q: Dirac(0) for q in names})


def trace_formulas(MV: Smp, v0, max_len: int, ts: Sequence) -> list[TraceFormula]:
    """Formulas ``v0`` satisfies with the tightest probability, for live words."""
    out = []
    outputs = sorted(MV.outputs)
    for n in range(1, max_len + 1):
        for w in itertools.product(outputs, repeat=n):
            for t in ts:
                p = trace_probability(MV, v0, w, t)
                if p > 0:
                    out.append(TraceFormula(t, Fraction(math.floor(p * 10**9), 10**9), w))
    return out

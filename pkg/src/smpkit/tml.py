"""Timed Markovian logic over reactive semi-Markov processes.

``l_p t`` and ``m_p t`` bound the residence CDF at time ``t`` from below and
above; ``Lp p a phi`` and ``Mp p a phi`` bound the probability of moving into
``phi`` on input ``a``.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from smpkit.dist import Cdf, Dirac, Uniform, convolve_all, evaluate
from smpkit.errors import HorizonTooShort, InputError
from smpkit.lexer import TokenStream
from smpkit.rational import format_rational, rational
from smpkit.smp import Scheduler, Smp, _cdf_key


class Tml:
    """Base class of the TML formula AST."""

    def __str__(self) -> str:
        return tml_to_text(self)


@dataclass(frozen=True)
class TAtom(Tml):
    name: str


@dataclass(frozen=True)
class TNegAtom(Tml):
    name: str


@dataclass(frozen=True)
class Ell(Tml):
    """``l_p t``: the residence CDF at ``t`` is at least ``p``."""

    p: Fraction
    t: Fraction


@dataclass(frozen=True)
class Em(Tml):
    """``m_p t``: the residence CDF at ``t`` is at most ``p``."""

    p: Fraction
    t: Fraction


@dataclass(frozen=True)
class LProb(Tml):
    p: Fraction
    a: str
    arg: Tml


@dataclass(frozen=True)
class MProb(Tml):
    p: Fraction
    a: str
    arg: Tml


@dataclass(frozen=True)
class TAnd(Tml):
    left: Tml
    right: Tml


@dataclass(frozen=True)
class TOr(Tml):
    left: Tml
    right: Tml


def _check_prob(p: Fraction) -> Fraction:
    p = rational(p)
    if not 0 <= p <= 1:
        raise InputError(f"probability constant {p} outside [0,1]")
    return p


def ell(p, t) -> Ell:
    return Ell(_check_prob(p), rational(t))


def em(p, t) -> Em:
    return Em(_check_prob(p), rational(t))


_ALLOWED = {
    "geq": (Ell, LProb),
    "leq": (Em, MProb),
    "dual": (Em, LProb),
}


def fragment(phi: Tml) -> set:
    """The fragments containing ``phi``.

    ``geq`` allows ``l`` and ``Lp``; ``leq`` allows ``m`` and ``Mp``; ``dual``
    allows ``m`` and ``Lp``. Atoms, negated atoms, ``&`` and ``|`` are in all.
    """
    out = set(_ALLOWED)
    for g in _walk(phi):
        for name, ok in _ALLOWED.items():
            if isinstance(g, (Ell, Em, LProb, MProb)) and not isinstance(g, ok):
                out.discard(name)
    return out


def perturb(phi: Tml, eps) -> Tml:
    """Scale every time constant of ``phi`` by ``eps``."""
    e = rational(eps)
    if isinstance(phi, Ell):
        return Ell(phi.p, phi.t * e)
    if isinstance(phi, Em):
        return Em(phi.p, phi.t * e)
    if isinstance(phi, LProb):
        return LProb(phi.p, phi.a, perturb(phi.arg, e))
    if isinstance(phi, MProb):
        return MProb(phi.p, phi.a, perturb(phi.arg, e))
    if isinstance(phi, TAnd):
        return TAnd(perturb(phi.left, e), perturb(phi.right, e))
    if isinstance(phi, TOr):
        return TOr(perturb(phi.left, e), perturb(phi.right, e))
    return phi


def tml_to_text(phi: Tml) -> str:
    if isinstance(phi, TAtom):
        return phi.name
    if isinstance(phi, TNegAtom):
        return f"!{phi.name}"
    if isinstance(phi, Ell):
        return f"l {format_rational(phi.p)} {format_rational(phi.t)}"
    if isinstance(phi, Em):
        return f"m {format_rational(phi.p)} {format_rational(phi.t)}"
    if isinstance(phi, (LProb, MProb)):
        op = "Lp" if isinstance(phi, LProb) else "Mp"
        inner = tml_to_text(phi.arg)
        if isinstance(phi.arg, (Ell, Em, LProb, MProb)):
            inner = f"({inner})"
        return f"{op} {format_rational(phi.p)} {phi.a} {inner}"
    op = "&" if isinstance(phi, TAnd) else "|"
    return f"({tml_to_text(phi.left)} {op} {tml_to_text(phi.right)})"


_SYMBOLS = ("!", "&", "|", "(", ")", "-")
_KEYWORDS = {"l", "m", "Lp", "Mp"}


def parse_tml(text: str) -> Tml:
    """Parse a TML formula; ``&`` binds tighter than ``|``.

    Raises:
        ParseError: At the offset of the first offending token.
    """
    ts = TokenStream(text, _SYMBOLS)
    phi = _or(ts)
    ts.finish()
    return phi


def _or(ts: TokenStream) -> Tml:
    phi = _and(ts)
    while ts.accept("|"):
        phi = TOr(phi, _and(ts))
    return phi


def _and(ts: TokenStream) -> Tml:
    phi = _unary(ts)
    while ts.accept("&"):
        phi = TAnd(phi, _unary(ts))
    return phi


def _prob(ts: TokenStream) -> Fraction:
    tok = ts.peek
    p = ts.number("a probability")
    if p > 1:
        raise ts.error("probability constant exceeds 1", tok)
    return p


def _unary(ts: TokenStream) -> Tml:
    if ts.accept("("):
        phi = _or(ts)
        ts.expect(")")
        return phi
    if ts.accept("!"):
        name = ts.ident("an atomic proposition")
        if name in _KEYWORDS:
            raise ts.error("only atomic propositions can be negated", ts.tokens[ts.i - 1])
        return TNegAtom(name)
    tok = ts.peek
    if tok.kind != "ident":
        raise ts.error("expected a formula")
    ts.next()
    if tok.value in ("l", "m"):
        p = _prob(ts)
        t = ts.number("a time bound")
        return Ell(p, t) if tok.value == "l" else Em(p, t)
    if tok.value in ("Lp", "Mp"):
        p = _prob(ts)
        a = ts.ident("an input label")
        arg = _unary(ts)
        return LProb(p, a, arg) if tok.value == "Lp" else MProb(p, a, arg)
    return TAtom(tok.value)


# ---------------------------------------------------------------------------
# Model checking
# ---------------------------------------------------------------------------


def cdf_value(F: Cdf, t):
    """``F(t)`` as an exact Fraction for Dirac and Uniform, a float otherwise."""
    t = rational(t)
    if isinstance(F, Dirac):
        return Fraction(1 if t >= F.x else 0)
    if isinstance(F, Uniform):
        return min(Fraction(1), max(Fraction(0), (t - F.a) / (F.b - F.a)))
    return float(evaluate(F, float(t)))


def satisfaction_set(M: Smp, phi: Tml, memo: dict | None = None) -> frozenset:
    """States of ``M`` satisfying ``phi``.

    Raises:
        InputError: When ``phi`` mentions an input the model does not have.
    """
    memo = {} if memo is None else memo
    if phi in memo:
        return memo[phi]
    if isinstance(phi, TAtom):
        out = frozenset(s for s in M.states if phi.name in M.labels[s])
    elif isinstance(phi, TNegAtom):
        out = frozenset(s for s in M.states if phi.name not in M.labels[s])
    elif isinstance(phi, Ell):
        out = frozenset(s for s in M.states if cdf_value(M.residence[s], phi.t) >= phi.p)
    elif isinstance(phi, Em):
        out = frozenset(s for s in M.states if cdf_value(M.residence[s], phi.t) <= phi.p)
    elif isinstance(phi, (LProb, MProb)):
        if phi.a not in M.inputs:
            raise InputError(f"unknown input {phi.a!r}")
        target = satisfaction_set(M, phi.arg, memo)
        keep = []
        for s in M.states:
            mass = sum((p for t, p in M.successors(s, phi.a).items() if t in target), Fraction(0))
            if (mass >= phi.p) if isinstance(phi, LProb) else (mass <= phi.p):
                keep.append(s)
        out = frozenset(keep)
    elif isinstance(phi, TAnd):
        out = satisfaction_set(M, phi.left, memo) & satisfaction_set(M, phi.right, memo)
    else:
        out = satisfaction_set(M, phi.left, memo) | satisfaction_set(M, phi.right, memo)
    memo[phi] = out
    return out


def model_check_tml(M: Smp, s, phi: Tml) -> bool:
    """Whether state ``s`` satisfies ``phi``."""
    M.check_state(s)
    return s in satisfaction_set(M, phi)


# ---------------------------------------------------------------------------
# Characterisation harness
# ---------------------------------------------------------------------------


def time_constants(M: Smp) -> list[Fraction]:
    """Times where model CDFs are informative: knots, mean scales and midpoints."""
    base = {Fraction(0)}
    for F in M.residence.values():
        base |= {rational(k) for k in F.knots() if math.isfinite(k)}
        rate = F.tail_rate()
        if rate and math.isfinite(rate) and rate > 0:
            r = rational(rate).limit_denominator(1000)
            base |= {1 / (2 * r), 1 / r, 2 / r}
    pts = sorted(base)
    mids = {(a + b) / 2 for a, b in zip(pts, pts[1:])}
    return sorted(base | mids)


def _below(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(math.floor(x * 10**6), 10**6)


def _above(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(math.ceil(x * 10**6), 10**6)


def base_formulas(M: Smp, kind: str) -> list[Tml]:
    """Atomic TML formulas of a fragment with constants taken from the model.

    Args:
        M: The model supplying labels, CDF values and times.
        kind: ``"geq"``, ``"leq"``, ``"dual"`` or ``"full"``.
    """
    out: list[Tml] = []
    props = sorted(set().union(*M.labels.values())) if M.states else []
    for a in props:
        out += [TAtom(a), TNegAtom(a)]
    for t in time_constants(M):
        for F in M.residence.values():
            v = cdf_value(F, t)
            if kind in ("geq", "full"):
                out.append(Ell(_below(v), t))
            if kind in ("leq", "dual", "full"):
                out.append(Em(_above(v), t))
    return list(dict.fromkeys(out))


def prob_constants(M: Smp) -> list[Fraction]:
    vals = {Fraction(0), Fraction(1)}
    for row in M.trans.values():
        ps = sorted(row.values())
        vals |= set(ps)
        for k in range(1, len(ps) + 1):
            for combo in itertools.combinations(ps, k):
                s = sum(combo)
                if s <= 1:
                    vals.add(s)
    return sorted(vals)


def enumerate_formulas(M: Smp, kind: str, depth: int, budget: int = 5000, eps=1) -> list[Tml]:
    """Formulas of a fragment, deduplicated by what they denote.

    Two formulas are interchangeable for the harness when both they and their
    eps-perturbations denote the same state sets, so only one representative
    per pair of sets is kept.
    """
    return list(_enumerate(M, kind, depth, budget, eps).values())


def _enumerate(M: Smp, kind: str, depth: int, budget: int, eps) -> dict:
    """``(set of phi, set of perturb(phi)) -> phi`` for ``enumerate_formulas``."""
    eps = rational(eps)
    # Keys are computed from the children's sets, so formulas are never rehashed.
    reps: dict = {}
    masses: dict = {}

    def mass_table(a, target):
        k = (a, target)
        if k not in masses:
            masses[k] = {
                s: sum((p for t, p in M.successors(s, a).items() if t in target), Fraction(0)) for s in M.states
            }
        return masses[k]

    def modal(cls, p, a, target):
        table = mass_table(a, target)
        if cls is LProb:
            return frozenset(s for s, m in table.items() if m >= p)
        return frozenset(s for s, m in table.items() if m <= p)

    def add(phi, k):
        if k not in reps and len(reps) < budget:
            reps[k] = phi

    for phi in base_formulas(M, kind):
        add(phi, (satisfaction_set(M, phi), satisfaction_set(M, perturb(phi, eps))))
    probs = prob_constants(M)
    classes = [c for c, ok in ((LProb, kind in ("geq", "dual", "full")), (MProb, kind in ("leq", "full"))) if ok]
    for _ in range(depth):
        for (orig, pert), phi in list(reps.items()):
            for a in M.inputs:
                for p in probs:
                    for cls in classes:
                        add(cls(p, a, phi), (modal(cls, p, a, orig), modal(cls, p, a, pert)))
        current = list(reps.items())
        for (kx, x), (ky, y) in itertools.combinations(current, 2):
            add(TAnd(x, y), (kx[0] & ky[0], kx[1] & ky[1]))
            add(TOr(x, y), (kx[0] | ky[0], kx[1] | ky[1]))
        if len(reps) >= budget:
            break
    return reps


@dataclass
class HarnessReport:
    """Result of comparing eps-simulation with the logical characterisation.

    Attributes:
        simulates: Whether ``s2`` eps-simulates ``s1``.
        checked: Number of formulas examined.
        counterexamples: ``geq`` or ``dual`` formulas contradicting the
            characterisation while ``simulates`` holds; nonempty means a bug.
        leq_failures: ``leq`` formulas where the perturbed formula holds at
            ``s2`` but the formula fails at ``s1`` although ``simulates``
            holds. ``Mp`` over a timing bound can do this, see the notes.
        witness: When ``simulates`` is false, a formula showing it, if found.
    """

    simulates: bool
    checked: int
    counterexamples: list
    leq_failures: list
    witness: Tml | None


def characterisation_harness(M: Smp, s1, s2, eps, depth: int = 2, budget: int = 5000) -> HarnessReport:
    """Check the logical characterisation of eps-simulation on enumerated formulas.

    ``geq`` formulas are transported forwards: ``s1 |= phi`` must give
    ``s2 |= perturb(phi, eps)``. ``dual`` and ``leq`` formulas are
    transported backwards: ``s2 |= perturb(phi, eps)`` must give ``s1 |= phi``.
    """
    from smpkit.simdist import eps_simulates

    eps = rational(eps)
    sim = eps_simulates(M, s1, s2, eps)
    bad, leq_bad, witness, checked = [], [], None, 0
    for kind in ("geq", "dual", "leq"):
        for (orig, pert), phi in _enumerate(M, kind, depth, budget, eps).items():
            checked += 1
            a, b = s1 in orig, s2 in pert
            if not ((a and not b) if kind == "geq" else (b and not a)):
                continue
            if not sim:
                witness = witness or phi
            elif kind == "leq":
                leq_bad.append(phi)
            else:
                bad.append(phi)
    return HarnessReport(sim, checked, bad, leq_bad, witness)


# ---------------------------------------------------------------------------
# Time-bounded reachability
# ---------------------------------------------------------------------------


def _boolean_set(M: Smp, beta) -> frozenset:
    if isinstance(beta, str):
        beta = parse_tml(beta)
    if isinstance(beta, Tml):
        if any(isinstance(g, (Ell, Em, LProb, MProb)) for g in _walk(beta)):
            raise InputError("reachability targets must be boolean combinations of atoms")
        return satisfaction_set(M, beta)
    return frozenset(beta)


def _walk(phi: Tml) -> Iterable[Tml]:
    yield phi
    if isinstance(phi, (TAnd, TOr)):
        yield from _walk(phi.left)
        yield from _walk(phi.right)
    elif isinstance(phi, (LProb, MProb)):
        yield from _walk(phi.arg)


def _can_reach(M: Smp, target: frozenset) -> set:
    """States with a positive-probability path into ``target``."""
    pred: dict = defaultdict(set)
    for (s, _), row in M.trans.items():
        for (t, _), p in row.items():
            if p > 0:
                pred[t].add(s)
    seen, stack = set(target), list(target)
    while stack:
        for s in pred[stack.pop()] - seen:
            seen.add(s)
            stack.append(s)
    return seen


def reachability_prob(
    M: Smp, sched: Scheduler, s, beta, t, horizon: int, precision: float | None = None
) -> tuple[float, float]:
    """Bounds on the probability of reaching ``beta`` within time ``t``.

    Paths are unrolled for at most ``horizon`` steps. Each path that first
    enters ``beta`` after ``k`` steps contributes its probability times the
    convolution of the ``k`` residences before the hit, evaluated at ``t``.
    Paths still outside ``beta`` after ``horizon`` steps that can still reach
    it may hit later; their mass (weighted the same way) is added to the
    upper bound only.

    Args:
        M: The process.
        sched: Scheduler resolving inputs; its horizon must cover ``horizon``.
        s: Start state.
        beta: A boolean TML formula over atoms (text or AST) or a state set.
        t: Time bound.
        horizon: Maximum number of steps to unroll.
        precision: If given, raise when the interval is wider than this.

    Returns:
        ``(lower, upper)``.

    Raises:
        HorizonTooShort: If ``precision`` is given and not met.
    """
    M.check_state(s)
    target = _boolean_set(M, beta)
    if s in target:
        return (1.0, 1.0)
    tf = float(t)
    frontier = {((), (s,)): Fraction(1)}
    hits: dict = defaultdict(Fraction)
    for _ in range(horizon):
        nxt: dict = defaultdict(Fraction)
        for (res, h), p in frontier.items():
            res2 = tuple(sorted(res + (M.residence[h[-1]],), key=_cdf_key))
            for a, q in sched.dist(h).items():
                for (u, _), r in M.row(h[-1], a).items():
                    if u in target:
                        hits[res2] += p * q * r
                    else:
                        nxt[(res2, (u,) if sched.memoryless else h + (u,))] += p * q * r
        frontier = nxt
    alive = _can_reach(M, target)
    pending: dict = defaultdict(Fraction)
    for (res, h), p in frontier.items():
        if h[-1] in alive:
            pending[res] += p

    def weigh(groups):
        return math.fsum(float(p) * float(convolve_all(list(res)).cdf(tf)) for res, p in groups.items())

    lower = min(1.0, weigh(hits))
    upper = min(1.0, lower + weigh(pending))
    if precision is not None and upper - lower > precision:
        raise HorizonTooShort(f"interval width {upper - lower:.3g} exceeds {precision}")
    return (lower, upper)

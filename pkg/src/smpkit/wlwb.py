"""Weighted transition systems and the bound logic over them.

Formulas ``L_r phi`` and ``M_r phi`` talk about the smallest and largest weight
of the transitions that lead into the states satisfying ``phi``. This module
holds the transition-system type, the logic, its model checker, a tableau
decision procedure with model extraction, and both bisimulations.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, Mapping

from smpkit.errors import ExplosionGuard, InputError, ParseError, UnknownState
from smpkit.lexer import TokenStream
from smpkit.rational import format_rational, rational

NEG_INF = -math.inf
POS_INF = math.inf

# ---------------------------------------------------------------------------
# Transition systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Wts:
    """A finite weighted transition system.

    Attributes:
        states: State ids in declaration order.
        transitions: Set of ``(source, weight, target)`` triples.
        labels: Atomic propositions per state.
    """

    states: tuple
    transitions: frozenset
    labels: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        trans = frozenset((s, rational(w), t) for s, w, t in self.transitions)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "labels", {s: frozenset(self.labels.get(s, ())) for s in self.states})
        if len(set(self.states)) != len(self.states):
            raise InputError("duplicate state ids")
        known = set(self.states)
        for s, w, t in trans:
            if s not in known or t not in known:
                raise UnknownState(f"transition {s} -{w}-> {t} uses an unknown state")
            if w < 0:
                raise InputError(f"negative weight {w}")

    @cached_property
    def out(self) -> dict:
        """``state -> sorted list of (weight, target)``."""
        res: dict = {s: [] for s in self.states}
        for s, w, t in self.transitions:
            res[s].append((w, t))
        for s in res:
            res[s].sort(key=lambda wt: (wt[0], self.states.index(wt[1])))
        return res

    def check_state(self, s):
        if s not in self.labels:
            raise UnknownState(f"unknown state {s!r}")
        return s

    @property
    def propositions(self) -> list:
        return sorted(set().union(*self.labels.values())) if self.states else []

    @property
    def weights(self) -> list:
        return sorted({w for _, w, _ in self.transitions})


def image_bounds(M: Wts, s, T: Iterable) -> tuple:
    """Least and greatest weight of a transition from ``s`` into ``T``.

    When no transition from ``s`` enters ``T`` (in particular when ``T`` is
    empty) the pair is ``(-inf, +inf)``.
    """
    M.check_state(s)
    T = set(T)
    ws = [w for w, t in M.out[s] if t in T]
    if not ws:
        return (NEG_INF, POS_INF)
    return (min(ws), max(ws))


def parse_wts(text: str) -> Wts:
    """Parse the line-based ``wts`` file format.

    Raises:
        ParseError: With the line number of the first bad line.
    """
    states, labels, trans = [], {}, []
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if not seen_header:
            if head != "wts" or rest:
                raise ParseError("file must start with 'wts'", raw, 0, lineno)
            seen_header = True
        elif head == "state":
            sid, _, labs = rest.partition(" ")
            labs = labs.strip()
            if not sid:
                raise ParseError("expected 'state <id> {labels}'", raw, 0, lineno)
            if labs and not (labs.startswith("{") and labs.endswith("}")):
                raise ParseError("labels must be written as {p,q}", raw, raw.find(labs), lineno)
            if sid in labels:
                raise ParseError(f"duplicate state {sid!r}", raw, raw.find(sid), lineno)
            states.append(sid)
            labels[sid] = [x.strip() for x in labs[1:-1].split(",") if x.strip()] if labs else []
        elif head == "trans":
            parts = rest.split()
            if len(parts) != 3:
                raise ParseError("expected 'trans <src> <weight> <dst>'", raw, 0, lineno)
            src, w, dst = parts
            try:
                weight = rational(w)
            except (ValueError, ZeroDivisionError):
                raise ParseError(f"bad weight {w!r}", raw, raw.find(w), lineno) from None
            trans.append((src, weight, dst))
        else:
            raise ParseError(f"unknown directive {head!r}", raw, 0, lineno)
    if not seen_header:
        raise ParseError("empty model file", text, 0, 1)
    try:
        return Wts(tuple(states), frozenset(trans), labels)
    except InputError as exc:
        raise ParseError(str(exc), text, 0, None) from None


def serialize_wts(M: Wts) -> str:
    """Render a system in the canonical ``wts`` file form."""
    lines = ["wts"]
    for s in M.states:
        lines.append(f"state {s} {{{','.join(sorted(M.labels[s]))}}}")
    for s in M.states:
        for w, t in M.out[s]:
            lines.append(f"trans {s} {format_rational(w)} {t}")
    return "\n".join(lines) + "\n"


def load_wts(path) -> Wts:
    with open(path, encoding="utf-8") as fh:
        return parse_wts(fh.read())


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


class Formula:
    """Base class of the formula AST."""

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class AtLeast(Formula):
    """``L_r phi``: transitions into phi exist and all weigh at least ``r``."""

    r: Fraction
    arg: Formula

    def __post_init__(self):
        object.__setattr__(self, "r", rational(self.r))
        if self.r < 0:
            raise InputError("modal constants must be nonnegative")


@dataclass(frozen=True)
class AtMost(Formula):
    """``M_r phi``: transitions into phi exist and all weigh at most ``r``."""

    r: Fraction
    arg: Formula

    def __post_init__(self):
        object.__setattr__(self, "r", rational(self.r))
        if self.r < 0:
            raise InputError("modal constants must be nonnegative")


def Bot() -> Formula:
    return Not(Top())


def Or(a: Formula, b: Formula) -> Formula:
    return Not(And(Not(a), Not(b)))


def Implies(a: Formula, b: Formula) -> Formula:
    return Not(And(a, Not(b)))


def Diamond(a: Formula) -> Formula:
    return AtLeast(0, a)


def Box(a: Formula) -> Formula:
    return Not(AtLeast(0, Not(a)))


def conj(parts: Iterable[Formula]) -> Formula:
    """Conjunction of ``parts``; the empty conjunction is ``true``."""
    out = None
    for p in parts:
        if isinstance(p, Top):
            continue
        out = p if out is None else And(out, p)
    return Top() if out is None else out


def modal_depth(f: Formula) -> int:
    if isinstance(f, (Top, Atom)):
        return 0
    if isinstance(f, Not):
        return modal_depth(f.arg)
    if isinstance(f, And):
        return max(modal_depth(f.left), modal_depth(f.right))
    return 1 + modal_depth(f.arg)


def subformulas(f: Formula) -> list:
    """All subformulas, children before parents, without repeats."""
    seen: dict = {}

    def walk(g):
        if g in seen:
            return
        if isinstance(g, (Not, AtLeast, AtMost)):
            walk(g.arg)
        elif isinstance(g, And):
            walk(g.left)
            walk(g.right)
        seen[g] = None

    walk(f)
    return list(seen)


def to_text(f: Formula) -> str:
    """Render a formula in the parser's grammar."""
    if isinstance(f, Top):
        return "true"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        g = f.arg
        if isinstance(g, Top):
            return "false"
        if isinstance(g, And) and isinstance(g.left, Not) and isinstance(g.right, Not):
            return f"({to_text(g.left.arg)} | {to_text(g.right.arg)})"
        return f"!{_wrap(g)}"
    if isinstance(f, And):
        return f"({to_text(f.left)} & {to_text(f.right)})"
    op = "L" if isinstance(f, AtLeast) else "M"
    return f"{op} {format_rational(f.r)} {_wrap(f.arg)}"


def _wrap(f: Formula) -> str:
    text = to_text(f)
    if isinstance(f, (AtLeast, AtMost)):
        return f"({text})"
    return text


_SYMBOLS = ("!", "&", "|", "(", ")", "-")
_KEYWORDS = {"L", "M", "true", "false"}


def parse_wlwb(text: str) -> Formula:
    """Parse a formula.

    Grammar: ``phi ::= ident | "!" phi | phi "&" phi | phi "|" phi |
    "L" rational phi | "M" rational phi | "(" phi ")"`` with ``!`` binding
    tightest, then the modalities, then ``&``, then ``|``. ``true`` and
    ``false`` are accepted as constants.

    Raises:
        ParseError: At the offset of the first offending token.
    """
    ts = TokenStream(text, _SYMBOLS)
    f = _parse_or(ts)
    ts.finish()
    return f


def _parse_or(ts: TokenStream) -> Formula:
    f = _parse_and(ts)
    while ts.accept("|"):
        f = Or(f, _parse_and(ts))
    return f


def _parse_and(ts: TokenStream) -> Formula:
    f = _parse_unary(ts)
    while ts.accept("&"):
        f = And(f, _parse_unary(ts))
    return f


def _parse_unary(ts: TokenStream) -> Formula:
    tok = ts.peek
    if ts.accept("!"):
        return Not(_parse_unary(ts))
    if ts.accept("("):
        f = _parse_or(ts)
        ts.expect(")")
        return f
    if tok.kind == "ident":
        ts.next()
        if tok.value in ("L", "M"):
            r = ts.number("a nonnegative rational constant")
            arg = _parse_unary(ts)
            return AtLeast(r, arg) if tok.value == "L" else AtMost(r, arg)
        if tok.value == "true":
            return Top()
        if tok.value == "false":
            return Bot()
        return Atom(tok.value)
    raise ts.error("expected a formula")


# ---------------------------------------------------------------------------
# Model checking
# ---------------------------------------------------------------------------


def satisfaction_sets(M: Wts, phi: Formula) -> dict:
    """Map every subformula of ``phi`` to the set of states satisfying it.

    Subformulas are processed smallest first, and each modal step scans the
    transition list once, so the cost is linear in ``|phi| * (|S| + |->|)``.
    """
    sets: dict = {}
    all_states = frozenset(M.states)
    for g in subformulas(phi):
        if isinstance(g, Top):
            sets[g] = all_states
        elif isinstance(g, Atom):
            sets[g] = frozenset(s for s in M.states if g.name in M.labels[s])
        elif isinstance(g, Not):
            sets[g] = all_states - sets[g.arg]
        elif isinstance(g, And):
            sets[g] = sets[g.left] & sets[g.right]
        else:
            target = sets[g.arg]
            lo: dict = {}
            hi: dict = {}
            for s, w, t in M.transitions:
                if t in target:
                    lo[s] = min(lo.get(s, w), w)
                    hi[s] = max(hi.get(s, w), w)
            if isinstance(g, AtLeast):
                sets[g] = frozenset(s for s in lo if lo[s] >= g.r)
            else:
                sets[g] = frozenset(s for s in hi if hi[s] <= g.r)
    return sets


def model_check_wlwb(M: Wts, s, phi: Formula) -> bool:
    """Whether state ``s`` of ``M`` satisfies ``phi``."""
    M.check_state(s)
    return s in satisfaction_sets(M, phi)[phi]


def denotation(M: Wts, phi: Formula) -> frozenset:
    return satisfaction_sets(M, phi)[phi]


# ---------------------------------------------------------------------------
# Tableau satisfiability
# ---------------------------------------------------------------------------

TYPE_LIMIT = 12


@dataclass(frozen=True)
class TableauNode:
    """One tuple of a successful tableau, with the rule applied to it.

    Attributes:
        formulas: The formula set at this node.
        lower: Interval for the least incoming weight, as ``(lo, hi)``.
        upper: Interval for the greatest incoming weight.
        rule: ``"and"``, ``"not-and"``, ``"not-not"``, ``"top"``, ``"mod"`` or None at a leaf.
        children: Successful children. For ``"mod"`` these are the successors.
        weights: For ``"mod"`` children, the weights of the extracted edges.
    """

    formulas: frozenset
    lower: tuple
    upper: tuple
    rule: str | None
    children: tuple = ()
    weights: tuple = ()

    def describe(self, depth: int = 0) -> list[str]:
        """Indented text rendering, one line per node."""
        fs = ", ".join(sorted(to_text(f) for f in self.formulas))
        line = f"{'  ' * depth}<{{{fs}}}, {_interval(self.lower)}, {_interval(self.upper)}>"
        if self.rule:
            line += f"  [{self.rule}]"
        out = [line]
        for c in self.children:
            out.extend(c.describe(depth + 1))
        return out


def _interval(iv) -> str:
    lo, hi = iv
    right = "inf)" if hi == POS_INF else f"{format_rational(hi)}]"
    return f"[{format_rational(lo)},{right}"


@dataclass(frozen=True)
class SatResult:
    """Outcome of the satisfiability check.

    Attributes:
        sat: Whether the formula has a model.
        model: An extracted model when satisfiable.
        state: The state of ``model`` that satisfies the formula.
        tableau: Root of the successful tableau.
    """

    sat: bool
    model: Wts | None = None
    state: str | None = None
    tableau: TableauNode | None = None


def _is_literal(f: Formula) -> bool:
    return isinstance(f, Atom) or (isinstance(f, Not) and isinstance(f.arg, Atom))


def _is_modal(f: Formula) -> bool:
    return isinstance(f, (AtLeast, AtMost))


def _sort_key(f: Formula):
    return to_text(f)


def satisfiable_wlwb(phi: Formula) -> SatResult:
    """Decide satisfiability and extract a model when one exists.

    The tableau starts from ``<{phi}, [0,0], [0,0]>``. Boolean rules run
    first. Once only literals and (negated) modal formulas remain, the modal
    step chooses which successor types to create: a type is a set of modal
    arguments that a successor satisfies (and it refutes the rest).

    Returns:
        A SatResult. A returned model is always model-checked against ``phi``.
    """
    root = _solve(frozenset([phi]), (Fraction(0), Fraction(0)), (Fraction(0), Fraction(0)))
    if root is None:
        return SatResult(False)
    model, state = extract_model(root)
    if not model_check_wlwb(model, state, phi):
        raise AssertionError(f"extracted model does not satisfy {to_text(phi)}")
    return SatResult(True, model, state, root)


def _solve(gamma: frozenset, lower=(Fraction(0), POS_INF), upper=(Fraction(0), POS_INF)) -> TableauNode | None:
    body = _solve_cached(gamma)
    if body is None:
        return None
    rule, children, weights = body
    return TableauNode(gamma, lower, upper, rule, children, weights)


@lru_cache(maxsize=65536)
def _solve_cached(gamma: frozenset):
    for f in sorted(gamma, key=_sort_key):
        rest = gamma - {f}
        if isinstance(f, Top):
            child = _solve(rest)
            return None if child is None else ("top", (child,), ())
        if isinstance(f, And):
            child = _solve(rest | {f.left, f.right})
            return None if child is None else ("and", (child,), ())
        if isinstance(f, Not):
            g = f.arg
            if isinstance(g, Top):
                return None
            if isinstance(g, Not):
                child = _solve(rest | {g.arg})
                return None if child is None else ("not-not", (child,), ())
            if isinstance(g, And):
                for part in (g.left, g.right):
                    child = _solve(rest | {Not(part)})
                    if child is not None:
                        return ("not-and", (child,), ())
                return None
    return _modal_step(gamma)


def _modal_step(gamma: frozenset):
    atoms = {f.name for f in gamma if isinstance(f, Atom)}
    negated = {f.arg.name for f in gamma if isinstance(f, Not) and isinstance(f.arg, Atom)}
    if atoms & negated:
        return None
    positive = [f for f in gamma if _is_modal(f)]
    negative = [f.arg for f in gamma if isinstance(f, Not) and _is_modal(f.arg)]
    if not positive and not negative:
        return (None, (), ())
    psi = sorted({f.arg for f in positive + negative}, key=_sort_key)
    if len(psi) > TYPE_LIMIT:
        raise ExplosionGuard(f"{len(psi)} modal arguments exceed the tableau type limit {TYPE_LIMIT}")

    def bounds(kind):
        lo = max([f.r for f in positive if isinstance(f, AtLeast) and f.arg in kind] + [Fraction(0)])
        ups = [f.r for f in positive if isinstance(f, AtMost) and f.arg in kind]
        return lo, (min(ups) if ups else POS_INF)

    # Candidate successor types with a nonempty weight window and a model.
    types = {}
    for picks in itertools.product((True, False), repeat=len(psi)):
        kind = frozenset(p for p, keep in zip(psi, picks) if keep)
        lo, hi = bounds(kind)
        if lo > hi:
            continue
        formulas = frozenset(p if keep else Not(p) for p, keep in zip(psi, picks))
        if _solve_cached(formulas) is None:
            continue
        types[kind] = (lo, hi, formulas)

    def reach(kind, lo, hi):
        # Largest weight we are willing to place on an edge of this type.
        if hi != POS_INF:
            return hi
        need = [g.r + 1 for g in negative if isinstance(g, AtMost) and g.arg in kind]
        return max([lo] + need)

    def violated(chosen):
        for g in negative:
            hits = [k for k in chosen if g.arg in k]
            if not hits:
                continue
            if isinstance(g, AtLeast) and not any(types[k][0] < g.r for k in hits):
                return g
            if isinstance(g, AtMost) and not any(types[k][1] > g.r for k in hits):
                return g
        return None

    chosen = set(types)
    # Drop every type that makes a negated formula non-vacuous without a witness.
    while True:
        g = violated(chosen)
        if g is None:
            break
        chosen = {k for k in chosen if g.arg not in k}
    if any(not any(f.arg in k for k in chosen) for f in positive):
        return None

    def ok(cand):
        return violated(cand) is None and all(any(f.arg in k for k in cand) for f in positive)

    # Keep the model small: greedily drop types that are not needed.
    for k in sorted(chosen, key=lambda k: (len(k), sorted(map(_sort_key, k)))):
        if ok(chosen - {k}):
            chosen.discard(k)

    children, weights = [], []
    for k in sorted(chosen, key=lambda k: (-len(k), sorted(map(_sort_key, k)))):
        lo, hi, formulas = types[k]
        up = reach(k, lo, hi)
        children.append(_solve(formulas, (lo, hi), (lo, hi)))
        weights.append((lo, up))
    return ("mod", tuple(children), tuple(weights))


def extract_model(root: TableauNode) -> tuple[Wts, str]:
    """Build a tree-shaped system from a successful tableau.

    Returns:
        ``(model, witness_state)``; states are named ``s``, ``s1``, ``s2``...
    """
    states, labels, trans = [], {}, set()

    def build(node: TableauNode) -> str:
        while node.rule not in (None, "mod"):
            node = node.children[0]
        name = "s" if not states else f"s{len(states)}"
        states.append(name)
        labels[name] = {f.name for f in node.formulas if isinstance(f, Atom)}
        for child, (lo, up) in zip(node.children, node.weights):
            t = build(child)
            trans.add((name, lo, t))
            trans.add((name, up, t))
        return name

    witness = build(root)
    return Wts(tuple(states), frozenset(trans), labels), witness


# ---------------------------------------------------------------------------
# Bisimulations
# ---------------------------------------------------------------------------


def _label_partition(M: Wts) -> list[list]:
    blocks: dict = {}
    for s in M.states:
        blocks.setdefault(M.labels[s], []).append(s)
    return list(blocks.values())


def _refine(M: Wts, signature) -> list[list]:
    """Coarsest stable refinement of the label partition for ``signature``."""
    blocks = _label_partition(M)
    while True:
        index = {s: i for i, b in enumerate(blocks) for s in b}
        new = []
        for b in blocks:
            groups: dict = {}
            for s in b:
                groups.setdefault(signature(M, s, index), []).append(s)
            new.extend(groups.values())
        if len(new) == len(blocks):
            return new
        blocks = new


def _bound_signature(M: Wts, s, index) -> tuple:
    sig: dict = {}
    for w, t in M.out[s]:
        i = index[t]
        lo, hi = sig.get(i, (w, w))
        sig[i] = (min(lo, w), max(hi, w))
    return tuple(sorted(sig.items()))


def _exact_signature(M: Wts, s, index) -> frozenset:
    return frozenset((w, index[t]) for w, t in M.out[s])


def gen_bisim_partition(M: Wts) -> list[list]:
    """Classes of generalised weighted bisimilarity (bound matching)."""
    return _refine(M, _bound_signature)


def weighted_bisim_partition(M: Wts) -> list[list]:
    """Classes of weighted bisimilarity (exact weight matching)."""
    return _refine(M, _exact_signature)


def gen_weighted_bisim(M: Wts, s, t) -> bool:
    """Whether ``s`` and ``t`` agree on labels and on every class's weight bounds."""
    M.check_state(s)
    M.check_state(t)
    return any(s in b and t in b for b in gen_bisim_partition(M))


def weighted_bisim(M: Wts, s, t) -> bool:
    """Whether ``s`` and ``t`` match each other's transitions weight for weight."""
    M.check_state(s)
    M.check_state(t)
    return any(s in b and t in b for b in weighted_bisim_partition(M))


def distinguishing_formula(M: Wts, s, t) -> Formula | None:
    """A formula true at ``s`` and false at ``t``, or None if they are bisimilar.

    The formula is assembled from the refinement history: every block gets
    a formula whose denotation is exactly that block, and a split is
    explained by the first class on which the bound signatures differ.
    """
    M.check_state(s)
    M.check_state(t)
    props = M.propositions
    blocks = _label_partition(M)
    chars = [conj(Atom(p) if p in M.labels[b[0]] else Not(Atom(p)) for p in props) for b in blocks]
    while True:
        where = {x: i for i, b in enumerate(blocks) for x in b}
        if where[s] != where[t]:
            return chars[where[s]]
        new_blocks, new_chars = [], []
        for i, b in enumerate(blocks):
            groups: dict = {}
            for x in b:
                groups.setdefault(_bound_signature(M, x, where), []).append(x)
            sigs = list(groups)
            for sig in sigs:
                parts = [chars[i]]
                for other in sigs:
                    if other != sig:
                        parts.append(_signature_separator(dict(sig), dict(other), chars))
                new_blocks.append(groups[sig])
                new_chars.append(conj(parts))
        if len(new_blocks) == len(blocks):
            return None
        blocks, chars = new_blocks, new_chars


def _signature_separator(mine: dict, other: dict, chars) -> Formula:
    """A formula true under signature ``mine`` and false under ``other``."""
    for k in sorted(set(mine) | set(other)):
        a, b = mine.get(k), other.get(k)
        if a == b:
            continue
        chi = chars[k]
        if b is None:
            return AtLeast(0, chi)
        if a is None:
            return Not(AtLeast(0, chi))
        if a[0] > b[0]:
            return AtLeast(a[0], chi)
        if a[0] < b[0]:
            return Not(AtLeast(b[0], chi))
        if a[1] < b[1]:
            return AtMost(a[1], chi)
        return Not(AtMost(b[1], chi))
    raise AssertionError("signatures are equal")


# ---------------------------------------------------------------------------
# Random generation and the axiom soundness suite
# ---------------------------------------------------------------------------


def random_wts(rng: random.Random, n_states: int = 4, props=("p", "q"), weights=None) -> Wts:
    """A small random system over the given propositions and weights."""
    weights = weights or [Fraction(0), Fraction(1, 2), Fraction(1), Fraction(2), Fraction(3)]
    states = tuple(f"x{i}" for i in range(n_states))
    labels = {s: {p for p in props if rng.random() < 0.5} for s in states}
    trans = set()
    for s in states:
        for _ in range(rng.randint(0, 3)):
            trans.add((s, rng.choice(weights), rng.choice(states)))
    return Wts(states, frozenset(trans), labels)


def random_formula(rng: random.Random, props, constants, depth: int) -> Formula:
    """A random formula of modal and boolean nesting at most ``depth``."""
    if depth <= 0 or rng.random() < 0.25:
        return Atom(rng.choice(list(props))) if rng.random() < 0.85 else Top()
    pick = rng.randrange(5)
    if pick == 0:
        return Not(random_formula(rng, props, constants, depth - 1))
    if pick == 1:
        return And(random_formula(rng, props, constants, depth - 1), random_formula(rng, props, constants, depth - 1))
    if pick == 2:
        return Or(random_formula(rng, props, constants, depth - 1), random_formula(rng, props, constants, depth - 1))
    op = AtLeast if pick == 3 else AtMost
    return op(rng.choice(list(constants)), random_formula(rng, props, constants, depth - 1))


@dataclass
class SoundnessReport:
    """Outcome of the axiom soundness suite.

    Attributes:
        checked: Number of instances checked per schema.
        violations: ``(schema, formula text, state)`` for every failing instance.
    """

    checked: dict
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


AXIOMS = ("A1", "A2", "A2'", "A3", "A3'", "A4", "A5", "A5'", "A6", "A7")
RULES = ("R1", "R1'", "R2")


def axiom_instance(name: str, phi: Formula, psi: Formula, r: Fraction, q: Fraction) -> Formula:
    """Instantiate an axiom schema. ``q`` must be positive for A2, A2' and A6."""
    if name == "A1":
        return Not(AtLeast(0, Bot()))
    if name == "A2":
        return Implies(AtLeast(r + q, phi), AtLeast(r, phi))
    if name == "A2'":
        return Implies(AtMost(r, phi), AtMost(r + q, phi))
    if name == "A3":
        return Implies(And(AtLeast(r, phi), AtLeast(q, psi)), AtLeast(min(r, q), Or(phi, psi)))
    if name == "A3'":
        return Implies(And(AtMost(r, phi), AtMost(q, psi)), AtMost(max(r, q), Or(phi, psi)))
    if name == "A4":
        return Implies(AtLeast(r, Or(phi, psi)), Or(AtLeast(r, phi), AtLeast(r, psi)))
    if name == "A5":
        return Implies(Not(AtLeast(0, psi)), Implies(AtLeast(r, phi), AtLeast(r, Or(phi, psi))))
    if name == "A5'":
        return Implies(Not(AtLeast(0, psi)), Implies(AtMost(r, phi), AtMost(r, Or(phi, psi))))
    if name == "A6":
        return Implies(AtLeast(r + q, phi), Not(AtMost(r, phi)))
    if name == "A7":
        return Implies(AtMost(r, phi), AtLeast(0, phi))
    raise ValueError(f"unknown axiom {name!r}")


def rule_instance(name: str, phi: Formula, psi: Formula, r: Fraction) -> tuple[Formula, Formula]:
    """Premise and conclusion of an inference rule."""
    premise = Implies(phi, psi)
    if name == "R1":
        return premise, Implies(And(AtLeast(r, psi), AtLeast(0, phi)), AtLeast(r, phi))
    if name == "R1'":
        return premise, Implies(And(AtMost(r, psi), AtLeast(0, phi)), AtMost(r, phi))
    if name == "R2":
        return premise, Implies(AtLeast(0, phi), AtLeast(0, psi))
    raise ValueError(f"unknown rule {name!r}")


def axiom_soundness_suite(seed: int, n_models: int, formulas_per_model: int = 4) -> SoundnessReport:
    """Check random axiom and rule instances on random systems.

    Axioms must hold at every state. A rule is checked per model: when its
    premise holds at every state, so must its conclusion. Rule premises are
    forced to be valid half of the time by choosing ``psi = phi | chi``.
    """
    rng = random.Random(seed)
    checked = {name: 0 for name in AXIOMS + RULES}
    violations = []
    props = ("p", "q")
    constants = [Fraction(0), Fraction(1, 2), Fraction(1), Fraction(2), Fraction(3)]
    for _ in range(n_models):
        M = random_wts(rng, rng.randint(1, 4), props, constants)
        for _ in range(formulas_per_model):
            phi = random_formula(rng, props, constants, 2)
            psi = random_formula(rng, props, constants, 2)
            r = rng.choice(constants)
            q = rng.choice(constants[1:])
            for name in AXIOMS:
                f = axiom_instance(name, phi, psi, r, q)
                checked[name] += 1
                bad = set(M.states) - denotation(M, f)
                violations.extend((name, to_text(f), s) for s in sorted(bad))
            for name in RULES:
                chi = psi if rng.random() < 0.5 else Or(phi, psi)
                premise, conclusion = rule_instance(name, phi, chi, r)
                checked[name] += 1
                if denotation(M, premise) == frozenset(M.states):
                    bad = set(M.states) - denotation(M, conclusion)
                    violations.extend((name, to_text(conclusion), s) for s in sorted(bad))
    return SoundnessReport(checked, violations)


# ---------------------------------------------------------------------------
# Reference instances
# ---------------------------------------------------------------------------


def bisim_figure() -> Wts:
    """``s`` reaches ``s'`` with weights 1, 2, 3; ``t`` reaches ``t'`` with 1, 3."""
    return Wts(
        ("s", "s'", "t", "t'"),
        frozenset({("s", 1, "s'"), ("s", 2, "s'"), ("s", 3, "s'"), ("t", 1, "t'"), ("t", 3, "t'")}),
        {"s": {"a"}, "t": {"a"}, "s'": {"b"}, "t'": {"b"}},
    )


EXAMPLE_SAT_FORMULA = "!( !(L 2 p1 & M 5 (L 1 p1)) & !(M 2 p2) )"

"""Semi-Markov processes, schedulers, time-bounded cylinders and composition.

A process maps each (state, input) pair to a finitely supported
subdistribution over (successor, output) pairs. Reactive processes echo the
input as output; generative ones have a single input.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from smpkit.dist import (
    Cdf,
    CompositionKind,
    Dirac,
    Mixture,
    compose_cdf,
    convolve_all,
    parse_cdf,
    simplify,
)
from smpkit.errors import (
    ExplosionGuard,
    HorizonTooShort,
    InputError,
    KindMismatch,
    ParseError,
    UnknownState,
)
from smpkit.rational import format_rational, rational

KINDS = ("general", "reactive", "generative")

DEFAULT_SCHEDULER_LIMIT = 10**6


@dataclass(frozen=True)
class Smp:
    """A finite semi-Markov process.

    Attributes:
        kind: ``"general"``, ``"reactive"`` or ``"generative"``.
        states: State ids in declaration order; the first one is initial.
        inputs: Input labels.
        outputs: Output labels.
        trans: ``(state, input) -> {(successor, output): probability}``.
        residence: Residence-time CDF per state.
        labels: Atomic propositions per state.
    """

    kind: str
    states: tuple
    inputs: tuple
    outputs: tuple
    trans: Mapping
    residence: Mapping
    labels: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        trans = {}
        for key, row in self.trans.items():
            clean = {tuple(k): rational(p) for k, p in row.items() if rational(p) != 0}
            if clean:
                trans[tuple(key)] = clean
        object.__setattr__(self, "trans", trans)
        labels = {s: frozenset(self.labels.get(s, ())) for s in self.states}
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "residence", dict(self.residence))
        self._validate()

    def _validate(self):
        if self.kind not in KINDS:
            raise KindMismatch(f"unknown process kind {self.kind!r}")
        if not self.states:
            raise InputError("a process needs at least one state")
        if len(set(self.states)) != len(self.states):
            raise InputError("duplicate state ids")
        known = set(self.states)
        for s in self.states:
            if s not in self.residence:
                raise InputError(f"state {s!r} has no residence-time distribution")
        for (s, a), row in self.trans.items():
            if s not in known:
                raise UnknownState(f"unknown state {s!r}")
            if a not in self.inputs:
                raise InputError(f"unknown input {a!r}")
            for (t, b), p in row.items():
                if t not in known:
                    raise UnknownState(f"unknown state {t!r}")
                if b not in self.outputs:
                    raise InputError(f"unknown output {b!r}")
                if not 0 < p <= 1:
                    raise InputError(f"probability {p} out of range")
                if self.kind == "reactive" and a != b:
                    raise KindMismatch(f"reactive transition {s} --{a}/{b}--> {t} changes the label")
            if sum(row.values()) > 1:
                raise InputError(f"row ({s}, {a}) sums to more than 1")
        if self.kind == "reactive" and set(self.inputs) != set(self.outputs):
            raise KindMismatch("a reactive process needs identical inputs and outputs")
        if self.kind == "generative" and len(self.inputs) != 1:
            raise KindMismatch("a generative process has exactly one input")

    @property
    def initial(self):
        return self.states[0]

    def check_state(self, s):
        if s not in self.residence:
            raise UnknownState(f"unknown state {s!r}")
        return s

    def row(self, s, a) -> dict:
        """The subdistribution ``tau(s, a)`` over ``(successor, output)``."""
        return self.trans.get((s, a), {})

    def is_exact(self, s, a) -> bool:
        return sum(self.row(s, a).values()) == 1

    def successors(self, s, a, output=None) -> dict:
        """Successor probabilities for input ``a``, optionally for one output."""
        out: dict = defaultdict(Fraction)
        for (t, b), p in self.row(s, a).items():
            if output is None or b == output:
                out[t] += p
        return dict(out)

    def live_inputs(self, s) -> list:
        return [a for a in self.inputs if self.row(s, a)]


@dataclass(frozen=True)
class TimeBoundedCylinder:
    """Paths that emit ``word`` within total time ``bound``."""

    word: tuple
    bound: Fraction

    def __post_init__(self):
        object.__setattr__(self, "word", tuple(self.word))
        object.__setattr__(self, "bound", rational(self.bound))
        if self.bound < 0:
            raise InputError("cylinder time bound must be nonnegative")


# ---------------------------------------------------------------------------
# Schedulers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scheduler:
    """A finite-horizon, time-abstract input policy.

    Histories are state sequences ``(s0, ..., sk)`` with ``k <= horizon``.
    A memoryless scheduler is keyed by the last state only.

    Attributes:
        horizon: Largest number of transitions a history may contain.
        choice: ``history -> {input: probability}``.
        memoryless: Whether ``choice`` is keyed by ``(last_state,)``.
    """

    horizon: int
    choice: Mapping
    memoryless: bool = False

    def __post_init__(self):
        clean = {}
        for h, d in self.choice.items():
            dist = {a: rational(p) for a, p in d.items() if rational(p) != 0}
            if sum(dist.values()) != 1:
                raise InputError(f"scheduler choice at {h} does not sum to 1")
            clean[tuple(h)] = dist
        object.__setattr__(self, "choice", clean)

    def dist(self, history: Sequence) -> dict:
        """Input distribution after ``history``."""
        history = tuple(history)
        if len(history) - 1 > self.horizon:
            raise HorizonTooShort(f"history of length {len(history) - 1} beyond horizon {self.horizon}")
        key = (history[-1],) if self.memoryless else history
        try:
            return self.choice[key]
        except KeyError:
            raise HorizonTooShort(f"scheduler has no choice for history {history}") from None

    @classmethod
    def memoryless_from(cls, policy: Mapping, horizon: int) -> "Scheduler":
        """Build a memoryless scheduler from ``state -> input or {input: p}``."""
        choice = {}
        for s, d in policy.items():
            choice[(s,)] = {d: 1} if not isinstance(d, Mapping) else d
        return cls(horizon, choice, memoryless=True)

    @classmethod
    def uniform(cls, M: Smp, horizon: int) -> "Scheduler":
        """Memoryless scheduler that picks every input with equal probability."""
        n = len(M.inputs)
        return cls.memoryless_from({s: {a: Fraction(1, n) for a in M.inputs} for s in M.states}, horizon)

    def describe(self) -> dict:
        """A JSON-friendly view with stable ordering."""
        out = {}
        for h in sorted(self.choice, key=lambda k: (len(k), [str(x) for x in k])):
            d = self.choice[h]
            key = ">".join(map(str, h))
            if len(d) == 1:
                out[key] = next(iter(d))
            else:
                out[key] = {a: format_rational(p) for a, p in sorted(d.items())}
        return {"horizon": self.horizon, "memoryless": self.memoryless, "choice": out}


def trivial_scheduler(M: Smp, horizon: int) -> Scheduler:
    """The unique scheduler of a process with a single input."""
    if len(M.inputs) != 1:
        raise KindMismatch("the trivial scheduler needs exactly one input")
    return Scheduler.memoryless_from({s: M.inputs[0] for s in M.states}, horizon)


def histories(M: Smp, horizon: int, start=None) -> list[tuple]:
    """All state sequences with at most ``horizon`` transitions.

    With ``start`` given, only sequences from ``start`` that follow
    positive-probability transitions are listed.
    """
    if start is None:
        layer = [(s,) for s in M.states]
    else:
        layer = [(M.check_state(start),)]
    out = list(layer)
    for _ in range(horizon):
        nxt = []
        for h in layer:
            if start is None:
                succ = M.states
            else:
                succ = sorted(
                    {t for a in M.inputs for (t, _), p in M.row(h[-1], a).items() if p > 0},
                    key=M.states.index,
                )
            nxt.extend(h + (t,) for t in succ)
        layer = nxt
        out.extend(layer)
    return out


def count_schedulers(M: Smp, horizon: int, start=None) -> int:
    return len(M.inputs) ** len(histories(M, horizon, start))


def enumerate_schedulers(
    M: Smp, horizon: int, limit: int = DEFAULT_SCHEDULER_LIMIT, start=None
) -> Iterator[Scheduler]:
    """Yield every deterministic history-dependent scheduler.

    Args:
        M: The process.
        horizon: Largest number of transitions in a history.
        limit: Maximum number of schedulers before ExplosionGuard.
        start: Restrict histories to reachable ones from this state.

    Raises:
        ExplosionGuard: When ``|In| ** #histories`` exceeds ``limit``.
    """
    if len(M.inputs) == 1:
        yield trivial_scheduler(M, horizon)
        return
    hs = histories(M, horizon, start)
    n_in = len(M.inputs)
    if len(hs) * math.log(n_in) > math.log(limit) + 1e-12:
        raise ExplosionGuard(f"{n_in}^{len(hs)} schedulers exceed the limit {limit}")
    for picks in itertools.product(M.inputs, repeat=len(hs)):
        yield Scheduler(horizon, {h: {a: 1} for h, a in zip(hs, picks)})


def enumerate_memoryless(M: Smp, horizon: int, limit: int = DEFAULT_SCHEDULER_LIMIT) -> Iterator[Scheduler]:
    """Yield every deterministic memoryless scheduler."""
    if len(M.inputs) == 1:
        yield trivial_scheduler(M, horizon)
        return
    if len(M.states) * math.log(len(M.inputs)) > math.log(limit) + 1e-12:
        raise ExplosionGuard("memoryless schedulers exceed the limit")
    for picks in itertools.product(M.inputs, repeat=len(M.states)):
        yield Scheduler.memoryless_from(dict(zip(M.states, picks)), horizon)


# ---------------------------------------------------------------------------
# Cylinder probabilities
# ---------------------------------------------------------------------------


def _step(M: Smp, sched: Scheduler, history: tuple, output) -> dict:
    """``tau^sigma(s, output)`` after ``history`` as ``{successor: prob}``."""
    s = history[-1]
    out: dict = defaultdict(Fraction)
    for a, q in sched.dist(history).items():
        for (t, b), p in M.row(s, a).items():
            if b == output:
                out[t] += q * p
    return out


def _cdf_key(F: Cdf) -> str:
    return F.to_literal()


def cylinder_weights(M: Smp, sched: Scheduler, s, word: Sequence) -> dict:
    """Group the paths for ``word`` by the residences they accumulate.

    Returns:
        ``{tuple of residence CDFs: total path probability}``; the tuple is
        sorted so that commuting convolutions share one entry.
    """
    M.check_state(s)
    word = tuple(word)
    if sched.horizon < len(word):
        raise HorizonTooShort(f"scheduler horizon {sched.horizon} < word length {len(word)}")
    # Memoryless schedulers only need the last state, so paths that share
    # their residence multiset and last state can be merged early.
    frontier = {((), (s,)): Fraction(1)}
    for letter in word:
        nxt: dict = defaultdict(Fraction)
        for (res, h), p in frontier.items():
            res2 = tuple(sorted(res + (M.residence[h[-1]],), key=_cdf_key))
            for t, q in _step(M, sched, h, letter).items():
                key = (res2, (t,) if sched.memoryless else h + (t,))
                nxt[key] += p * q
        frontier = nxt
    grouped: dict = defaultdict(Fraction)
    for (res, _), p in frontier.items():
        grouped[res] += p
    return dict(grouped)


def cylinder_cdf(M: Smp, sched: Scheduler, s, word: Sequence) -> Cdf:
    """``t -> P^sigma(s)(C(word, t))`` as a (possibly deficient) CDF."""
    if not word:
        return Dirac(0)
    grouped = cylinder_weights(M, sched, s, word)
    if not grouped:
        return Mixture((Fraction(0),), (Dirac(0),))
    items = sorted(grouped.items(), key=lambda kv: [F.to_literal() for F in kv[0]])
    return Mixture(
        tuple(p for _, p in items),
        tuple(simplify(convolve_all(list(key))) for key, _ in items),
    )


def cylinder_prob(M: Smp, sched: Scheduler, s, C: TimeBoundedCylinder) -> float:
    """Probability of a time-bounded cylinder from state ``s`` under ``sched``.

    Sums, over all state paths that can emit the word, the product of the
    scheduled transition probabilities times the convolution of the
    residences along the path evaluated at the bound.

    Raises:
        HorizonTooShort: If the scheduler horizon is below the word length.
    """
    if not C.word:
        return 1.0
    grouped = cylinder_weights(M, sched, s, C.word)
    t = float(C.bound)
    terms = [float(p) * float(convolve_all(list(key)).cdf(t)) for key, p in grouped.items()]
    return min(1.0, math.fsum(terms))


def word_mass(M: Smp, sched: Scheduler, s, word: Sequence) -> Fraction:
    """Exact limit of the cylinder probability as the bound grows."""
    if not word:
        return Fraction(1)
    return sum(cylinder_weights(M, sched, s, word).values(), Fraction(0))


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


def pair_name(u, v) -> str:
    return f"({u},{v})"


def compose(M1: Smp, M2: Smp, star: CompositionKind) -> Smp:
    """Synchronous parallel composition of two reactive processes.

    Transition probabilities multiply, residences combine with ``star`` and
    labels are united.

    Raises:
        KindMismatch: Unless both are reactive over the same inputs.
        RateCompositionOnNonExponential: From the residence composition.
    """
    if M1.kind != "reactive" or M2.kind != "reactive":
        raise KindMismatch("composition needs two reactive processes")
    if set(M1.inputs) != set(M2.inputs):
        raise KindMismatch("composition needs identical input sets")
    states, residence, labels, trans = [], {}, {}, {}
    for u in M1.states:
        for v in M2.states:
            name = pair_name(u, v)
            states.append(name)
            residence[name] = compose_cdf(star, M1.residence[u], M2.residence[v])
            labels[name] = M1.labels[u] | M2.labels[v]
    for u in M1.states:
        for v in M2.states:
            for a in M1.inputs:
                row = {}
                for (u2, _), p in M1.row(u, a).items():
                    for (v2, _), q in M2.row(v, a).items():
                        key = (pair_name(u2, v2), a)
                        row[key] = row.get(key, Fraction(0)) + p * q
                if row:
                    trans[(pair_name(u, v), a)] = row
    return Smp("reactive", tuple(states), M1.inputs, M1.outputs, trans, residence, labels)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


def _split_labels(text: str, line: int, raw: str):
    text = text.strip()
    if text.endswith("}"):
        start = text.rfind("{")
        if start < 0:
            raise ParseError("unbalanced label braces", raw, 0, line)
        body = text[start + 1 : -1]
        labels = [x.strip() for x in body.split(",") if x.strip()]
        return text[:start].strip(), labels
    return text, []


def parse_smp(text: str) -> Smp:
    """Parse the line-based process format.

    Raises:
        ParseError: With the line number of the first bad line.
    """
    kind = None
    inputs: list = []
    outputs: list | None = None
    states: list = []
    residence: dict = {}
    labels: dict = {}
    trans: dict = defaultdict(dict)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            if head == "smp":
                if kind is not None:
                    raise ParseError("duplicate header", raw, 0, lineno)
                if rest not in KINDS:
                    raise ParseError(f"unknown kind {rest!r}", raw, 4, lineno)
                kind = rest
            elif kind is None:
                raise ParseError("file must start with 'smp <kind>'", raw, 0, lineno)
            elif head == "inputs":
                inputs = [x.strip() for x in rest.split(",") if x.strip()]
            elif head == "outputs":
                outputs = [x.strip() for x in rest.split(",") if x.strip()]
            elif head == "state":
                sid, _, body = rest.partition(" ")
                if not sid or not body.strip():
                    raise ParseError("expected 'state <id> <cdf> {labels}'", raw, 0, lineno)
                if sid in residence:
                    raise ParseError(f"duplicate state {sid!r}", raw, 6, lineno)
                cdf_text, labs = _split_labels(body, lineno, raw)
                try:
                    residence[sid] = parse_cdf(cdf_text)
                except ParseError as exc:
                    raise ParseError(str(exc), raw, raw.find(cdf_text) + exc.offset_value, lineno) from None
                states.append(sid)
                labels[sid] = labs
            elif head == "trans":
                parts = rest.split()
                if kind == "reactive" and len(parts) == 4:
                    parts.append(parts[1])
                if len(parts) != 5:
                    raise ParseError("expected 'trans <src> <input> <prob> <dst> <output>'", raw, 0, lineno)
                src, a, prob, dst, b = parts
                try:
                    p = rational(prob)
                except (ValueError, ZeroDivisionError):
                    raise ParseError(f"bad probability {prob!r}", raw, raw.find(prob), lineno) from None
                key = (dst, b)
                if key in trans[(src, a)]:
                    raise ParseError("duplicate transition", raw, 0, lineno)
                trans[(src, a)][key] = p
            else:
                raise ParseError(f"unknown directive {head!r}", raw, 0, lineno)
        except ParseError:
            raise
    if kind is None:
        raise ParseError("empty model file", text, 0, 1)
    if outputs is None:
        outputs = list(inputs)
    try:
        return Smp(kind, tuple(states), tuple(inputs), tuple(outputs), dict(trans), residence, labels)
    except InputError as exc:
        raise ParseError(str(exc), text, 0, None) from None


def serialize_smp(M: Smp) -> str:
    """Render a process in the canonical file form (stable ordering)."""
    lines = [f"smp {M.kind}", "inputs " + ",".join(M.inputs), "outputs " + ",".join(M.outputs)]
    for s in M.states:
        labs = ",".join(sorted(M.labels[s]))
        lines.append(f"state {s} {M.residence[s].to_literal()} {{{labs}}}")
    order = {s: i for i, s in enumerate(M.states)}
    for s in M.states:
        for a in M.inputs:
            row = M.row(s, a)
            for (t, b) in sorted(row, key=lambda k: (order[k[0]], M.outputs.index(k[1]))):
                lines.append(f"trans {s} {a} {format_rational(row[(t, b)])} {t} {b}")
    return "\n".join(lines) + "\n"


def load_smp(path) -> Smp:
    with open(path, encoding="utf-8") as fh:
        return parse_smp(fh.read())

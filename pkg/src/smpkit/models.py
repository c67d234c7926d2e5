"""Small reference models used by the self-test, the demos and the tests."""

from __future__ import annotations

from fractions import Fraction

from smpkit.dist import Cdf, Exponential
from smpkit.smp import Smp


def chain(
    residences: list[Cdf], letter: str = "a", prefix: str = "s", kind: str = "reactive", labels: list | None = None
) -> Smp:
    """A deterministic chain whose last state loops on itself.

    Args:
        residences: Residence CDF of each state, in chain order.
        letter: The single action label.
        prefix: State ids are ``prefix + index``.
        kind: ``"reactive"`` or ``"generative"``.
        labels: Optional label set per state.
    """
    names = [f"{prefix}{i}" for i in range(len(residences))]
    trans = {}
    for i, s in enumerate(names):
        nxt = names[min(i + 1, len(names) - 1)]
        trans[(s, letter)] = {(nxt, letter): 1}
    labs = dict(zip(names, labels)) if labels else {}
    return Smp(kind, names, (letter,), (letter,), trans, dict(zip(names, residences)), labs)


def two_chains(mu: Cdf, nu: Cdf, eta: Cdf, kind: str = "reactive") -> tuple[Smp, Smp]:
    """The pair mu -> nu -> eta(loop) and nu -> mu -> eta(loop)."""
    return chain([mu, nu, eta], prefix="u", kind=kind), chain([nu, mu, eta], prefix="v", kind=kind)


def anomaly_instance(kind: str) -> tuple[Smp, Smp, Smp]:
    """Component pair and context for the three parallel timing anomalies.

    Args:
        kind: ``"product"``, ``"min"`` or ``"max"``.

    Returns:
        ``(U, V, W)`` with ``U`` faster than ``V``.
    """
    mu, nu, eta = Exponential(2), Exponential(Fraction(1, 2)), Exponential(1)
    context = {
        "product": (Exponential(10), Exponential(Fraction(1, 10))),
        "min": (Exponential(1), Exponential(2)),
        "max": (Exponential(2), Exponential(1)),
    }[kind]
    U, V = two_chains(mu, nu, eta)
    W = chain([context[0], context[1], eta], prefix="w")
    return U, V, W


def self_loop_pair(fast: Cdf = Exponential(4), slow: Cdf = Exponential(2)) -> Smp:
    """Two self-loop states ``s1`` and ``s2`` over the single input ``a``."""
    return Smp(
        "reactive",
        ("s1", "s2"),
        ("a",),
        ("a",),
        {("s1", "a"): {("s1", "a"): 1}, ("s2", "a"): {("s2", "a"): 1}},
        {"s1": fast, "s2": slow},
    )


def loop_vs_branch(mu: Cdf = Exponential(1)) -> Smp:
    """State ``s`` looping on a and b, against ``s0`` branching to two loops."""
    states = ("s", "s0", "s1", "s2")
    trans = {}
    for a in ("a", "b"):
        trans[("s", a)] = {("s", a): 1}
        trans[("s1", a)] = {("s1", a): 1}
        trans[("s2", a)] = {("s2", a): 1}
    trans[("s0", "a")] = {("s1", "a"): 1}
    trans[("s0", "b")] = {("s2", "b"): 1}
    return Smp("reactive", states, ("a", "b"), ("a", "b"), trans, {s: mu for s in states})

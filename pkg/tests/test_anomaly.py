import random
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from smpkit.anomaly import (
    DETERMINISTIC_KERNEL,
    RESIDENCE_U,
    RESIDENCE_V,
    SCHEDULER_U,
    deterministic_kernel,
    detect_anomaly,
    monotonic_bounded,
    path_bound_m,
    strong_monotonic,
)
from smpkit.dist import CompositionKind, Convolution, Exponential, Uniform
from smpkit.errors import KindMismatch
from smpkit.fasterthan import faster_than_unambiguous
from smpkit.models import anomaly_instance, chain, two_chains
from smpkit.smp import Smp, TimeBoundedCylinder, compose, cylinder_prob, pair_name, trivial_scheduler

from oracles import random_reactive

PROPS = settings(
    max_examples=500,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)

MU, NU, ETA = Exponential(2), Exponential(Fraction(1, 2)), Exponential(1)


def loops(inputs, residence, prefix="x", p=1):
    """One state looping on every input, with probability ``p`` per row."""
    s = f"{prefix}0"
    trans = {(s, a): {(s, a): p} for a in inputs}
    if p != 1:
        dead = f"{prefix}1"
        for a in inputs:
            trans[(s, a)][(dead, a)] = 1 - p
        return Smp("reactive", (s, dead), inputs, inputs, trans, {s: residence, dead: residence})
    return Smp("reactive", (s,), inputs, inputs, trans, {s: residence})


# --- examples -----------------------------------------------------------------------


def test_deterministic_kernel_examples():
    assert deterministic_kernel(chain([MU, NU, ETA]))
    branch = Smp(
        "reactive", ("x", "y", "z"), ("a",), ("a",),
        {("x", "a"): {("y", "a"): Fraction(1, 2), ("z", "a"): Fraction(1, 2)}},
        {s: ETA for s in "xyz"},
    )
    assert not deterministic_kernel(branch)
    assert deterministic_kernel(Smp("reactive", ("x",), ("a",), ("a",), {}, {"x": ETA}))


def test_path_bound_examples():
    three = chain([MU, NU, ETA])
    assert path_bound_m(three, three, three, three) == 13
    assert path_bound_m(1, 1, 1, 1) == 3
    assert path_bound_m(2, 3, 4, 5) == max(2 * 4, 3 * 5) + 5 + 1 == 21


@pytest.mark.parametrize(
    "kind, p_uw, p_vw",
    [("product", 0.09, 0.30), ("min", 0.40, 0.51), ("max", 0.75, 0.91)],
)
def test_anomaly_examples(kind, p_uw, p_vw):
    U, V, W = anomaly_instance(kind)
    rep = detect_anomaly(U, V, W, kind, "aa", 2)
    assert rep.p_uw == pytest.approx(p_uw, abs=0.01)
    assert rep.p_vw == pytest.approx(p_vw, abs=0.01)
    assert rep.anomaly
    # The components themselves are ordered the right way.
    assert rep.p_u >= rep.p_v


def test_anomaly_values_match_direct_cylinders():
    U, V, W = anomaly_instance("product")
    UW = compose(U, W, CompositionKind.PRODUCT_RATE)
    C = TimeBoundedCylinder(("a", "a"), 2)
    direct = cylinder_prob(UW, trivial_scheduler(UW, 2), pair_name("u0", "w0"), C)
    assert detect_anomaly(U, V, W, "product-rate", "aa", 2).p_uw == pytest.approx(direct, abs=1e-15)


def test_strong_monotonic_min_rate_mirror_holds():
    U, V = two_chains(MU, NU, ETA)
    W = chain([MU, NU, ETA], prefix="w")
    res = strong_monotonic(U, V, W, None, "min-rate")
    assert res and res.bound == 13 and not res.numeric


@pytest.mark.parametrize("kind, cond", [("product", RESIDENCE_V), ("min", RESIDENCE_U), ("max", RESIDENCE_V)])
def test_anomaly_instances_violate_residence_condition(kind, cond):
    U, V, W = anomaly_instance(kind)
    res = strong_monotonic(U, V, W, None, kind)
    assert not res and res.violated_condition == cond
    w = res.witness
    assert w["index"] == 0 and w["t"] is not None
    assert not monotonic_bounded(U, V, W, None, kind)


def test_two_inputs_live_start_fails():
    M = loops(("a", "b"), ETA)
    res = strong_monotonic(M, M, M, None, "max-rate")
    assert not res and res.violated_condition == SCHEDULER_U
    # The existential variant lets the composite copy the component's input.
    weak = monotonic_bounded(M, M, M, None, "max-rate", n=4)
    assert weak and not weak.complete


def test_deadlock_start_passes_with_two_inputs():
    dead = Smp("reactive", ("d",), ("a", "b"), ("a", "b"), {}, {"d": ETA})
    assert strong_monotonic(dead, dead, dead, None, "max-rate")


def test_probabilistic_context_fails_transition_condition():
    M = loops(("a",), ETA)
    W = loops(("a",), ETA, prefix="w", p=Fraction(1, 2))
    res = strong_monotonic(M, M, W, loops(("a",), ETA, prefix="z"), "max-rate")
    assert not res and res.violated_condition == SCHEDULER_U
    assert not monotonic_bounded(M, M, W, loops(("a",), ETA, prefix="z"), "max-rate")


def test_non_deterministic_kernel_context():
    M = loops(("a",), ETA)
    W = loops(("a",), ETA, prefix="w", p=Fraction(1, 2))
    res = strong_monotonic(M, M, M, W, "max-rate")
    assert not res and res.violated_condition == DETERMINISTIC_KERNEL


def test_numeric_flag_for_shapes_outside_closed_form():
    tri = Convolution((Uniform(0, 1), Uniform(0, 1)))
    U = chain([tri])
    W = chain([Uniform(0, 1)], prefix="w")
    res = strong_monotonic(U, U, W, W, "max-cdf", n=2)
    assert res.numeric
    assert not res.holds and res.violated_condition == RESIDENCE_V
    t = res.witness["t"]
    assert tri.cdf(t) < Uniform(0, 1).cdf(t)
    assert strong_monotonic(U, U, U, U, "max-cdf", n=2)


def test_kind_checked():
    G = chain([ETA], kind="generative")
    with pytest.raises(KindMismatch):
        strong_monotonic(G, G, G, None, "max-cdf")


# --- properties ------------------------------------------------------------------------

POOL = [Fraction(1, 2), Fraction(1), Fraction(2), Fraction(4)]
STARS = list(CompositionKind)


def _det(rng, n, prefix, rates=None):
    """Random single-input reactive process in which every state has one successor."""
    names = [f"{prefix}{i}" for i in range(n)]
    trans = {(s, "a"): {(rng.choice(names), "a"): 1} for s in names}
    rates = rates or [rng.choice(POOL) for _ in names]
    return Smp("reactive", names, ("a",), ("a",), trans, {s: Exponential(r) for s, r in zip(names, rates)})


def _scaled(rng, M, prefix, up):
    """Same structure as ``M`` with every rate scaled up (or down) by 1, 2 or 4."""
    names = {s: f"{prefix}{i}" for i, s in enumerate(M.states)}
    trans = {(names[s], a): {(names[t], b): p for (t, b), p in row.items()} for (s, a), row in M.trans.items()}
    res = {}
    for s in M.states:
        k = rng.choice([1, 2, 4])
        res[names[s]] = Exponential(M.residence[s].rate * k if up else M.residence[s].rate / k)
    return Smp("reactive", list(names.values()), M.inputs, M.outputs, trans, res)


def _gen(M):
    return Smp("generative", M.states, M.inputs, M.outputs, M.trans, M.residence, M.labels)


@PROPS
@given(st.integers(0, 10**6))
def test_strong_monotonicity_rules_out_anomalies(seed):
    rng = random.Random(seed)
    V = _det(rng, rng.randint(1, 3), "v")
    U = _scaled(rng, V, "u", True) if rng.random() < 0.7 else _det(rng, rng.randint(1, 3), "u")
    W2 = _det(rng, rng.randint(1, 3), "y")
    W = _scaled(rng, W2, "w", True)
    star = rng.choice(STARS)
    if not strong_monotonic(U, V, W, W2, star):
        return
    if not (faster_than_unambiguous(_gen(U), _gen(V)) and faster_than_unambiguous(_gen(W), _gen(W2))):
        return
    UW, VW = compose(U, W, star), compose(V, W2, star)
    assert faster_than_unambiguous(_gen(UW), _gen(VW))
    u0, v0 = pair_name(U.initial, W.initial), pair_name(V.initial, W2.initial)
    for k in (1, 2, 3):
        for t in (Fraction(1, 2), Fraction(1), Fraction(3)):
            C = TimeBoundedCylinder(("a",) * k, t)
            pu = cylinder_prob(UW, trivial_scheduler(UW, k), u0, C)
            pv = cylinder_prob(VW, trivial_scheduler(VW, k), v0, C)
            assert pu >= pv - 1e-12


@PROPS
@given(st.integers(0, 10**6))
def test_strong_implies_bounded_existential(seed):
    rng = random.Random(seed)
    inputs = rng.choice([("a",), ("a", "b")])
    U = random_reactive(rng, n=2, inputs=inputs, exp_only=True, labels=False)
    V = random_reactive(rng, n=2, inputs=inputs, exp_only=True, labels=False)
    W = random_reactive(rng, n=2, inputs=inputs, exp_only=True, labels=False)
    star = rng.choice(STARS)
    if strong_monotonic(U, V, W, None, star, n=3):
        assert monotonic_bounded(U, V, W, None, star, n=3)


@PROPS
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 3))
def test_path_bound_monotone(u, v, w, w2, which):
    sizes = [u, v, w, w2]
    bigger = list(sizes)
    bigger[which] += 1
    assert path_bound_m(*bigger) >= path_bound_m(*sizes)

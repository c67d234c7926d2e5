import math
import random
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from smpkit.dist import Exponential, Uniform
from smpkit.errors import KindMismatch, NotUnambiguous, ParseError, UnsupportedClass
from smpkit.fasterthan import (
    TraceFormula,
    derived_horizon,
    equally_fast,
    faster_than_unambiguous,
    incomparability,
    is_unambiguous,
    loop_set,
    model_check_trace_logic,
    parse_trace_formula,
    satisfiable_trace_logic,
    slow_bound_N,
    time_bounded_additive_faster,
    trace_formulas,
    trace_probability,
)
from smpkit.models import chain, loop_vs_branch, two_chains
from smpkit.smp import Smp

from oracles import poisson_tail_threshold, random_reactive, random_unambiguous, speed_up

PROPS = settings(
    max_examples=500,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)

MU, NU, ETA = Exponential(2), Exponential(Fraction(1, 2)), Exponential(1)


def gen_pair():
    return two_chains(MU, NU, ETA, kind="generative")


def branching():
    trans = {("x", "go"): {("y", "a"): Fraction(1, 2), ("z", "a"): Fraction(1, 2)}}
    res = {s: Exponential(1) for s in "xyz"}
    return Smp("generative", ("x", "y", "z"), ("go",), ("a",), trans, res)


# --- unambiguous decider ----------------------------------------------------------


def test_is_unambiguous_examples():
    U, V = gen_pair()
    assert is_unambiguous(U) and is_unambiguous(V)
    assert not is_unambiguous(branching())
    lone = Smp("generative", ("x",), ("go",), ("a",), {}, {"x": Exponential(1)})
    assert is_unambiguous(lone)
    with pytest.raises(KindMismatch):
        is_unambiguous(two_chains(MU, NU, ETA)[0])
    with pytest.raises(NotUnambiguous):
        faster_than_unambiguous(branching(), branching())


def test_two_chain_examples():
    U, V = gen_pair()
    assert faster_than_unambiguous(U, V)
    assert faster_than_unambiguous(U, U)
    res = faster_than_unambiguous(V, U)
    assert not res and res.witness["word"] == ["a"]
    assert res.witness["u_prob"] < res.witness["v_prob"]
    # At t = 1 the slow first step already loses.
    assert NU.cdf(1.0) < MU.cdf(1.0)


def test_equally_fast_examples():
    U, V = gen_pair()
    assert equally_fast(U, U)
    assert not equally_fast(U, V)
    W, X = two_chains(MU, MU, ETA, kind="generative")
    assert equally_fast(W, X)


def test_loop_set_of_self_loops():
    U, V = gen_pair()
    loops = loop_set(U, V, "u0", "v0")
    assert ("u2", "v2", ("a",)) in loops
    assert all(u == "u2" and v == "v2" for u, v, _ in loops)


def _triple(rng):
    W = random_unambiguous(rng, rng.randint(1, 3), prefix="w")
    V = speed_up(rng, W, "v") if rng.random() < 0.6 else random_unambiguous(rng, rng.randint(1, 3), prefix="v")
    U = speed_up(rng, V, "u") if rng.random() < 0.6 else random_unambiguous(rng, rng.randint(1, 3), prefix="u")
    return U, V, W


@PROPS
@given(st.integers(0, 10**6))
def test_preorder_laws(seed):
    U, V, W = _triple(random.Random(seed))
    assert faster_than_unambiguous(U, U)
    if faster_than_unambiguous(U, V) and faster_than_unambiguous(V, W):
        assert faster_than_unambiguous(U, W)


@PROPS
@given(st.integers(0, 10**6))
def test_trace_logic_characterises_faster_than(seed):
    rng = random.Random(seed)
    U, V, _ = _triple(rng)
    res = faster_than_unambiguous(U, V)
    if res:
        ts = [Fraction(1, 4), Fraction(1), Fraction(3)]
        for psi in trace_formulas(V, V.initial, min(4, len(U.states) * len(V.states)), ts):
            assert model_check_trace_logic(U, U.initial, psi)
    elif res.witness["kind"] == "word":
        w = res.witness
        psi = TraceFormula(Fraction(w["t"]), Fraction(trace_probability(V, V.initial, w["word"], w["t"])), w["word"])
        assert model_check_trace_logic(V, V.initial, psi)
        assert not model_check_trace_logic(U, U.initial, psi)


# --- incomparability ----------------------------------------------------------------


def test_incomparability_example():
    rep = incomparability(loop_vs_branch())
    assert rep.bisimilar and not rep.faster_than
    assert rep.horizon == 2
    assert all(r is not None for r in rep.refutations)


def test_derived_horizon():
    assert derived_horizon(Fraction(1, 2)) == 2
    assert derived_horizon(Fraction(1)) == 2
    assert derived_horizon(Fraction(1, 10)) == 2
    assert Fraction(1, 2) ** derived_horizon(Fraction(1, 2)) < Fraction(1, 2)


# --- additive approximation ------------------------------------------------------------


def test_slow_bound_examples():
    assert slow_bound_N([2], Fraction(1, 100), 2) == 10
    assert slow_bound_N([2], Fraction(1, 100), 2) == poisson_tail_threshold(4, 0.01)
    assert slow_bound_N([Exponential(2), Exponential(1)], Fraction(1, 100), 2) == 10
    assert slow_bound_N([2], 1, 2) == 0
    assert slow_bound_N([2], Fraction(1, 2), 0) == 1
    with pytest.raises(UnsupportedClass):
        slow_bound_N([Uniform(0, 1)], Fraction(1, 10), 1)


@PROPS
@given(st.integers(1, 8), st.integers(1, 99), st.integers(0, 8))
def test_slow_bound_matches_direct_summation(theta, eps_pct, b):
    assert slow_bound_N([theta], Fraction(eps_pct, 100), b) == poisson_tail_threshold(theta * b, eps_pct / 100)


def test_additive_examples():
    U, V = two_chains(MU, NU, ETA)
    eps = Fraction(1, 100)
    res = time_bounded_additive_faster(U, V, "u0", "v0", eps, 2)
    assert res and res.N == 10
    assert not time_bounded_additive_faster(V, U, "v0", "u0", eps, 2)
    assert time_bounded_additive_faster(V, U, "v0", "u0", 1, 2)
    for e in (Fraction(1, 100), Fraction(1, 10), Fraction(1, 2)):
        for b in (0, 1, 2):
            assert time_bounded_additive_faster(U, U, "u0", "u0", e, b)


def test_additive_needs_slow_class_or_override():
    M = chain([Uniform(0, 1), Exponential(1)])
    with pytest.raises(UnsupportedClass):
        time_bounded_additive_faster(M, M, "s0", "s0", Fraction(1, 10), 1)
    res = time_bounded_additive_faster(M, M, "s0", "s0", Fraction(1, 10), 1, horizon_override=3)
    assert res and res.method == "approximate verdict"


def test_additive_reactive_is_tagged():
    M = loop_vs_branch()
    res = time_bounded_additive_faster(M, M, "s", "s0", Fraction(1, 10), Fraction(1, 2), horizon_override=2)
    assert res.method == "approximate verdict"


@PROPS
@given(st.integers(0, 10**6))
def test_additive_agrees_with_exact_decider(seed):
    rng = random.Random(seed)
    U, V, _ = _triple(rng)
    if faster_than_unambiguous(U, V):
        eps = rng.choice([Fraction(1, 100), Fraction(1, 10)])
        assert time_bounded_additive_faster(U, V, U.initial, V.initial, eps, Fraction(1, 8))


@PROPS
@given(st.integers(0, 10**6))
def test_additive_monotone_in_eps(seed):
    rng = random.Random(seed)
    M = random_reactive(rng, n=2, exp_only=True, labels=False)
    x, y = rng.choice(M.states), rng.choice(M.states)
    verdicts = [
        bool(time_bounded_additive_faster(M, M, x, y, e, Fraction(1, 2), horizon_override=2))
        for e in (Fraction(1, 20), Fraction(1, 5), Fraction(1, 2), Fraction(1))
    ]
    for small, big in zip(verdicts, verdicts[1:]):
        assert big or not small
    assert verdicts[-1]


# --- trace logic --------------------------------------------------------------------


def test_trace_logic_examples():
    U, _ = gen_pair()
    assert model_check_trace_logic(U, "u0", TraceFormula(0, 1, ()))
    psi = parse_trace_formula("P[<=2,>=0.5](<a><a>true)")
    assert psi == TraceFormula(2, Fraction(1, 2), ("a", "a"))
    assert model_check_trace_logic(U, "u0", psi)
    assert trace_probability(U, "u0", ("a", "a"), 2) == pytest.approx(0.5156, abs=1e-4)
    assert not model_check_trace_logic(U, "u0", parse_trace_formula("P[<=2,>=0.52](<a><a>true)"))
    assert parse_trace_formula(str(psi)) == psi


def test_satisfiable_trace_logic():
    psi = parse_trace_formula("P[<=1,>=1](<a><a>true)")
    M = satisfiable_trace_logic(psi)
    assert len(M.states) == 3
    assert model_check_trace_logic(M, M.initial, psi)
    psi = parse_trace_formula("P[<=0,>=1](<a><b><a>true)")
    M = satisfiable_trace_logic(psi)
    assert len(M.states) == 4 and model_check_trace_logic(M, M.initial, psi)


@pytest.mark.parametrize("text, offset", [("P[<=1,>=2](true)", 8), ("P[<=1](true)", 5), ("Q[<=1,>=1](true)", 0)])
def test_trace_parse_errors(text, offset):
    with pytest.raises(ParseError) as exc:
        parse_trace_formula(text)
    assert exc.value.offset == offset


def test_erlang_cylinder_value():
    M = chain([Exponential(1)] * 3, kind="generative")
    p = trace_probability(M, "s0", ("a", "a"), 2)
    assert p == pytest.approx(1 - math.exp(-2) * 3)

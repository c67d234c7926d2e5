import random
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from smpkit.errors import ParseError, UnknownState
from smpkit.wlwb import (
    AXIOMS,
    EXAMPLE_SAT_FORMULA,
    RULES,
    And,
    Atom,
    AtLeast,
    AtMost,
    Not,
    Or,
    Top,
    Wts,
    axiom_soundness_suite,
    bisim_figure,
    denotation,
    distinguishing_formula,
    gen_bisim_partition,
    gen_weighted_bisim,
    image_bounds,
    model_check_wlwb,
    parse_wlwb,
    parse_wts,
    random_formula,
    random_wts,
    satisfiable_wlwb,
    serialize_wts,
    to_text,
    weighted_bisim,
)

PROPS = settings(
    max_examples=500,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)

p1, p2 = Atom("p1"), Atom("p2")


# --- parsing ------------------------------------------------------------------


def test_parse_simple():
    assert parse_wlwb("L 2 p1") == AtLeast(2, p1)


def test_parse_example_formula():
    f = parse_wlwb(EXAMPLE_SAT_FORMULA)
    inner = And(AtLeast(2, p1), AtMost(5, AtLeast(1, p1)))
    assert f == Not(And(Not(inner), Not(AtMost(2, p2))))


def test_parse_negative_constant_rejected():
    with pytest.raises(SyntaxError) as exc:
        parse_wlwb("L -1 p")
    assert exc.value.offset == 2


@pytest.mark.parametrize(
    "text, expected",
    [
        ("L 1/2 p & q", And(AtLeast(Fraction(1, 2), Atom("p")), Atom("q"))),
        ("!p & q", And(Not(Atom("p")), Atom("q"))),
        ("p | q & r", Or(Atom("p"), And(Atom("q"), Atom("r")))),
        ("M 0.25 true", AtMost(Fraction(1, 4), Top())),
    ],
)
def test_precedence(text, expected):
    assert parse_wlwb(text) == expected


@pytest.mark.parametrize("text, offset", [("p &", 3), ("(p", 2), ("p q", 2), ("L p", 2), ("p $ q", 2)])
def test_parse_error_offsets(text, offset):
    with pytest.raises(ParseError) as exc:
        parse_wlwb(text)
    assert exc.value.offset == offset


@PROPS
@given(st.integers(0, 10**6))
def test_text_roundtrip(seed):
    rng = random.Random(seed)
    f = random_formula(rng, ("p", "q"), [Fraction(0), Fraction(1, 3), Fraction(5, 2)], 4)
    assert parse_wlwb(to_text(f)) == f


def test_wts_roundtrip_and_errors():
    M = bisim_figure()
    assert parse_wts(serialize_wts(M)) == M
    with pytest.raises(ParseError) as exc:
        parse_wts("wts\nstate a {}\ntrans a x a\n")
    assert exc.value.lineno == 3
    with pytest.raises(ParseError):
        parse_wts("wts\nstate a {}\ntrans a 1 b\n")


# --- semantics ------------------------------------------------------------------


def test_image_bounds_examples():
    M = bisim_figure()
    assert image_bounds(M, "s", {"s'"}) == (1, 3)
    assert image_bounds(M, "s", set()) == (float("-inf"), float("inf"))
    assert image_bounds(M, "s'", set(M.states)) == (float("-inf"), float("inf"))


def test_model_check_examples():
    M = bisim_figure()
    assert model_check_wlwb(M, "s", parse_wlwb("L 1 b"))
    assert not model_check_wlwb(M, "s", parse_wlwb("L 2 b"))
    assert model_check_wlwb(M, "s", parse_wlwb("M 3 b"))
    assert not model_check_wlwb(M, "s", parse_wlwb("M 2 b"))
    for s in M.states:
        assert model_check_wlwb(M, s, Top())
    with pytest.raises(UnknownState):
        model_check_wlwb(M, "zz", Top())


def test_no_transition_falsifies_both_modalities():
    M = bisim_figure()
    assert not model_check_wlwb(M, "s'", AtLeast(0, Top()))
    assert not model_check_wlwb(M, "s'", AtMost(100, Top()))


@PROPS
@given(st.integers(0, 10**6))
def test_diamond_is_l_zero(seed):
    rng = random.Random(seed)
    M = random_wts(rng)
    phi = random_formula(rng, ("p", "q"), [Fraction(0), Fraction(1), Fraction(2)], 2)
    target = denotation(M, phi)
    for s in M.states:
        has_edge = any(t in target for _, t in M.out[s])
        assert model_check_wlwb(M, s, AtLeast(0, phi)) == has_edge


# --- satisfiability -----------------------------------------------------------------


def test_example_formula_is_satisfiable_with_reference_model():
    res = satisfiable_wlwb(parse_wlwb(EXAMPLE_SAT_FORMULA))
    assert res.sat
    M = res.model
    assert model_check_wlwb(M, res.state, parse_wlwb(EXAMPLE_SAT_FORMULA))
    assert M.states == ("s", "s1", "s2")
    assert M.transitions == frozenset({("s", 2, "s1"), ("s", 5, "s1"), ("s1", 1, "s2")})
    assert M.labels == {"s": frozenset(), "s1": {"p1"}, "s2": {"p1"}}
    assert res.tableau.lower == (0, 0) and res.tableau.upper == (0, 0)


@pytest.mark.parametrize("text", ["p & !p", "L 2 p & M 1 p", "L 0 false", "M 1 p & !L 0 p", "false"])
def test_unsat(text):
    assert not satisfiable_wlwb(parse_wlwb(text)).sat


@pytest.mark.parametrize(
    "text",
    [
        "!L 3 p & L 1 p",
        "L 1 p & !M 4 p & M 5 (p & q)",
        "!L 0 p & L 2 q",
        "M 2 p & M 2 !p & !L 1 true",
        "!(L 0 p) & !(M 1 q) & L 0 q",
    ],
)
def test_sat_with_negated_modalities(text):
    f = parse_wlwb(text)
    res = satisfiable_wlwb(f)
    assert res.sat
    assert model_check_wlwb(res.model, res.state, f)


def _brute_sat(f, rng, tries=300):
    for _ in range(tries):
        M = random_wts(rng, rng.randint(1, 4), ("p", "q"), [Fraction(0), Fraction(1), Fraction(2), Fraction(3)])
        sat = denotation(M, f)
        if sat:
            return True
    return False


@PROPS
@given(st.integers(0, 10**6))
def test_tableau_agrees_with_model_search(seed):
    # A model found by random search is a certificate; the tableau must then
    # report Sat, and every Sat answer must come with a verified model.
    rng = random.Random(seed)
    f = random_formula(rng, ("p", "q"), [Fraction(0), Fraction(1), Fraction(2)], 3)
    res = satisfiable_wlwb(f)
    if res.sat:
        assert model_check_wlwb(res.model, res.state, f)
    if _brute_sat(f, random.Random(seed), tries=40):
        assert res.sat


# --- bisimulation -------------------------------------------------------------------


def test_bisim_figure():
    M = bisim_figure()
    assert gen_weighted_bisim(M, "s", "t")
    assert not weighted_bisim(M, "s", "t")
    assert gen_weighted_bisim(M, "s", "s") and weighted_bisim(M, "s", "s")


def test_disjoint_copy_is_weighted_bisimilar():
    rng = random.Random(3)
    for _ in range(50):
        M = random_wts(rng)
        copy = {s: s + "_c" for s in M.states}
        trans = set(M.transitions) | {(copy[s], w, copy[t]) for s, w, t in M.transitions}
        labels = dict(M.labels) | {copy[s]: M.labels[s] for s in M.states}
        N = Wts(M.states + tuple(copy.values()), frozenset(trans), labels)
        for s in M.states:
            assert weighted_bisim(N, s, copy[s])


@PROPS
@given(st.integers(0, 10**6))
def test_weighted_bisim_implies_generalised(seed):
    M = random_wts(random.Random(seed), 5)
    for s in M.states:
        for t in M.states:
            if weighted_bisim(M, s, t):
                assert gen_weighted_bisim(M, s, t)


@PROPS
@given(st.integers(0, 10**6))
def test_logical_characterisation(seed):
    rng = random.Random(seed)
    M = random_wts(rng, rng.randint(1, 4))
    constants = M.weights or [Fraction(0)]
    formulas = [random_formula(rng, ("p", "q"), constants, 3) for _ in range(20)]
    sets = [denotation(M, f) for f in formulas]
    for s in M.states:
        for t in M.states:
            if gen_weighted_bisim(M, s, t):
                assert distinguishing_formula(M, s, t) is None
                assert all((s in d) == (t in d) for d in sets)
            else:
                f = distinguishing_formula(M, s, t)
                assert model_check_wlwb(M, s, f) and not model_check_wlwb(M, t, f)


def test_partition_is_equivalence():
    M = bisim_figure()
    blocks = gen_bisim_partition(M)
    assert sorted(map(sorted, blocks)) == [["s", "t"], ["s'", "t'"]]


# --- axioms -----------------------------------------------------------------------


def test_axiom_suite_has_no_violations():
    report = axiom_soundness_suite(seed=7, n_models=500)
    assert report.ok, report.violations[:5]
    assert set(report.checked) == set(AXIOMS + RULES)
    assert all(n >= 500 for n in report.checked.values())


def test_a1_on_figure():
    M = bisim_figure()
    f = parse_wlwb("!L 0 false")
    assert all(model_check_wlwb(M, s, f) for s in M.states)
